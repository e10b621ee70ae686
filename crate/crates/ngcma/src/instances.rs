//! Seeded random instance generators for test batteries: orthogonal and SPD
//! matrices, Gaussian parameters, chart points, and positive objectives with
//! closed-form Gaussian expectations.
//!
//! Everything draws from a caller-supplied generator, so batteries built on
//! these are reproducible from a single seed.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::charts::{Chart, ThetaPoint};
use crate::error::Error;
use crate::gaussian::{spd_cholesky, vech, GaussianParams};
use crate::scalar::{real, Real};
use crate::theory::{GrowthBound, PositiveFitness};

fn standard_normal<S: Real, R: Rng + ?Sized>(rng: &mut R) -> S {
    let draw: f64 = rng.sample(StandardNormal);
    real::<S>(draw)
}

fn uniform<S: Real, R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> S {
    real::<S>(rng.random_range(lo..hi))
}

/// A Haar-ish random orthogonal matrix: the Q factor of a Gaussian matrix,
/// with column signs fixed by the R diagonal.
pub fn random_orthogonal<S: Real, R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DMatrix<S> {
    let raw = DMatrix::from_fn(dim, dim, |_, _| standard_normal::<S, R>(rng));
    let qr = raw.qr();
    let mut q = qr.q();
    let r = qr.r();
    for k in 0..dim {
        if r[(k, k)] < S::zero() {
            for i in 0..dim {
                q[(i, k)] = -q[(i, k)];
            }
        }
    }
    q
}

/// A random symmetric positive-definite matrix with eigenvalues drawn
/// uniformly from `[eig_lo, eig_hi)` in a random orthogonal frame.
pub fn random_spd<S: Real, R: Rng + ?Sized>(
    dim: usize,
    eig_lo: f64,
    eig_hi: f64,
    rng: &mut R,
) -> DMatrix<S> {
    let q = random_orthogonal::<S, R>(dim, rng);
    let eigs = DVector::from_fn(dim, |_, _| uniform::<S, R>(rng, eig_lo, eig_hi));
    let m = &q * DMatrix::from_diagonal(&eigs) * q.transpose();
    (&m + m.transpose()) * real::<S>(0.5)
}

/// Random Gaussian parameters: standard-normal mean entries, covariance
/// eigenvalues in `[0.4, 2.5)`.
pub fn random_params<S: Real, R: Rng + ?Sized>(
    dim: usize,
    rng: &mut R,
) -> Result<GaussianParams<S>, Error<S>> {
    let mean = DVector::from_fn(dim, |_, _| standard_normal::<S, R>(rng));
    GaussianParams::new(mean, random_spd::<S, R>(dim, 0.4, 2.5, rng))
}

/// One chart of every kind at dimension `dim`; the scalar-scale chart gets a
/// freshly drawn base matrix.
pub fn chart_family<S: Real, R: Rng + ?Sized>(
    dim: usize,
    rng: &mut R,
) -> Result<Vec<Chart<S>>, Error<S>> {
    Ok(vec![
        Chart::FullVech { dim },
        Chart::Cholesky { dim },
        Chart::Exponential { dim },
        Chart::Diagonal { dim },
        Chart::scalar_scale(random_spd::<S, R>(dim, 0.4, 2.5, rng))?,
    ])
}

/// A random admissible point in the given chart, comfortably inside the
/// admissible set so finite-difference probes stay valid.
pub fn random_point_in<S: Real, R: Rng + ?Sized>(
    chart: &Chart<S>,
    rng: &mut R,
) -> Result<ThetaPoint<S>, Error<S>> {
    let dim = chart.dim();
    let theta_m = DVector::from_fn(dim, |_, _| standard_normal::<S, R>(rng));
    match chart {
        Chart::FullVech { .. } => ThetaPoint::new(
            chart.clone(),
            theta_m,
            vech(&random_spd::<S, R>(dim, 0.4, 2.5, rng))?,
        ),
        Chart::Cholesky { .. } | Chart::Exponential { .. } => {
            let params = GaussianParams::new(theta_m, random_spd::<S, R>(dim, 0.4, 2.5, rng))?;
            ThetaPoint::from_params(chart.clone(), &params)
        }
        Chart::Diagonal { .. } => ThetaPoint::new(
            chart.clone(),
            theta_m,
            DVector::from_fn(dim, |_, _| uniform::<S, R>(rng, 0.4, 2.5)),
        ),
        Chart::ScalarScale { .. } => ThetaPoint::new(
            chart.clone(),
            theta_m,
            DVector::from_element(1, uniform::<S, R>(rng, 0.5, 2.0)),
        ),
    }
}

/// A Gaussian bump objective `c · exp(−½ (x−a)ᵀ B (x−a))` whose expectation
/// under any Gaussian has a closed form — the independent oracle for the
/// quadrature and Monte-Carlo routes.
#[derive(Debug, Clone)]
pub struct GaussianBump<S: Real> {
    pub scale: S,
    pub center: DVector<S>,
    pub precision: DMatrix<S>,
}

impl<S: Real> GaussianBump<S> {
    /// Draws a bump with center entries `N(0, 0.6²)`, precision eigenvalues
    /// in `[0.3, 1.2)`, and scale in `[0.5, 2)`.
    pub fn random<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        let center =
            DVector::from_fn(dim, |_, _| standard_normal::<S, R>(rng) * real::<S>(0.6));
        Self {
            scale: uniform::<S, R>(rng, 0.5, 2.0),
            center,
            precision: random_spd::<S, R>(dim, 0.3, 1.2, rng),
        }
    }

    /// The bump as a checked positive objective.
    pub fn fitness(&self) -> PositiveFitness<S> {
        let scale = self.scale;
        let center = self.center.clone();
        let precision = self.precision.clone();
        PositiveFitness::new(
            move |x: &DVector<S>| {
                let centered = x - &center;
                scale * (-centered.dot(&(&precision * &centered)) * real::<S>(0.5)).exp()
            },
            GrowthBound::Bounded,
        )
    }

    /// Closed-form expectation under a Gaussian:
    /// `E[f] = c · |B⁻¹|^{1/2} |C + B⁻¹|^{−1/2} ·
    ///  exp(−½ (m−a)ᵀ (C + B⁻¹)⁻¹ (m−a))`.
    pub fn expected_under(&self, params: &GaussianParams<S>) -> Result<S, Error<S>> {
        let d = params.dim();
        if self.center.len() != d {
            return Err(Error::Validation(format!(
                "bump dimension {} does not match parameters of dimension {d}",
                self.center.len()
            )));
        }
        let prec_chol = spd_cholesky(&self.precision, "bump precision")?;
        let b_inv = prec_chol.solve(&DMatrix::identity(d, d));
        let covered = params.cov() + &b_inv;
        let covered_chol = spd_cholesky(&covered, "covariance plus bump width")?;
        let diff = params.mean() - &self.center;
        let quad = diff.dot(&covered_chol.solve(&diff));
        // ln det from the Cholesky factors: det(M) = ∏ L_ii².
        let ln_det = |chol: &nalgebra::Cholesky<S, nalgebra::Dyn>| {
            let l = chol.l();
            let mut acc = S::zero();
            for i in 0..l.nrows() {
                acc += l[(i, i)].ln();
            }
            acc + acc
        };
        let b_inv_chol = spd_cholesky(&b_inv, "bump width")?;
        let ln_value = self.scale.ln() + real::<S>(0.5) * ln_det(&b_inv_chol)
            - real::<S>(0.5) * ln_det(&covered_chol)
            - real::<S>(0.5) * quad;
        Ok(ln_value.exp())
    }
}

/// Convenience: `dim` kept alongside generators that need it.
pub fn standard_params<S: Real>(dim: usize) -> GaussianParams<S> {
    GaussianParams::new(DVector::zeros(dim), DMatrix::identity(dim, dim))
        .expect("identity parameters are valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::theory::{expected_fitness_quadrature, QuadratureSpec};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn orthogonal_matrices_are_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for dim in [1usize, 2, 3, 5] {
            let q = random_orthogonal::<f64, _>(dim, &mut rng);
            let gram = &q * q.transpose();
            for i in 0..dim {
                for j in 0..dim {
                    let expected = if i == j { 1.0 } else { 0.0 };
                    assert_relative_eq!(gram[(i, j)], expected, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn spd_matrices_have_bounded_spectra() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let m = random_spd::<f64, _>(3, 0.4, 2.5, &mut rng);
            let eigs = m.symmetric_eigen().eigenvalues;
            for &l in eigs.iter() {
                assert!((0.4..2.5).contains(&l), "eigenvalue {l} out of range");
            }
        }
    }

    #[test]
    fn chart_points_are_always_admissible() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for dim in [1usize, 2, 3] {
            for chart in chart_family::<f64, _>(dim, &mut rng).unwrap() {
                for _ in 0..5 {
                    let theta = random_point_in(&chart, &mut rng).unwrap();
                    assert!(theta.to_params().is_ok());
                }
            }
        }
    }

    #[test]
    fn bump_expectation_closed_form_matches_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let spec = QuadratureSpec::default();
        for dim in [1usize, 2] {
            for _ in 0..5 {
                let bump = GaussianBump::<f64>::random(dim, &mut rng);
                let params = random_params::<f64, _>(dim, &mut rng).unwrap();
                let by_quadrature =
                    expected_fitness_quadrature(&bump.fitness(), &params, &spec).unwrap();
                let closed = bump.expected_under(&params).unwrap();
                assert_relative_eq!(by_quadrature, closed, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn generators_are_reproducible() {
        let a = random_spd::<f64, _>(3, 0.4, 2.5, &mut ChaCha8Rng::seed_from_u64(9));
        let b = random_spd::<f64, _>(3, 0.4, 2.5, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }
}
