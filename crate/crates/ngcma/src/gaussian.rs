//! Multivariate Gaussian parameters and their primitive operations.
//!
//! The covariance half lives in half-vectorized form throughout the crate:
//! [`vech`] stacks the lower triangle column-major starting at the diagonal,
//! so a symmetric `d×d` matrix becomes a length `d(d+1)/2` vector and
//! [`unvech`] restores it. Sampling is always driven by an explicit
//! counter-based generator seeded from a caller-supplied 64-bit value; there
//! is no ambient randomness anywhere in the crate.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Error;
use crate::scalar::{real, real_of_usize, Real};

/// Relative asymmetry above which a covariance input is rejected outright.
/// At or below it the input is silently symmetrized as `(M + Mᵀ)/2`.
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

/// `ln 2π`, the normalization constant of the Gaussian log-density.
pub const LN_2PI: f64 = 1.8378770664093453;

/// Index of entry `(i, j)`, `i ≥ j`, inside the half-vectorization of a `d×d`
/// symmetric matrix (column-major, diagonal first within each column).
#[inline]
pub fn vech_index(d: usize, i: usize, j: usize) -> usize {
    debug_assert!(j <= i && i < d);
    j * d - j * (j + 1) / 2 + i
}

/// Length of the half-vectorization of a `d×d` matrix.
#[inline]
pub fn vech_len(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Side length `d` such that `vech_len(d) == n`, if one exists.
pub fn dim_of_vech_len(n: usize) -> Option<usize> {
    // Invert n = d(d+1)/2 exactly in integer arithmetic.
    let d = ((((8 * n + 1) as f64).sqrt() - 1.0) / 2.0).round() as usize;
    (vech_len(d) == n).then_some(d)
}

fn max_abs<S: Real>(m: &DMatrix<S>) -> S {
    m.iter().fold(S::zero(), |acc, &x| acc.max(x.abs()))
}

fn check_symmetric<S: Real>(m: &DMatrix<S>, what: &str) -> Result<(), Error<S>> {
    if !m.is_square() {
        return Err(Error::Validation(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let scale = S::one().max(max_abs(m));
    let asym = max_abs(&(m - m.transpose()));
    if asym > real::<S>(SYMMETRY_TOLERANCE) * scale {
        return Err(Error::Validation(format!(
            "{what} is asymmetric beyond tolerance (relative asymmetry {:?})",
            asym
        )));
    }
    Ok(())
}

/// Half-vectorizes a symmetric matrix: lower triangle, column-major,
/// diagonal entry first within each column.
///
/// Inputs asymmetric beyond [`SYMMETRY_TOLERANCE`] (relative) are rejected.
pub fn vech<S: Real>(m: &DMatrix<S>) -> Result<DVector<S>, Error<S>> {
    check_symmetric(m, "vech input")?;
    let d = m.nrows();
    let mut v = DVector::zeros(vech_len(d));
    for j in 0..d {
        for i in j..d {
            v[vech_index(d, i, j)] = m[(i, j)];
        }
    }
    Ok(v)
}

/// Inverse of [`vech`]: rebuilds the symmetric matrix from its lower triangle.
pub fn unvech<S: Real>(v: &DVector<S>) -> Result<DMatrix<S>, Error<S>> {
    let d = dim_of_vech_len(v.len()).ok_or_else(|| {
        Error::Validation(format!(
            "unvech input length {} is not triangular (d(d+1)/2)",
            v.len()
        ))
    })?;
    let mut m = DMatrix::zeros(d, d);
    for j in 0..d {
        for i in j..d {
            let x = v[vech_index(d, i, j)];
            m[(i, j)] = x;
            m[(j, i)] = x;
        }
    }
    Ok(m)
}

/// Factors a symmetric positive-definite matrix, naming it in the error.
pub(crate) fn spd_cholesky<S: Real>(
    m: &DMatrix<S>,
    what: &str,
) -> Result<Cholesky<S, nalgebra::Dyn>, Error<S>> {
    Cholesky::new(m.clone())
        .ok_or_else(|| Error::Numeric(format!("{what} factorization failed")))
}

/// Mean vector and positive-definite covariance of a `d`-dimensional Gaussian.
///
/// Construction validates shape, symmetry, and positive definiteness (via a
/// Cholesky factorization); the stored covariance is exactly symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianParams<S: Real> {
    mean: DVector<S>,
    cov: DMatrix<S>,
}

impl<S: Real> GaussianParams<S> {
    /// Validates and stores the parameters, symmetrizing covariance inputs
    /// whose relative asymmetry is within [`SYMMETRY_TOLERANCE`].
    pub fn new(mean: DVector<S>, cov: DMatrix<S>) -> Result<Self, Error<S>> {
        check_symmetric(&cov, "covariance")?;
        if cov.nrows() != mean.len() {
            return Err(Error::Validation(format!(
                "mean has dimension {} but covariance is {}x{}",
                mean.len(),
                cov.nrows(),
                cov.ncols()
            )));
        }
        if mean.is_empty() {
            return Err(Error::Validation("dimension must be at least 1".into()));
        }
        if mean.iter().any(|x| !x.is_finite()) || cov.iter().any(|x| !x.is_finite()) {
            return Err(Error::Validation("parameters must be finite".into()));
        }
        let cov = (&cov + cov.transpose()) * real::<S>(0.5);
        if Cholesky::new(cov.clone()).is_none() {
            return Err(Error::Validation(
                "covariance is not positive definite".into(),
            ));
        }
        Ok(Self { mean, cov })
    }

    /// Search-space dimension `d`.
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Mean vector.
    pub fn mean(&self) -> &DVector<S> {
        &self.mean
    }

    /// Covariance matrix (exactly symmetric, positive definite).
    pub fn cov(&self) -> &DMatrix<S> {
        &self.cov
    }

    pub(crate) fn cholesky(&self) -> Result<Cholesky<S, nalgebra::Dyn>, Error<S>> {
        spd_cholesky(&self.cov, "covariance")
    }

    /// Draws `count` points with an explicit generator. Points are produced
    /// in order, each consuming exactly `d` standard-normal draws, so the
    /// stream is reproducible bit for bit from the generator state.
    pub fn sample_with<R: Rng + ?Sized>(
        &self,
        count: usize,
        rng: &mut R,
    ) -> Result<Vec<DVector<S>>, Error<S>> {
        if count == 0 {
            return Err(Error::Validation("sample count must be at least 1".into()));
        }
        let chol = self.cholesky()?;
        let l = chol.l();
        let d = self.dim();
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let z = DVector::from_fn(d, |_, _| {
                let u: f64 = StandardNormal.sample(rng);
                real::<S>(u)
            });
            out.push(&self.mean + &l * z);
        }
        Ok(out)
    }

    /// Draws `count` points from a fresh counter-based generator seeded with
    /// `seed`. Identical seeds yield bit-identical sample streams.
    pub fn sample(&self, count: usize, seed: u64) -> Result<Vec<DVector<S>>, Error<S>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(count, &mut rng)
    }

    /// Log-density `ln π(x; m, C)` evaluated through the Cholesky factor.
    pub fn log_density(&self, x: &DVector<S>) -> Result<S, Error<S>> {
        if x.len() != self.dim() {
            return Err(Error::Validation(format!(
                "point has dimension {}, parameters have {}",
                x.len(),
                self.dim()
            )));
        }
        let chol = self.cholesky()?;
        let centered = x - &self.mean;
        let solved = chol.solve(&centered);
        let quad = centered.dot(&solved);
        let log_det = chol.l().diagonal().iter().map(|v| v.ln()).fold(S::zero(), |a, b| a + b)
            * real::<S>(2.0);
        let half = real::<S>(0.5);
        Ok(-half * (real_of_usize::<S>(self.dim()) * real::<S>(LN_2PI) + log_det + quad))
    }

    /// Gradient of the log-density with respect to `(m, vech(C))`.
    ///
    /// The mean block is `C⁻¹(x − m)`. The covariance block is the gradient
    /// in half-vectorized coordinates, where an off-diagonal coordinate moves
    /// the two mirrored matrix entries together: with
    /// `G = C⁻¹((x−m)(x−m)ᵀ − C)C⁻¹` the entries are `G_ij` off the diagonal
    /// and `G_ii/2` on it.
    pub fn log_density_grad(&self, x: &DVector<S>) -> Result<(DVector<S>, DVector<S>), Error<S>> {
        if x.len() != self.dim() {
            return Err(Error::Validation(format!(
                "point has dimension {}, parameters have {}",
                x.len(),
                self.dim()
            )));
        }
        let chol = self.cholesky()?;
        let centered = x - &self.mean;
        let mean_block = chol.solve(&centered);
        let s_minus_c = &centered * centered.transpose() - &self.cov;
        let t = chol.solve(&s_minus_c);
        let g = chol.solve(&t.transpose());
        let g = (&g + g.transpose()) * real::<S>(0.5);
        let d = self.dim();
        let half = real::<S>(0.5);
        let mut cov_block = DVector::zeros(vech_len(d));
        for j in 0..d {
            cov_block[vech_index(d, j, j)] = half * g[(j, j)];
            for i in (j + 1)..d {
                cov_block[vech_index(d, i, j)] = g[(i, j)];
            }
        }
        Ok((mean_block, cov_block))
    }
}

/// Closed-form Kullback–Leibler divergence `D(p ‖ q)` between Gaussians:
/// `½(tr(C_q⁻¹C_p) + (m_q−m_p)ᵀC_q⁻¹(m_q−m_p) − d + ln det C_q − ln det C_p)`.
pub fn kl_divergence<S: Real>(
    p: &GaussianParams<S>,
    q: &GaussianParams<S>,
) -> Result<S, Error<S>> {
    if p.dim() != q.dim() {
        return Err(Error::Validation(format!(
            "dimension mismatch: {} vs {}",
            p.dim(),
            q.dim()
        )));
    }
    let chol_q = q.cholesky()?;
    let chol_p = p.cholesky()?;
    let trace = chol_q.solve(p.cov()).trace();
    let diff = q.mean() - p.mean();
    let maha = diff.dot(&chol_q.solve(&diff));
    let log_det = |c: &Cholesky<S, nalgebra::Dyn>| {
        c.l().diagonal().iter().map(|v| v.ln()).fold(S::zero(), |a, b| a + b) * real::<S>(2.0)
    };
    let half = real::<S>(0.5);
    Ok(half * (trace + maha - real_of_usize::<S>(p.dim()) + log_det(&chol_q) - log_det(&chol_p)))
}
