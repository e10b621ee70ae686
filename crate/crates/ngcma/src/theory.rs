//! Deterministic quadrature oracles for the expectations behind the
//! estimator: expected fitness, its exact natural gradient, the
//! fitness-weighted log-density proximity function `Q`, the scan of `Q`
//! along the natural-gradient ray, EM-style target parameters, and the
//! decomposition of the expected-fitness improvement into divergence terms.
//!
//! Everything here integrates with tensorized Gauss–Hermite rules after
//! whitening by the sampling covariance, so the results are deterministic
//! and converge spectrally for smooth integrands. These oracles are what the
//! Monte-Carlo estimator is tested against.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::charts::{Chart, ThetaPoint};
use crate::error::Error;
use crate::estimator::NaturalGradient;
use crate::gaussian::GaussianParams;
use crate::scalar::{real, Real};

/// Hard cap on nodes per axis; with the three-axis tensor limit this bounds
/// a grid at 64³ points.
pub const MAX_NODES_PER_DIM: usize = 64;

/// Fewest nodes per axis accepted; below this the rules are too coarse to
/// act as oracles.
pub const MIN_NODES_PER_DIM: usize = 8;

/// Highest dimension for which tensor grids are built.
pub const MAX_TENSOR_DIM: usize = 3;

/// Resolution settings for the quadrature oracles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuadratureSpec {
    /// Gauss–Hermite nodes per axis, between [`MIN_NODES_PER_DIM`] and
    /// [`MAX_NODES_PER_DIM`].
    pub nodes_per_dim: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            nodes_per_dim: MAX_NODES_PER_DIM,
        }
    }
}

impl QuadratureSpec {
    fn validate<S: Real>(&self, dim: usize) -> Result<(), Error<S>> {
        if dim == 0 || dim > MAX_TENSOR_DIM {
            return Err(Error::Validation(format!(
                "tensor quadrature supports dimensions 1 through {MAX_TENSOR_DIM}, got {dim}"
            )));
        }
        if self.nodes_per_dim < MIN_NODES_PER_DIM || self.nodes_per_dim > MAX_NODES_PER_DIM {
            return Err(Error::Validation(format!(
                "nodes_per_dim must lie in [{MIN_NODES_PER_DIM}, {MAX_NODES_PER_DIM}], got {}",
                self.nodes_per_dim
            )));
        }
        Ok(())
    }
}

/// Nodes and weights of the `n`-point Gauss–Hermite rule for
/// `∫ e^{−z²} g(z) dz`, computed from the eigendecomposition of the
/// recurrence's tridiagonal matrix and sorted by node.
#[derive(Debug, Clone)]
pub struct GaussHermite<S: Real> {
    nodes: Vec<S>,
    weights: Vec<S>,
}

impl<S: Real> GaussHermite<S> {
    /// Builds the `n`-point rule.
    pub fn new(n: usize) -> Result<Self, Error<S>> {
        if n == 0 {
            return Err(Error::Validation(
                "a quadrature rule needs at least one node".into(),
            ));
        }
        let sqrt_pi = real::<S>(std::f64::consts::PI.sqrt());
        if n == 1 {
            return Ok(Self {
                nodes: vec![S::zero()],
                weights: vec![sqrt_pi],
            });
        }
        let mut jacobi = DMatrix::<S>::zeros(n, n);
        for k in 1..n {
            let off = real::<S>(k as f64 / 2.0).sqrt();
            jacobi[(k - 1, k)] = off;
            jacobi[(k, k - 1)] = off;
        }
        let eig = jacobi.symmetric_eigen();
        let mut pairs: Vec<(S, S)> = (0..n)
            .map(|k| {
                let first = eig.eigenvectors[(0, k)];
                (eig.eigenvalues[k], first * first * sqrt_pi)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("nodes are finite"));
        Ok(Self {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        })
    }

    /// Nodes in increasing order.
    pub fn nodes(&self) -> &[S] {
        &self.nodes
    }

    /// Weights aligned with [`GaussHermite::nodes`]; all positive, summing
    /// to `√π`.
    pub fn weights(&self) -> &[S] {
        &self.weights
    }
}

/// A whitened tensor grid: points in search space with probabilist weights
/// that sum to one, so `Σ w_k g(x_k) ≈ E[g(X)]` under the given Gaussian.
pub(crate) struct WeightedGrid<S: Real> {
    pub points: Vec<DVector<S>>,
    pub weights: Vec<S>,
}

pub(crate) fn weighted_grid<S: Real>(
    params: &GaussianParams<S>,
    spec: &QuadratureSpec,
) -> Result<WeightedGrid<S>, Error<S>> {
    let d = params.dim();
    spec.validate(d)?;
    let rule = GaussHermite::<S>::new(spec.nodes_per_dim)?;
    let n = rule.nodes.len();
    let inv_sqrt_pi = S::one() / real::<S>(std::f64::consts::PI.sqrt());
    let normalized: Vec<S> = rule.weights.iter().map(|&w| w * inv_sqrt_pi).collect();
    let sqrt2 = real::<S>(std::f64::consts::SQRT_2);
    let scaled_nodes: Vec<S> = rule.nodes.iter().map(|&z| z * sqrt2).collect();
    let factor = params.cholesky()?.l();
    let total = n.pow(d as u32);
    let mut points = Vec::with_capacity(total);
    let mut weights = Vec::with_capacity(total);
    let mut idx = vec![0usize; d];
    'outer: loop {
        let mut w = S::one();
        let mut z = DVector::zeros(d);
        for (axis, &i) in idx.iter().enumerate() {
            z[axis] = scaled_nodes[i];
            w *= normalized[i];
        }
        points.push(params.mean() + &factor * z);
        weights.push(w);
        let mut axis = d;
        while axis > 0 {
            axis -= 1;
            idx[axis] += 1;
            if idx[axis] < n {
                continue 'outer;
            }
            idx[axis] = 0;
        }
        break;
    }
    Ok(WeightedGrid { points, weights })
}

/// How fast a fitness function can grow, declared so integrability against a
/// Gaussian can be checked before quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GrowthBound {
    /// `f` is bounded above.
    Bounded,
    /// `f(x) = O(‖x‖^degree)`.
    Polynomial(u32),
    /// `f(x) = O(e^{a‖x‖²})` for the given `a`; integrable against a
    /// Gaussian only while `a · λ_max(C) < ½`.
    ExpQuadratic(f64),
}

/// A strictly positive fitness function with a declared growth bound.
#[derive(Clone)]
pub struct PositiveFitness<S: Real> {
    f: Arc<dyn Fn(&DVector<S>) -> S + Send + Sync>,
    growth: GrowthBound,
}

impl<S: Real> std::fmt::Debug for PositiveFitness<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PositiveFitness")
            .field("growth", &self.growth)
            .finish_non_exhaustive()
    }
}

impl<S: Real> PositiveFitness<S> {
    /// Wraps a function asserted to be strictly positive everywhere;
    /// positivity is enforced pointwise wherever the oracles evaluate it.
    pub fn new(
        f: impl Fn(&DVector<S>) -> S + Send + Sync + 'static,
        growth: GrowthBound,
    ) -> Self {
        Self {
            f: Arc::new(f),
            growth,
        }
    }

    /// Declared growth bound.
    pub fn growth(&self) -> GrowthBound {
        self.growth
    }

    /// Evaluates the function without checks.
    pub fn eval(&self, x: &DVector<S>) -> S {
        (self.f)(x)
    }

    fn eval_checked(&self, x: &DVector<S>) -> Result<S, Error<S>> {
        let v = (self.f)(x);
        if !(v.is_finite() && v > S::zero()) {
            return Err(Error::Domain(
                "fitness must be finite and strictly positive at every quadrature node".into(),
            ));
        }
        Ok(v)
    }

    fn check_integrable(&self, params: &GaussianParams<S>) -> Result<(), Error<S>> {
        if let GrowthBound::ExpQuadratic(a) = self.growth {
            if a > 0.0 {
                let eig = params.cov().clone().symmetric_eigen().eigenvalues;
                let lambda_max = eig.iter().fold(S::zero(), |acc, &l| acc.max(l));
                if real::<S>(a) * lambda_max >= real::<S>(0.5) {
                    return Err(Error::Domain(
                        "fitness grows too fast to integrate against this Gaussian".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// The Gaussian-kernel objective `f(x) = exp(−‖x‖²/2)`. Tilting any Gaussian
/// by it stays Gaussian, which makes every quantity in this module solvable
/// in closed form — the canonical end-to-end check.
pub fn gaussian_kernel_fitness<S: Real>() -> PositiveFitness<S> {
    PositiveFitness::new(
        |x: &DVector<S>| (-x.norm_squared() * real::<S>(0.5)).exp(),
        GrowthBound::Bounded,
    )
}

/// Expected fitness `E[f(X)]` under the Gaussian, by whitened tensor
/// quadrature.
pub fn expected_fitness_quadrature<S: Real>(
    f: &PositiveFitness<S>,
    params: &GaussianParams<S>,
    spec: &QuadratureSpec,
) -> Result<S, Error<S>> {
    f.check_integrable(params)?;
    let grid = weighted_grid(params, spec)?;
    let mut acc = S::zero();
    for (x, &w) in grid.points.iter().zip(&grid.weights) {
        acc += w * f.eval_checked(x)?;
    }
    Ok(acc)
}

/// The exact (quadrature) natural gradient of expected fitness,
/// `E[f(X) · ∇̃ ln π(X; θ)]`, in the coordinates of `θ`'s chart.
pub fn exact_natural_gradient<S: Real>(
    f: &PositiveFitness<S>,
    theta: &ThetaPoint<S>,
    spec: &QuadratureSpec,
) -> Result<NaturalGradient<S>, Error<S>> {
    let params = theta.to_params()?;
    f.check_integrable(&params)?;
    let grid = weighted_grid(&params, spec)?;
    let mut mean_block = DVector::zeros(theta.chart().dim());
    let mut cov_block = DVector::zeros(theta.chart().theta_c_len());
    for (x, &w) in grid.points.iter().zip(&grid.weights) {
        let c = w * f.eval_checked(x)?;
        let g = theta.natural_gradient_loglik(x)?;
        mean_block.axpy(c, &g.mean_block, S::one());
        cov_block.axpy(c, &g.cov_block, S::one());
    }
    Ok(NaturalGradient {
        mean_block,
        cov_block,
    })
}

/// The fitness-weighted log-density proximity
/// `Q(θ, θ′) = E_θ[f(X) · ln π(X; θ′)] / E_θ[f(X)]`.
///
/// Both points must live in the same chart. Expected-fitness ascent steps of
/// the right length maximize this quantity over `θ′`.
pub fn q_function<S: Real>(
    f: &PositiveFitness<S>,
    theta: &ThetaPoint<S>,
    theta_prime: &ThetaPoint<S>,
    spec: &QuadratureSpec,
) -> Result<S, Error<S>> {
    if theta.chart() != theta_prime.chart() {
        return Err(Error::Validation(
            "both points must use the same chart".into(),
        ));
    }
    let params = theta.to_params()?;
    let params_prime = theta_prime.to_params()?;
    f.check_integrable(&params)?;
    let grid = weighted_grid(&params, spec)?;
    let mut total = S::zero();
    let mut acc = S::zero();
    for (x, &w) in grid.points.iter().zip(&grid.weights) {
        let fv = f.eval_checked(x)?;
        total += w * fv;
        acc += w * fv * params_prime.log_density(x)?;
    }
    Ok(acc / total)
}

/// One grid point of a scan along the covariance natural-gradient ray.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow<S: Real> {
    /// Covariance step length.
    pub eta_c: S,
    /// `Q(θ, θ′(0, η_C))`, or NaN when the step is inadmissible.
    pub q: S,
    /// Analytic slope `dQ/dη_C` at this step length, or NaN when
    /// inadmissible.
    pub dq_deta: S,
    /// Whether the stepped covariance stayed positive definite.
    pub admissible: bool,
}

/// Scan of `Q` along the covariance ray, with the predicted maximizer.
#[derive(Debug, Clone)]
pub struct EtaScan<S: Real> {
    /// Rows aligned with the requested step lengths.
    pub rows: Vec<ScanRow<S>>,
    /// Expected fitness `J` at the base point.
    pub expected_fitness: S,
    /// Predicted maximizing step `1/J`.
    pub eta_star: S,
}

impl<S: Real> EtaScan<S> {
    /// Indices `i` where `Q` fails to increase strictly from row `i` to row
    /// `i+1` although both rows are admissible and lie at or below the
    /// predicted maximizer.
    pub fn ascent_violations(&self) -> Vec<usize> {
        self.adjacent_violations(|a, b, star| b.eta_c <= star && b.q <= a.q)
    }

    /// Indices `i` where `Q` fails to decrease strictly from row `i` to row
    /// `i+1` although both rows are admissible and lie at or above the
    /// predicted maximizer.
    pub fn descent_violations(&self) -> Vec<usize> {
        self.adjacent_violations(|a, b, star| a.eta_c >= star && b.q >= a.q)
    }

    fn adjacent_violations(
        &self,
        is_violation: impl Fn(&ScanRow<S>, &ScanRow<S>, S) -> bool,
    ) -> Vec<usize> {
        let mut out = Vec::new();
        for i in 0..self.rows.len().saturating_sub(1) {
            let (a, b) = (&self.rows[i], &self.rows[i + 1]);
            if a.admissible && b.admissible && a.eta_c < b.eta_c && is_violation(a, b, self.eta_star)
            {
                out.push(i);
            }
        }
        out
    }
}

/// Scans `Q(θ, θ′(0, η_C))` along the covariance natural-gradient ray from a
/// full-coordinate base point, holding the mean fixed.
///
/// Each admissible row also carries the analytic slope
/// `(1/J − η_C) · δ_Cᵀ F_C(θ′) δ_C`, whose sign change at `η_C = 1/J`
/// locates the maximizer. Steps that leave the positive-definite cone are
/// marked inadmissible instead of failing the scan.
pub fn theorem2_scan<S: Real>(
    f: &PositiveFitness<S>,
    theta: &ThetaPoint<S>,
    eta_grid: &[S],
    spec: &QuadratureSpec,
) -> Result<EtaScan<S>, Error<S>> {
    if !matches!(theta.chart(), Chart::FullVech { .. }) {
        return Err(Error::Validation(
            "the scan requires full-covariance coordinates".into(),
        ));
    }
    if eta_grid.iter().any(|e| !e.is_finite()) {
        return Err(Error::Validation("step lengths must be finite".into()));
    }
    let params = theta.to_params()?;
    f.check_integrable(&params)?;
    let grid = weighted_grid(&params, spec)?;
    let fitness: Vec<S> = grid
        .points
        .iter()
        .map(|x| f.eval_checked(x))
        .collect::<Result<_, _>>()?;
    let mut expected = S::zero();
    for (&w, &fv) in grid.weights.iter().zip(&fitness) {
        expected += w * fv;
    }
    let eta_star = S::one() / expected;
    let delta = exact_natural_gradient(f, theta, spec)?;
    let d = theta.chart().dim();
    let c_len = theta.chart().theta_c_len();
    let nan = real::<S>(f64::NAN);

    let mut rows = Vec::with_capacity(eta_grid.len());
    for &eta in eta_grid {
        let theta_c = theta.theta_c() + delta.cov_block.scale(eta);
        match ThetaPoint::new(theta.chart().clone(), theta.theta_m().clone(), theta_c) {
            Ok(stepped) => {
                let stepped_params = stepped.to_params()?;
                let mut acc = S::zero();
                for ((x, &w), &fv) in grid.points.iter().zip(&grid.weights).zip(&fitness) {
                    acc += w * fv * stepped_params.log_density(x)?;
                }
                let q = acc / expected;
                let fisher = stepped.fisher_matrix()?;
                let fc = fisher.view((d, d), (c_len, c_len));
                let quad = delta.cov_block.dot(&(fc * &delta.cov_block));
                rows.push(ScanRow {
                    eta_c: eta,
                    q,
                    dq_deta: (eta_star - eta) * quad,
                    admissible: true,
                });
            }
            Err(Error::Domain(_)) => rows.push(ScanRow {
                eta_c: eta,
                q: nan,
                dq_deta: nan,
                admissible: false,
            }),
            Err(other) => return Err(other),
        }
    }
    Ok(EtaScan {
        rows,
        expected_fitness: expected,
        eta_star,
    })
}

/// One grid point of a two-rate surface evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfacePoint<S: Real> {
    pub eta_m: S,
    pub eta_c: S,
    /// `Q(θ, θ′(η_m, η_C))`, or NaN when inadmissible.
    pub q: S,
    pub admissible: bool,
}

/// Evaluates `Q(θ, θ′(η_m, η_C))` on the outer product of the two rate
/// grids (mean rate outermost), stepping both blocks along the exact
/// natural gradient.
pub fn q_surface<S: Real>(
    f: &PositiveFitness<S>,
    theta: &ThetaPoint<S>,
    eta_m_grid: &[S],
    eta_c_grid: &[S],
    spec: &QuadratureSpec,
) -> Result<Vec<SurfacePoint<S>>, Error<S>> {
    if !matches!(theta.chart(), Chart::FullVech { .. }) {
        return Err(Error::Validation(
            "the surface requires full-covariance coordinates".into(),
        ));
    }
    if eta_m_grid.iter().chain(eta_c_grid).any(|e| !e.is_finite()) {
        return Err(Error::Validation("step lengths must be finite".into()));
    }
    let params = theta.to_params()?;
    f.check_integrable(&params)?;
    let grid = weighted_grid(&params, spec)?;
    let fitness: Vec<S> = grid
        .points
        .iter()
        .map(|x| f.eval_checked(x))
        .collect::<Result<_, _>>()?;
    let mut expected = S::zero();
    for (&w, &fv) in grid.weights.iter().zip(&fitness) {
        expected += w * fv;
    }
    let delta = exact_natural_gradient(f, theta, spec)?;
    let nan = real::<S>(f64::NAN);
    let mut out = Vec::with_capacity(eta_m_grid.len() * eta_c_grid.len());
    for &em in eta_m_grid {
        let theta_m = theta.theta_m() + delta.mean_block.scale(em);
        for &ec in eta_c_grid {
            let theta_c = theta.theta_c() + delta.cov_block.scale(ec);
            match ThetaPoint::new(theta.chart().clone(), theta_m.clone(), theta_c) {
                Ok(stepped) => {
                    let stepped_params = stepped.to_params()?;
                    let mut acc = S::zero();
                    for ((x, &w), &fv) in grid.points.iter().zip(&grid.weights).zip(&fitness) {
                        acc += w * fv * stepped_params.log_density(x)?;
                    }
                    out.push(SurfacePoint {
                        eta_m: em,
                        eta_c: ec,
                        q: acc / expected,
                        admissible: true,
                    });
                }
                Err(Error::Domain(_)) => out.push(SurfacePoint {
                    eta_m: em,
                    eta_c: ec,
                    q: nan,
                    admissible: false,
                }),
                Err(other) => return Err(other),
            }
        }
    }
    Ok(out)
}

/// The fitness-tilted moment-matching target: mean `E[f·X]/J` and covariance
/// `E[f·(X−m)(X−m)ᵀ]/J` with the *current* mean `m` — the distribution a
/// unit-proximity update moves to.
pub fn em_target<S: Real>(
    f: &PositiveFitness<S>,
    params: &GaussianParams<S>,
    spec: &QuadratureSpec,
) -> Result<GaussianParams<S>, Error<S>> {
    f.check_integrable(params)?;
    let grid = weighted_grid(params, spec)?;
    let d = params.dim();
    let mut total = S::zero();
    let mut mean_acc = DVector::zeros(d);
    let mut cov_acc = DMatrix::zeros(d, d);
    for (x, &w) in grid.points.iter().zip(&grid.weights) {
        let c = w * f.eval_checked(x)?;
        total += c;
        mean_acc.axpy(c, x, S::one());
        let centered = x - params.mean();
        cov_acc.ger(c, &centered, &centered, S::one());
    }
    GaussianParams::new(mean_acc / total, cov_acc / total)
}

/// The expected-fitness improvement `ln J(θ′) − ln J(θ)` split into
/// divergence terms, each computed by quadrature.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition<S: Real> {
    /// `ln J(θ′) − ln J(θ)`, with `J(θ′)` integrated on its own grid.
    pub ln_gain: S,
    /// `D(q ‖ q′)` between the fitness-tilted distributions.
    pub kl_q_to_q_prime: S,
    /// `D(q ‖ π_θ)`.
    pub kl_q_to_pi: S,
    /// `D(q ‖ π_θ′)`.
    pub kl_q_to_pi_prime: S,
}

impl<S: Real> Decomposition<S> {
    /// How far the four independently-computed terms are from satisfying
    /// `ln_gain = D(q‖q′) + D(q‖π) − D(q‖π′)` exactly.
    pub fn residual(&self) -> S {
        self.ln_gain - (self.kl_q_to_q_prime + self.kl_q_to_pi - self.kl_q_to_pi_prime)
    }
}

/// Decomposes the log expected-fitness improvement between two points of the
/// same chart into Kullback–Leibler terms of the fitness-tilted
/// distributions `q ∝ f·π_θ` and `q′ ∝ f·π_θ′`.
///
/// The terms are deliberately computed on two different grids — expectations
/// under `q` on the `θ`-whitened grid, except `D(q‖π′)` and `J(θ′)` which
/// use the `θ′`-whitened grid with importance correction — so the residual
/// of the identity is a genuine cross-check of the quadratures, not an
/// algebraic tautology.
pub fn improvement_decomposition<S: Real>(
    f: &PositiveFitness<S>,
    theta: &ThetaPoint<S>,
    theta_prime: &ThetaPoint<S>,
    spec: &QuadratureSpec,
) -> Result<Decomposition<S>, Error<S>> {
    if theta.chart() != theta_prime.chart() {
        return Err(Error::Validation(
            "both points must use the same chart".into(),
        ));
    }
    let params = theta.to_params()?;
    let params_prime = theta_prime.to_params()?;
    f.check_integrable(&params)?;
    f.check_integrable(&params_prime)?;

    // Expectations under q on the θ-whitened grid.
    let grid = weighted_grid(&params, spec)?;
    let mut total = S::zero();
    let mut acc_ln_f = S::zero();
    let mut acc_gap = S::zero();
    for (x, &w) in grid.points.iter().zip(&grid.weights) {
        let fv = f.eval_checked(x)?;
        let c = w * fv;
        total += c;
        acc_ln_f += c * fv.ln();
        acc_gap += c * (params.log_density(x)? - params_prime.log_density(x)?);
    }
    let ln_j = total.ln();
    let e_q_ln_f = acc_ln_f / total;
    let e_q_gap = acc_gap / total;

    // J(θ′) and D(q‖π′) under the θ′-whitened grid; q is reached there by
    // importance-correcting through π′.
    let grid_prime = weighted_grid(&params_prime, spec)?;
    let mut total_prime = S::zero();
    let mut acc_cross = S::zero();
    for (x, &w) in grid_prime.points.iter().zip(&grid_prime.weights) {
        let fv = f.eval_checked(x)?;
        total_prime += w * fv;
        let lp = params.log_density(x)?;
        let lpp = params_prime.log_density(x)?;
        let q_over_pi_prime = fv * (lp - lpp).exp();
        acc_cross += w * q_over_pi_prime * (fv.ln() + lp - lpp);
    }
    let ln_j_prime = total_prime.ln();

    Ok(Decomposition {
        ln_gain: ln_j_prime - ln_j,
        kl_q_to_q_prime: e_q_gap + ln_j_prime - ln_j,
        kl_q_to_pi: e_q_ln_f - ln_j,
        kl_q_to_pi_prime: acc_cross / total - ln_j,
    })
}
