//! Coordinate charts on the Gaussian manifold and natural gradients in them.
//!
//! A chart names the covariance coordinates: the full half-vectorized matrix,
//! its Cholesky factor, its matrix logarithm, its diagonal, or a single scale
//! on a fixed base matrix. The mean is always coordinatized by itself. Each
//! chart supplies the maps to and from [`GaussianParams`], analytic Jacobians
//! of those maps, the Fisher information in chart coordinates, and the
//! natural gradient of the log-density — both a closed form per chart and a
//! reference route that assembles `F⁻¹ Jᵀ ∇` explicitly. The two must agree;
//! the reference route exists so the closed forms can be checked against
//! something that never special-cases.

use nalgebra::{DMatrix, DVector};

use crate::error::Error;
use crate::estimator::NaturalGradient;
use crate::gaussian::{spd_cholesky, unvech, vech, vech_index, vech_len, GaussianParams};
use crate::scalar::{real, real_of_usize, Real};

/// Relative tolerance for deciding that a covariance is diagonal or a scalar
/// multiple of a base matrix when entering a restricted chart.
const RESTRICTION_TOLERANCE: f64 = 1e-8;

/// Condition-number cap for the Fisher blocks in the reference
/// natural-gradient route; beyond it the solve is refused as meaningless.
const CONDITION_CAP: f64 = 1e12;

/// A coordinate system for the covariance part of a Gaussian.
///
/// Every chart keeps the mean coordinates equal to the mean itself; the
/// variants differ only in how `θ_C` encodes the covariance.
#[derive(Debug, Clone, PartialEq)]
pub enum Chart<S: Real> {
    /// `θ_C = vech(C)`: the lower triangle of the covariance, column-major.
    FullVech { dim: usize },
    /// `θ_C = vech(A)` for the lower-triangular factor `C = A Aᵀ` with
    /// positive diagonal.
    Cholesky { dim: usize },
    /// `θ_C = vech(B)` for the symmetric matrix logarithm `C = exp(B)`.
    Exponential { dim: usize },
    /// `θ_C` = the diagonal entries of a diagonal covariance.
    Diagonal { dim: usize },
    /// `θ_C` = a single positive scale `s` with `C = s · base` for a fixed
    /// symmetric positive-definite base matrix.
    ScalarScale { base: DMatrix<S> },
}

impl<S: Real> Chart<S> {
    /// Builds the scalar-scale chart, validating that the base matrix is
    /// square, symmetric, and positive definite. The stored base is exactly
    /// symmetric.
    pub fn scalar_scale(base: DMatrix<S>) -> Result<Self, Error<S>> {
        let probe = GaussianParams::new(DVector::zeros(base.nrows()), base)?;
        Ok(Chart::ScalarScale {
            base: probe.cov().clone(),
        })
    }

    /// Search-space dimension `d`.
    pub fn dim(&self) -> usize {
        match self {
            Chart::FullVech { dim }
            | Chart::Cholesky { dim }
            | Chart::Exponential { dim }
            | Chart::Diagonal { dim } => *dim,
            Chart::ScalarScale { base } => base.nrows(),
        }
    }

    /// Length of the covariance coordinate vector `θ_C`.
    pub fn theta_c_len(&self) -> usize {
        match self {
            Chart::FullVech { .. } | Chart::Cholesky { .. } | Chart::Exponential { .. } => {
                vech_len(self.dim())
            }
            Chart::Diagonal { dim } => *dim,
            Chart::ScalarScale { .. } => 1,
        }
    }

    /// Total coordinate count `d + len(θ_C)`.
    pub fn theta_len(&self) -> usize {
        self.dim() + self.theta_c_len()
    }

    /// Stable short name, used in diagnostics and trace output.
    pub fn label(&self) -> &'static str {
        match self {
            Chart::FullVech { .. } => "full-vech",
            Chart::Cholesky { .. } => "cholesky",
            Chart::Exponential { .. } => "exponential",
            Chart::Diagonal { .. } => "diagonal",
            Chart::ScalarScale { .. } => "scalar-scale",
        }
    }
}

impl<S: Real> std::fmt::Display for Chart<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.label())
    }
}

/// A point on the Gaussian manifold expressed in a chart's coordinates.
///
/// Construction validates coordinate lengths and admissibility (the encoded
/// covariance must be positive definite), so a `ThetaPoint` always maps to a
/// valid distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaPoint<S: Real> {
    chart: Chart<S>,
    theta_m: DVector<S>,
    theta_c: DVector<S>,
}

/// Reads the lower triangle of `m` into vech order without requiring
/// symmetry — used for Cholesky factors.
fn vech_lower<S: Real>(m: &DMatrix<S>) -> DVector<S> {
    let d = m.nrows();
    let mut v = DVector::zeros(vech_len(d));
    for j in 0..d {
        for i in j..d {
            v[vech_index(d, i, j)] = m[(i, j)];
        }
    }
    v
}

/// Expands vech coordinates into a lower-triangular matrix (zeros above the
/// diagonal) — the inverse of [`vech_lower`].
fn unvech_lower<S: Real>(v: &DVector<S>, d: usize) -> Result<DMatrix<S>, Error<S>> {
    if v.len() != vech_len(d) {
        return Err(Error::Validation(format!(
            "coordinate vector of length {} cannot fill a lower triangle of dimension {d}",
            v.len()
        )));
    }
    let mut m = DMatrix::zeros(d, d);
    for j in 0..d {
        for i in j..d {
            m[(i, j)] = v[vech_index(d, i, j)];
        }
    }
    Ok(m)
}

/// Applies `f` to the eigenvalues of a symmetric matrix: `V f(Λ) Vᵀ`,
/// symmetrized against round-off.
pub(crate) fn sym_eigen_apply<S: Real>(m: &DMatrix<S>, f: impl Fn(S) -> S) -> DMatrix<S> {
    let eig = m.clone().symmetric_eigen();
    let mapped = DVector::from_fn(eig.eigenvalues.len(), |i, _| f(eig.eigenvalues[i]));
    let out = &eig.eigenvectors * DMatrix::from_diagonal(&mapped) * eig.eigenvectors.transpose();
    (&out + out.transpose()) * real::<S>(0.5)
}

/// Matrix logarithm of a symmetric positive-definite matrix.
fn sym_logm<S: Real>(m: &DMatrix<S>) -> Result<DMatrix<S>, Error<S>> {
    let eig = m.clone().symmetric_eigen();
    if eig.eigenvalues.iter().any(|&l| l <= S::zero()) {
        return Err(Error::Numeric(
            "matrix logarithm needs strictly positive eigenvalues".into(),
        ));
    }
    let mapped = DVector::from_fn(eig.eigenvalues.len(), |i, _| eig.eigenvalues[i].ln());
    let out = &eig.eigenvectors * DMatrix::from_diagonal(&mapped) * eig.eigenvectors.transpose();
    Ok((&out + out.transpose()) * real::<S>(0.5))
}

/// First divided difference of `exp` between `a` and `b`:
/// `(eᵃ − eᵇ)/(a − b)`, continued as `eᵃ` on the diagonal. Near-equal
/// arguments use `e^{(a+b)/2} · sinh(δ)/δ` with a short series for the
/// `sinh(δ)/δ` factor, avoiding the catastrophic cancellation of the direct
/// quotient.
fn exp_divided_difference<S: Real>(a: S, b: S) -> S {
    let diff = a - b;
    if diff.abs() < real::<S>(1e-4) {
        let delta = diff * real::<S>(0.5);
        let d2 = delta * delta;
        let sinhc = S::one() + d2 / real::<S>(6.0) + d2 * d2 / real::<S>(120.0);
        ((a + b) * real::<S>(0.5)).exp() * sinhc
    } else {
        (a.exp() - b.exp()) / diff
    }
}

/// Largest absolute entry of a matrix (zero when empty).
fn max_abs<S: Real>(m: &DMatrix<S>) -> S {
    m.iter().fold(S::zero(), |acc, &x| acc.max(x.abs()))
}

/// Maps chart coordinates to distribution parameters, reporting coordinates
/// outside the admissible set as domain errors.
fn params_of<S: Real>(
    chart: &Chart<S>,
    theta_m: &DVector<S>,
    theta_c: &DVector<S>,
) -> Result<GaussianParams<S>, Error<S>> {
    let d = chart.dim();
    let cov = match chart {
        Chart::FullVech { .. } => unvech(theta_c)?,
        Chart::Cholesky { .. } => {
            let a = unvech_lower(theta_c, d)?;
            if (0..d).any(|i| a[(i, i)] <= S::zero()) {
                return Err(Error::Domain(
                    "cholesky-chart coordinates need a positive factor diagonal".into(),
                ));
            }
            &a * a.transpose()
        }
        Chart::Exponential { .. } => sym_eigen_apply(&unvech(theta_c)?, |l| l.exp()),
        Chart::Diagonal { .. } => {
            if theta_c.iter().any(|&v| v <= S::zero()) {
                return Err(Error::Domain(
                    "diagonal-chart coordinates must be positive".into(),
                ));
            }
            DMatrix::from_diagonal(theta_c)
        }
        Chart::ScalarScale { base } => {
            let s = theta_c[0];
            if s <= S::zero() {
                return Err(Error::Domain(
                    "scalar-scale coordinate must be positive".into(),
                ));
            }
            base * s
        }
    };
    GaussianParams::new(theta_m.clone(), cov).map_err(|e| match e {
        Error::Validation(msg) => Error::Domain(format!("inadmissible coordinates: {msg}")),
        other => other,
    })
}

impl<S: Real> ThetaPoint<S> {
    /// Validates lengths, finiteness, and admissibility, then stores the
    /// coordinates.
    pub fn new(
        chart: Chart<S>,
        theta_m: DVector<S>,
        theta_c: DVector<S>,
    ) -> Result<Self, Error<S>> {
        if chart.dim() == 0 {
            return Err(Error::Validation("dimension must be at least 1".into()));
        }
        if theta_m.len() != chart.dim() {
            return Err(Error::Validation(format!(
                "mean coordinates have length {} but the chart dimension is {}",
                theta_m.len(),
                chart.dim()
            )));
        }
        if theta_c.len() != chart.theta_c_len() {
            return Err(Error::Validation(format!(
                "covariance coordinates have length {} but the {} chart expects {}",
                theta_c.len(),
                chart.label(),
                chart.theta_c_len()
            )));
        }
        if theta_m.iter().any(|x| !x.is_finite()) || theta_c.iter().any(|x| !x.is_finite()) {
            return Err(Error::Validation("coordinates must be finite".into()));
        }
        params_of(&chart, &theta_m, &theta_c)?;
        Ok(Self {
            chart,
            theta_m,
            theta_c,
        })
    }

    /// Expresses distribution parameters in a chart's coordinates. Restricted
    /// charts reject covariances outside their range (non-diagonal, or not a
    /// scalar multiple of the base) with a domain error.
    pub fn from_params(chart: Chart<S>, params: &GaussianParams<S>) -> Result<Self, Error<S>> {
        if chart.dim() != params.dim() {
            return Err(Error::Validation(format!(
                "chart dimension {} does not match parameter dimension {}",
                chart.dim(),
                params.dim()
            )));
        }
        let d = params.dim();
        let cov = params.cov();
        let theta_c = match &chart {
            Chart::FullVech { .. } => vech(cov)?,
            Chart::Cholesky { .. } => vech_lower(&params.cholesky()?.l()),
            Chart::Exponential { .. } => vech(&sym_logm(cov)?)?,
            Chart::Diagonal { .. } => {
                let scale = max_abs(cov).max(S::one());
                let tol = scale * real::<S>(RESTRICTION_TOLERANCE);
                for j in 0..d {
                    for i in 0..d {
                        if i != j && cov[(i, j)].abs() > tol {
                            return Err(Error::Domain(
                                "covariance is not diagonal, so the diagonal chart cannot represent it"
                                    .into(),
                            ));
                        }
                    }
                }
                cov.diagonal()
            }
            Chart::ScalarScale { base } => {
                let chol = spd_cholesky(base, "chart base")?;
                let s = chol.solve(cov).trace() / real_of_usize::<S>(d);
                let residual = max_abs(&(cov - base * s));
                let tol = max_abs(cov).max(S::one()) * real::<S>(RESTRICTION_TOLERANCE);
                if residual > tol {
                    return Err(Error::Domain(
                        "covariance is not a scalar multiple of the chart base".into(),
                    ));
                }
                DVector::from_element(1, s)
            }
        };
        Self::new(chart, params.mean().clone(), theta_c)
    }

    /// The chart these coordinates live in.
    pub fn chart(&self) -> &Chart<S> {
        &self.chart
    }

    /// Mean coordinates `θ_m` (equal to the mean in every chart).
    pub fn theta_m(&self) -> &DVector<S> {
        &self.theta_m
    }

    /// Covariance coordinates `θ_C`.
    pub fn theta_c(&self) -> &DVector<S> {
        &self.theta_c
    }

    /// Maps the coordinates to distribution parameters.
    pub fn to_params(&self) -> Result<GaussianParams<S>, Error<S>> {
        params_of(&self.chart, &self.theta_m, &self.theta_c)
    }

    /// Analytic Jacobians `(∂m/∂θ_m, ∂vech(C)/∂θ_C)` of the chart map at this
    /// point. The mean Jacobian is the identity in every chart; the
    /// covariance Jacobian has one column per `θ_C` coordinate.
    pub fn jacobians(&self) -> Result<(DMatrix<S>, DMatrix<S>), Error<S>> {
        let d = self.chart.dim();
        let q = vech_len(d);
        let jm = DMatrix::identity(d, d);
        let jc = match &self.chart {
            Chart::FullVech { .. } => DMatrix::identity(q, q),
            Chart::Cholesky { .. } => {
                let a = unvech_lower(&self.theta_c, d)?;
                let mut jc = DMatrix::zeros(q, q);
                for j in 0..d {
                    for i in j..d {
                        // Perturbing A_ij moves C = A Aᵀ by E_ij Aᵀ + A E_ji:
                        // row i gains column j of A, column i gains it too.
                        let mut dc = DMatrix::zeros(d, d);
                        for c in 0..d {
                            dc[(i, c)] += a[(c, j)];
                        }
                        for r in 0..d {
                            dc[(r, i)] += a[(r, j)];
                        }
                        jc.set_column(vech_index(d, i, j), &vech(&dc)?);
                    }
                }
                jc
            }
            Chart::Exponential { .. } => {
                // Directional derivative of the matrix exponential in the
                // eigenbasis of B: scale V ᵀH V entrywise by the first divided
                // differences of exp between eigenvalue pairs.
                let b = unvech(&self.theta_c)?;
                let eig = b.clone().symmetric_eigen();
                let v = &eig.eigenvectors;
                let lam = &eig.eigenvalues;
                let phi = DMatrix::from_fn(d, d, |r, c| exp_divided_difference(lam[r], lam[c]));
                let mut jc = DMatrix::zeros(q, q);
                for j in 0..d {
                    for i in j..d {
                        let mut h = DMatrix::zeros(d, d);
                        h[(i, j)] = S::one();
                        h[(j, i)] = S::one();
                        let w = v.transpose() * &h * v;
                        let p = v * w.component_mul(&phi) * v.transpose();
                        let p = (&p + p.transpose()) * real::<S>(0.5);
                        jc.set_column(vech_index(d, i, j), &vech(&p)?);
                    }
                }
                jc
            }
            Chart::Diagonal { .. } => {
                let mut jc = DMatrix::zeros(q, d);
                for i in 0..d {
                    jc[(vech_index(d, i, i), i)] = S::one();
                }
                jc
            }
            Chart::ScalarScale { base } => {
                let mut jc = DMatrix::zeros(q, 1);
                jc.set_column(0, &vech(base)?);
                jc
            }
        };
        Ok((jm, jc))
    }

    /// One central-difference estimate of the Jacobians at bump size `h`.
    fn fd_jacobians_once(&self, h: S) -> Result<(DMatrix<S>, DMatrix<S>), Error<S>> {
        let d = self.chart.dim();
        let q = vech_len(d);
        let two_h = h + h;
        let mut jm = DMatrix::zeros(d, d);
        for k in 0..d {
            let mut plus = self.theta_m.clone();
            plus[k] += h;
            let mut minus = self.theta_m.clone();
            minus[k] -= h;
            let p_plus = params_of(&self.chart, &plus, &self.theta_c)?;
            let p_minus = params_of(&self.chart, &minus, &self.theta_c)?;
            jm.set_column(k, &((p_plus.mean() - p_minus.mean()) / two_h));
        }
        let mut jc = DMatrix::zeros(q, self.chart.theta_c_len());
        for k in 0..self.chart.theta_c_len() {
            let mut plus = self.theta_c.clone();
            plus[k] += h;
            let mut minus = self.theta_c.clone();
            minus[k] -= h;
            let p_plus = params_of(&self.chart, &self.theta_m, &plus)?;
            let p_minus = params_of(&self.chart, &self.theta_m, &minus)?;
            jc.set_column(k, &((vech(p_plus.cov())? - vech(p_minus.cov())?) / two_h));
        }
        Ok((jm, jc))
    }

    /// Finite-difference Jacobians: central differences at `step` and
    /// `step/2`, Richardson-extrapolated. The coordinates must stay
    /// admissible within `±step` of this point. If the two estimates
    /// disagree badly the chart map is not smooth enough here to
    /// differentiate numerically, and that is reported as a numeric error
    /// rather than returned as garbage.
    pub fn finite_difference_jacobians(
        &self,
        step: f64,
    ) -> Result<(DMatrix<S>, DMatrix<S>), Error<S>> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::Validation("step must be positive and finite".into()));
        }
        let h = real::<S>(step);
        let (jm_h, jc_h) = self.fd_jacobians_once(h)?;
        let (jm_h2, jc_h2) = self.fd_jacobians_once(h * real::<S>(0.5))?;
        let third = real::<S>(1.0 / 3.0);
        let four = real::<S>(4.0);
        let jm = (&jm_h2 * four - &jm_h) * third;
        let jc = (&jc_h2 * four - &jc_h) * third;
        let scale = max_abs(&jc).max(max_abs(&jm)).max(S::one());
        let drift = max_abs(&(&jc_h2 - &jc_h)).max(max_abs(&(&jm_h2 - &jm_h)));
        if drift > scale * real::<S>(1e-3) {
            return Err(Error::Numeric(
                "finite-difference Jacobian estimates at step and step/2 disagree".into(),
            ));
        }
        Ok((jm, jc))
    }

    /// Fisher information matrix in chart coordinates, block-diagonal in the
    /// mean and covariance blocks: `J_mᵀ C⁻¹ J_m` and
    /// `½ tr(C⁻¹ P_k C⁻¹ P_l)` where `P_k` is the covariance perturbation of
    /// the `k`-th coordinate.
    pub fn fisher_matrix(&self) -> Result<DMatrix<S>, Error<S>> {
        let d = self.chart.dim();
        let c_len = self.chart.theta_c_len();
        let params = self.to_params()?;
        let chol = params.cholesky()?;
        let (jm, jc) = self.jacobians()?;
        let mut fisher = DMatrix::zeros(d + c_len, d + c_len);
        let fm = jm.transpose() * chol.solve(&jm);
        fisher.view_mut((0, 0), (d, d)).copy_from(&fm);
        let whitened: Vec<DMatrix<S>> = (0..c_len)
            .map(|k| {
                let p = unvech(&jc.column(k).into_owned())?;
                Ok(chol.solve(&p))
            })
            .collect::<Result<_, Error<S>>>()?;
        let half = real::<S>(0.5);
        for k in 0..c_len {
            for l in k..c_len {
                let mut t = S::zero();
                for r in 0..d {
                    for c in 0..d {
                        t += whitened[k][(r, c)] * whitened[l][(c, r)];
                    }
                }
                let t = t * half;
                fisher[(d + k, d + l)] = t;
                fisher[(d + l, d + k)] = t;
            }
        }
        Ok(fisher)
    }

    /// Natural gradient of `ln π(x; θ)` in this chart, by the closed form the
    /// chart admits.
    ///
    /// The mean block is `x − θ_m` in every chart. The covariance block is
    /// `vech((x−m)(x−m)ᵀ − C)` pulled back through the chart: the identity
    /// for the full chart, a linear solve against the analytic Jacobian for
    /// the Cholesky and exponential charts, and per-coordinate projections
    /// for the diagonal and scalar-scale charts.
    pub fn natural_gradient_loglik(&self, x: &DVector<S>) -> Result<NaturalGradient<S>, Error<S>> {
        let d = self.chart.dim();
        if x.len() != d {
            return Err(Error::Validation(format!(
                "point has dimension {} but the chart has dimension {d}",
                x.len()
            )));
        }
        let centered = x - &self.theta_m;
        let cov_block = match &self.chart {
            Chart::FullVech { .. } => {
                let c = unvech(&self.theta_c)?;
                let s = &centered * centered.transpose();
                vech(&(s - c))?
            }
            Chart::Cholesky { .. } | Chart::Exponential { .. } => {
                let c = self.to_params()?.cov().clone();
                let s = &centered * centered.transpose();
                let rhs = vech(&(s - c))?;
                let (_, jc) = self.jacobians()?;
                jc.lu().solve(&rhs).ok_or_else(|| {
                    Error::Numeric("chart Jacobian is singular at this point".into())
                })?
            }
            Chart::Diagonal { .. } => {
                DVector::from_fn(d, |i, _| centered[i] * centered[i] - self.theta_c[i])
            }
            Chart::ScalarScale { base } => {
                let chol = spd_cholesky(base, "chart base")?;
                let quad = centered.dot(&chol.solve(&centered));
                DVector::from_element(1, quad / real_of_usize::<S>(d) - self.theta_c[0])
            }
        };
        Ok(NaturalGradient {
            mean_block: centered,
            cov_block,
        })
    }

    /// Natural gradient of `ln π(x; θ)` by the definition: chain-rule the
    /// vanilla gradient into chart coordinates, then solve against the
    /// Fisher matrix block by block. Slower than the closed forms but free
    /// of per-chart reasoning; the closed forms are tested against it.
    pub fn natural_gradient_loglik_reference(
        &self,
        x: &DVector<S>,
    ) -> Result<NaturalGradient<S>, Error<S>> {
        let d = self.chart.dim();
        let c_len = self.chart.theta_c_len();
        let params = self.to_params()?;
        let (g_mean, g_cov) = params.log_density_grad(x)?;
        let (jm, jc) = self.jacobians()?;
        let grad_m = jm.transpose() * g_mean;
        let grad_c = jc.transpose() * g_cov;
        let fisher = self.fisher_matrix()?;
        let fm = fisher.view((0, 0), (d, d)).into_owned();
        let fc = fisher.view((d, d), (c_len, c_len)).into_owned();
        Ok(NaturalGradient {
            mean_block: solve_spd_guarded(&fm, &grad_m, "mean-block Fisher matrix")?,
            cov_block: solve_spd_guarded(&fc, &grad_c, "covariance-block Fisher matrix")?,
        })
    }
}

/// Solves a symmetric positive-definite system through its eigendecomposition,
/// refusing matrices that are not positive definite or whose condition number
/// exceeds [`CONDITION_CAP`].
fn solve_spd_guarded<S: Real>(
    m: &DMatrix<S>,
    rhs: &DVector<S>,
    what: &str,
) -> Result<DVector<S>, Error<S>> {
    let eig = m.clone().symmetric_eigen();
    let mut lo = S::max_value().expect("bounded scalar");
    let mut hi = S::zero();
    for &l in eig.eigenvalues.iter() {
        lo = lo.min(l);
        hi = hi.max(l);
    }
    if lo <= S::zero() {
        return Err(Error::Numeric(format!("{what} is not positive definite")));
    }
    if hi / lo > real::<S>(CONDITION_CAP) {
        return Err(Error::Numeric(format!(
            "{what} condition number exceeds {CONDITION_CAP:e}"
        )));
    }
    let projected = eig.eigenvectors.transpose() * rhs;
    let scaled = DVector::from_fn(projected.len(), |i, _| projected[i] / eig.eigenvalues[i]);
    Ok(&eig.eigenvectors * scaled)
}
