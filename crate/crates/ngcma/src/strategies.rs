//! Evolution-strategy update rules built on the natural-gradient estimator,
//! and a deterministic driver that runs them against an objective.
//!
//! Three covariance-adapting families are provided, all moving the mean by
//! the same weighted recombination: a pure natural-gradient step in any
//! chart ([`ngl_step`]), the rank-μ update ([`rank_mu_step`], the same step
//! specialized to full-covariance coordinates), its diagonal restriction
//! ([`sep_cma_step`]), and the full step-size-adapted algorithm with both
//! evolution paths ([`full_cma_step`]).

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::charts::{sym_eigen_apply, Chart, ThetaPoint};
use crate::error::Error;
use crate::estimator::{
    default_rank_weights, estimate_expected_fitness, estimate_natural_gradient,
    weighted_gradient_sum, NaturalGradient, Population, WeightScheme,
};
use crate::gaussian::{unvech, vech, GaussianParams};
use crate::scalar::{real, real_of_usize, Real};

/// `ln Γ(n/2)` for a positive integer `n`, via the exact half-integer
/// recurrences `Γ(k) = (k−1)!` and `Γ(k + ½) = √π · ∏_{j<k} (j + ½)`.
fn ln_gamma_half(n: u64) -> f64 {
    if n.is_multiple_of(2) {
        let k = n / 2;
        (2..k).map(|j| (j as f64).ln()).sum()
    } else {
        let k = (n - 1) / 2;
        0.5 * std::f64::consts::PI.ln() + (0..k).map(|j| (j as f64 + 0.5).ln()).sum::<f64>()
    }
}

/// Expected norm of a `d`-dimensional standard normal vector,
/// `√2 · Γ((d+1)/2) / Γ(d/2)` — the reference length that step-size
/// adaptation compares the conjugate path against.
pub fn chi_d<S: Real>(dim: usize) -> S {
    assert!(dim >= 1, "dimension must be at least 1");
    let ln_value =
        0.5 * std::f64::consts::LN_2 + ln_gamma_half(dim as u64 + 1) - ln_gamma_half(dim as u64);
    real::<S>(ln_value.exp())
}

/// Rates for the full strategy with step-size control and both paths.
#[derive(Debug, Clone, PartialEq)]
pub struct CmaRates<S: Real> {
    /// Conjugate (step-size) path accumulation rate.
    pub c_sigma: S,
    /// Step-size damping.
    pub d_sigma: S,
    /// Covariance path accumulation rate.
    pub c_c: S,
    /// Rank-one covariance learning rate.
    pub c_1: S,
    /// Rank-μ covariance learning rate.
    pub c_mu: S,
}

/// Learning rates for every strategy family at a given `(dim, λ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LearningRates<S: Real> {
    /// Mean step scale for the plain natural-gradient families.
    pub eta_m: S,
    /// Covariance step scale for the plain natural-gradient families
    /// (matches `c_mu`).
    pub eta_c: S,
    /// Rates for the full strategy.
    pub cma: CmaRates<S>,
}

/// Standard learning rates as functions of dimension and population size,
/// derived from the variance-effective selection mass of the default rank
/// weights.
pub fn default_learning_rates<S: Real>(
    dim: usize,
    lambda: usize,
) -> Result<LearningRates<S>, Error<S>> {
    if dim == 0 {
        return Err(Error::Validation("dimension must be at least 1".into()));
    }
    let w = default_rank_weights::<S>(lambda)?;
    let sum_w2 = w.iter().fold(S::zero(), |a, &x| a + x * x);
    let mu_eff = S::one() / sum_w2;
    let d = real_of_usize::<S>(dim);
    let one = S::one();
    let two = real::<S>(2.0);
    let c_sigma = (mu_eff + two) / (d + mu_eff + real::<S>(5.0));
    let d_sigma =
        one + two * S::zero().max(((mu_eff - one) / (d + one)).sqrt() - one) + c_sigma;
    let c_c = (real::<S>(4.0) + mu_eff / d) / (d + real::<S>(4.0) + two * mu_eff / d);
    let c_1 = two / ((d + real::<S>(1.3)).powi(2) + mu_eff);
    // The 0.25 offset keeps the rank-μ rate strictly positive even when the
    // selection mass degenerates to a single point (λ of 2 or 3).
    let c_mu = (one - c_1)
        .min(two * (real::<S>(0.25) + mu_eff + one / mu_eff - two) / ((d + two).powi(2) + mu_eff));
    Ok(LearningRates {
        eta_m: one,
        eta_c: c_mu,
        cma: CmaRates {
            c_sigma,
            d_sigma,
            c_c,
            c_1,
            c_mu,
        },
    })
}

fn check_rate<S: Real>(value: S, name: &str) -> Result<(), Error<S>> {
    if !(value.is_finite() && value > S::zero() && value <= S::one()) {
        return Err(Error::Validation(format!("{name} must lie in (0, 1]")));
    }
    Ok(())
}

/// One natural-gradient ascent step in chart coordinates:
/// `θ′ = (θ_m + η_m δ_m, θ_C + η_C δ_C)`.
///
/// The rates may be any finite values — theory-side callers legitimately
/// step past 1. A step that leaves the admissible set is reported as a
/// step-rejected error carrying the offending coordinates.
pub fn ngl_step<S: Real>(
    theta: &ThetaPoint<S>,
    delta: &NaturalGradient<S>,
    eta_m: S,
    eta_c: S,
) -> Result<ThetaPoint<S>, Error<S>> {
    if delta.mean_block.len() != theta.chart().dim()
        || delta.cov_block.len() != theta.chart().theta_c_len()
    {
        return Err(Error::Validation(
            "direction blocks do not match the chart's coordinate lengths".into(),
        ));
    }
    if !eta_m.is_finite() || !eta_c.is_finite() {
        return Err(Error::Validation("step rates must be finite".into()));
    }
    let theta_m = theta.theta_m() + delta.mean_block.scale(eta_m);
    let theta_c = theta.theta_c() + delta.cov_block.scale(eta_c);
    ThetaPoint::new(theta.chart().clone(), theta_m.clone(), theta_c.clone()).map_err(|e| {
        match e {
            Error::Domain(reason) | Error::Validation(reason) => Error::StepRejected {
                reason,
                theta_m,
                theta_c,
            },
            other => other,
        }
    })
}

/// Mean and full covariance adapted by rank-based natural-gradient steps.
#[derive(Debug, Clone, PartialEq)]
pub struct RankMuState<S: Real> {
    pub mean: DVector<S>,
    pub cov: DMatrix<S>,
    pub eta_m: S,
    pub eta_c: S,
    pub iteration: u64,
}

impl<S: Real> RankMuState<S> {
    /// Validates the distribution parameters and rates (both in `(0, 1]`).
    pub fn new(
        mean: DVector<S>,
        cov: DMatrix<S>,
        eta_m: S,
        eta_c: S,
    ) -> Result<Self, Error<S>> {
        check_rate(eta_m, "eta_m")?;
        check_rate(eta_c, "eta_c")?;
        let params = GaussianParams::new(mean, cov)?;
        Ok(Self {
            mean: params.mean().clone(),
            cov: params.cov().clone(),
            eta_m,
            eta_c,
            iteration: 0,
        })
    }
}

/// One rank-μ update: the natural-gradient step in full-covariance
/// coordinates with rank-based weights. This routes through exactly the same
/// estimator and step code as the generic chart path, so the two agree bit
/// for bit.
pub fn rank_mu_step<S: Real>(
    state: &RankMuState<S>,
    population: &Population<S>,
    weights: &[S],
) -> Result<RankMuState<S>, Error<S>> {
    let scheme = WeightScheme::RankBased(weights.to_vec());
    let theta = ThetaPoint::new(
        Chart::FullVech {
            dim: state.mean.len(),
        },
        state.mean.clone(),
        vech(&state.cov)?,
    )?;
    let delta = estimate_natural_gradient(&theta, population, &scheme, S::zero())?;
    let next = ngl_step(&theta, &delta, state.eta_m, state.eta_c)?;
    Ok(RankMuState {
        mean: next.theta_m().clone(),
        cov: unvech(next.theta_c())?,
        eta_m: state.eta_m,
        eta_c: state.eta_c,
        iteration: state.iteration + 1,
    })
}

/// Mean and per-coordinate variances adapted by rank-based natural-gradient
/// steps — the diagonal restriction of [`rank_mu_step`].
#[derive(Debug, Clone, PartialEq)]
pub struct SepCmaState<S: Real> {
    pub mean: DVector<S>,
    pub variances: DVector<S>,
    pub eta_m: S,
    pub eta_c: S,
    pub iteration: u64,
}

impl<S: Real> SepCmaState<S> {
    /// Validates positive finite variances and rates in `(0, 1]`.
    pub fn new(
        mean: DVector<S>,
        variances: DVector<S>,
        eta_m: S,
        eta_c: S,
    ) -> Result<Self, Error<S>> {
        check_rate(eta_m, "eta_m")?;
        check_rate(eta_c, "eta_c")?;
        if mean.is_empty() || mean.len() != variances.len() {
            return Err(Error::Validation(
                "mean and variances must have equal, positive length".into(),
            ));
        }
        if mean.iter().any(|x| !x.is_finite()) {
            return Err(Error::Validation("mean must be finite".into()));
        }
        if variances.iter().any(|&v| !(v.is_finite() && v > S::zero())) {
            return Err(Error::Validation(
                "variances must be positive and finite".into(),
            ));
        }
        Ok(Self {
            mean,
            variances,
            eta_m,
            eta_c,
            iteration: 0,
        })
    }
}

/// One separable update: the diagonal-chart natural-gradient step with
/// rank-based weights, written directly on the variance vector. In one
/// dimension it reproduces [`rank_mu_step`] exactly.
pub fn sep_cma_step<S: Real>(
    state: &SepCmaState<S>,
    population: &Population<S>,
    weights: &[S],
) -> Result<SepCmaState<S>, Error<S>> {
    let scheme = WeightScheme::RankBased(weights.to_vec());
    let theta = ThetaPoint::new(
        Chart::Diagonal {
            dim: state.mean.len(),
        },
        state.mean.clone(),
        state.variances.clone(),
    )?;
    if population.dim() != state.mean.len() {
        return Err(Error::Validation(format!(
            "population dimension {} does not match state dimension {}",
            population.dim(),
            state.mean.len()
        )));
    }
    let coefficients = scheme.coefficients(population)?;
    let delta = weighted_gradient_sum(&theta, population.points(), &coefficients)?;
    let next = ngl_step(&theta, &delta, state.eta_m, state.eta_c)?;
    Ok(SepCmaState {
        mean: next.theta_m().clone(),
        variances: next.theta_c().clone(),
        eta_m: state.eta_m,
        eta_c: state.eta_c,
        iteration: state.iteration + 1,
    })
}

/// Full strategy state: mean, global step size, shape matrix, and the two
/// evolution paths.
#[derive(Debug, Clone, PartialEq)]
pub struct FullCmaState<S: Real> {
    pub mean: DVector<S>,
    pub sigma: S,
    pub cov: DMatrix<S>,
    pub p_sigma: DVector<S>,
    pub p_c: DVector<S>,
    pub rates: CmaRates<S>,
    pub iteration: u64,
}

impl<S: Real> FullCmaState<S> {
    /// Validates the distribution parameters and rates; both paths start at
    /// zero.
    pub fn new(
        mean: DVector<S>,
        sigma: S,
        cov: DMatrix<S>,
        rates: CmaRates<S>,
    ) -> Result<Self, Error<S>> {
        if !(sigma.is_finite() && sigma > S::zero()) {
            return Err(Error::Validation("sigma must be positive and finite".into()));
        }
        check_rate(rates.c_sigma, "c_sigma")?;
        check_rate(rates.c_c, "c_c")?;
        if !(rates.d_sigma.is_finite() && rates.d_sigma >= S::one()) {
            return Err(Error::Validation("d_sigma must be at least 1".into()));
        }
        for (v, name) in [(rates.c_1, "c_1"), (rates.c_mu, "c_mu")] {
            if !(v.is_finite() && v >= S::zero() && v <= S::one()) {
                return Err(Error::Validation(format!("{name} must lie in [0, 1]")));
            }
        }
        if rates.c_1 + rates.c_mu > S::one() {
            return Err(Error::Validation(
                "c_1 + c_mu must not exceed 1".into(),
            ));
        }
        let params = GaussianParams::new(mean, cov)?;
        let d = params.dim();
        Ok(Self {
            mean: params.mean().clone(),
            sigma,
            cov: params.cov().clone(),
            p_sigma: DVector::zeros(d),
            p_c: DVector::zeros(d),
            rates,
            iteration: 0,
        })
    }
}

/// One full update: weighted recombination of the mean, conjugate-path
/// step-size control, and a covariance update mixing the rank-one path
/// term with the rank-μ term. All per-point sums run in draw order.
pub fn full_cma_step<S: Real>(
    state: &FullCmaState<S>,
    population: &Population<S>,
    weights: &[S],
) -> Result<FullCmaState<S>, Error<S>> {
    let scheme = WeightScheme::RankBased(weights.to_vec());
    if population.dim() != state.mean.len() {
        return Err(Error::Validation(format!(
            "population dimension {} does not match state dimension {}",
            population.dim(),
            state.mean.len()
        )));
    }
    let coefficients = scheme.coefficients(population)?;
    let d = state.mean.len();
    let one = S::one();
    let two = real::<S>(2.0);
    let r = &state.rates;

    let mut mean_next = DVector::zeros(d);
    for (x, &w) in population.points().iter().zip(&coefficients) {
        mean_next.axpy(w, x, one);
    }
    // Displacement in shape-matrix coordinates (the sampling covariance is
    // σ²C, so dividing by σ leaves a C-distributed quantity).
    let step_dir = (&mean_next - &state.mean) / state.sigma;
    let sum_w2 = coefficients.iter().fold(S::zero(), |a, &w| a + w * w);
    let mu_eff = one / sum_w2;

    let cov_inv_sqrt = {
        let eig_guard = state
            .cov
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .any(|&l| l <= S::zero());
        if eig_guard {
            return Err(Error::Numeric(
                "shape matrix lost positive definiteness".into(),
            ));
        }
        sym_eigen_apply(&state.cov, |l| one / l.sqrt())
    };
    let disc_sigma = (r.c_sigma * (two - r.c_sigma) * mu_eff).sqrt();
    let p_sigma =
        state.p_sigma.scale(one - r.c_sigma) + (&cov_inv_sqrt * &step_dir).scale(disc_sigma);
    let chi = chi_d::<S>(d);
    let sigma = state.sigma * ((r.c_sigma / r.d_sigma) * (p_sigma.norm() - chi) / chi).exp();

    let disc_c = (r.c_c * (two - r.c_c) * mu_eff).sqrt();
    let p_c = state.p_c.scale(one - r.c_c) + step_dir.scale(disc_c);

    let mut shape_update = DMatrix::zeros(d, d);
    for (x, &w) in population.points().iter().zip(&coefficients) {
        let y = (x - &state.mean) / state.sigma;
        shape_update.ger(w, &y, &y, one);
    }
    let mut cov = state.cov.scale(one - r.c_1 - r.c_mu);
    cov.ger(r.c_1, &p_c, &p_c, one);
    cov += shape_update.scale(r.c_mu);

    if !(sigma.is_finite() && sigma > S::zero())
        || p_sigma.iter().any(|x| !x.is_finite())
        || p_c.iter().any(|x| !x.is_finite())
    {
        return Err(Error::StepRejected {
            reason: "step size or a path left the finite positive range".into(),
            theta_m: mean_next,
            theta_c: DVector::from_element(1, sigma),
        });
    }
    let mean_for_report = mean_next.clone();
    let cov_for_report = vech(&cov)?;
    let checked = GaussianParams::new(mean_next, cov).map_err(|e| match e {
        Error::Validation(reason) => Error::StepRejected {
            reason,
            theta_m: mean_for_report,
            theta_c: cov_for_report,
        },
        other => other,
    })?;
    Ok(FullCmaState {
        mean: checked.mean().clone(),
        sigma,
        cov: checked.cov().clone(),
        p_sigma,
        p_c,
        rates: state.rates.clone(),
        iteration: state.iteration + 1,
    })
}

/// Pure natural-gradient ascent state in an arbitrary chart.
#[derive(Debug, Clone, PartialEq)]
pub struct NglState<S: Real> {
    pub theta: ThetaPoint<S>,
    pub eta_m: S,
    pub eta_c: S,
    pub iteration: u64,
}

impl<S: Real> NglState<S> {
    /// Validates rates in `(0, 1]`; the point carries its own invariants.
    pub fn new(theta: ThetaPoint<S>, eta_m: S, eta_c: S) -> Result<Self, Error<S>> {
        check_rate(eta_m, "eta_m")?;
        check_rate(eta_c, "eta_c")?;
        Ok(Self {
            theta,
            eta_m,
            eta_c,
            iteration: 0,
        })
    }
}

/// State of any strategy family, for the shared run driver.
#[derive(Debug, Clone)]
pub enum StrategyState<S: Real> {
    Ngl(NglState<S>),
    RankMu(RankMuState<S>),
    SepCma(SepCmaState<S>),
    FullCma(FullCmaState<S>),
}

impl<S: Real> StrategyState<S> {
    /// Search-space dimension.
    pub fn dim(&self) -> usize {
        match self {
            StrategyState::Ngl(s) => s.theta.chart().dim(),
            StrategyState::RankMu(s) => s.mean.len(),
            StrategyState::SepCma(s) => s.mean.len(),
            StrategyState::FullCma(s) => s.mean.len(),
        }
    }

    /// Completed iterations.
    pub fn iteration(&self) -> u64 {
        match self {
            StrategyState::Ngl(s) => s.iteration,
            StrategyState::RankMu(s) => s.iteration,
            StrategyState::SepCma(s) => s.iteration,
            StrategyState::FullCma(s) => s.iteration,
        }
    }

    /// Current mean of the sampling distribution.
    pub fn mean(&self) -> DVector<S> {
        match self {
            StrategyState::Ngl(s) => s.theta.theta_m().clone(),
            StrategyState::RankMu(s) => s.mean.clone(),
            StrategyState::SepCma(s) => s.mean.clone(),
            StrategyState::FullCma(s) => s.mean.clone(),
        }
    }

    /// Global step-size multiplier (1 for families without one).
    pub fn step_scale(&self) -> S {
        match self {
            StrategyState::FullCma(s) => s.sigma,
            _ => S::one(),
        }
    }

    /// The distribution the next population is drawn from.
    pub fn sampling_params(&self) -> Result<GaussianParams<S>, Error<S>> {
        match self {
            StrategyState::Ngl(s) => s.theta.to_params(),
            StrategyState::RankMu(s) => GaussianParams::new(s.mean.clone(), s.cov.clone()),
            StrategyState::SepCma(s) => {
                GaussianParams::new(s.mean.clone(), DMatrix::from_diagonal(&s.variances))
            }
            StrategyState::FullCma(s) => GaussianParams::new(
                s.mean.clone(),
                s.cov.scale(s.sigma * s.sigma),
            ),
        }
    }

    /// Eigenvalue range (min, max) of the shape matrix — the covariance
    /// without the global step-size factor.
    pub fn shape_eigenvalue_range(&self) -> Result<(S, S), Error<S>> {
        let spectrum_of = |m: &DMatrix<S>| {
            let eig = m.clone().symmetric_eigen().eigenvalues;
            let mut lo = eig[0];
            let mut hi = eig[0];
            for &l in eig.iter() {
                lo = lo.min(l);
                hi = hi.max(l);
            }
            (lo, hi)
        };
        Ok(match self {
            StrategyState::Ngl(s) => spectrum_of(s.theta.to_params()?.cov()),
            StrategyState::RankMu(s) => spectrum_of(&s.cov),
            StrategyState::SepCma(s) => {
                let mut lo = s.variances[0];
                let mut hi = s.variances[0];
                for &v in s.variances.iter() {
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                (lo, hi)
            }
            StrategyState::FullCma(s) => spectrum_of(&s.cov),
        })
    }
}

/// Shared settings for [`run`].
#[derive(Debug, Clone)]
pub struct RunSettings<S: Real> {
    /// Points drawn per iteration.
    pub lambda: usize,
    /// Fitness-shaping scheme; matrix strategies require a rank-based one.
    pub scheme: WeightScheme<S>,
    /// Baseline subtracted by the raw-fitness scheme; ignored otherwise.
    pub baseline: S,
    /// Maximum number of iterations.
    pub budget: u64,
    /// Stop once the best observed fitness reaches this value.
    pub target: Option<S>,
    /// Stop once the shape matrix condition number exceeds this cap.
    pub condition_cap: S,
}

/// One row of the run trace, written after each completed iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord<S: Real> {
    pub iteration: u64,
    pub evaluations: u64,
    /// Best fitness observed so far across all evaluations.
    pub best_f: S,
    pub mean: DVector<S>,
    pub sigma: S,
    pub eig_min: S,
    pub eig_max: S,
    /// Sample mean of this iteration's fitness values.
    pub j_estimate: S,
}

/// Why a run stopped.
#[derive(Debug, Clone)]
pub enum Termination<S: Real> {
    BudgetExhausted,
    TargetReached,
    ConditionExceeded,
    Rejected(Error<S>),
}

impl<S: Real> Termination<S> {
    /// Stable short name for reports and trace footers.
    pub fn label(&self) -> &'static str {
        match self {
            Termination::BudgetExhausted => "budget-exhausted",
            Termination::TargetReached => "target-reached",
            Termination::ConditionExceeded => "condition-exceeded",
            Termination::Rejected(_) => "step-rejected",
        }
    }
}

/// Everything a finished run leaves behind.
#[derive(Debug, Clone)]
pub struct RunOutcome<S: Real> {
    pub trace: Vec<TraceRecord<S>>,
    pub state: StrategyState<S>,
    pub termination: Termination<S>,
    /// Best fitness observed, if any iteration completed.
    pub best_f: Option<S>,
}

fn advance<S: Real>(
    state: &mut StrategyState<S>,
    population: &Population<S>,
    settings: &RunSettings<S>,
) -> Result<(), Error<S>> {
    let rank_weights = |scheme: &WeightScheme<S>| -> Result<Vec<S>, Error<S>> {
        match scheme {
            WeightScheme::RankBased(w) => Ok(w.clone()),
            _ => Err(Error::Validation(
                "matrix strategies require a rank-based weight scheme".into(),
            )),
        }
    };
    match state {
        StrategyState::Ngl(s) => {
            let delta =
                estimate_natural_gradient(&s.theta, population, &settings.scheme, settings.baseline)?;
            s.theta = ngl_step(&s.theta, &delta, s.eta_m, s.eta_c)?;
            s.iteration += 1;
        }
        StrategyState::RankMu(s) => {
            *s = rank_mu_step(s, population, &rank_weights(&settings.scheme)?)?;
        }
        StrategyState::SepCma(s) => {
            *s = sep_cma_step(s, population, &rank_weights(&settings.scheme)?)?;
        }
        StrategyState::FullCma(s) => {
            *s = full_cma_step(s, population, &rank_weights(&settings.scheme)?)?;
        }
    }
    Ok(())
}

/// Runs a strategy against an objective with a seeded generator.
///
/// Each iteration samples `λ` points (consuming exactly `λ·d` normal draws),
/// evaluates the objective, advances the state, and appends one trace row.
/// With the same initial state, settings, and seed, the whole trace is
/// reproducible bit for bit. Errors never unwind: they terminate the run and
/// are reported in the outcome.
pub fn run<S: Real>(
    initial: StrategyState<S>,
    mut objective: impl FnMut(&DVector<S>) -> S,
    settings: &RunSettings<S>,
    seed: u64,
) -> RunOutcome<S> {
    let mut state = initial;
    let mut trace: Vec<TraceRecord<S>> = Vec::new();
    let mut best: Option<S> = None;
    let mut evaluations: u64 = 0;

    let reject = |trace: Vec<TraceRecord<S>>, state: StrategyState<S>, best: Option<S>, e| {
        RunOutcome {
            trace,
            state,
            termination: Termination::Rejected(e),
            best_f: best,
        }
    };
    if settings.lambda == 0 {
        let e = Error::Validation("lambda must be at least 1".into());
        return reject(trace, state, best, e);
    }
    if let Err(e) = settings.scheme.validate(settings.lambda) {
        return reject(trace, state, best, e);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..settings.budget {
        let outcome: Result<Population<S>, Error<S>> = (|| {
            let params = state.sampling_params()?;
            let points = params.sample_with(settings.lambda, &mut rng)?;
            let fitness: Vec<S> = points.iter().map(|x| objective(x)).collect();
            let population = Population::new(points, fitness)?;
            advance(&mut state, &population, settings)?;
            Ok(population)
        })();
        let population = match outcome {
            Ok(p) => p,
            Err(e) => return reject(trace, state, best, e),
        };
        evaluations += settings.lambda as u64;
        let pop_best = population
            .fitness()
            .iter()
            .copied()
            .reduce(|a, b| a.max(b))
            .expect("populations are non-empty");
        let best_now = match best {
            None => pop_best,
            Some(b) => b.max(pop_best),
        };
        best = Some(best_now);
        let (eig_min, eig_max) = match state.shape_eigenvalue_range() {
            Ok(r) => r,
            Err(e) => return reject(trace, state, best, e),
        };
        trace.push(TraceRecord {
            iteration: state.iteration(),
            evaluations,
            best_f: best_now,
            mean: state.mean(),
            sigma: state.step_scale(),
            eig_min,
            eig_max,
            j_estimate: estimate_expected_fitness(&population),
        });
        if let Some(target) = settings.target {
            if best_now >= target {
                return RunOutcome {
                    trace,
                    state,
                    termination: Termination::TargetReached,
                    best_f: best,
                };
            }
        }
        if eig_min <= S::zero() || eig_max / eig_min > settings.condition_cap {
            return RunOutcome {
                trace,
                state,
                termination: Termination::ConditionExceeded,
                best_f: best,
            };
        }
    }
    RunOutcome {
        trace,
        state,
        termination: Termination::BudgetExhausted,
        best_f: best,
    }
}
