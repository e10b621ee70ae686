//! Monte-Carlo estimation of the natural gradient from ranked populations.
//!
//! A sampled population is ranked by fitness (descending, ties broken toward
//! the lower index), a weight scheme turns fitness or ranks into per-point
//! coefficients, and the estimate is the coefficient-weighted sum of
//! per-point log-likelihood natural gradients. Accumulation always runs in
//! point-index order so results are reproducible bit for bit.

use nalgebra::DVector;

use crate::charts::ThetaPoint;
use crate::error::Error;
use crate::scalar::{real, real_of_usize, Real};

/// Natural-gradient coordinates split into mean and covariance blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct NaturalGradient<S: Real> {
    /// Block paired with the mean coordinates `θ_m`.
    pub mean_block: DVector<S>,
    /// Block paired with the covariance coordinates `θ_C`.
    pub cov_block: DVector<S>,
}

/// Sampled points with their fitness values and fitness ranks.
#[derive(Debug, Clone)]
pub struct Population<S: Real> {
    points: Vec<DVector<S>>,
    fitness: Vec<S>,
    ranks: Vec<usize>,
}

impl<S: Real> Population<S> {
    /// Validates the sample and computes ranks (1 = best).
    pub fn new(points: Vec<DVector<S>>, fitness: Vec<S>) -> Result<Self, Error<S>> {
        if points.is_empty() {
            return Err(Error::Validation("population must be non-empty".into()));
        }
        if points.len() != fitness.len() {
            return Err(Error::Validation(format!(
                "{} points but {} fitness values",
                points.len(),
                fitness.len()
            )));
        }
        let dim = points[0].len();
        if points.iter().any(|x| x.len() != dim) {
            return Err(Error::Validation("points have mixed dimensions".into()));
        }
        let ranks = rank(&fitness)?;
        Ok(Self {
            points,
            fitness,
            ranks,
        })
    }

    /// Number of points `λ`.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// True when the population holds no points (never, by construction).
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Search-space dimension.
    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    /// Sampled points in draw order.
    pub fn points(&self) -> &[DVector<S>] {
        &self.points
    }

    /// Fitness values aligned with [`Population::points`].
    pub fn fitness(&self) -> &[S] {
        &self.fitness
    }

    /// Rank of each point (1 = best fitness), aligned with the points.
    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }
}

/// Ranks fitness values descending; ties are broken toward the lower index.
/// Returns a permutation of `1..=λ` aligned with the input.
pub fn rank<S: Real>(fitness: &[S]) -> Result<Vec<usize>, Error<S>> {
    if fitness.is_empty() {
        return Err(Error::Validation("cannot rank an empty fitness list".into()));
    }
    if fitness.iter().any(|f| !f.is_finite()) {
        return Err(Error::Validation(
            "fitness values must be finite to be ranked".into(),
        ));
    }
    let mut order: Vec<usize> = (0..fitness.len()).collect();
    order.sort_by(|&a, &b| {
        fitness[b]
            .partial_cmp(&fitness[a])
            .expect("finite values compare")
            .then(a.cmp(&b))
    });
    let mut ranks = vec![0usize; fitness.len()];
    for (position, &idx) in order.iter().enumerate() {
        ranks[idx] = position + 1;
    }
    Ok(ranks)
}

/// How fitness values are shaped into per-point estimator coefficients.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightScheme<S: Real> {
    /// Coefficient `f(x_i)/λ` — the plain expected-fitness gradient.
    RawFitness,
    /// Coefficient `f(x_i)/Σ_j f(x_j)` — the log-expected-fitness gradient;
    /// requires positive total fitness.
    NormalizedFitness,
    /// Rank-indexed nonnegative weights, non-increasing and summing to one.
    RankBased(Vec<S>),
    /// Rank-indexed signed weights summing to zero.
    Active(Vec<S>),
}

/// Truncated log-linear selection weights: `w'_i = ln(λ/2 + ½) − ln i` for
/// `i ≤ ⌊λ/2⌋`, zero beyond, normalized to sum to one.
pub fn default_rank_weights<S: Real>(lambda: usize) -> Result<Vec<S>, Error<S>> {
    if lambda < 2 {
        return Err(Error::Validation(
            "default weights need a population of at least 2".into(),
        ));
    }
    let mu = lambda / 2;
    let pivot = real::<S>(lambda as f64 / 2.0 + 0.5).ln();
    let mut w: Vec<S> = (1..=lambda)
        .map(|i| {
            if i <= mu {
                pivot - real_of_usize::<S>(i).ln()
            } else {
                S::zero()
            }
        })
        .collect();
    let total = w.iter().fold(S::zero(), |a, &b| a + b);
    for x in &mut w {
        *x /= total;
    }
    Ok(w)
}

/// Default active weights: the default rank weights shifted by `−1/λ`, so the
/// bottom half pulls with small negative coefficients and the sum is zero.
pub fn default_active_weights<S: Real>(lambda: usize) -> Result<Vec<S>, Error<S>> {
    let base = default_rank_weights::<S>(lambda)?;
    let shift = S::one() / real_of_usize::<S>(lambda);
    Ok(base.into_iter().map(|w| w - shift).collect())
}

impl<S: Real> WeightScheme<S> {
    /// Checks the scheme's axioms against a population size.
    pub fn validate(&self, lambda: usize) -> Result<(), Error<S>> {
        let check_shape = |w: &[S]| -> Result<(), Error<S>> {
            if w.len() != lambda {
                return Err(Error::Validation(format!(
                    "{} weights for a population of {lambda}",
                    w.len()
                )));
            }
            if w.iter().any(|x| !x.is_finite()) {
                return Err(Error::Validation("weights must be finite".into()));
            }
            if w.windows(2).any(|p| p[1] > p[0]) {
                return Err(Error::Validation(
                    "rank weights must be non-increasing in rank".into(),
                ));
            }
            Ok(())
        };
        let tol = real::<S>(1e-9);
        match self {
            WeightScheme::RawFitness | WeightScheme::NormalizedFitness => Ok(()),
            WeightScheme::RankBased(w) => {
                check_shape(w)?;
                if w.iter().any(|&x| x < S::zero() || x > S::one()) {
                    return Err(Error::Validation(
                        "rank weights must lie in [0, 1]".into(),
                    ));
                }
                let sum = w.iter().fold(S::zero(), |a, &b| a + b);
                if (sum - S::one()).abs() > tol {
                    return Err(Error::Validation(format!(
                        "rank weights must sum to 1, got {:?}",
                        sum
                    )));
                }
                Ok(())
            }
            WeightScheme::Active(w) => {
                check_shape(w)?;
                if w.iter().any(|&x| x.abs() > S::one()) {
                    return Err(Error::Validation(
                        "active weights must lie in [-1, 1]".into(),
                    ));
                }
                let sum = w.iter().fold(S::zero(), |a, &b| a + b);
                if sum.abs() > tol {
                    return Err(Error::Validation(format!(
                        "active weights must sum to 0, got {:?}",
                        sum
                    )));
                }
                Ok(())
            }
        }
    }

    /// Per-point estimator coefficients for a ranked population, in point
    /// order. Rank-indexed schemes look weights up by rank; fitness-indexed
    /// schemes scale fitness directly.
    pub fn coefficients(&self, population: &Population<S>) -> Result<Vec<S>, Error<S>> {
        self.validate(population.len())?;
        let lambda = real_of_usize::<S>(population.len());
        match self {
            WeightScheme::RawFitness => {
                Ok(population.fitness().iter().map(|&f| f / lambda).collect())
            }
            WeightScheme::NormalizedFitness => {
                let total = population.fitness().iter().fold(S::zero(), |a, &b| a + b);
                if total <= S::zero() {
                    return Err(Error::Domain(
                        "normalized-fitness weights need positive total fitness".into(),
                    ));
                }
                Ok(population.fitness().iter().map(|&f| f / total).collect())
            }
            WeightScheme::RankBased(w) | WeightScheme::Active(w) => Ok(population
                .ranks()
                .iter()
                .map(|&r| w[r - 1])
                .collect()),
        }
    }
}

/// Coefficient-weighted sum of per-point natural gradients, accumulated in
/// point-index order. Shared by the estimator and the strategy steps so the
/// two produce identical floating-point operation sequences.
pub(crate) fn weighted_gradient_sum<S: Real>(
    theta: &ThetaPoint<S>,
    points: &[DVector<S>],
    coefficients: &[S],
) -> Result<NaturalGradient<S>, Error<S>> {
    debug_assert_eq!(points.len(), coefficients.len());
    let mut mean_block = DVector::zeros(theta.chart().dim());
    let mut cov_block = DVector::zeros(theta.chart().theta_c_len());
    for (x, &c) in points.iter().zip(coefficients) {
        let g = theta.natural_gradient_loglik(x)?;
        mean_block.axpy(c, &g.mean_block, S::one());
        cov_block.axpy(c, &g.cov_block, S::one());
    }
    Ok(NaturalGradient {
        mean_block,
        cov_block,
    })
}

/// Monte-Carlo natural-gradient estimate `Σ_i c_i · ∇̃ ln π(x_i; θ)`.
///
/// The baseline `b` only affects [`WeightScheme::RawFitness`], whose
/// coefficients become `(f(x_i) − b)/λ`; rank-indexed and normalized schemes
/// ignore it.
pub fn estimate_natural_gradient<S: Real>(
    theta: &ThetaPoint<S>,
    population: &Population<S>,
    scheme: &WeightScheme<S>,
    baseline: S,
) -> Result<NaturalGradient<S>, Error<S>> {
    if population.dim() != theta.chart().dim() {
        return Err(Error::Validation(format!(
            "population dimension {} does not match chart dimension {}",
            population.dim(),
            theta.chart().dim()
        )));
    }
    let coefficients = match scheme {
        WeightScheme::RawFitness => {
            let lambda = real_of_usize::<S>(population.len());
            population
                .fitness()
                .iter()
                .map(|&f| (f - baseline) / lambda)
                .collect()
        }
        _ => scheme.coefficients(population)?,
    };
    weighted_gradient_sum(theta, population.points(), &coefficients)
}

/// Sample mean of the fitness values — the Monte-Carlo estimate of the
/// expected fitness under the sampling distribution.
pub fn estimate_expected_fitness<S: Real>(population: &Population<S>) -> S {
    let total = population.fitness().iter().fold(S::zero(), |a, &b| a + b);
    total / real_of_usize::<S>(population.len())
}
