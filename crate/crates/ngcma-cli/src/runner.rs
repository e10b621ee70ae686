//! Turns a resolved configuration into runtime pieces — objective, weight
//! scheme, strategy state, run settings — and drives the optimization loop.

use crate::config::RunConfig;
use crate::error::CliError;
use crate::objectives::{lookup, Objective};
use nalgebra::{DMatrix, DVector};
use ngcma::charts::{Chart, ThetaPoint};
use ngcma::estimator::{default_active_weights, default_rank_weights, WeightScheme};
use ngcma::gaussian::GaussianParams;
use ngcma::strategies::{
    run, CmaRates, FullCmaState, NglState, RankMuState, RunOutcome, RunSettings, SepCmaState,
    StrategyState,
};

pub const STRATEGY_KINDS: [&str; 4] = ["rank-mu", "full-cma", "sep-cma", "ngl:<chart>"];
pub const WEIGHT_NAMES: [&str; 4] = ["rank", "raw", "normalized", "active"];

fn config_err<T>(e: impl std::fmt::Display) -> Result<T, CliError> {
    Err(CliError::Config(e.to_string()))
}

pub fn build_scheme(cfg: &RunConfig) -> Result<WeightScheme<f64>, CliError> {
    let lambda = cfg.strategy.lambda;
    let scheme = match cfg.strategy.weights.as_str() {
        "rank" => WeightScheme::RankBased(
            default_rank_weights(lambda).map_err(|e| CliError::Config(e.to_string()))?,
        ),
        "raw" => WeightScheme::RawFitness,
        "normalized" => WeightScheme::NormalizedFitness,
        "active" => WeightScheme::Active(
            default_active_weights(lambda).map_err(|e| CliError::Config(e.to_string()))?,
        ),
        other => {
            return config_err(format!(
                "unknown weights '{other}'; available: {}",
                WEIGHT_NAMES.join(", ")
            ));
        }
    };
    let matrix_strategy = matches!(cfg.strategy.kind.as_str(), "rank-mu" | "sep-cma" | "full-cma");
    if matrix_strategy && !matches!(scheme, WeightScheme::RankBased(_)) {
        return config_err(format!(
            "strategy '{}' requires weights = \"rank\"",
            cfg.strategy.kind
        ));
    }
    Ok(scheme)
}

pub fn init_mean(cfg: &RunConfig) -> DVector<f64> {
    DVector::from_vec(cfg.init.mean.clone().expect("config is resolved"))
}

pub fn init_cov(cfg: &RunConfig) -> DMatrix<f64> {
    let rows = cfg.init.cov.clone().expect("config is resolved");
    let d = rows.len();
    DMatrix::from_fn(d, d, |i, j| rows[i][j])
}

fn chart_by_label(label: &str, dim: usize, cov: &DMatrix<f64>) -> Result<Chart<f64>, CliError> {
    match label {
        "full-vech" => Ok(Chart::FullVech { dim }),
        "cholesky" => Ok(Chart::Cholesky { dim }),
        "exponential" => Ok(Chart::Exponential { dim }),
        "diagonal" => Ok(Chart::Diagonal { dim }),
        "scalar-scale" => {
            Chart::scalar_scale(cov.clone()).map_err(|e| CliError::Config(e.to_string()))
        }
        other => config_err(format!(
            "unknown chart '{other}'; available: full-vech, cholesky, exponential, diagonal, scalar-scale"
        )),
    }
}

pub fn build_state(cfg: &RunConfig) -> Result<StrategyState<f64>, CliError> {
    let d = cfg.problem.dimension;
    let mean = init_mean(cfg);
    let cov = init_cov(cfg);
    let rates = &cfg.strategy.rates;
    let eta_m = rates.eta_mean.expect("config is resolved");
    let eta_c = rates.eta_cov.expect("config is resolved");
    let as_config_err = |e: ngcma::Error<f64>| CliError::Config(e.to_string());

    match cfg.strategy.kind.as_str() {
        "rank-mu" => Ok(StrategyState::RankMu(
            RankMuState::new(mean, cov, eta_m, eta_c).map_err(as_config_err)?,
        )),
        "sep-cma" => {
            for i in 0..d {
                for j in 0..d {
                    if i != j && cov[(i, j)] != 0.0 {
                        return config_err("sep-cma needs a diagonal initial covariance");
                    }
                }
            }
            let variances = cov.diagonal();
            Ok(StrategyState::SepCma(
                SepCmaState::new(mean, variances, eta_m, eta_c).map_err(as_config_err)?,
            ))
        }
        "full-cma" => {
            let cma = CmaRates {
                c_sigma: rates.c_sigma.expect("config is resolved"),
                d_sigma: rates.d_sigma.expect("config is resolved"),
                c_c: rates.c_c.expect("config is resolved"),
                c_1: rates.c_1.expect("config is resolved"),
                c_mu: rates.c_mu.expect("config is resolved"),
            };
            Ok(StrategyState::FullCma(
                FullCmaState::new(mean, cfg.init.sigma, cov, cma).map_err(as_config_err)?,
            ))
        }
        kind => {
            let Some(label) = kind.strip_prefix("ngl:") else {
                return config_err(format!(
                    "unknown strategy '{kind}'; available: {}",
                    STRATEGY_KINDS.join(", ")
                ));
            };
            let chart = chart_by_label(label, d, &cov)?;
            let params = GaussianParams::new(mean, cov).map_err(as_config_err)?;
            let theta = ThetaPoint::from_params(chart, &params).map_err(as_config_err)?;
            Ok(StrategyState::Ngl(
                NglState::new(theta, eta_m, eta_c).map_err(as_config_err)?,
            ))
        }
    }
}

pub fn build_settings(cfg: &RunConfig) -> Result<RunSettings<f64>, CliError> {
    Ok(RunSettings {
        lambda: cfg.strategy.lambda,
        scheme: build_scheme(cfg)?,
        baseline: cfg.strategy.baseline,
        budget: cfg.run.budget,
        target: cfg.run.target,
        condition_cap: cfg.run.condition_cap,
    })
}

/// Builds everything from a resolved config and runs the loop.
pub fn execute(cfg: &RunConfig) -> Result<(Objective, RunOutcome<f64>), CliError> {
    let objective = lookup(&cfg.problem.objective, cfg.problem.dimension)?;
    let state = build_state(cfg)?;
    let settings = build_settings(cfg)?;
    let obj = objective.clone();
    let outcome = run(state, move |x| obj.eval(x), &settings, cfg.run.seed);
    Ok((objective, outcome))
}
