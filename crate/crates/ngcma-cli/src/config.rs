//! Run configuration: a sectioned TOML file that fully determines an
//! invocation together with the seed. Unknown keys are rejected, omitted
//! keys resolve to concrete defaults, and the resolved form serializes back
//! to TOML that parses to itself — the resolved config embedded in every
//! output is enough to reproduce the run byte for byte.

use crate::error::CliError;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: Problem,
    pub strategy: Strategy,
    #[serde(default)]
    pub init: Init,
    pub run: Run,
    #[serde(default)]
    pub theory: Theory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Problem {
    /// Objective name from the built-in catalog.
    pub objective: String,
    /// Search-space dimension.
    pub dimension: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Strategy {
    /// `rank-mu`, `full-cma`, `sep-cma`, or `ngl:<chart>` with chart one of
    /// `full-vech`, `cholesky`, `exponential`, `diagonal`, `scalar-scale`.
    pub kind: String,
    /// Points drawn per iteration.
    pub lambda: usize,
    /// `rank`, `raw`, `normalized`, or `active`.
    #[serde(default = "default_weights")]
    pub weights: String,
    /// Baseline subtracted by the raw weighting; ignored otherwise.
    #[serde(default)]
    pub baseline: f64,
    /// Learning rates; omitted entries resolve to the defaults for
    /// `(dimension, lambda)`.
    #[serde(default)]
    pub rates: Rates,
}

fn default_weights() -> String {
    "rank".to_owned()
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rates {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta_cov: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_mu: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Init {
    /// Initial mean; defaults to the origin.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean: Option<Vec<f64>>,
    /// Initial covariance rows; defaults to the identity.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cov: Option<Vec<Vec<f64>>>,
    /// Initial global step size (full strategy only).
    #[serde(default = "default_sigma")]
    pub sigma: f64,
}

fn default_sigma() -> f64 {
    1.0
}

// Hand-written so a missing [init] section gets the same step size as an
// [init] section that omits sigma.
impl Default for Init {
    fn default() -> Self {
        Self {
            mean: None,
            cov: None,
            sigma: default_sigma(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Run {
    pub seed: u64,
    /// Maximum number of iterations.
    pub budget: u64,
    /// Stop once the best observed fitness reaches this value.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<f64>,
    /// Output path; the `--out` flag overrides it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    /// Stop once the shape matrix condition number exceeds this cap.
    #[serde(default = "default_condition_cap")]
    pub condition_cap: f64,
}

fn default_condition_cap() -> f64 {
    1e14
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Theory {
    /// Gauss–Hermite nodes per axis.
    #[serde(default = "default_nodes")]
    pub nodes_per_dim: usize,
    /// Grid points per step-length axis; zero requests an empty grid.
    #[serde(default = "default_eta_points")]
    pub eta_points: usize,
    /// Step-length axes run from zero to this multiple of the predicted
    /// maximizer.
    #[serde(default = "default_overshoot")]
    pub overshoot: f64,
}

fn default_nodes() -> usize {
    64
}

fn default_eta_points() -> usize {
    24
}

fn default_overshoot() -> f64 {
    1.25
}

impl Default for Theory {
    fn default() -> Self {
        Self {
            nodes_per_dim: default_nodes(),
            eta_points: default_eta_points(),
            overshoot: default_overshoot(),
        }
    }
}

impl RunConfig {
    /// Reads and parses a configuration file. Parse problems are config
    /// errors.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }

    /// Fills every omitted choice with its concrete default and checks the
    /// cheap structural invariants, so the returned config serializes to a
    /// complete, reproducible description of the run.
    pub fn resolved(mut self) -> Result<Self, CliError> {
        let d = self.problem.dimension;
        if d == 0 {
            return Err(CliError::Config("dimension must be at least 1".into()));
        }
        if self.strategy.lambda == 0 {
            return Err(CliError::Config("lambda must be at least 1".into()));
        }

        match self.init.mean {
            None => self.init.mean = Some(vec![0.0; d]),
            Some(ref m) if m.len() != d => {
                return Err(CliError::Config(format!(
                    "init.mean has {} entries for dimension {d}",
                    m.len()
                )));
            }
            Some(_) => {}
        }
        match self.init.cov {
            None => {
                self.init.cov = Some(
                    (0..d)
                        .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                        .collect(),
                );
            }
            Some(ref rows) => {
                if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                    return Err(CliError::Config(format!(
                        "init.cov must be a {d}×{d} matrix"
                    )));
                }
            }
        }

        let defaults = ngcma::strategies::default_learning_rates::<f64>(d, self.strategy.lambda)
            .map_err(|e| CliError::Config(e.to_string()))?;
        let r = &mut self.strategy.rates;
        r.eta_mean.get_or_insert(defaults.eta_m);
        r.eta_cov.get_or_insert(defaults.eta_c);
        r.c_sigma.get_or_insert(defaults.cma.c_sigma);
        r.d_sigma.get_or_insert(defaults.cma.d_sigma);
        r.c_c.get_or_insert(defaults.cma.c_c);
        r.c_1.get_or_insert(defaults.cma.c_1);
        r.c_mu.get_or_insert(defaults.cma.c_mu);

        Ok(self)
    }

    /// The resolved config as TOML text.
    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(format!("cannot serialize: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [problem]
        objective = "sphere"
        dimension = 2

        [strategy]
        kind = "rank-mu"
        lambda = 12

        [run]
        seed = 7
        budget = 150
    "#;

    #[test]
    fn minimal_config_resolves_with_defaults() {
        let cfg = RunConfig::parse(MINIMAL).unwrap().resolved().unwrap();
        assert_eq!(cfg.strategy.weights, "rank");
        assert_eq!(cfg.init.mean.as_deref(), Some(&[0.0, 0.0][..]));
        assert_eq!(
            cfg.init.cov,
            Some(vec![vec![1.0, 0.0], vec![0.0, 1.0]])
        );
        assert_eq!(cfg.init.sigma, 1.0);
        assert_eq!(cfg.run.condition_cap, 1e14);
        assert_eq!(cfg.theory.nodes_per_dim, 64);
        assert_eq!(cfg.strategy.rates.eta_mean, Some(1.0));
        assert!(cfg.strategy.rates.c_mu.unwrap() > 0.0);
    }

    #[test]
    fn resolved_config_round_trips_through_toml() {
        let resolved = RunConfig::parse(MINIMAL).unwrap().resolved().unwrap();
        let text = resolved.to_toml().unwrap();
        let reparsed = RunConfig::parse(&text).unwrap().resolved().unwrap();
        assert_eq!(resolved, reparsed);
        // And the second serialization is byte-identical: a fixed point.
        assert_eq!(text, reparsed.to_toml().unwrap());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{MINIMAL}\n[extra]\nx = 1\n");
        assert!(RunConfig::parse(&text).is_err());
        let text = MINIMAL.replace("budget = 150", "budget = 150\nbudgets = 2");
        assert!(RunConfig::parse(&text).is_err());
    }

    #[test]
    fn shape_mismatches_are_config_errors() {
        let bad_mean = MINIMAL.replace("[run]", "[init]\nmean = [1.0]\n\n[run]");
        assert!(RunConfig::parse(&bad_mean).unwrap().resolved().is_err());
        let bad_cov = MINIMAL.replace("[run]", "[init]\ncov = [[1.0]]\n\n[run]");
        assert!(RunConfig::parse(&bad_cov).unwrap().resolved().is_err());
    }
}
