//! Built-in benchmark objectives. Fitness is maximized throughout, so the
//! classical minimization benchmarks enter negated, each with optimum 0 at
//! the usual minimizer. The `exp-` forms and the Gaussian kernel are
//! strictly positive, as the theory commands require.

use crate::error::CliError;
use nalgebra::DVector;
use ngcma::theory::{GrowthBound, PositiveFitness};
use std::f64::consts::PI;
use std::sync::Arc;

#[derive(Clone)]
pub struct Objective {
    pub name: String,
    /// Strictly positive everywhere, hence usable by the theory commands.
    pub positive: bool,
    /// Best attainable fitness, when known.
    pub optimum: Option<f64>,
    f: Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Objective")
            .field("name", &self.name)
            .field("positive", &self.positive)
            .field("optimum", &self.optimum)
            .finish_non_exhaustive()
    }
}

impl Objective {
    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        (self.f)(x)
    }

    /// The objective as a checked positive fitness for quadrature work.
    pub fn positive_fitness(&self) -> Result<PositiveFitness<f64>, CliError> {
        if !self.positive {
            return Err(CliError::Config(format!(
                "objective '{}' is not strictly positive; use one of: {}",
                self.name,
                positive_names().join(", ")
            )));
        }
        let f = Arc::clone(&self.f);
        // Every positive built-in is bounded above by its optimum.
        Ok(PositiveFitness::new(move |x| f(x), GrowthBound::Bounded))
    }
}

fn sphere(x: &DVector<f64>) -> f64 {
    -x.norm_squared()
}

fn ellipsoid(x: &DVector<f64>) -> f64 {
    let d = x.len();
    let mut acc = 0.0;
    for (i, &v) in x.iter().enumerate() {
        acc += 10f64.powf(6.0 * i as f64 / (d - 1) as f64) * v * v;
    }
    -acc
}

fn rosenbrock(x: &DVector<f64>) -> f64 {
    let mut acc = 0.0;
    for i in 0..x.len() - 1 {
        acc += 100.0 * (x[i + 1] - x[i] * x[i]).powi(2) + (1.0 - x[i]).powi(2);
    }
    -acc
}

fn rastrigin(x: &DVector<f64>) -> f64 {
    let mut acc = 10.0 * x.len() as f64;
    for &v in x.iter() {
        acc += v * v - 10.0 * (2.0 * PI * v).cos();
    }
    -acc
}

fn gauss_kernel(x: &DVector<f64>) -> f64 {
    (-0.5 * x.norm_squared()).exp()
}

const BASE_NAMES: [&str; 4] = ["sphere", "ellipsoid", "rosenbrock", "rastrigin"];

/// Names in the catalog, for error messages and docs.
pub fn catalog_names() -> Vec<String> {
    let mut names: Vec<String> = BASE_NAMES.iter().map(|s| s.to_string()).collect();
    names.extend(BASE_NAMES.iter().map(|s| format!("exp-{s}")));
    names.push("gauss-kernel".to_owned());
    names
}

fn positive_names() -> Vec<String> {
    catalog_names()
        .into_iter()
        .filter(|n| n.starts_with("exp-") || n == "gauss-kernel")
        .collect()
}

fn base_fn(name: &str) -> Option<fn(&DVector<f64>) -> f64> {
    match name {
        "sphere" => Some(sphere),
        "ellipsoid" => Some(ellipsoid),
        "rosenbrock" => Some(rosenbrock),
        "rastrigin" => Some(rastrigin),
        _ => None,
    }
}

/// Looks up an objective by name for a given dimension. Unknown names and
/// dimension constraints are config errors.
pub fn lookup(name: &str, dimension: usize) -> Result<Objective, CliError> {
    if dimension == 0 {
        return Err(CliError::Config("dimension must be at least 1".into()));
    }
    let needs_two = |n: &str| matches!(n, "ellipsoid" | "rosenbrock");

    let (base_name, wrap_exp) = match name.strip_prefix("exp-") {
        Some(rest) => (rest, true),
        None => (name, false),
    };

    if !wrap_exp && name == "gauss-kernel" {
        return Ok(Objective {
            name: name.to_owned(),
            positive: true,
            optimum: Some(1.0),
            f: Arc::new(gauss_kernel),
        });
    }

    let Some(base) = base_fn(base_name) else {
        return Err(CliError::Config(format!(
            "unknown objective '{name}'; available: {}",
            catalog_names().join(", ")
        )));
    };
    if needs_two(base_name) && dimension < 2 {
        return Err(CliError::Config(format!(
            "objective '{name}' needs dimension at least 2"
        )));
    }

    Ok(if wrap_exp {
        Objective {
            name: name.to_owned(),
            positive: true,
            optimum: Some(1.0),
            f: Arc::new(move |x| base(x).exp()),
        }
    } else {
        Objective {
            name: name.to_owned(),
            positive: false,
            optimum: Some(0.0),
            f: Arc::new(base),
        }
    })
}
