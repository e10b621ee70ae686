//! Command-line front end: `optimize` runs a configured strategy and writes
//! its trace, `validate` runs a numerical suite and writes its report,
//! `plotdata` emits plot-ready tables. Exit codes: 0 success, 1 numerical
//! failure, 2 configuration error. Every output is a deterministic function
//! of the configuration and the seed.

mod config;
mod error;
mod objectives;
mod output;
mod runner;
mod suites;

use clap::{Args, Parser, Subcommand};
use config::{RunConfig, Theory};
use error::CliError;
use ngcma::charts::{Chart, ThetaPoint};
use ngcma::gaussian::GaussianParams;
use ngcma::strategies::{RunOutcome, Termination};
use ngcma::theory::{expected_fitness_quadrature, q_surface, QuadratureSpec};
use output::fmt17;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "ngcma",
    version,
    about = "Natural-gradient evolution strategies: runs, validation suites, plot data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an optimization loop and write its trace file.
    Optimize(CommonArgs),
    /// Run a validation suite and write its report file.
    Validate {
        /// One of: fisher, theorem1, theorem2, em, decomposition.
        suite: String,
        #[command(flatten)]
        args: CommonArgs,
    },
    /// Emit plot-ready tabular data.
    Plotdata {
        /// One of: qgrid (proximity over step-length pairs),
        /// runcurve (per-iteration expected-fitness estimates).
        kind: String,
        #[command(flatten)]
        args: CommonArgs,
    },
}

#[derive(Args)]
struct CommonArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed override; replaces [run].seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output path; overrides [run].out and the per-command default.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(e.exit_code());
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Optimize(args) => optimize(args),
        Command::Validate { suite, args } => validate(&suite, args),
        Command::Plotdata { kind, args } => plotdata(&kind, args),
    }
}

/// Loads the config the command needs, folding the seed override in so the
/// embedded resolved config reproduces the run exactly.
fn load_config(args: &CommonArgs, command: &str) -> Result<RunConfig, CliError> {
    let Some(path) = &args.config else {
        return Err(CliError::Config(format!("{command} needs --config <file>")));
    };
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = args.seed {
        cfg.run.seed = seed;
    }
    cfg.resolved()
}

fn out_path(args: &CommonArgs, cfg: Option<&RunConfig>, default: &str) -> PathBuf {
    args.out.clone().unwrap_or_else(|| {
        cfg.and_then(|c| c.run.out.clone())
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(default))
    })
}

fn summarize(outcome: &RunOutcome<f64>, optimum: Option<f64>) -> String {
    let best = outcome
        .best_f
        .map(fmt17)
        .unwrap_or_else(|| "none".to_owned());
    let evaluations = outcome.trace.last().map(|r| r.evaluations).unwrap_or(0);
    let mut line = format!(
        "best_f={best} evaluations={evaluations} termination={}",
        outcome.termination.label()
    );
    if let (Some(best), Some(opt)) = (outcome.best_f, optimum) {
        line.push_str(&format!(" gap={}", fmt17(opt - best)));
    }
    line
}

fn finish_run(outcome: &RunOutcome<f64>) -> Result<(), CliError> {
    match &outcome.termination {
        Termination::TargetReached | Termination::BudgetExhausted => Ok(()),
        Termination::ConditionExceeded => Err(CliError::Numerical(
            "covariance condition number exceeded the cap".into(),
        )),
        Termination::Rejected(e) => Err(CliError::Numerical(e.to_string())),
    }
}

fn optimize(args: CommonArgs) -> Result<(), CliError> {
    let cfg = load_config(&args, "optimize")?;
    let out = out_path(&args, Some(&cfg), "trace.csv");
    let (objective, outcome) = runner::execute(&cfg)?;
    output::write_text(&out, &output::trace_file(&cfg, &outcome.trace)?)?;
    println!("{}", summarize(&outcome, objective.optimum));
    finish_run(&outcome)
}

fn validate(suite: &str, args: CommonArgs) -> Result<(), CliError> {
    // A config is optional here: only the seed and [theory] section apply.
    let cfg = match &args.config {
        Some(path) => Some(RunConfig::load(path)?.resolved()?),
        None => None,
    };
    let seed = args
        .seed
        .or(cfg.as_ref().map(|c| c.run.seed))
        .unwrap_or(0);
    let theory = cfg
        .as_ref()
        .map(|c| c.theory.clone())
        .unwrap_or_else(Theory::default);

    let (comments, rows) = suites::run_suite(suite, seed, &theory)?;
    let out = out_path(&args, cfg.as_ref(), "report.csv");
    output::write_text(&out, &output::report_file(&comments, &rows))?;

    let failures = rows.iter().filter(|r| !r.pass).count();
    println!(
        "suite={suite} cases={} failures={failures}",
        rows.len()
    );
    if failures == 0 {
        Ok(())
    } else {
        Err(CliError::Numerical(format!(
            "{failures} of {} cases failed",
            rows.len()
        )))
    }
}

fn plotdata(kind: &str, args: CommonArgs) -> Result<(), CliError> {
    match kind {
        "qgrid" => qgrid(args),
        "runcurve" => runcurve(args),
        other => Err(CliError::Config(format!(
            "unknown plot kind '{other}'; usage: plotdata <kind> with one of: qgrid, runcurve"
        ))),
    }
}

/// Evenly spaced step lengths from zero to `top`, inclusive.
fn linspace(top: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..points)
            .map(|k| top * k as f64 / (points - 1) as f64)
            .collect(),
    }
}

fn qgrid(args: CommonArgs) -> Result<(), CliError> {
    let cfg = load_config(&args, "plotdata qgrid")?;
    let objective = objectives::lookup(&cfg.problem.objective, cfg.problem.dimension)?;
    let f = objective.positive_fitness()?;
    let spec = QuadratureSpec {
        nodes_per_dim: cfg.theory.nodes_per_dim,
    };
    let as_config_err = |e: ngcma::Error<f64>| CliError::Config(e.to_string());

    let params = GaussianParams::new(runner::init_mean(&cfg), runner::init_cov(&cfg))
        .map_err(as_config_err)?;
    let chart = Chart::FullVech {
        dim: cfg.problem.dimension,
    };
    let theta = ThetaPoint::from_params(chart, &params).map_err(as_config_err)?;

    let j = expected_fitness_quadrature(&f, &params, &spec).map_err(as_config_err)?;
    let eta_star = 1.0 / j;
    let grid = linspace(cfg.theory.overshoot * eta_star, cfg.theory.eta_points);
    let surface = q_surface(&f, &theta, &grid, &grid, &spec)
        .map_err(|e| CliError::Numerical(e.to_string()))?;

    let mut text = output::config_comment(&cfg)?;
    text.push_str(&format!("# expected_fitness = {}\n", fmt17(j)));
    text.push_str(&format!("# eta_star = {}\n", fmt17(eta_star)));
    text.push_str("eta_m,eta_c,q,admissible\n");
    for p in &surface {
        text.push_str(&format!(
            "{},{},{},{}\n",
            fmt17(p.eta_m),
            fmt17(p.eta_c),
            fmt17(p.q),
            u8::from(p.admissible)
        ));
    }
    let out = out_path(&args, Some(&cfg), "plotdata.csv");
    output::write_text(&out, &text)?;
    println!(
        "kind=qgrid rows={} eta_star={}",
        surface.len(),
        fmt17(eta_star)
    );
    Ok(())
}

fn runcurve(args: CommonArgs) -> Result<(), CliError> {
    let cfg = load_config(&args, "plotdata runcurve")?;
    let (_, outcome) = runner::execute(&cfg)?;

    let mut text = output::config_comment(&cfg)?;
    text.push_str("iteration,j_estimate,best_f\n");
    for rec in &outcome.trace {
        text.push_str(&format!(
            "{},{},{}\n",
            rec.iteration,
            fmt17(rec.j_estimate),
            fmt17(rec.best_f)
        ));
    }
    let out = out_path(&args, Some(&cfg), "plotdata.csv");
    output::write_text(&out, &text)?;
    println!(
        "kind=runcurve rows={} termination={}",
        outcome.trace.len(),
        outcome.termination.label()
    );
    finish_run(&outcome)
}
