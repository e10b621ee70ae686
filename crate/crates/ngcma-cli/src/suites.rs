//! Validation suites: seeded numerical batteries, each case reported as an
//! expected/actual pair under an explicit tolerance. A suite passes only if
//! every case passes.

use crate::config::Theory;
use crate::error::CliError;
use crate::output::CaseRow;
use nalgebra::DVector;
use ngcma::charts::{Chart, ThetaPoint};
use ngcma::gaussian::kl_divergence;
use ngcma::instances::{chart_family, random_point_in, GaussianBump};
use ngcma::strategies::ngl_step;
use ngcma::theory::{
    em_target, exact_natural_gradient, expected_fitness_quadrature, gaussian_kernel_fitness,
    improvement_decomposition, theorem2_scan, QuadratureSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SUITE_NAMES: [&str; 5] = ["fisher", "theorem1", "theorem2", "em", "decomposition"];

type Suite = (Vec<String>, Vec<CaseRow>);

pub fn run_suite(name: &str, seed: u64, theory: &Theory) -> Result<Suite, CliError> {
    let spec = QuadratureSpec {
        nodes_per_dim: theory.nodes_per_dim,
    };
    let (comments, rows) = match name {
        "fisher" => fisher_suite(seed),
        "theorem1" => theorem1_suite(seed),
        "theorem2" => theorem2_suite(seed, &spec),
        "em" => em_suite(seed, &spec),
        "decomposition" => decomposition_suite(seed, &spec),
        other => {
            return Err(CliError::Config(format!(
                "unknown suite '{other}'; usage: validate <suite> with one of: {}",
                SUITE_NAMES.join(", ")
            )));
        }
    }
    .map_err(|e| CliError::Numerical(e.to_string()))?;
    let mut all = vec![format!("suite: {name}"), format!("seed: {seed}")];
    all.extend(comments);
    Ok((all, rows))
}

type SuiteResult = Result<(Vec<String>, Vec<CaseRow>), ngcma::Error<f64>>;

/// The Fisher matrix: the analytic d=1 values, then random instances in
/// every chart against the curvature of the symmetrized divergence —
/// an oracle that never touches the Fisher assembly.
fn fisher_suite(seed: u64) -> SuiteResult {
    let mut rows = Vec::new();

    let theta = ThetaPoint::new(
        Chart::FullVech { dim: 1 },
        DVector::from_element(1, 0.0),
        DVector::from_element(1, 2.0),
    )?;
    let fisher = theta.fisher_matrix()?;
    rows.push(CaseRow::check(
        "analytic-d1",
        "entry-0-0",
        0.5,
        fisher[(0, 0)],
        1e-12,
    ));
    rows.push(CaseRow::check(
        "analytic-d1",
        "entry-1-1",
        0.125,
        fisher[(1, 1)],
        1e-12,
    ));
    rows.push(CaseRow::check(
        "analytic-d1",
        "entry-0-1",
        0.0,
        fisher[(0, 1)],
        1e-12,
    ));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-3;
    for &d in &[1usize, 2] {
        for chart in chart_family::<f64, _>(d, &mut rng)? {
            let theta = random_point_in(&chart, &mut rng)?;
            let fisher = theta.fisher_matrix()?;
            let n = fisher.nrows();

            // Symmetrized divergence between the point and a coordinate
            // perturbation; its quadratic coefficient is the Fisher form.
            let div = |v: &DVector<f64>| -> Result<f64, ngcma::Error<f64>> {
                let dm = theta.chart().dim();
                let tm = theta.theta_m() + v.rows(0, dm);
                let tc = theta.theta_c() + v.rows(dm, n - dm);
                let moved = ThetaPoint::new(theta.chart().clone(), tm.clone_owned(), tc.clone_owned())?;
                let p = theta.to_params()?;
                let q = moved.to_params()?;
                Ok(0.5 * (kl_divergence(&p, &q)? + kl_divergence(&q, &p)?))
            };

            let mut drift = 0.0f64;
            let mut scale = 1.0f64;
            for i in 0..n {
                for j in i..n {
                    let mut vi = DVector::zeros(n);
                    vi[i] = h;
                    let mut vj = DVector::zeros(n);
                    vj[j] = h;
                    let estimate = if i == j {
                        2.0 * div(&vi)? / (h * h)
                    } else {
                        let both = &vi + &vj;
                        (div(&both)? - div(&vi)? - div(&vj)?) / (h * h)
                    };
                    drift = drift.max((estimate - fisher[(i, j)]).abs());
                    scale = scale.max(fisher[(i, j)].abs());
                }
            }
            rows.push(CaseRow::check(
                format!("{}-d{d}", chart.label()),
                "max-entry-drift",
                0.0,
                drift,
                2e-3 * scale,
            ));
        }
    }
    Ok((vec!["oracle: divergence curvature, h = 1e-3".into()], rows))
}

/// Closed-form per-sample natural gradient against the reference
/// Fisher-solve route: 200 instances across all charts and dimensions.
fn theorem1_suite(seed: u64) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for &d in &[1usize, 2, 3, 5] {
        for chart in chart_family::<f64, _>(d, &mut rng)? {
            for k in 0..10 {
                let theta = random_point_in(&chart, &mut rng)?;
                let params = theta.to_params()?;
                let x = &params.sample_with(1, &mut rng)?[0];
                let fast = theta.natural_gradient_loglik(x)?;
                let slow = theta.natural_gradient_loglik_reference(x)?;
                let scale = slow.mean_block.amax().max(slow.cov_block.amax()).max(1.0);
                let drift = (&fast.mean_block - &slow.mean_block)
                    .amax()
                    .max((&fast.cov_block - &slow.cov_block).amax());
                rows.push(CaseRow::check(
                    format!("{}-d{d}-{k:02}", chart.label()),
                    "rel-drift",
                    0.0,
                    drift / scale,
                    1e-8,
                ));
            }
        }
    }
    Ok((
        vec!["oracle: explicit Fisher-inverse times chart-coordinate gradient".into()],
        rows,
    ))
}

/// A step-length grid containing the predicted maximizer exactly: 17 points
/// from 0 to the maximizer, then 4 points beyond, up to 1.25 of it.
fn eta_grid(eta_star: f64) -> Vec<f64> {
    let mut grid: Vec<f64> = (0..=16).map(|k| k as f64 / 16.0 * eta_star).collect();
    grid.extend((1..=4).map(|j| eta_star * (1.0 + 0.25 * j as f64 / 4.0)));
    grid
}

fn scan_rows(
    case: &str,
    theta: &ThetaPoint<f64>,
    bump: Option<&GaussianBump<f64>>,
    spec: &QuadratureSpec,
) -> Result<Vec<CaseRow>, ngcma::Error<f64>> {
    let f = match bump {
        Some(b) => b.fitness(),
        None => gaussian_kernel_fitness(),
    };
    let j = expected_fitness_quadrature(&f, &theta.to_params()?, spec)?;
    let scan = theorem2_scan(&f, theta, &eta_grid(1.0 / j), spec)?;

    let mut rows = vec![
        CaseRow::check(
            case,
            "ascent-violations",
            0.0,
            scan.ascent_violations().len() as f64,
            0.0,
        ),
        CaseRow::check(
            case,
            "descent-violations",
            0.0,
            scan.descent_violations().len() as f64,
            0.0,
        ),
        CaseRow::check(case, "slope-at-maximizer", 0.0, scan.rows[16].dq_deta, 1e-8),
    ];

    // The admissible grid argmax must land within one grid step of 1/J.
    let step = scan.eta_star / 16.0;
    let argmax = scan
        .rows
        .iter()
        .filter(|r| r.admissible)
        .max_by(|a, b| a.q.partial_cmp(&b.q).expect("admissible q is finite"))
        .expect("the zero step is always admissible");
    rows.push(CaseRow::check(
        case,
        "maximizer-offset-steps",
        0.0,
        (argmax.eta_c - scan.eta_star).abs() / step,
        1.0,
    ));
    Ok(rows)
}

/// The proximity scan along the covariance ray: the canonical kernel
/// instance, then random instances, all rising to `1/J` and falling past
/// it with the analytic slope vanishing at the top.
fn theorem2_suite(seed: u64, spec: &QuadratureSpec) -> SuiteResult {
    let mut rows = Vec::new();

    let canonical = ThetaPoint::new(
        Chart::FullVech { dim: 1 },
        DVector::from_element(1, 0.0),
        DVector::from_element(1, 1.0),
    )?;
    rows.extend(scan_rows("canonical", &canonical, None, spec)?);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for &(d, count) in &[(1usize, 5usize), (2, 3)] {
        for k in 0..count {
            let theta = random_point_in(&Chart::FullVech { dim: d }, &mut rng)?;
            let bump = GaussianBump::<f64>::random(d, &mut rng);
            rows.extend(scan_rows(
                &format!("random-d{d}-{k:02}"),
                &theta,
                Some(&bump),
                spec,
            )?);
        }
    }
    Ok((
        vec!["scan: 21 step lengths from 0 to 1.25/J, maximizer on the grid".into()],
        rows,
    ))
}

/// The tilted moment target: canonical values, and agreement with a
/// natural-gradient step of length `1/J` on random instances.
fn em_suite(seed: u64, spec: &QuadratureSpec) -> SuiteResult {
    let mut rows = Vec::new();

    let kernel = gaussian_kernel_fitness();
    let canonical = ThetaPoint::new(
        Chart::FullVech { dim: 1 },
        DVector::from_element(1, 0.0),
        DVector::from_element(1, 1.0),
    )?;
    let params = canonical.to_params()?;
    let target = em_target(&kernel, &params, spec)?;
    rows.push(CaseRow::check(
        "canonical",
        "mean-entry",
        0.0,
        target.mean()[0],
        1e-8,
    ));
    rows.push(CaseRow::check(
        "canonical",
        "cov-entry",
        0.5,
        target.cov()[(0, 0)],
        1e-8,
    ));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for &d in &[1usize, 2] {
        for k in 0..3 {
            let theta = random_point_in(&Chart::FullVech { dim: d }, &mut rng)?;
            let params = theta.to_params()?;
            let bump = GaussianBump::<f64>::random(d, &mut rng);
            let f = bump.fitness();
            let j = expected_fitness_quadrature(&f, &params, spec)?;
            let delta = exact_natural_gradient(&f, &theta, spec)?;
            let stepped = ngl_step(&theta, &delta, 1.0 / j, 1.0 / j)?.to_params()?;
            let target = em_target(&f, &params, spec)?;
            let drift = (stepped.mean() - target.mean())
                .amax()
                .max((stepped.cov() - target.cov()).amax());
            rows.push(CaseRow::check(
                format!("step-vs-target-d{d}-{k:02}"),
                "max-drift",
                0.0,
                drift,
                1e-8,
            ));
        }
    }
    Ok((
        vec!["oracle: fitness-tilted moments by quadrature".into()],
        rows,
    ))
}

/// The improvement decomposition: its residual must vanish on random
/// one-dimensional pairs at full quadrature resolution.
///
/// The residual compares two independent quadrature grids, and the grid
/// anchored at the second point estimates expectations under the first
/// point's tilted density through an importance ratio. That ratio is only
/// resolvable when the two densities overlap, so the second point is drawn
/// as a moderate perturbation of the first — still random, never degenerate.
fn decomposition_suite(seed: u64, spec: &QuadratureSpec) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chart = Chart::FullVech { dim: 1 };
    let mut rows = Vec::new();
    for k in 0..50 {
        let theta = random_point_in(&chart, &mut rng)?;
        let mean_shift: f64 = rng.random_range(-0.5..0.5);
        let cov_scale: f64 = rng.random_range(0.75..1.3);
        let theta_prime = ThetaPoint::new(
            chart.clone(),
            DVector::from_element(1, theta.theta_m()[0] + mean_shift),
            DVector::from_element(1, theta.theta_c()[0] * cov_scale),
        )?;
        let bump = GaussianBump::<f64>::random(1, &mut rng);
        let dec = improvement_decomposition(&bump.fitness(), &theta, &theta_prime, spec)?;
        rows.push(CaseRow::check(
            format!("pair-{k:02}"),
            "residual",
            0.0,
            dec.residual(),
            1e-8,
        ));
    }
    Ok((
        vec!["identity: log-gain split into divergence terms".into()],
        rows,
    ))
}
