//! Consistency checks between the quadrature-level theory routines and
//! independent routes: finite differences of expected fitness through the
//! Fisher solve, Monte-Carlo estimation, moment matching, divergence
//! identities, and closed-form Gaussian-bump expectations.

use nalgebra::{DMatrix, DVector};
use ngcma::charts::{Chart, ThetaPoint};
use ngcma::estimator::{estimate_natural_gradient, Population, WeightScheme};
use ngcma::gaussian::{kl_divergence, GaussianParams};
use ngcma::instances::{chart_family, random_params, random_point_in, random_spd, GaussianBump};
use ngcma::strategies::ngl_step;
use ngcma::theory::{
    em_target, exact_natural_gradient, expected_fitness_quadrature, improvement_decomposition,
    q_function, theorem2_scan, GrowthBound, PositiveFitness, QuadratureSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn spec() -> QuadratureSpec {
    QuadratureSpec { nodes_per_dim: 32 }
}

/// Expected fitness as a function of the chart coordinates, for finite
/// differencing.
fn expected_fitness_at(
    chart: &Chart<f64>,
    theta_m: &DVector<f64>,
    theta_c: &DVector<f64>,
    f: &PositiveFitness<f64>,
    spec: &QuadratureSpec,
) -> f64 {
    let theta = ThetaPoint::new(chart.clone(), theta_m.clone(), theta_c.clone()).unwrap();
    expected_fitness_quadrature(f, &theta.to_params().unwrap(), spec).unwrap()
}

/// The quadrature natural gradient against the defining identity
/// `F(θ) · ∇̃J = ∇_θ J`: finite-difference the expected fitness in chart
/// coordinates and solve the Fisher system, in every chart.
#[test]
fn exact_natural_gradient_solves_the_fisher_system() {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let spec = spec();
    let h = 1e-5;
    for &d in &[1usize, 2] {
        for chart in chart_family::<f64, _>(d, &mut rng).unwrap() {
            for _ in 0..2 {
                let theta = random_point_in(&chart, &mut rng).unwrap();
                let bump = GaussianBump::<f64>::random(d, &mut rng);
                let f = bump.fitness();

                let ng = exact_natural_gradient(&f, &theta, &spec).unwrap();

                let dm = chart.dim();
                let dc = chart.theta_c_len();
                let mut grad = DVector::<f64>::zeros(dm + dc);
                for k in 0..dm {
                    let mut plus = theta.theta_m().clone();
                    let mut minus = theta.theta_m().clone();
                    plus[k] += h;
                    minus[k] -= h;
                    grad[k] = (expected_fitness_at(&chart, &plus, theta.theta_c(), &f, &spec)
                        - expected_fitness_at(&chart, &minus, theta.theta_c(), &f, &spec))
                        / (2.0 * h);
                }
                for k in 0..dc {
                    let mut plus = theta.theta_c().clone();
                    let mut minus = theta.theta_c().clone();
                    plus[k] += h;
                    minus[k] -= h;
                    grad[dm + k] = (expected_fitness_at(&chart, theta.theta_m(), &plus, &f, &spec)
                        - expected_fitness_at(&chart, theta.theta_m(), &minus, &f, &spec))
                        / (2.0 * h);
                }

                let fisher = theta.fisher_matrix().unwrap();
                let solved = fisher
                    .cholesky()
                    .expect("Fisher matrix is positive definite")
                    .solve(&grad);

                let mut reference = DVector::<f64>::zeros(dm + dc);
                reference.rows_mut(0, dm).copy_from(&ng.mean_block);
                reference.rows_mut(dm, dc).copy_from(&ng.cov_block);
                let drift = (&solved - &reference).amax();
                let scale = reference.amax().max(1.0);
                assert!(
                    drift <= 1e-6 * scale,
                    "chart {chart} at d={d}: Fisher-solve route departs by {drift}"
                );
            }
        }
    }
}

/// A single-sample estimate with raw weights and zero baseline is exactly
/// the sampled fitness times the per-sample natural gradient.
#[test]
fn single_sample_estimator_reduces_to_weighted_score() {
    let mut rng = ChaCha8Rng::seed_from_u64(52);
    let theta = random_point_in(&Chart::FullVech { dim: 2 }, &mut rng).unwrap();
    let params = theta.to_params().unwrap();
    let bump = GaussianBump::<f64>::random(2, &mut rng);
    let f = bump.fitness();

    let x = params.sample_with(1, &mut rng).unwrap().remove(0);
    let fx = f.eval(&x);
    let g = theta.natural_gradient_loglik(&x).unwrap();

    let population = Population::new(vec![x], vec![fx]).unwrap();
    let estimate =
        estimate_natural_gradient(&theta, &population, &WeightScheme::RawFitness, 0.0).unwrap();

    for k in 0..2 {
        assert_eq!(estimate.mean_block[k], fx * g.mean_block[k]);
    }
    for k in 0..3 {
        assert_eq!(estimate.cov_block[k], fx * g.cov_block[k]);
    }
}

/// The raw-weight Monte-Carlo estimator converges to the quadrature natural
/// gradient as the population grows.
#[test]
fn estimator_converges_to_the_exact_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(53);
    let theta = random_point_in(&Chart::FullVech { dim: 2 }, &mut rng).unwrap();
    let params = theta.to_params().unwrap();
    let bump = GaussianBump::<f64>::random(2, &mut rng);
    let f = bump.fitness();

    let exact = exact_natural_gradient(&f, &theta, &spec()).unwrap();

    let n = 200_000usize;
    let points = params.sample_with(n, &mut rng).unwrap();
    let fitness: Vec<f64> = points.iter().map(|x| f.eval(x)).collect();
    let population = Population::new(points, fitness).unwrap();
    let estimate =
        estimate_natural_gradient(&theta, &population, &WeightScheme::RawFitness, 0.0).unwrap();

    let drift = (&estimate.mean_block - &exact.mean_block)
        .amax()
        .max((&estimate.cov_block - &exact.cov_block).amax());
    let scale = exact.mean_block.amax().max(exact.cov_block.amax()).max(1.0);
    assert!(
        drift <= 0.05 * scale,
        "Monte-Carlo estimate departs from quadrature by {drift} (scale {scale})"
    );
}

/// A proximity step of length `1/J` in both blocks lands exactly on the
/// fitness-tilted moment-matching target.
#[test]
fn unit_proximity_step_lands_on_the_tilted_moments() {
    let mut rng = ChaCha8Rng::seed_from_u64(54);
    let spec = spec();
    for &d in &[1usize, 2] {
        for _ in 0..3 {
            let theta = random_point_in(&Chart::FullVech { dim: d }, &mut rng).unwrap();
            let params = theta.to_params().unwrap();
            let bump = GaussianBump::<f64>::random(d, &mut rng);
            let f = bump.fitness();

            let j = expected_fitness_quadrature(&f, &params, &spec).unwrap();
            let delta = exact_natural_gradient(&f, &theta, &spec).unwrap();
            let stepped = ngl_step(&theta, &delta, 1.0 / j, 1.0 / j)
                .unwrap()
                .to_params()
                .unwrap();
            let target = em_target(&f, &params, &spec).unwrap();

            let drift = (stepped.mean() - target.mean())
                .amax()
                .max((stepped.cov() - target.cov()).amax());
            assert!(
                drift <= 1e-8,
                "d={d}: step of 1/J departs from the tilted moments by {drift}"
            );
        }
    }
}

/// Matching the tilted distribution's own moments — its mean, and its
/// covariance about that mean — maximizes the proximity `Q(θ, ·)` over all
/// Gaussians. The step target instead centers its second moment at the
/// *pre-step* mean, so it sits strictly below that peak whenever the mean
/// moves; both facts are asserted here.
#[test]
fn tilted_moments_maximize_the_proximity() {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let spec = spec();
    let chart = Chart::FullVech { dim: 2 };
    let theta = random_point_in(&chart, &mut rng).unwrap();
    let params = theta.to_params().unwrap();
    let bump = GaussianBump::<f64>::random(2, &mut rng);
    let f = bump.fitness();

    let target = em_target(&f, &params, &spec).unwrap();
    let shift = target.mean() - params.mean();
    let mut centered_cov = target.cov().clone();
    centered_cov.ger(-1.0, &shift, &shift, 1.0);
    let centered = GaussianParams::new(target.mean().clone(), centered_cov).unwrap();
    let theta_centered = ThetaPoint::from_params(chart.clone(), &centered).unwrap();
    let q_best = q_function(&f, &theta, &theta_centered, &spec).unwrap();

    let theta_target = ThetaPoint::from_params(chart.clone(), &target).unwrap();
    let q_target = q_function(&f, &theta, &theta_target, &spec).unwrap();
    assert!(
        q_target < q_best - 1e-9,
        "step target {q_target} should sit below the re-centered peak {q_best}"
    );

    for _ in 0..10 {
        let other = random_point_in(&chart, &mut rng).unwrap();
        let q_other = q_function(&f, &theta, &other, &spec).unwrap();
        assert!(
            q_other <= q_best + 1e-12,
            "proximity {q_other} at a random point beats the re-centered moments' {q_best}"
        );
    }
}

/// Along the mean ray, the proximity peaks exactly at step length `1/J`,
/// whatever the covariance step: the stepped mean passes through the tilted
/// mean at that length.
#[test]
fn proximity_peaks_at_the_unit_mean_step() {
    let spec = spec();
    let chart = Chart::FullVech { dim: 1 };
    let theta = ThetaPoint::new(
        chart.clone(),
        DVector::from_element(1, 0.2),
        DVector::from_element(1, 1.3),
    )
    .unwrap();
    let params = theta.to_params().unwrap();
    let bump = GaussianBump {
        scale: 1.0,
        center: DVector::from_element(1, 1.0),
        precision: DMatrix::from_element(1, 1, 0.9),
    };
    let f = bump.fitness();

    let j = expected_fitness_quadrature(&f, &params, &spec).unwrap();
    let delta = exact_natural_gradient(&f, &theta, &spec).unwrap();
    let eta_star = 1.0 / j;

    for ec_factor in [0.0, 0.5, 1.0] {
        let ec = ec_factor * eta_star;
        let q_at = |em: f64| {
            let stepped = ngl_step(&theta, &delta, em, ec).unwrap();
            q_function(&f, &theta, &stepped, &spec).unwrap()
        };
        let q_best = q_at(eta_star);
        for em_factor in [0.0, 0.35, 0.7, 1.3] {
            let q_other = q_at(em_factor * eta_star);
            assert!(
                q_other < q_best - 1e-9,
                "at η_C = {ec}: mean step {em_factor}·η* gives {q_other}, \
                 not below the peak {q_best}"
            );
        }
    }
}

/// The scan's analytic slope against a central finite difference of the
/// proximity along the covariance ray, and the predicted shape (rise before
/// `1/J`, fall after) on random instances.
#[test]
fn covariance_scan_matches_its_analytic_slope_and_shape() {
    let mut rng = ChaCha8Rng::seed_from_u64(57);
    let spec = spec();
    for &d in &[1usize, 2] {
        for _ in 0..3 {
            let theta = random_point_in(&Chart::FullVech { dim: d }, &mut rng).unwrap();
            let params = theta.to_params().unwrap();
            let bump = GaussianBump::<f64>::random(d, &mut rng);
            let f = bump.fitness();
            let j = expected_fitness_quadrature(&f, &params, &spec).unwrap();
            let eta_star = 1.0 / j;

            // Shape: no strict-monotonicity violations on either side.
            let grid: Vec<f64> = (0..=12).map(|k| k as f64 / 10.0 * eta_star).collect();
            let scan = theorem2_scan(&f, &theta, &grid, &spec).unwrap();
            assert!(
                scan.ascent_violations().is_empty(),
                "d={d}: proximity fails to rise before the predicted peak"
            );
            assert!(
                scan.descent_violations().is_empty(),
                "d={d}: proximity fails to fall after the predicted peak"
            );

            // Slope: finite-difference the proximity around a mid-ray point.
            let h = 1e-4 * eta_star;
            let mid = 0.6 * eta_star;
            let probe = theorem2_scan(&f, &theta, &[mid - h, mid, mid + h], &spec).unwrap();
            let rows = &probe.rows;
            assert!(rows.iter().all(|r| r.admissible));
            let fd = (rows[2].q - rows[0].q) / (2.0 * h);
            let analytic = rows[1].dq_deta;
            assert!(
                (fd - analytic).abs() <= 1e-5 * analytic.abs().max(1e-3),
                "d={d}: slope {analytic} vs finite difference {fd}"
            );
        }
    }
}

/// `∫ π(x; θ) dx = 1` by importance quadrature under a wider reference
/// Gaussian.
#[test]
fn log_density_normalizes_under_importance_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(58);
    let spec = QuadratureSpec::default();
    for &d in &[1usize, 2] {
        for _ in 0..3 {
            let params = random_params::<f64, _>(d, &mut rng).unwrap();
            let reference =
                GaussianParams::new(params.mean().clone(), params.cov() * 2.25).unwrap();
            let target = params.clone();
            let ref_for_ratio = reference.clone();
            let ratio = PositiveFitness::new(
                move |x: &DVector<f64>| {
                    (target.log_density(x).unwrap() - ref_for_ratio.log_density(x).unwrap()).exp()
                },
                GrowthBound::Bounded,
            );
            let mass = expected_fitness_quadrature(&ratio, &reference, &spec).unwrap();
            assert!(
                (mass - 1.0).abs() <= 1e-8,
                "d={d}: density integrates to {mass}"
            );
        }
    }
}

/// For constant fitness the proximity collapses to
/// `E_π[ln π′] = −entropy(π) − KL(π ‖ π′)`, tying the quadrature route to
/// the Gaussian closed forms.
#[test]
fn proximity_agrees_with_divergence_for_constant_fitness() {
    let mut rng = ChaCha8Rng::seed_from_u64(59);
    let spec = QuadratureSpec::default();
    let chart = Chart::FullVech { dim: 2 };
    let constant = PositiveFitness::new(|_: &DVector<f64>| 1.0, GrowthBound::Bounded);
    for _ in 0..3 {
        let theta = random_point_in(&chart, &mut rng).unwrap();
        let theta_prime = random_point_in(&chart, &mut rng).unwrap();
        let p = theta.to_params().unwrap();
        let p_prime = theta_prime.to_params().unwrap();

        let q = q_function(&constant, &theta, &theta_prime, &spec).unwrap();

        let d = p.dim() as f64;
        let ln_det = p.cov().clone().cholesky().unwrap().determinant().ln();
        let entropy = 0.5 * (d * (1.0 + (2.0 * std::f64::consts::PI).ln()) + ln_det);
        let closed = -entropy - kl_divergence(&p, &p_prime).unwrap();

        assert!(
            (q - closed).abs() <= 1e-9,
            "proximity {q} vs entropy/divergence closed form {closed}"
        );
    }
}

/// The improvement decomposition balances within quadrature error and its
/// total gain matches the closed-form bump expectations.
#[test]
fn decomposition_balances_and_matches_bump_gains() {
    let mut rng = ChaCha8Rng::seed_from_u64(60);
    let spec = QuadratureSpec::default();
    for &d in &[1usize, 2] {
        for _ in 0..5 {
            let chart = Chart::FullVech { dim: d };
            let theta = random_point_in(&chart, &mut rng).unwrap();
            // The residual cross-checks two quadrature grids, one of which
            // estimates expectations through an importance ratio between the two
            // densities; keep the pair overlapping so the grids can resolve it.
            let base = theta.to_params().unwrap();
            let shift = DVector::from_fn(d, |_, _| rng.random_range(-0.4..0.4));
            let blend = random_spd::<f64, _>(d, 0.4, 2.5, &mut rng);
            let perturbed = GaussianParams::new(
                base.mean() + shift,
                base.cov() * 0.8 + blend * 0.2,
            )
            .unwrap();
            let theta_prime = ThetaPoint::from_params(chart.clone(), &perturbed).unwrap();
            let bump = GaussianBump::<f64>::random(d, &mut rng);
            let f = bump.fitness();

            let dec = improvement_decomposition(&f, &theta, &theta_prime, &spec).unwrap();
            assert!(
                dec.residual().abs() <= 1e-8,
                "d={d}: decomposition residual {}",
                dec.residual()
            );

            let exact_gain = bump
                .expected_under(&theta_prime.to_params().unwrap())
                .unwrap()
                .ln()
                - bump.expected_under(&theta.to_params().unwrap()).unwrap().ln();
            assert!(
                (dec.ln_gain - exact_gain).abs() <= 1e-9,
                "d={d}: gain {} vs closed form {exact_gain}",
                dec.ln_gain
            );
        }
    }
}
