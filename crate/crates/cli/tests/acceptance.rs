//! Acceptance gate: one test per release criterion, each printing a single
//! PASS line with the measured quantities. The criteria pin the numerical
//! kernels to independent oracles (closed forms, finite differences, Monte
//! Carlo) at desk scale and the binary to its determinism contract.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use marketspan::completeness::{completeness_check, CompletenessOptions, Verdict};
use marketspan::determinant::{det_differential, det_second_differential};
use marketspan::envelope::{envelope_check_composition, faa_di_bruno_bound, AnalyticEnvelope, InnerEnvelope, OuterEnvelope};
use marketspan::grid::SpaceTimeGrid;
use marketspan::hedging::{convergence_study, replicate_claim, HedgeOptions};
use marketspan::jacobian::determinant_evolution_residual;
use marketspan::pairing::{pairing_call_closed_form, pairing_weak, test_function_library, TestFunction};
use marketspan::paths::{simulate_paths, SimOptions};
use marketspan::residuals::derivative_pde_residual;
use marketspan::smooth1d::Smooth1d;
use marketspan::solver::solve_backward;
use marketspan::stochvol::{build_stochvol_model, StochVolParams};
use marketspan::{DiffusionModel, Mat2, Payoff};

fn reference_model() -> DiffusionModel {
    build_stochvol_model(&StochVolParams::reference()).expect("reference model")
}

fn reference_grid(model: &DiffusionModel, n1: usize, n2: usize, n_t: usize) -> SpaceTimeGrid {
    let domain = model.default_domain(5.0).expect("domain");
    SpaceTimeGrid::new(domain, n1, n2, n_t, 0.5, 2)
        .expect("grid")
        .with_kink_midway(model.g.kink_x1().expect("call kink"))
}

fn assert_within(elapsed: Duration, budget: Duration, what: &str) {
    assert!(
        elapsed <= budget,
        "{what} took {elapsed:.2?}, budget {budget:.2?}"
    );
}

#[test]
fn criterion_01_determinant_differentials_match_finite_differences() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let draw = |rng: &mut ChaCha8Rng| {
        Mat2([
            [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
            [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
        ])
    };
    // det restricted to any matrix line is a quadratic polynomial, so the
    // central differences below are exact up to roundoff for any step.
    let h = 0.5;
    let mut worst_first = 0.0_f64;
    let mut worst_second = 0.0_f64;
    for _ in 0..100 {
        let m = draw(&mut rng);
        let c1 = draw(&mut rng);
        let c2 = draw(&mut rng);
        let shift = |s: f64, t: f64| {
            let mut out = m;
            for i in 0..2 {
                for j in 0..2 {
                    out.0[i][j] += s * c1.0[i][j] + t * c2.0[i][j];
                }
            }
            out.det()
        };

        let exact1 = det_differential(&m, &c1);
        let fd1 = (shift(h, 0.0) - shift(-h, 0.0)) / (2.0 * h);
        let rel1 = (fd1 - exact1).abs() / exact1.abs().max(1e-12);
        worst_first = worst_first.max(rel1);

        let exact2 = det_second_differential(&m, &c1, &c2);
        let fd2 = (shift(h, h) - shift(h, -h) - shift(-h, h) + shift(-h, -h)) / (4.0 * h * h);
        let rel2 = (fd2 - exact2).abs() / exact2.abs().max(1e-12);
        worst_second = worst_second.max(rel2);
    }
    assert!(worst_first <= 1e-6, "first differential rel err {worst_first}");
    assert!(worst_second <= 1e-4, "second differential rel err {worst_second}");
    assert_within(start.elapsed(), Duration::from_secs(1), "determinant differentials");
    println!(
        "criterion 01 PASS: det differentials vs central differences, worst rel {:.2e} / {:.2e} over 100 seeded matrices",
        worst_first, worst_second
    );
}

#[test]
fn criterion_02_constant_vol_price_matches_lognormal_oracle() {
    let start = Instant::now();
    let model = DiffusionModel::constant_vol(0.2, 0.0, 0.1, 0.0, 1.0, 1.0, 0.0).expect("model");
    let domain = model.default_domain(5.0).expect("domain");
    let grid = SpaceTimeGrid::new(domain, 201, 101, 256, 0.5, 2)
        .expect("grid")
        .with_kink_midway(0.0);
    let v = solve_backward(&model, &grid, &model.g.clone()).expect("solve");
    let price = v.interpolate(0.0, [0.0, 0.0]).0;

    // At-the-money lognormal call with unit spot and strike, zero rate:
    // price = Phi(nu/2) - Phi(-nu/2).
    let normal = Normal::new(0.0, 1.0).expect("normal");
    let oracle = normal.cdf(0.1) - normal.cdf(-0.1);

    let rel = (price - oracle).abs() / oracle;
    assert!(rel <= 5e-3, "price {price} vs lognormal {oracle}, rel {rel}");
    assert_within(start.elapsed(), Duration::from_secs(30), "constant-vol solve");
    println!(
        "criterion 02 PASS: 201x101x256 constant-vol price {price:.7} vs lognormal {oracle:.7}, rel {rel:.2e}"
    );
}

#[test]
fn criterion_03_determinant_evolution_residual_halves_under_refinement() {
    let model = reference_model();
    let coarse_v = solve_backward(&model, &reference_grid(&model, 49, 25, 24), &model.g.clone())
        .expect("coarse solve");
    let fine_v = solve_backward(&model, &reference_grid(&model, 97, 49, 48), &model.g.clone())
        .expect("fine solve");
    let coarse = determinant_evolution_residual(&model, &coarse_v, 0.1, 0.9, 2).expect("coarse");
    let fine = determinant_evolution_residual(&model, &fine_v, 0.1, 0.9, 2).expect("fine");
    assert!(fine.rms > 0.0, "fine residual degenerate: {fine:?}");
    let ratio = coarse.rms / fine.rms;
    assert!(
        ratio >= 2.0,
        "determinant evolution rms {} -> {} (factor {ratio:.2} < 2)",
        coarse.rms, fine.rms
    );
    println!(
        "criterion 03 PASS: determinant evolution residual {:.3e} -> {:.3e}, factor {ratio:.2} under 2x refinement",
        coarse.rms, fine.rms
    );
}

#[test]
fn criterion_04_derivative_pde_residuals_halve_under_refinement() {
    let model = reference_model();
    let coarse_v = solve_backward(&model, &reference_grid(&model, 49, 25, 24), &model.g.clone())
        .expect("coarse solve");
    let fine_v = solve_backward(&model, &reference_grid(&model, 97, 49, 48), &model.g.clone())
        .expect("fine solve");
    let mut factors = Vec::new();
    for axis in 0..2 {
        let coarse = derivative_pde_residual(&model, &coarse_v, axis, 0.1, 0.9, 2).expect("coarse");
        let fine = derivative_pde_residual(&model, &fine_v, axis, 0.1, 0.9, 2).expect("fine");
        assert!(fine.rms > 0.0, "fine residual degenerate on axis {axis}: {fine:?}");
        let ratio = coarse.rms / fine.rms;
        assert!(
            ratio >= 2.0,
            "derivative-PDE rms on axis {axis}: {} -> {} (factor {ratio:.2} < 2)",
            coarse.rms, fine.rms
        );
        factors.push(ratio);
    }
    println!(
        "criterion 04 PASS: differentiated-PDE residual factors {:.2} and {:.2} under 2x refinement",
        factors[0], factors[1]
    );
}

#[test]
fn criterion_05_pairing_quadrature_matches_closed_form() {
    let model = reference_model();
    let funcs = [
        TestFunction::TensorBump { center: [0.0, 0.0], scale: [0.6, 0.5] },
        TestFunction::Cone { center: [0.0, 0.2], scale: 0.45 },
        TestFunction::TensorBump { center: [0.1, -0.3], scale: [0.5, 0.4] },
    ];
    let mut worst_rel = 0.0_f64;
    for phi in &funcs {
        let region = phi.support();
        let quad = pairing_weak(&model, &model.g, phi, &region, 1.0).expect("quadrature");
        let closed = pairing_call_closed_form(&model, phi, &region).expect("closed form");
        assert!(
            closed.value.abs() > 1e-6 && quad.value.abs() > 1e-6,
            "{}: pairing should be nonzero, got quad {} closed {}",
            phi.label(), quad.value, closed.value
        );
        let rel = (quad.value - closed.value).abs() / closed.value.abs();
        assert!(
            rel <= 1e-4,
            "{}: quad {} vs closed {}, rel {rel}",
            phi.label(), quad.value, closed.value
        );
        worst_rel = worst_rel.max(rel);
    }

    let flat = DiffusionModel::constant_vol(0.2, 0.0, 0.1, 0.0, 1.0, 1.0, 0.0).expect("model");
    let domain = flat.default_domain(5.0).expect("domain");
    let library = test_function_library(&domain);
    assert!(!library.is_empty(), "empty test function library");
    let mut worst_flat = 0.0_f64;
    for phi in &library {
        let quad = pairing_weak(&flat, &flat.g, phi, &domain, 1.0).expect("quadrature");
        let closed = pairing_call_closed_form(&flat, phi, &domain).expect("closed form");
        worst_flat = worst_flat.max(quad.value.abs()).max(closed.value.abs());
    }
    assert!(
        worst_flat <= 1e-12,
        "constant-vol pairing should vanish, worst |value| {worst_flat}"
    );
    println!(
        "criterion 05 PASS: quadrature vs closed form rel <= {worst_rel:.2e} on 3 nonzero pairings; constant-vol worst |value| {worst_flat:.1e} over {} library functions",
        library.len()
    );
}

#[test]
fn criterion_06_verdict_routing_depends_on_market_structure() {
    let opts = CompletenessOptions::default();

    let toy = DiffusionModel::independent_axes();
    let toy_domain = toy.default_domain(5.0).expect("domain");
    let toy_report = completeness_check(&toy, &toy_domain, &opts).expect("toy check");
    assert_eq!(
        toy_report.verdict,
        Verdict::CompleteViaRank,
        "independent coordinates should certify via rank: {:?}",
        toy_report.notes
    );

    let reference = reference_model();
    let ref_domain = reference.default_domain(5.0).expect("domain");
    let ref_report = completeness_check(&reference, &ref_domain, &opts).expect("reference check");
    assert!(
        ref_report.rank.fraction >= 0.99,
        "call-on-forward terminal Jacobian should be near-singular a.e., fraction {}",
        ref_report.rank.fraction
    );
    assert_eq!(
        ref_report.verdict,
        Verdict::CompleteViaPairing,
        "reference market should certify via pairing: {:?}",
        ref_report.notes
    );

    let flat = DiffusionModel::constant_vol(0.2, 0.0, 0.1, 0.0, 1.0, 1.0, 0.0).expect("model");
    let flat_domain = flat.default_domain(5.0).expect("domain");
    let flat_report = completeness_check(&flat, &flat_domain, &opts).expect("flat check");
    assert_eq!(
        flat_report.verdict,
        Verdict::Inconclusive,
        "constant-vol call market should stay undecided: {:?}",
        flat_report.notes
    );
    println!(
        "criterion 06 PASS: rank route (toy), pairing route (reference, singular fraction {}), inconclusive (constant vol)",
        ref_report.rank.fraction
    );
}

#[test]
fn criterion_07_monte_carlo_means_match_pde_price() {
    let model = reference_model();
    let v = solve_backward(&model, &reference_grid(&model, 161, 81, 96), &model.g.clone())
        .expect("solve");
    let price0 = v.interpolate(0.0, model.x0).0;

    let bundle = simulate_paths(&model, &SimOptions::new(100_000, 256, 42)).expect("paths");
    let n = bundle.n_paths as f64;
    let (mut sum, mut sumsq, mut fsum, mut fsumsq) = (0.0, 0.0, 0.0, 0.0);
    for p in 0..bundle.n_paths {
        let x = bundle.state(p, bundle.n_steps);
        let discount = bundle.discount(p, bundle.n_steps);
        let payoff = model.g.eval(x) * discount;
        let forward = model.f.eval(1.0, x) * discount;
        sum += payoff;
        sumsq += payoff * payoff;
        fsum += forward;
        fsumsq += forward * forward;
    }
    let mean = sum / n;
    let se = ((sumsq / n - mean * mean) / n).sqrt();
    let diff = (mean - price0).abs();
    assert!(
        diff <= 3.0 * se,
        "claim: MC mean {mean} vs PDE price {price0}, |diff| {diff} > 3 se {se}"
    );

    let fmean = fsum / n;
    let fse = ((fsumsq / n - fmean * fmean) / n).sqrt();
    let fstart = model.f.eval(0.0, model.x0);
    let fdiff = (fmean - fstart).abs();
    assert!(
        fdiff <= 3.0 * fse,
        "forward: MC mean {fmean} vs start value {fstart}, |diff| {fdiff} > 3 se {fse}"
    );
    println!(
        "criterion 07 PASS: claim mean {mean:.6} vs price {price0:.6} ({:.2} se), forward mean {fmean:.6} vs {fstart} ({:.2} se), 1e5 paths x 256 steps",
        diff / se, fdiff / fse
    );
}

#[test]
fn criterion_08_digital_hedge_error_decreases_with_steps() {
    let start = Instant::now();
    let model = reference_model();
    let v = solve_backward(&model, &reference_grid(&model, 193, 49, 128), &model.g.clone())
        .expect("solve");
    let opts = HedgeOptions::default();

    let digital = Payoff::Digital { gamma: 1.0 };
    let levels = [64, 128, 256, 512];
    let points = convergence_study(&model, &v, &digital, 10_000, &levels, 42, &opts)
        .expect("convergence study");
    for pair in points.windows(2) {
        assert!(
            pair[1].rmse < pair[0].rmse,
            "digital rmse not strictly decreasing: {} steps -> {}, {} steps -> {}",
            pair[0].n_steps, pair[0].rmse, pair[1].n_steps, pair[1].rmse
        );
    }
    for p in &points {
        assert!(
            p.fallback_fraction <= 1e-3,
            "fallback fraction {} at {} steps",
            p.fallback_fraction, p.n_steps
        );
    }

    let bundle = simulate_paths(&model, &SimOptions::new(10_000, 256, 77)).expect("paths");
    let (call_report, _) =
        replicate_claim(&model, &v, &model.g.clone(), &bundle, &opts).expect("call hedge");
    assert!(
        call_report.rmse <= 1e-10 * call_report.error_scale,
        "replicating the traded derivative should telescope: rmse {} scale {}",
        call_report.rmse, call_report.error_scale
    );
    let forward = Payoff::FieldAtHorizon(model.f.clone());
    let (fwd_report, _) =
        replicate_claim(&model, &v, &forward, &bundle, &opts).expect("forward hedge");
    let dt_half = (1.0_f64 / 256.0).sqrt();
    assert!(
        fwd_report.rmse <= dt_half * fwd_report.error_scale,
        "forward hedge should sit at Euler level: rmse {} scale {} sqrt(dt) {dt_half}",
        fwd_report.rmse, fwd_report.error_scale
    );
    assert!(
        call_report.fallback_fraction <= 1e-3 && fwd_report.fallback_fraction <= 1e-3,
        "fallback fractions {} / {}",
        call_report.fallback_fraction, fwd_report.fallback_fraction
    );
    assert_within(start.elapsed(), Duration::from_secs(300), "hedging demonstration");
    let rmses: Vec<String> = points.iter().map(|p| format!("{:.4}", p.rmse)).collect();
    println!(
        "criterion 08 PASS: digital rmse strictly decreasing [{}] over {:?} steps; call rmse {:.1e} scale, forward rmse {:.1e} scale",
        rmses.join(", "), levels,
        call_report.rmse / call_report.error_scale,
        fwd_report.rmse / fwd_report.error_scale
    );
}

#[test]
fn criterion_09_envelope_bounds_exact_and_counterexample_flagged() {
    for (d, r, epsilon, delta, big_r) in [
        (1.0, 1.0, 1.0, 1.0, 1.0),
        (2.0, 0.5, 0.5, 0.8, 3.0),
        (0.3, 2.0, 0.25, 4.0, 0.7),
    ] {
        let env = AnalyticEnvelope::new(d, r, epsilon, delta, big_r, Smooth1d::Const(1.0))
            .expect("envelope");
        let (m, l) = faa_di_bruno_bound(&env);
        assert_eq!(m, d / (1.0 + epsilon * delta), "M mismatch at d={d}");
        assert_eq!(
            l,
            big_r * epsilon * delta / (1.0 + 2.0 * epsilon * delta),
            "L mismatch at big_r={big_r}"
        );
    }

    let outer = OuterEnvelope::arctan();
    let inner = InnerEnvelope::exp_decay_linear();
    let report = envelope_check_composition(&outer, &inner, 6).expect("composition");
    assert!(report.passed(), "registered arctan composite should pass: {:?}", report.rows);
    assert_eq!(report.first_violation, None);

    let undersized = envelope_check_composition(&outer.clone().with_d(1.0), &inner, 6)
        .expect("undersized composition");
    assert!(
        !undersized.passed(),
        "d = 1 underestimates the weighted arctan derivatives and must be flagged"
    );
    println!(
        "criterion 09 PASS: factorial-envelope constants exact on 3 parameter sets; arctan composite passes k <= 6 and the undersized-d variant is flagged"
    );
}

#[test]
fn criterion_10_cli_outputs_are_byte_identical() {
    let dir = tempfile::tempdir().expect("tempdir");
    let config = dir.path().join("run.toml");
    fs::write(
        &config,
        r#"
[model.stochvol]
alpha = 1.0
m = 0.0
rate = 0.0
gamma = 1.0
p0 = 1.0
y0 = 0.0
nu = { arctan_sigmoid = { base = 0.5, scale = 0.3 } }
sigma1 = { arctan_sigmoid = { base = 0.1, scale = 0.05 } }
sigma2 = { arctan_sigmoid = { base = 0.1, scale = 0.05 } }

[grid]
n1 = 49
n2 = 25
n_t = 24

[mc]
n_paths = 500
n_steps = 32

[diagnostics]
n_probes = 256
completeness_probes = 128

[hedge]
paths = 200
levels = [8, 16]
"#,
    )
    .expect("write config");

    let run = |out: &Path, extra: &[&str], sub: &str| {
        let status = Command::new(env!("CARGO_BIN_EXE_marketspan"))
            .arg("--config")
            .arg(&config)
            .arg("--out")
            .arg(out)
            .args(extra)
            .arg(sub)
            .stdout(std::process::Stdio::null())
            .status()
            .expect("spawn marketspan");
        assert!(status.success(), "{sub} run into {out:?} failed");
    };
    let snapshot = |out: &Path| -> Vec<(PathBuf, Vec<u8>)> {
        let mut entries: Vec<_> = fs::read_dir(out)
            .expect("read out dir")
            .map(|e| e.expect("entry").path())
            .collect();
        entries.sort();
        entries
            .into_iter()
            .map(|p| {
                let bytes = fs::read(&p).expect("read artifact");
                (PathBuf::from(p.file_name().expect("name")), bytes)
            })
            .collect()
    };

    for (sub, variants) in [
        ("validate", vec![vec![], vec![]]),
        ("price", vec![vec![], vec![]]),
        ("hedge", vec![vec![], vec!["--workers", "1"], vec!["--workers", "3"]]),
    ] {
        let mut baseline = None;
        for (i, extra) in variants.iter().enumerate() {
            let out = dir.path().join(format!("{sub}_{i}"));
            run(&out, extra, sub);
            let snap = snapshot(&out);
            assert!(!snap.is_empty(), "{sub} produced no artifacts");
            match &baseline {
                None => baseline = Some(snap),
                Some(base) => {
                    assert_eq!(
                        base.len(),
                        snap.len(),
                        "{sub} run {i} produced a different artifact set"
                    );
                    for ((name_a, bytes_a), (name_b, bytes_b)) in base.iter().zip(&snap) {
                        assert_eq!(name_a, name_b, "{sub} artifact names diverge");
                        assert_eq!(
                            bytes_a, bytes_b,
                            "{sub} artifact {name_a:?} differs on rerun {i}"
                        );
                    }
                }
            }
        }
    }
    println!(
        "criterion 10 PASS: validate, price and hedge reruns byte-identical, including hedge at worker counts 0, 1 and 3"
    );
}
