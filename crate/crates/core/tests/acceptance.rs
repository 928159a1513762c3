//! Acceptance suite: one test per criterion, each printing a summary line.
//!
//! Run with `cargo test -p sparse-transfer --test acceptance -- --nocapture`
//! to see the per-criterion lines; the cargo pass/fail status of each test
//! is the verdict.

mod common;

use common::*;
use nalgebra::DVector;
use std::sync::Mutex;
use std::time::Instant;

use sparse_transfer::dict::{mu_incoherence, restricted_eigenvalue, Dictionary};
use sparse_transfer::dictlearn::DictSource;
use sparse_transfer::genmodel::{
    self, delta_breakdown_raw, DeltaVariant, GenModelParams, MagnitudeLaw,
};
use sparse_transfer::lasso::{self, LassoProblem};
use sparse_transfer::rng::stream;
use sparse_transfer::stability;
use sparse_transfer::transfer::{self, LabelRule, Loss, PipelineSettings, TransferConfig};

/// Heavy criteria take this lock so their runtime measurements are not
/// distorted by each other.
static HEAVY: Mutex<()> = Mutex::new(());

fn heavy_guard() -> std::sync::MutexGuard<'static, ()> {
    HEAVY
        .lock()
        .unwrap_or_else(|poisoned| poisoned.into_inner())
}

#[test]
fn acceptance_01_lasso_sign_pattern_oracle() {
    let started = Instant::now();
    let mut worst: f64 = 0.0;
    for i in 0..500u64 {
        let m = 1 + (i % 3) as usize;
        let ratio = [0.1, 0.3, 0.5, 0.8, 1.1][(i % 5) as usize];
        let (dict, x, lambda) = random_problem(1000 + i, 3, m, ratio);
        if lambda <= 1e-12 {
            continue;
        }
        let problem = LassoProblem::new(&dict, &x, lambda).unwrap();
        let code = lasso::solve(&problem, 1e-10, 100_000).unwrap();
        let oracle = sign_pattern_oracle(&dict, &x, lambda).expect("oracle candidate");
        let dist = l2_distance(&code.coefficients, &oracle);
        worst = worst.max(dist);
        assert!(
            dist <= 1e-6,
            "instance {i}: solver vs oracle distance {dist}"
        );
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "runtime {elapsed:?} >= 10 s");
    println!(
        "criterion 01 PASS: 500 problems (m <= 3) match the sign-pattern oracle, \
         worst l2 distance {worst:.2e}, runtime {elapsed:.2?}"
    );
}

#[test]
fn acceptance_02_kkt_subgradient_and_l1_bound() {
    let _guard = heavy_guard();
    let started = Instant::now();
    let mut worst_kkt: f64 = 0.0;
    let mut worst_gap: f64 = 0.0;
    for i in 0..1000u64 {
        let d = 2 + (i * 7 % 31) as usize; // 2..=32
        let m = 1 + (i * 11 % 48) as usize; // 1..=48
        let ratio = [0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.75, 0.9, 1.1][(i % 10) as usize];
        let (dict, x, lambda) = random_problem(2000 + i, d, m, ratio);
        if lambda <= 1e-12 {
            continue;
        }
        let problem = LassoProblem::new(&dict, &x, lambda).unwrap();
        let code = lasso::solve(&problem, 1e-10, 100_000).unwrap();
        worst_kkt = worst_kkt.max(code.kkt_residual);
        assert!(
            code.kkt_residual <= 1e-8,
            "instance {i}: kkt residual {}",
            code.kkt_residual
        );
        let gap = lasso::subgradient_identity_gap(&problem, &code);
        worst_gap = worst_gap.max(gap);
        assert!(gap <= 1e-7, "instance {i}: subgradient gap {gap}");
        assert!(
            lambda * code.l1_norm() <= 0.5 * x.norm_squared(),
            "instance {i}: l1 bound violated"
        );
    }
    println!(
        "criterion 02 PASS: 1000 problems certified, worst kkt {worst_kkt:.2e}, \
         worst subgradient gap {worst_gap:.2e}, runtime {:.2?}",
        started.elapsed()
    );
}

#[test]
fn acceptance_03_sparse_coding_stability() {
    let _guard = heavy_guard();
    let started = Instant::now();
    let d = 64;
    let k = 2;
    let lambda = 0.2;

    let mut dictionaries = Vec::new();
    for (i, mu) in [0.5, 1.0, 1.5].iter().enumerate() {
        let mut rng = stream(3000, i as u64);
        dictionaries.push(Dictionary::with_incoherence(d, 16, *mu, &mut rng).unwrap());
    }
    let mut rng = stream(3000, 10);
    let random_dict = Dictionary::random_unit_columns(d, 12, &mut rng).unwrap();
    let mu = mu_incoherence(&random_dict).mu;
    assert!(
        mu * k as f64 / (d as f64).sqrt() < 1.0,
        "seed gives mu {mu}"
    );
    dictionaries.push(random_dict);

    let mut total = 0usize;
    let mut max_code_distance: f64 = 0.0;
    let mut call_seed = 31_000u64;
    for (di, dict) in dictionaries.iter().enumerate() {
        let gen = GenModelParams::with_lambda(dict.clone(), k, 0.5, 0.01, 0.5, lambda)
            .unwrap()
            .with_magnitudes(MagnitudeLaw { lo: 0.5, hi: 0.6 })
            .unwrap();
        let mut sample_rng = stream(3100, di as u64);
        let mut kept = 0;
        while kept < 10 {
            let draw = genmodel::sample(&gen, &mut sample_rng);
            let radius = stability::permissible_radius(dict, &draw.x, k, lambda).unwrap();
            if radius < 2e-6 {
                continue;
            }
            kept += 1;
            let cap = lambda.min(radius);
            let grid = [0.3 * cap, 0.7 * cap, 0.95 * cap];
            let records =
                stability::verify_stability(dict, &[draw.x], k, lambda, &grid, 84, call_seed)
                    .unwrap();
            call_seed += 1;
            for rec in records {
                let report = rec
                    .report
                    .unwrap_or_else(|| panic!("solver failure: {:?}", rec.error));
                assert!(report.within_regime, "trial left the regime");
                assert!(
                    report.code_distance <= report.bound_value,
                    "stability bound violated: {} > {}",
                    report.code_distance,
                    report.bound_value
                );
                assert!(
                    report.support_diff_size <= k,
                    "support difference {} > k",
                    report.support_diff_size
                );
                assert!(
                    report.optimal_value_gap <= report.optimal_value_bound,
                    "optimal-value bound violated: {} > {}",
                    report.optimal_value_gap,
                    report.optimal_value_bound
                );
                assert!(
                    report.reconstructor_gap <= report.reconstructor_bound,
                    "reconstructor bound violated: {} > {}",
                    report.reconstructor_gap,
                    report.reconstructor_bound
                );
                max_code_distance = max_code_distance.max(report.code_distance);
                total += 1;
            }
        }
    }
    let elapsed = started.elapsed();
    assert!(total >= 10_000, "only {total} in-regime trials ran");
    assert!(max_code_distance > 0.0, "perturbations never moved a code");
    assert!(
        elapsed.as_secs_f64() < 300.0,
        "runtime {elapsed:?} >= 5 min"
    );
    println!(
        "criterion 03 PASS: {total} in-regime perturbation trials, zero violations of \
         the stability, support, optimal-value, and reconstructor bounds \
         (max code movement {max_code_distance:.2e}), runtime {elapsed:.2?}"
    );
}

#[test]
fn acceptance_04_margin_order_statistic_identity() {
    let started = Instant::now();
    let mut checked = 0;
    let mut i = 0u64;
    while checked < 200 {
        i += 1;
        let m = 2 + (i % 11) as usize; // 2..=12
        let ratio = 0.2 + 0.6 * ((i % 7) as f64 / 7.0);
        let (dict, x, lambda) = random_problem(4000 + i, 6, m, ratio);
        if lambda <= 1e-12 {
            continue;
        }
        let k = (i % m as u64) as usize;
        let report = stability::k_margin(&dict, &x, k, lambda).unwrap();
        let enumerated = margin_by_enumeration(&report.residual_correlations, lambda, k);
        assert_eq!(
            report.margin.to_bits(),
            enumerated.to_bits(),
            "instance {i}: sorted {} vs enumerated {enumerated}",
            report.margin
        );
        checked += 1;
    }
    println!(
        "criterion 04 PASS: sorted-correlation margin identical to subset enumeration \
         on {checked} instances (bitwise), runtime {:.2?}",
        started.elapsed()
    );
}

#[test]
fn acceptance_05_restricted_eigenvalue_bound() {
    let started = Instant::now();
    let mut checked_dicts = 0;
    let mut worst_slack = f64::INFINITY;
    for i in 0..100u64 {
        let d = 4 + (i % 9) as usize * 4; // 4..=36
        let m = 2 + (i % 7) as usize; // 2..=8
        let mut rng = stream(5000 + i, 0);
        let dict = Dictionary::random_unit_columns(d, m, &mut rng).unwrap();
        let mu = mu_incoherence(&dict).mu;
        for k in 1..=m {
            let eig = restricted_eigenvalue(&dict, k).unwrap();
            let bound = 1.0 - mu * k as f64 / (d as f64).sqrt();
            worst_slack = worst_slack.min(eig - bound);
            assert!(
                eig >= bound - 1e-10,
                "dict {i} k={k}: eigenvalue {eig} below bound {bound}"
            );
        }
        checked_dicts += 1;
    }
    println!(
        "criterion 05 PASS: restricted eigenvalue >= 1 - mu k / sqrt(d) on \
         {checked_dicts} dictionaries (all k), smallest slack {worst_slack:.3e}, runtime {:.2?}",
        started.elapsed()
    );
}

fn margin_model(seed: u64) -> GenModelParams {
    let mut rng = stream(seed, 0);
    let dict = Dictionary::with_incoherence(1024, 32, 1.0, &mut rng).unwrap();
    GenModelParams::new(dict, 2, 1.0, 0.1, 0.5, 0.25).unwrap()
}

#[test]
fn acceptance_06_margin_bound_montecarlo() {
    let _guard = heavy_guard();
    let started = Instant::now();
    let params = margin_model(6000);
    let regime = params.regime();
    assert!(regime.all, "margin-bound regime must hold: {regime:?}");
    let trials = 10_000;
    let report = genmodel::margin_montecarlo(&params, trials, 6100);
    assert_eq!(report.excluded, 0, "solver failures: {}", report.excluded);
    let delta = report.delta;
    let se = (delta * (1.0 - delta) / trials as f64).sqrt();
    let rate = report.rate.unwrap();
    assert!(
        rate <= delta + 3.0 * se,
        "failure rate {rate} exceeds delta {delta} + 3 se"
    );
    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs_f64() < 600.0,
        "runtime {elapsed:?} >= 10 min"
    );
    println!(
        "criterion 06 PASS: margin >= t*lambda failed {}/{} times \
         (delta_t_lambda = {delta:.3e}), runtime {elapsed:.2?}",
        report.failures, trials
    );
}

#[test]
fn acceptance_07_lemma_rates() {
    let _guard = heavy_guard();
    let started = Instant::now();
    let params = margin_model(7000);
    let trials = 10_000;
    let report = genmodel::lemma_checks(&params, trials, 7100);
    assert_eq!(report.excluded, 0);
    let mut printed = String::new();
    for rate in &report.rates {
        let delta = 1.0 - rate.bound;
        let se = (delta * (1.0 - delta) / trials as f64).sqrt();
        assert!(
            rate.rate >= rate.bound - 3.0 * se,
            "{}: rate {} below bound {} - 3 se",
            rate.name,
            rate.rate,
            rate.bound
        );
        printed.push_str(&format!("{}={:.4} ", rate.name, rate.rate));
    }
    println!(
        "criterion 07 PASS: lemma rates over {trials} trials all above their printed \
         bounds ({printed}), runtime {:.2?}",
        started.elapsed()
    );
}

/// Generative model shared by the transfer criteria: margins near lambda so
/// the permissible radius comfortably exceeds the 1e-4 oracle error.
fn transfer_model(seed: u64) -> GenModelParams {
    let mut rng = stream(seed, 0);
    let dict = Dictionary::with_incoherence(64, 16, 0.5, &mut rng).unwrap();
    GenModelParams::with_lambda(dict, 2, 0.5, 0.005, 0.5, 0.25)
        .unwrap()
        .with_magnitudes(MagnitudeLaw { lo: 0.5, hi: 0.55 })
        .unwrap()
}

fn transfer_config(n: usize) -> TransferConfig {
    TransferConfig::standard(Loss::Absolute, 1.0, 0.25, 1.0, 1.0, 2, n, 1000, 0.1, 0.01)
}

fn random_label_rule(m: usize, norm: f64, rng: &mut sparse_transfer::rng::Stream) -> LabelRule {
    let w = gaussian_vector(m, rng).normalize() * norm;
    LabelRule {
        weights: w,
        noise_bound: 0.02,
    }
}

#[test]
fn acceptance_08_w_stability() {
    let _guard = heavy_guard();
    let started = Instant::now();
    let mut worst_ratio: f64 = 0.0;
    let mut worst_lhs: f64 = 0.0;
    for run in 0..100u64 {
        let gen = transfer_model(8000 + run);
        let config = transfer_config(50);
        let mut rng = stream(8200, run);
        let rule = random_label_rule(gen.dict_size(), 0.5, &mut rng);
        let (data, _) = transfer::labeled_samples(&gen, &rule, 50, true, &mut rng).unwrap();
        let estimate =
            sparse_transfer::dictlearn::oracle_estimator(gen.dictionary(), 1e-4, &mut rng).unwrap();
        let report =
            transfer::w_stability_gap(&estimate.dictionary, gen.dictionary(), &data, &config)
                .unwrap();
        assert!(
            report.in_regime,
            "run {run} out of regime: dist {} vs radius {}",
            report.dict_distance, report.min_permissible_radius
        );
        assert!(
            report.lhs <= report.rhs,
            "run {run}: lhs {} > rhs {}",
            report.lhs,
            report.rhs
        );
        assert!(report.lhs <= 2.0 * config.predictor_radius + 1e-9);
        worst_ratio = worst_ratio.max(report.lhs / report.rhs);
        worst_lhs = worst_lhs.max(report.lhs);
    }
    assert!(worst_lhs > 0.0, "predictors never moved; check the setup");
    println!(
        "criterion 08 PASS: predictor stability lhs <= rhs on 100/100 in-regime datasets \
         (worst lhs {worst_lhs:.2e}, worst lhs/rhs = {worst_ratio:.2e}), runtime {:.2?}",
        started.elapsed()
    );
}

#[test]
fn acceptance_09_learning_bound_dominance() {
    let _guard = heavy_guard();
    let started = Instant::now();
    let settings = PipelineSettings {
        heldout: 3000,
        wstar_oversample: 50,
        wstar_rho_decades: 3,
    };
    let errors = [0.0, 1e-5, 1e-4];
    let mut dominated = 0;
    let mut max_approx_err: f64 = 0.0;
    for run in 0..100u64 {
        let gen = transfer_model(9000 + run);
        let config = transfer_config(200);
        let mut rng = stream(9200, run);
        let rule = random_label_rule(gen.dict_size(), 0.5, &mut rng);
        let source = DictSource::Oracle {
            target_error: errors[(run % 3) as usize],
        };
        let report =
            transfer::run_pipeline(&gen, &rule, &config, &source, &settings, 9300 + run).unwrap();
        assert!(
            report.within_regime,
            "run {run} out of regime: error {} vs radius {}",
            report.dict_error, report.min_permissible_radius
        );
        assert!(report.gap_target <= 1e-8, "ERM certificate violated");
        if report.excess_risk <= report.bound.total {
            dominated += 1;
        }
        max_approx_err = max_approx_err.max(report.wstar_approx_error);
    }
    let elapsed = started.elapsed();
    assert!(
        dominated >= 95,
        "bound dominated the excess risk in only {dominated}/100 runs"
    );
    println!(
        "criterion 09 PASS: excess risk <= bound total in {dominated}/100 in-regime runs \
         (n=200, errors swept over 0/1e-5/1e-4, reference-predictor approximation error \
         <= {max_approx_err:.2e}), runtime {elapsed:.2?}"
    );
}

#[test]
fn acceptance_10_delta_regime_contrast() {
    let started = Instant::now();
    // tau = 1/4: sub-exponential decrease in d
    let grid = [256usize, 1024, 4096, 16384];
    let mut logs = Vec::new();
    let mut last = f64::INFINITY;
    for &d in &grid {
        let lambda = (d as f64).powf(-0.25);
        let delta =
            delta_breakdown_raw(d, 16, 2, 1.0, 0.1, lambda, 0.5, 1.0, DeltaVariant::Theorem).total;
        assert!(delta < last, "delta not decreasing at d={d}");
        last = delta;
        logs.push(-delta.ln());
    }
    for pair in logs.windows(2) {
        let ratio = pair[1] / pair[0];
        assert!(
            (1.4..3.0).contains(&ratio),
            "log-delta growth ratio {ratio} inconsistent with sqrt(d) scaling"
        );
    }
    let delta_4096 = delta_breakdown_raw(
        4096,
        16,
        2,
        1.0,
        0.1,
        0.125,
        0.5,
        1.0,
        DeltaVariant::Theorem,
    )
    .total;
    assert!(delta_4096 < 1e-6, "delta at d=4096 is {delta_4096}");

    // tau = 1/2 at the same d: vacuous
    let lambda_half = (4096f64).powf(-0.5);
    let delta_half = delta_breakdown_raw(
        4096,
        16,
        2,
        1.0,
        0.1,
        lambda_half,
        0.5,
        1.0,
        DeltaVariant::Theorem,
    )
    .total;
    assert!(
        delta_half > 1.0,
        "tau=1/2 delta is {delta_half}, expected > 1"
    );
    println!(
        "criterion 10 PASS: tau=1/4 delta falls sub-exponentially \
         (delta(4096)={delta_4096:.2e}); tau=1/2 delta at d=4096 is {delta_half:.1} > 1, \
         runtime {:.2?}",
        started.elapsed()
    );
}

#[test]
fn acceptance_11_determinism() {
    let started = Instant::now();
    // margin Monte Carlo
    let params = transfer_model(11_000);
    let a = serde_json::to_string(&genmodel::margin_montecarlo(&params, 50, 42).outcomes).unwrap();
    let b = serde_json::to_string(&genmodel::margin_montecarlo(&params, 50, 42).outcomes).unwrap();
    assert_eq!(a, b, "margin Monte Carlo not deterministic");

    // lemma checks
    let a = serde_json::to_string(&genmodel::lemma_checks(&params, 50, 43).outcomes).unwrap();
    let b = serde_json::to_string(&genmodel::lemma_checks(&params, 50, 43).outcomes).unwrap();
    assert_eq!(a, b, "lemma checks not deterministic");

    // stability trials
    let dict = params.dictionary();
    let mut rng = stream(11_100, 0);
    let gen_draw = genmodel::sample(&params, &mut rng);
    let sample = std::slice::from_ref(&gen_draw.x);
    let records1 = stability::verify_stability(dict, sample, 2, 0.25, &[1e-5], 8, 44).unwrap();
    let records2 = stability::verify_stability(dict, sample, 2, 0.25, &[1e-5], 8, 44).unwrap();
    assert_eq!(
        serde_json::to_string(&records1).unwrap(),
        serde_json::to_string(&records2).unwrap(),
        "stability trials not deterministic"
    );

    // full pipeline
    let config = transfer_config(30);
    let rule = LabelRule {
        weights: DVector::from_fn(params.dict_size(), |i, _| if i == 0 { 0.5 } else { 0.1 }),
        noise_bound: 0.02,
    };
    let settings = PipelineSettings {
        heldout: 200,
        wstar_oversample: 5,
        wstar_rho_decades: 2,
    };
    let source = DictSource::Oracle { target_error: 1e-4 };
    let r1 = transfer::run_pipeline(&params, &rule, &config, &source, &settings, 45).unwrap();
    let r2 = transfer::run_pipeline(&params, &rule, &config, &source, &settings, 45).unwrap();
    assert_eq!(
        serde_json::to_string(&r1).unwrap(),
        serde_json::to_string(&r2).unwrap(),
        "pipeline not deterministic"
    );
    println!(
        "criterion 11 PASS: repeated seeded runs serialize byte-identically, runtime {:.2?}",
        started.elapsed()
    );
}
