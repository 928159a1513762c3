//! The six experiment commands. Each validates its parameters (naming the
//! offending dotted key), runs the corresponding verification routine, and
//! writes a JSON-lines report plus a summary CSV.

use nalgebra::DVector;
use std::path::Path;

use crate::config::{
    check_min_count, check_nonnegative, check_positive, check_unit_open, ConfigMap,
};
use crate::error::{from_core, CliError};
use crate::report::{csv_float, ReportSink};

use sparse_transfer::dict::Dictionary;
use sparse_transfer::dictlearn::{self, DictSource};
use sparse_transfer::genmodel::{self, GenModelParams, MagnitudeLaw};
use sparse_transfer::rng::stream;
use sparse_transfer::stability;
use sparse_transfer::transfer::{self, LabelRule, Loss, PipelineSettings, RhoMode, TransferConfig};

// stream indices reserved for infrastructure draws; Monte Carlo trials use
// indices 0..trials and never collide with these
const STREAM_DICT: u64 = 1 << 60;
const STREAM_SAMPLES: u64 = (1 << 60) + 1;
const STREAM_LEARN: u64 = (1 << 60) + 2;
const STREAM_RULE: u64 = (1 << 60) + 3;

pub fn dispatch(
    command: &str,
    cfg: &ConfigMap,
    seed: u64,
    trials: Option<usize>,
    out: &Path,
) -> Result<(), CliError> {
    match command {
        "stability" => run_stability(cfg, seed, trials, out),
        "margin" => run_margin(cfg, seed, trials, out),
        "lemmas" => run_lemmas(cfg, seed, trials, out),
        "dictlearn" => run_dictlearn(cfg, seed, out),
        "transfer" => run_transfer(cfg, seed, trials, out),
        "bound" => run_bound(cfg, seed, out),
        other => Err(CliError::precondition(
            "command",
            format!("unknown command `{other}` (expected stability, margin, lemmas, dictlearn, transfer, or bound)"),
        )),
    }
}

/// Shared construction of the generative model from `genmodel.*` keys.
fn build_genmodel(cfg: &ConfigMap, seed: u64) -> Result<GenModelParams, CliError> {
    let d = check_min_count("genmodel.d", cfg.require_usize("genmodel.d")?, 2)?;
    let m = check_min_count("genmodel.m", cfg.require_usize("genmodel.m")?, 1)?;
    if m + 1 > d {
        return Err(CliError::precondition(
            "genmodel.m",
            format!("incoherent dictionary construction needs m + 1 <= d, got m={m}, d={d}"),
        ));
    }
    let k = cfg.require_usize("genmodel.k")?;
    if k > m {
        return Err(CliError::precondition(
            "genmodel.k",
            format!("sparsity k={k} exceeds m={m}"),
        ));
    }
    let c = check_positive("genmodel.C", cfg.f64_or("genmodel.C", 1.0)?)?;
    let sigma = check_nonnegative("genmodel.sigma", cfg.f64_or("genmodel.sigma", 0.1)?)?;
    let t = check_unit_open("genmodel.t", cfg.f64_or("genmodel.t", 0.5)?)?;
    let mu = check_nonnegative("genmodel.mu", cfg.f64_or("genmodel.mu", 1.0)?)?;
    if mu >= (d as f64).sqrt() {
        return Err(CliError::precondition(
            "genmodel.mu",
            format!("mu={mu} must be below sqrt(d)"),
        ));
    }
    let mut rng = stream(seed, STREAM_DICT);
    let dict = Dictionary::with_incoherence(d, m, mu, &mut rng)
        .map_err(|e| from_core("dictionary-construction", e))?;

    let params = match cfg.get_f64("genmodel.lambda")? {
        Some(lambda) => {
            check_positive("genmodel.lambda", lambda)?;
            GenModelParams::with_lambda(dict, k, c, sigma, t, lambda)
        }
        None => {
            let tau = cfg.f64_or("genmodel.tau", 0.25)?;
            if !(0.25..=0.5).contains(&tau) {
                return Err(CliError::precondition(
                    "genmodel.tau",
                    format!("tau={tau} must lie in [1/4, 1/2]"),
                ));
            }
            GenModelParams::new(dict, k, c, sigma, t, tau)
        }
    }
    .map_err(|e| from_core("genmodel-construction", e))?;
    match cfg.get_f64("genmodel.amp_max")? {
        Some(hi) => params
            .with_magnitudes(MagnitudeLaw { lo: c, hi })
            .map_err(|e| from_core("genmodel-construction", e)),
        None => Ok(params),
    }
}

fn run_stability(
    cfg: &ConfigMap,
    seed: u64,
    trials: Option<usize>,
    out: &Path,
) -> Result<(), CliError> {
    let d = check_min_count("stability.d", cfg.require_usize("stability.d")?, 2)?;
    let m = check_min_count("stability.m", cfg.require_usize("stability.m")?, 2)?;
    let k = cfg.require_usize("stability.k")?;
    if k >= m {
        return Err(CliError::precondition(
            "stability.k",
            format!("margin sparsity k={k} must be < m={m}"),
        ));
    }
    let lambda = check_positive("stability.lambda", cfg.require_f64("stability.lambda")?)?;
    let sigma = check_nonnegative("stability.sigma", cfg.f64_or("stability.sigma", 0.01)?)?;
    let c = check_positive(
        "stability.min_coeff",
        cfg.f64_or("stability.min_coeff", 0.5)?,
    )?;
    let n_samples = check_min_count(
        "stability.samples",
        cfg.usize_or("stability.samples", 5)?,
        1,
    )?;
    let trials = check_min_count("trials", trials.unwrap_or(10), 1)?;
    let eps_grid = cfg.f64_list_or("stability.eps_grid", &[0.0])?;
    for &eps in &eps_grid {
        if !(0.0..=2.0).contains(&eps) {
            return Err(CliError::precondition(
                "stability.eps_grid",
                format!("perturbation {eps} outside [0, 2]"),
            ));
        }
    }

    let mut dict_rng = stream(seed, STREAM_DICT);
    let dict = match cfg.get_f64("stability.mu")? {
        Some(mu) => Dictionary::with_incoherence(d, m, mu, &mut dict_rng),
        None => Dictionary::random_unit_columns(d, m, &mut dict_rng),
    }
    .map_err(|e| from_core("dictionary-construction", e))?;
    let gen = GenModelParams::with_lambda(dict.clone(), k.max(1), c, sigma, 0.5, lambda)
        .map_err(|e| from_core("genmodel-construction", e))?;
    let mut sample_rng = stream(seed, STREAM_SAMPLES);
    let samples: Vec<DVector<f64>> = (0..n_samples)
        .map(|_| genmodel::sample(&gen, &mut sample_rng).x)
        .collect();

    let records = stability::verify_stability(&dict, &samples, k, lambda, &eps_grid, trials, seed)
        .map_err(|e| from_core("stability", e))?;

    let mut sink = ReportSink::new("stability", seed, cfg.resolved());
    for rec in &records {
        sink.push_record(rec)?;
    }
    sink.push_csv(
        "eps,trials,solver_failures,in_regime,bound_violations,support_violations,\
         optimal_value_violations,reconstructor_violations,max_code_distance"
            .into(),
    );
    outln!(
        "stability: {} trials over {} eps points",
        records.len(),
        eps_grid.len()
    );
    outln!(
        "{:>12} {:>8} {:>10} {:>10} {:>10} {:>14}",
        "eps",
        "trials",
        "failures",
        "in_regime",
        "violations",
        "max_code_dist"
    );
    for &eps in &eps_grid {
        let of_eps: Vec<_> = records.iter().filter(|r| r.eps == eps).collect();
        let failures = of_eps.iter().filter(|r| r.error.is_some()).count();
        let reports: Vec<_> = of_eps.iter().filter_map(|r| r.report.as_ref()).collect();
        let in_regime = reports.iter().filter(|r| r.within_regime).count();
        let bound_viol = reports
            .iter()
            .filter(|r| r.within_regime && r.code_distance > r.bound_value)
            .count();
        let support_viol = reports
            .iter()
            .filter(|r| r.within_regime && r.support_diff_size > k)
            .count();
        let ov_viol = reports
            .iter()
            .filter(|r| r.dict_distance <= lambda && r.optimal_value_gap > r.optimal_value_bound)
            .count();
        let recon_viol = reports
            .iter()
            .filter(|r| r.dict_distance <= lambda && r.reconstructor_gap > r.reconstructor_bound)
            .count();
        let max_dist = reports.iter().map(|r| r.code_distance).fold(0.0, f64::max);
        sink.push_csv(format!(
            "{},{},{},{},{},{},{},{},{}",
            csv_float(eps),
            of_eps.len(),
            failures,
            in_regime,
            bound_viol,
            support_viol,
            ov_viol,
            recon_viol,
            csv_float(max_dist)
        ));
        let total_viol = bound_viol + support_viol + ov_viol + recon_viol;
        outln!(
            "{:>12.3e} {:>8} {:>10} {:>10} {:>10} {:>14.3e}",
            eps,
            of_eps.len(),
            failures,
            in_regime,
            total_viol,
            max_dist
        );
    }
    let csv = sink.write(out)?;
    outln!("report: {} (+ {})", out.display(), csv.display());
    Ok(())
}

fn run_margin(
    cfg: &ConfigMap,
    seed: u64,
    trials: Option<usize>,
    out: &Path,
) -> Result<(), CliError> {
    let params = build_genmodel(cfg, seed)?;
    let trials = check_min_count("trials", trials.unwrap_or(1000), 1)?;
    let report = genmodel::margin_montecarlo(&params, trials, seed);

    #[derive(serde::Serialize)]
    struct MarginSummary<'a> {
        record: &'static str,
        trials: usize,
        failures: usize,
        excluded: usize,
        rate: Option<f64>,
        wilson95: Option<(f64, f64)>,
        delta: f64,
        threshold: f64,
        regime: &'a genmodel::RegimeReport,
        lambda: f64,
        mu: f64,
    }

    let mut sink = ReportSink::new("margin", seed, cfg.resolved());
    for outcome in &report.outcomes {
        sink.push_record(outcome)?;
    }
    sink.push_record(&MarginSummary {
        record: "summary",
        trials: report.trials,
        failures: report.failures,
        excluded: report.excluded,
        rate: report.rate,
        wilson95: report.wilson95,
        delta: report.delta,
        threshold: report.threshold,
        regime: &report.regime,
        lambda: params.lambda(),
        mu: params.incoherence(),
    })?;
    sink.push_csv(
        "d,m,k,C,sigma,t,lambda,mu,trials,failures,excluded,rate,wilson_lo,wilson_hi,\
         delta,threshold,regime_ok"
            .into(),
    );
    let (lo, hi) = report.wilson95.unwrap_or((0.0, 1.0));
    sink.push_csv(format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        params.ambient_dim(),
        params.dict_size(),
        params.sparsity(),
        csv_float(params.min_magnitude()),
        csv_float(params.sigma()),
        csv_float(params.margin_fraction()),
        csv_float(params.lambda()),
        csv_float(params.incoherence()),
        report.trials,
        report.failures,
        report.excluded,
        report.rate.map(csv_float).unwrap_or_else(|| "NA".into()),
        csv_float(lo),
        csv_float(hi),
        csv_float(report.delta),
        csv_float(report.threshold),
        report.regime.all,
    ));
    outln!(
        "margin: {} trials, {} failures, {} excluded (threshold t*lambda = {:.6})",
        report.trials,
        report.failures,
        report.excluded,
        report.threshold
    );
    outln!(
        "delta_t_lambda = {:.6e}, empirical rate = {}, wilson95 = [{:.3e}, {:.3e}], regime_ok = {}",
        report.delta,
        report
            .rate
            .map(|r| format!("{r:.6e}"))
            .unwrap_or_else(|| "undefined (no effective trials)".into()),
        lo,
        hi,
        report.regime.all
    );
    let csv = sink.write(out)?;
    outln!("report: {} (+ {})", out.display(), csv.display());
    Ok(())
}

fn run_lemmas(
    cfg: &ConfigMap,
    seed: u64,
    trials: Option<usize>,
    out: &Path,
) -> Result<(), CliError> {
    let params = build_genmodel(cfg, seed)?;
    let trials = check_min_count("trials", trials.unwrap_or(1000), 1)?;
    let report = genmodel::lemma_checks(&params, trials, seed);

    let mut sink = ReportSink::new("lemmas", seed, cfg.resolved());
    for outcome in &report.outcomes {
        sink.push_record(outcome)?;
    }
    sink.push_csv("lemma,successes,trials,excluded,rate,bound".into());
    outln!(
        "lemmas: {} trials, {} excluded",
        report.trials,
        report.excluded
    );
    outln!(
        "{:>20} {:>10} {:>12} {:>12}",
        "lemma",
        "successes",
        "rate",
        "bound"
    );
    for rate in &report.rates {
        sink.push_csv(format!(
            "{},{},{},{},{},{}",
            rate.name,
            rate.successes,
            report.trials,
            report.excluded,
            csv_float(rate.rate),
            csv_float(rate.bound),
        ));
        outln!(
            "{:>20} {:>10} {:>12.6} {:>12.6}",
            rate.name,
            rate.successes,
            rate.rate,
            rate.bound
        );
    }
    let csv = sink.write(out)?;
    outln!("report: {} (+ {})", out.display(), csv.display());
    Ok(())
}

fn run_dictlearn(cfg: &ConfigMap, seed: u64, out: &Path) -> Result<(), CliError> {
    let m = check_min_count("dictlearn.m", cfg.require_usize("dictlearn.m")?, 1)?;
    let lambda = check_positive("dictlearn.lambda", cfg.f64_or("dictlearn.lambda", 0.05)?)?;
    let rounds = check_min_count("dictlearn.rounds", cfg.usize_or("dictlearn.rounds", 20)?, 1)?;

    // samples come from a text matrix file (columns are samples) or from the
    // generative model; in the latter case the true dictionary is known
    let (samples, truth): (Vec<DVector<f64>>, Option<Dictionary>) = match cfg
        .get_str("dictlearn.samples_path")
    {
        Some(path) => {
            let matrix = sparse_transfer::dict::read_matrix(
                std::fs::File::open(path)
                    .map_err(|e| CliError::runtime("sample-load", format!("{path}: {e}")))?,
            )
            .map_err(|e| from_core("sample-load", e))?;
            let samples: Vec<DVector<f64>> = (0..matrix.ncols())
                .map(|j| matrix.column(j).into_owned())
                .collect();
            let truth = match cfg.get_str("dictlearn.truth_path") {
                Some(tp) => {
                    Some(Dictionary::read_text_file(tp).map_err(|e| from_core("truth-load", e))?)
                }
                None => None,
            };
            (samples, truth)
        }
        None => {
            let d = check_min_count("dictlearn.d", cfg.require_usize("dictlearn.d")?, 2)?;
            if m + 1 > d {
                return Err(CliError::precondition(
                    "dictlearn.m",
                    format!("truth construction needs m + 1 <= d, got m={m}, d={d}"),
                ));
            }
            let k = cfg.require_usize("dictlearn.k")?;
            if k > m {
                return Err(CliError::precondition(
                    "dictlearn.k",
                    format!("sparsity k={k} exceeds m={m}"),
                ));
            }
            let c = check_positive("dictlearn.C", cfg.f64_or("dictlearn.C", 1.0)?)?;
            let sigma = check_nonnegative("dictlearn.sigma", cfg.f64_or("dictlearn.sigma", 0.0)?)?;
            let mu = check_nonnegative("dictlearn.mu", cfg.f64_or("dictlearn.mu", 0.5)?)?;
            let n_samples = check_min_count(
                "dictlearn.n_samples",
                cfg.usize_or("dictlearn.n_samples", 200)?,
                1,
            )?;
            let mut dict_rng = stream(seed, STREAM_DICT);
            let truth = Dictionary::with_incoherence(d, m, mu, &mut dict_rng)
                .map_err(|e| from_core("dictionary-construction", e))?;
            let gen = GenModelParams::with_lambda(truth.clone(), k, c, sigma, 0.5, lambda)
                .map_err(|e| from_core("genmodel-construction", e))?;
            let mut sample_rng = stream(seed, STREAM_SAMPLES);
            let samples = (0..n_samples)
                .map(|_| genmodel::sample(&gen, &mut sample_rng).x)
                .collect();
            (samples, Some(truth))
        }
    };
    let n_samples = samples.len();

    let mut learn_rng = stream(seed, STREAM_LEARN);
    let outcome = dictlearn::learn_alternating(&samples, m, lambda, rounds, &mut learn_rng)
        .map_err(|e| from_core("dictionary-learning", e))?;
    let compared = match &truth {
        Some(truth) => Some(
            dictlearn::dict_error(&outcome.estimate.dictionary, truth)
                .map_err(|e| from_core("dict-error", e))?,
        ),
        None => None,
    };
    let error_to_truth = compared.as_ref().map(|(e, _)| *e);
    let alignment = compared.as_ref().map(|(_, a)| a);

    #[derive(serde::Serialize)]
    struct RoundLine {
        round: usize,
        objective: f64,
    }
    #[derive(serde::Serialize)]
    struct EstimateLine<'a> {
        record: &'static str,
        n_samples_used: usize,
        error_to_truth: Option<f64>,
        alignment: Option<&'a dictlearn::Alignment>,
        column_reinits: &'a [(usize, usize)],
    }

    let mut sink = ReportSink::new("dictlearn", seed, cfg.resolved());
    for (i, objective) in outcome.trace.objectives.iter().enumerate() {
        sink.push_record(&RoundLine {
            round: i + 1,
            objective: *objective,
        })?;
    }
    sink.push_record(&EstimateLine {
        record: "estimate",
        n_samples_used: outcome.estimate.n_samples_used,
        error_to_truth,
        alignment,
        column_reinits: &outcome.trace.column_reinits,
    })?;
    sink.push_csv("n_samples,rounds,final_objective,error_to_truth,column_reinits".into());
    let final_objective = *outcome.trace.objectives.last().expect("rounds >= 1");
    sink.push_csv(format!(
        "{},{},{},{},{}",
        n_samples,
        rounds,
        csv_float(final_objective),
        error_to_truth.map(csv_float).unwrap_or_else(|| "NA".into()),
        outcome.trace.column_reinits.len()
    ));

    let dict_path = out.with_extension("dict.txt");
    outcome
        .estimate
        .dictionary
        .write_text_file(&dict_path)
        .map_err(|e| from_core("dictionary-write", e))?;

    outln!(
        "dictlearn: {} samples, {} rounds, final objective {:.6e}, aligned error {}",
        n_samples,
        rounds,
        final_objective,
        error_to_truth
            .map(|e| format!("{e:.6e}"))
            .unwrap_or_else(|| "unavailable (no truth)".into())
    );
    let csv = sink.write(out)?;
    outln!(
        "report: {} (+ {}, dictionary {})",
        out.display(),
        csv.display(),
        dict_path.display()
    );
    Ok(())
}

fn run_transfer(
    cfg: &ConfigMap,
    seed: u64,
    trials: Option<usize>,
    out: &Path,
) -> Result<(), CliError> {
    let gen = build_genmodel(cfg, seed)?;
    let n = check_min_count("transfer.n", cfg.usize_or("transfer.n", 100)?, 1)?;
    let n_source = cfg.usize_or("transfer.n_source", 1000)?;
    let delta = check_unit_open("transfer.delta", cfg.f64_or("transfer.delta", 0.1)?)?;
    let delta_bar = check_unit_open(
        "transfer.delta_bar",
        cfg.f64_or("transfer.delta_bar", 0.01)?,
    )?;
    let r_w = check_positive("transfer.r_w", cfg.f64_or("transfer.r_w", 1.0)?)?;
    let r_x = check_positive("transfer.r_x", cfg.f64_or("transfer.r_x", 1.0)?)?;
    let lipschitz = check_positive("transfer.lipschitz", cfg.f64_or("transfer.lipschitz", 1.0)?)?;
    let label_noise = check_nonnegative(
        "transfer.label_noise",
        cfg.f64_or("transfer.label_noise", 0.02)?,
    )?;
    let w0_norm = check_positive(
        "transfer.w0_norm",
        cfg.f64_or("transfer.w0_norm", 0.5 * r_w)?,
    )?;
    let runs = check_min_count(
        "transfer.runs",
        trials.unwrap_or(cfg.usize_or("transfer.runs", 1)?),
        1,
    )?;
    let heldout = check_min_count(
        "transfer.heldout",
        cfg.usize_or("transfer.heldout", 2000)?,
        1,
    )?;
    let oversample = check_min_count(
        "transfer.wstar_oversample",
        cfg.usize_or("transfer.wstar_oversample", 50)?,
        1,
    )?;
    let loss = match cfg.get_str("transfer.loss").unwrap_or("absolute") {
        "absolute" => Loss::Absolute,
        "hinge" => Loss::Hinge,
        "squared" => Loss::Squared,
        other => {
            return Err(CliError::precondition(
                "transfer.loss",
                format!("unknown loss `{other}`"),
            ))
        }
    };
    let dict_errors = cfg.f64_list_or("transfer.dict_errors", &[0.0])?;
    for &e in &dict_errors {
        if !(0.0..=2.0).contains(&e) {
            return Err(CliError::precondition(
                "transfer.dict_errors",
                format!("dictionary error {e} outside [0, 2]"),
            ));
        }
    }

    let mut config = TransferConfig::standard(
        loss,
        lipschitz,
        gen.lambda(),
        r_w,
        r_x,
        gen.sparsity(),
        n,
        n_source,
        delta,
        delta_bar,
    );
    if let Some(rho) = cfg.get_f64("transfer.rho")? {
        config.rho = RhoMode::Fixed(check_positive("transfer.rho", rho)?);
    }
    let settings = PipelineSettings {
        heldout,
        wstar_oversample: oversample,
        wstar_rho_decades: check_min_count(
            "transfer.wstar_rho_decades",
            cfg.usize_or("transfer.wstar_rho_decades", 3)?,
            2,
        )?,
    };
    let mut rule_rng = stream(seed, STREAM_RULE);
    let w0 = {
        use rand::Rng;
        use rand_distr::StandardNormal;
        DVector::from_fn(gen.dict_size(), |_, _| {
            rule_rng.sample::<f64, _>(StandardNormal)
        })
        .normalize()
            * w0_norm
    };
    let rule = LabelRule {
        weights: w0,
        noise_bound: label_noise,
    };

    let mut sink = ReportSink::new("transfer", seed, cfg.resolved());
    sink.push_csv(
        "dict_error,runs,within_regime,dominated,mean_excess,mean_bound_total,\
         max_wstar_approx_error"
            .into(),
    );
    outln!(
        "{:>12} {:>6} {:>10} {:>10} {:>13} {:>13}",
        "dict_error",
        "runs",
        "in_regime",
        "dominated",
        "mean_excess",
        "mean_bound"
    );
    let mut run_seed = seed;
    for &target_error in &dict_errors {
        let source = DictSource::Oracle { target_error };
        let mut within = 0usize;
        let mut dominated = 0usize;
        let mut sum_excess = 0.0;
        let mut sum_total = 0.0;
        let mut max_approx: f64 = 0.0;
        for _ in 0..runs {
            run_seed = run_seed.wrapping_add(1);
            let report = transfer::run_pipeline(&gen, &rule, &config, &source, &settings, run_seed)
                .map_err(|e| from_core("transfer-pipeline", e))?;
            if report.within_regime {
                within += 1;
            }
            if report.excess_risk <= report.bound.total {
                dominated += 1;
            }
            sum_excess += report.excess_risk;
            sum_total += report.bound.total;
            max_approx = max_approx.max(report.wstar_approx_error);
            sink.push_record(&report)?;
        }
        sink.push_csv(format!(
            "{},{},{},{},{},{},{}",
            csv_float(target_error),
            runs,
            within,
            dominated,
            csv_float(sum_excess / runs as f64),
            csv_float(sum_total / runs as f64),
            csv_float(max_approx),
        ));
        outln!(
            "{:>12.3e} {:>6} {:>10} {:>10} {:>13.4e} {:>13.4e}",
            target_error,
            runs,
            within,
            dominated,
            sum_excess / runs as f64,
            sum_total / runs as f64
        );
    }
    let csv = sink.write(out)?;
    outln!("report: {} (+ {})", out.display(), csv.display());
    Ok(())
}

fn run_bound(cfg: &ConfigMap, seed: u64, out: &Path) -> Result<(), CliError> {
    let l_ell = check_positive("bound.l_ell", cfg.f64_or("bound.l_ell", 1.0)?)?;
    let r_psi = check_positive("bound.r_psi", cfg.require_f64("bound.r_psi")?)?;
    let r_w = check_positive("bound.r_w", cfg.f64_or("bound.r_w", 1.0)?)?;
    let r_r = check_positive("bound.r_r", cfg.f64_or("bound.r_r", 0.5 * r_w * r_w)?)?;
    let n = check_min_count("bound.n", cfg.require_usize("bound.n")?, 1)?;
    let delta = check_unit_open("bound.delta", cfg.f64_or("bound.delta", 0.1)?)?;
    let l_psi = check_positive("bound.l_psi", cfg.require_f64("bound.l_psi")?)?;
    let dict_errors = cfg.f64_list_or("bound.dict_errors", &[0.0])?;

    let config = TransferConfig {
        loss: Loss::Absolute,
        lipschitz: l_ell,
        lambda: 1.0,
        predictor_radius: r_w,
        feature_radius: r_psi,
        regularizer_radius: r_r,
        sample_radius: 1.0,
        sparsity: 1,
        confidence: delta,
        transfer_confidence: 0.01,
        n_target: n,
        n_source: 0,
        rho: RhoMode::Auto,
    };

    #[derive(serde::Serialize)]
    struct BoundLine {
        dict_error: f64,
        #[serde(flatten)]
        breakdown: transfer::BoundBreakdown,
    }

    let mut sink = ReportSink::new("bound", seed, cfg.resolved());
    sink.push_csv("dict_error,term_fast_rate,term_linear,term_sqrt,total".into());
    outln!(
        "{:>12} {:>14} {:>14} {:>14} {:>14}",
        "dict_error",
        "fast_rate",
        "linear",
        "sqrt",
        "total"
    );
    for &e in &dict_errors {
        let b = transfer::excess_bound(&config, check_nonnegative("bound.dict_errors", e)?, l_psi)
            .map_err(|err| from_core("bound-evaluation", err))?;
        sink.push_record(&BoundLine {
            dict_error: e,
            breakdown: b,
        })?;
        sink.push_csv(format!(
            "{},{},{},{},{}",
            csv_float(e),
            csv_float(b.term_fast_rate),
            csv_float(b.term_linear),
            csv_float(b.term_sqrt),
            csv_float(b.total),
        ));
        outln!(
            "{:>12.3e} {:>14.6e} {:>14.6e} {:>14.6e} {:>14.6e}",
            e,
            b.term_fast_rate,
            b.term_linear,
            b.term_sqrt,
            b.total
        );
    }
    let csv = sink.write(out)?;
    outln!("report: {} (+ {})", out.display(), csv.display());
    Ok(())
}
