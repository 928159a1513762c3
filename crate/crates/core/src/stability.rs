//! k-margins, permissible perturbation radii, and the sparse-coding
//! stability bound, together with a seeded perturbation experiment driver.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::dict::{dict_distance, mu_incoherence, Dictionary};
use crate::error::{Error, Result};
use crate::lasso::{self, LassoProblem, SolverOptions, SparseCode};
use crate::rng;

/// k-margin of a dictionary on a sample.
#[derive(Clone, Debug, Serialize)]
pub struct MarginReport {
    /// `lambda` minus the `(k+1)`-th largest residual correlation.
    pub margin: f64,
    /// The `k` indices whose correlations are excluded from the minimum.
    pub excluded_set: Vec<usize>,
    /// `|<d_j, x - D phi(x)>|` for every atom.
    pub residual_correlations: Vec<f64>,
}

/// Margin computed from a fresh solve with default solver options.
pub fn k_margin(
    dict: &Dictionary,
    x: &DVector<f64>,
    k: usize,
    lambda: f64,
) -> Result<MarginReport> {
    let problem = LassoProblem::new(dict, x, lambda)?;
    let code = lasso::solve_with(&problem, &SolverOptions::default())?;
    k_margin_from_code(dict, x, k, lambda, &code)
}

/// Margin computed from an existing solver output for the same problem.
pub fn k_margin_from_code(
    dict: &Dictionary,
    x: &DVector<f64>,
    k: usize,
    lambda: f64,
    code: &SparseCode,
) -> Result<MarginReport> {
    let m = dict.size();
    if k >= m {
        return Err(Error::InvalidArgument(format!(
            "margin sparsity k={k} must satisfy 0 <= k < m={m}"
        )));
    }
    let problem = LassoProblem::new(dict, x, lambda)?;
    let correlations: Vec<f64> = lasso::residual_correlations(&problem, &code.coefficients)?
        .iter()
        .map(|v| v.abs())
        .collect();
    // sort indices by correlation, largest first; ties resolved by index
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        correlations[b]
            .partial_cmp(&correlations[a])
            .expect("correlations are finite")
            .then(a.cmp(&b))
    });
    let excluded_set: Vec<usize> = order[..k].to_vec();
    let margin = lambda - correlations[order[k]];
    Ok(MarginReport {
        margin,
        excluded_set,
        residual_correlations: correlations,
    })
}

/// Permissible perturbation radius `margin^2 lambda / (64 max{1, ||x||}^4)`.
/// Negative margins clamp to zero.
pub fn permissible_radius(
    dict: &Dictionary,
    x: &DVector<f64>,
    k: usize,
    lambda: f64,
) -> Result<f64> {
    let report = k_margin(dict, x, k, lambda)?;
    Ok(radius_from_margin(report.margin, x.norm(), lambda))
}

/// The radius formula applied to a precomputed margin.
pub fn radius_from_margin(margin: f64, x_norm: f64, lambda: f64) -> f64 {
    if margin <= 0.0 {
        return 0.0;
    }
    margin * margin * lambda / (64.0 * x_norm.max(1.0).powi(4))
}

/// Multiplier of the dictionary distance in the stability bound:
/// `4 ||x||^2 sqrt(k) / ((1 - mu k / sqrt(d)) lambda)`.
pub fn stability_coefficient(
    dict: &Dictionary,
    x: &DVector<f64>,
    k: usize,
    lambda: f64,
) -> Result<f64> {
    let mu = mu_incoherence(dict).mu;
    coefficient_from_parts(x.norm(), k, mu, dict.ambient_dim(), lambda)
}

/// Stability coefficient from raw quantities; errors when `mu k / sqrt(d) >= 1`
/// (the bound is vacuous there).
pub fn coefficient_from_parts(
    x_norm: f64,
    k: usize,
    mu: f64,
    d: usize,
    lambda: f64,
) -> Result<f64> {
    let denom = 1.0 - mu * k as f64 / (d as f64).sqrt();
    if denom <= 0.0 {
        return Err(Error::Regime(format!(
            "mu k / sqrt(d) = {} >= 1, stability bound vacuous",
            1.0 - denom
        )));
    }
    Ok(4.0 * x_norm * x_norm * (k as f64).sqrt() / (denom * lambda))
}

/// Uniform Lipschitz constant of the feature map over samples of norm at
/// most `sample_radius`.
pub fn lipschitz_bound(
    sample_radius: f64,
    k: usize,
    mu: f64,
    d: usize,
    lambda: f64,
) -> Result<f64> {
    coefficient_from_parts(sample_radius, k, mu, d, lambda)
}

/// Random dictionary at controlled (1,2)-distance from `dict`.
///
/// Each column moves along a great circle toward an independent random
/// orthogonal direction; the arc length is drawn so the realized distance
/// lands in `[0.9 eps, eps]`. Deterministic given the generator state.
pub fn perturb_dictionary<R: Rng>(dict: &Dictionary, eps: f64, rng: &mut R) -> Result<Dictionary> {
    if !(0.0..=2.0).contains(&eps) {
        return Err(Error::InvalidArgument(format!(
            "perturbation size {eps} infeasible: unit columns differ by at most 2"
        )));
    }
    if eps == 0.0 {
        return Ok(dict.clone());
    }
    let d = dict.ambient_dim();
    if d < 2 {
        return Err(Error::InvalidArgument(
            "cannot perturb 1-dimensional unit columns continuously".into(),
        ));
    }
    let mut columns = dict.columns().clone();
    for j in 0..dict.size() {
        let col = dict.column(j);
        // random unit direction orthogonal to the column
        let w = loop {
            let mut g = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let c = col.dot(&g);
            g -= &col * c;
            let norm = g.norm();
            if norm > 1e-8 {
                break g / norm;
            }
        };
        let target = rng.random_range(0.9 * eps..=0.9995 * eps);
        let theta = 2.0 * (target / 2.0).asin();
        let new_col = &col * theta.cos() + w * theta.sin();
        columns.set_column(j, &new_col);
    }
    Dictionary::from_matrix(columns)
}

/// All measured and predicted quantities for one perturbation trial.
#[derive(Clone, Debug, Serialize)]
pub struct StabilityReport {
    pub dict_distance: f64,
    pub margin: f64,
    pub permissible_radius: f64,
    /// `||phi_D(x) - phi_D~(x)||_2`.
    pub code_distance: f64,
    /// Stability coefficient times the dictionary distance (infinite when
    /// `mu k / sqrt(d) >= 1`).
    pub bound_value: f64,
    /// `||phi_D(x) - phi_D~(x)||_0`.
    pub support_diff_size: usize,
    /// Distance within `min(lambda, permissible radius)` and incoherence
    /// regime valid.
    pub within_regime: bool,
    /// `|v_D - v_D~|` between optimal objective values.
    pub optimal_value_gap: f64,
    /// `(1 + ||x||/4) ||x||^3 dist / (2 lambda)`; valid when `dist <= lambda`.
    pub optimal_value_bound: f64,
    /// `||D a - D a~||_2^2` with both codes reconstructed through `D`.
    pub reconstructor_gap: f64,
    /// `2 (3||x||^2 + 9||x|| + 2) ||x||^2 dist / lambda`.
    pub reconstructor_bound: f64,
    /// Margin hypothesis of the sparsity-preservation lemma.
    pub sparsity_hypothesis: bool,
    pub x_norm: f64,
    pub mu: f64,
}

/// One record of the perturbation experiment; failed solves are retained
/// with the error message instead of aborting the batch.
#[derive(Clone, Debug, Serialize)]
pub struct StabilityTrial {
    pub trial_index: usize,
    pub sample_index: usize,
    pub eps: f64,
    pub seed: u64,
    pub report: Option<StabilityReport>,
    pub error: Option<String>,
}

/// Run `trials` seeded perturbations for every `(sample, eps)` pair and
/// check each against the stability, optimal-value, reconstructor, and
/// sparsity-preservation bounds.
pub fn verify_stability(
    dict: &Dictionary,
    samples: &[DVector<f64>],
    k: usize,
    lambda: f64,
    eps_grid: &[f64],
    trials: usize,
    seed: u64,
) -> Result<Vec<StabilityTrial>> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be >= 1".into()));
    }
    if k >= dict.size() {
        return Err(Error::InvalidArgument(format!(
            "k={k} must be < m={}",
            dict.size()
        )));
    }
    let mu = mu_incoherence(dict).mu;
    let mut jobs = Vec::new();
    for (sample_index, _) in samples.iter().enumerate() {
        for &eps in eps_grid {
            for _ in 0..trials {
                jobs.push((jobs.len(), sample_index, eps));
            }
        }
    }
    let records: Vec<StabilityTrial> = jobs
        .par_iter()
        .map(|&(trial_index, sample_index, eps)| {
            let mut stream = rng::stream(seed, trial_index as u64);
            match run_trial(
                dict,
                &samples[sample_index],
                k,
                lambda,
                eps,
                mu,
                &mut stream,
            ) {
                Ok(report) => StabilityTrial {
                    trial_index,
                    sample_index,
                    eps,
                    seed,
                    report: Some(report),
                    error: None,
                },
                Err(e) => StabilityTrial {
                    trial_index,
                    sample_index,
                    eps,
                    seed,
                    report: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    Ok(records)
}

fn run_trial<R: Rng>(
    dict: &Dictionary,
    x: &DVector<f64>,
    k: usize,
    lambda: f64,
    eps: f64,
    mu: f64,
    rng: &mut R,
) -> Result<StabilityReport> {
    let perturbed = perturb_dictionary(dict, eps, rng)?;
    single_report(dict, &perturbed, x, k, lambda, mu)
}

/// Evaluate every stability quantity for one `(D, D~, x)` triple.
pub fn single_report(
    dict: &Dictionary,
    perturbed: &Dictionary,
    x: &DVector<f64>,
    k: usize,
    lambda: f64,
    mu: f64,
) -> Result<StabilityReport> {
    let opts = SolverOptions::default();
    let problem = LassoProblem::new(dict, x, lambda)?;
    let code = lasso::solve_with(&problem, &opts)?;
    let problem_tilde = LassoProblem::new(perturbed, x, lambda)?;
    let code_tilde = lasso::solve_with(&problem_tilde, &opts)?;

    let dist = dict_distance(dict, perturbed)?;
    let margin_report = k_margin_from_code(dict, x, k, lambda, &code)?;
    let x_norm = x.norm();
    let radius = radius_from_margin(margin_report.margin, x_norm, lambda);

    let a = code.coefficients_vector();
    let a_tilde = code_tilde.coefficients_vector();
    let code_distance = (&a - &a_tilde).norm();
    let support_diff_size = code
        .coefficients
        .iter()
        .zip(&code_tilde.coefficients)
        .filter(|(p, q)| p != q)
        .count();

    let d = dict.ambient_dim();
    let (bound_value, incoherence_ok) = match coefficient_from_parts(x_norm, k, mu, d, lambda) {
        Ok(c) => (c * dist, true),
        Err(_) => (f64::INFINITY, false),
    };
    let within_regime = incoherence_ok && dist <= lambda.min(radius);

    let optimal_value_gap = (code.objective - code_tilde.objective).abs();
    let optimal_value_bound = 0.5 * (1.0 + x_norm / 4.0) * x_norm.powi(3) * dist / lambda;

    let recon = dict.columns() * &a;
    let recon_tilde = dict.columns() * &a_tilde;
    let reconstructor_gap = (recon - recon_tilde).norm_squared();
    let reconstructor_bound =
        2.0 * (3.0 * x_norm * x_norm + 9.0 * x_norm + 2.0) * x_norm * x_norm * dist / lambda;

    let sparsity_hypothesis =
        margin_report.margin > (1.0 + x_norm / lambda) * x_norm * dist + reconstructor_bound.sqrt();

    Ok(StabilityReport {
        dict_distance: dist,
        margin: margin_report.margin,
        permissible_radius: radius,
        code_distance,
        bound_value,
        support_diff_size,
        within_regime,
        optimal_value_gap,
        optimal_value_bound,
        reconstructor_gap,
        reconstructor_bound,
        sparsity_hypothesis,
        x_norm,
        mu,
    })
}
