//! The two-stage parameter-transfer pipeline: sparse-coding features, a
//! strongly convex regularized ERM on the target task, the excess-risk
//! bound evaluator, and the predictor-stability check.
//!
//! The ERM is solved in its dual: box-constrained coordinate ascent with a
//! ball-aware closed form for the primal, which certifies every returned
//! predictor through the duality gap.

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::io::{BufRead, BufReader, Read, Write};

use crate::dict::{dict_distance, mu_incoherence, Dictionary};
use crate::dictlearn::{self, DictSource};
use crate::error::{Error, Result};
use crate::genmodel::{self, GenModelParams};
use crate::lasso::{self, LassoProblem, SolverOptions};
use crate::rng;
use crate::stability;

/// Convex losses available to the target ERM. The first argument of the
/// loss is the label, the second the prediction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Loss {
    /// `|y - p|`; 1-Lipschitz.
    Absolute,
    /// `max(0, 1 - y p)`; Lipschitz with constant `max |y|`.
    Hinge,
    /// `0.5 (y - p)^2`; Lipschitz only on bounded prediction ranges.
    Squared,
}

impl Loss {
    pub fn eval(&self, y: f64, prediction: f64) -> f64 {
        match self {
            Loss::Absolute => (y - prediction).abs(),
            Loss::Hinge => (1.0 - y * prediction).max(0.0),
            Loss::Squared => 0.5 * (y - prediction) * (y - prediction),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Loss::Absolute => "absolute",
            Loss::Hinge => "hinge",
            Loss::Squared => "squared",
        }
    }

    /// Dual description of the per-sample loss: box, linear coefficient,
    /// feature scale, and whether the conjugate has a quadratic term.
    fn dual(&self, y: f64) -> DualTerm {
        match self {
            Loss::Absolute => DualTerm {
                lo: -1.0,
                hi: 1.0,
                linear: y,
                scale: 1.0,
                quadratic: false,
            },
            Loss::Hinge => DualTerm {
                lo: 0.0,
                hi: 1.0,
                linear: 1.0,
                scale: y,
                quadratic: false,
            },
            Loss::Squared => DualTerm {
                lo: f64::NEG_INFINITY,
                hi: f64::INFINITY,
                linear: y,
                scale: 1.0,
                quadratic: true,
            },
        }
    }
}

#[derive(Clone, Copy)]
struct DualTerm {
    lo: f64,
    hi: f64,
    linear: f64,
    scale: f64,
    quadratic: bool,
}

/// How the ERM regularization weight is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum RhoMode {
    /// The balanced choice `L R_psi sqrt(8 (32 + log(2/delta)) / (R_r n))`.
    Auto,
    Fixed(f64),
}

/// Everything the target stage needs: loss, radii, confidences, and sizes.
#[derive(Clone, Debug, Serialize)]
pub struct TransferConfig {
    pub loss: Loss,
    /// Lipschitz constant of the loss in its second argument.
    pub lipschitz: f64,
    /// Sparse-coding regularization weight.
    pub lambda: f64,
    /// Predictor ball radius (R_W).
    pub predictor_radius: f64,
    /// Feature norm bound (R_psi); checked against observed features.
    pub feature_radius: f64,
    /// Bound on |r(w)| over the predictor ball (R_r).
    pub regularizer_radius: f64,
    /// Bound on sample norms (R_x); feeds the stability constants.
    pub sample_radius: f64,
    /// Sparsity level used by the stability constants.
    pub sparsity: usize,
    /// Confidence parameter delta of the bound.
    pub confidence: f64,
    /// Transfer-learnability failure probability delta-bar.
    pub transfer_confidence: f64,
    /// Target sample count n.
    pub n_target: usize,
    /// Source sample count N.
    pub n_source: usize,
    pub rho: RhoMode,
}

impl TransferConfig {
    /// Standard instantiation: `r(w) = ||w||^2 / 2` gives `R_r = R_W^2 / 2`,
    /// and the feature bound comes from the coding l1 bound
    /// `R_psi = R_x^2 / (2 lambda)`.
    #[allow(clippy::too_many_arguments)]
    pub fn standard(
        loss: Loss,
        lipschitz: f64,
        lambda: f64,
        predictor_radius: f64,
        sample_radius: f64,
        sparsity: usize,
        n_target: usize,
        n_source: usize,
        confidence: f64,
        transfer_confidence: f64,
    ) -> Self {
        TransferConfig {
            loss,
            lipschitz,
            lambda,
            predictor_radius,
            feature_radius: sample_radius * sample_radius / (2.0 * lambda),
            regularizer_radius: predictor_radius * predictor_radius / 2.0,
            sample_radius,
            sparsity,
            confidence,
            transfer_confidence,
            n_target,
            n_source,
            rho: RhoMode::Auto,
        }
    }

    /// The regularization weight in effect.
    pub fn rho_value(&self) -> Result<f64> {
        match self.rho {
            RhoMode::Fixed(rho) => {
                if rho > 0.0 {
                    Ok(rho)
                } else {
                    Err(Error::InvalidArgument("rho must be positive".into()))
                }
            }
            RhoMode::Auto => rho_auto(
                self.lipschitz,
                self.feature_radius,
                self.regularizer_radius,
                self.n_target,
                self.confidence,
            ),
        }
    }

    /// Feature-map stability constant for a dictionary with incoherence
    /// `mu` in ambient dimension `d`.
    pub fn l_psi(&self, mu: f64, d: usize) -> Result<f64> {
        stability::lipschitz_bound(self.sample_radius, self.sparsity, mu, d, self.lambda)
    }
}

/// `rho = L R_psi sqrt(8 (32 + log(2/delta)) / (R_r n))`.
pub fn rho_auto(lipschitz: f64, r_psi: f64, r_r: f64, n: usize, delta: f64) -> Result<f64> {
    if !(0.0 < delta && delta < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "confidence delta={delta} must lie in (0, 1)"
        )));
    }
    if !(lipschitz > 0.0 && r_psi > 0.0 && r_r > 0.0) || n == 0 {
        return Err(Error::InvalidArgument(
            "rho formula needs positive L, R_psi, R_r and n >= 1".into(),
        ));
    }
    let log_term = (2.0 / delta).ln();
    Ok(lipschitz * r_psi * (8.0 * (32.0 + log_term) / (r_r * n as f64)).sqrt())
}

/// A labeled target sample.
#[derive(Clone, Debug)]
pub struct LabeledSample {
    pub x: DVector<f64>,
    pub y: f64,
}

/// The sparse-coding feature map `phi_D(x)`.
pub fn feature_map(dict: &Dictionary, x: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    let problem = LassoProblem::new(dict, x, lambda)?;
    let code = lasso::solve_with(&problem, &SolverOptions::default())?;
    Ok(code.coefficients_vector())
}

/// Prediction of the linear hypothesis on a feature vector.
pub fn predict(weights: &DVector<f64>, features: &DVector<f64>) -> f64 {
    weights.dot(features)
}

/// Controls for the ERM solver.
#[derive(Clone, Copy, Debug)]
pub struct TrainOptions {
    /// Certified duality-gap target.
    pub gap_tol: f64,
    pub max_epochs: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            gap_tol: 1e-9,
            max_epochs: 50_000,
        }
    }
}

/// A trained predictor with its optimality certificate.
#[derive(Clone, Debug)]
pub struct TrainedPredictor {
    pub weights: DVector<f64>,
    /// Certified bound on the optimality gap of `weights`.
    pub duality_gap: f64,
    pub epochs: usize,
    pub rho: f64,
}

/// Solve the regularized target ERM over the predictor ball.
pub fn train_target(
    dict: &Dictionary,
    data: &[LabeledSample],
    config: &TransferConfig,
) -> Result<TrainedPredictor> {
    train_target_with(dict, data, config, &TrainOptions::default())
}

pub fn train_target_with(
    dict: &Dictionary,
    data: &[LabeledSample],
    config: &TransferConfig,
    opts: &TrainOptions,
) -> Result<TrainedPredictor> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("target data is empty".into()));
    }
    let features = featurize(dict, data, config)?;
    let labels: Vec<f64> = data.iter().map(|s| s.y).collect();
    let rho = config.rho_value()?;
    train_on_features(&features, &labels, config, rho, opts)
}

/// Compute sparse-coding features for a labeled set, enforcing the
/// configured sample-radius and feature-norm bounds.
pub fn featurize(
    dict: &Dictionary,
    data: &[LabeledSample],
    config: &TransferConfig,
) -> Result<Vec<DVector<f64>>> {
    for (j, s) in data.iter().enumerate() {
        let norm = s.x.norm();
        if norm > config.sample_radius + 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "sample {j} has norm {norm}, above the configured R_x = {}",
                config.sample_radius
            )));
        }
    }
    let features: Result<Vec<DVector<f64>>> = data
        .par_iter()
        .map(|s| feature_map(dict, &s.x, config.lambda))
        .collect();
    let features = features?;
    for (j, phi) in features.iter().enumerate() {
        let norm = phi.norm();
        if norm > config.feature_radius + 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "feature norm {norm} of sample {j} exceeds the configured R_psi = {}",
                config.feature_radius
            )));
        }
    }
    Ok(features)
}

/// ERM on precomputed features via dual coordinate ascent.
pub fn train_on_features(
    features: &[DVector<f64>],
    labels: &[f64],
    config: &TransferConfig,
    rho: f64,
    opts: &TrainOptions,
) -> Result<TrainedPredictor> {
    let n = features.len();
    if n == 0 || labels.len() != n {
        return Err(Error::Dimension("features/labels mismatch".into()));
    }
    let m = features[0].len();
    let r_w = config.predictor_radius;
    let nf = n as f64;

    let terms: Vec<DualTerm> = labels.iter().map(|&y| config.loss.dual(y)).collect();
    let norms_sq: Vec<f64> = features.iter().map(|f| f.norm_squared()).collect();

    let mut alpha = vec![0.0_f64; n];
    let mut v: DVector<f64> = DVector::zeros(m);
    let mut boundary_mode = false;
    let mut best: Option<(f64, DVector<f64>)> = None;

    for epoch in 1..=opts.max_epochs {
        let mut moved = false;
        for j in 0..n {
            let term = terms[j];
            let phi = &features[j];
            let dot_v = v.dot(phi);
            let new_alpha = if !boundary_mode {
                interior_update(term, alpha[j], dot_v, norms_sq[j], rho, nf)
            } else {
                bisect_update(term, alpha[j], &v, phi, rho, r_w, nf)
            };
            let delta = new_alpha - alpha[j];
            if delta != 0.0 {
                moved = true;
                alpha[j] = new_alpha;
                v.axpy(delta * term.scale / nf, phi, 1.0);
            }
        }
        // rebuild v exactly to stop incremental drift
        v.fill(0.0);
        for j in 0..n {
            if alpha[j] != 0.0 {
                v.axpy(alpha[j] * terms[j].scale / nf, &features[j], 1.0);
            }
        }
        let w = primal_from_dual(&v, rho, r_w);
        let gap = primal_value(features, labels, config.loss, rho, &w)
            - dual_value(&alpha, &terms, &v, rho, r_w, nf);
        if best.as_ref().map(|(g, _)| gap < *g).unwrap_or(true) {
            best = Some((gap, w.clone()));
        }
        if gap <= opts.gap_tol {
            return Ok(TrainedPredictor {
                weights: w,
                duality_gap: gap,
                epochs: epoch,
                rho,
            });
        }
        if !boundary_mode && v.norm() >= rho * r_w * (1.0 - 1e-12) {
            boundary_mode = true;
            continue;
        }
        if !moved {
            // numerical fixpoint short of the requested gap
            break;
        }
    }
    let (gap, w) = best.expect("at least one epoch ran");
    Err(Error::Convergence {
        iterations: opts.max_epochs,
        residual: gap,
        best: w.iter().copied().collect(),
    })
}

fn interior_update(
    term: DualTerm,
    current: f64,
    dot_v: f64,
    norm_sq: f64,
    rho: f64,
    n: f64,
) -> f64 {
    let s = term.scale;
    let p = dot_v - current * s * norm_sq / n; // <v_without_j, phi_j>
    let quad = if term.quadratic { 1.0 } else { 0.0 };
    let denom = quad + s * s * norm_sq / (rho * n);
    if denom == 0.0 {
        // zero feature and no conjugate curvature: boundary by sign
        return if term.linear > 0.0 {
            term.hi
        } else if term.linear < 0.0 {
            term.lo
        } else {
            0.0
        };
    }
    ((term.linear - s * p / rho) / denom).clamp(term.lo, term.hi)
}

/// Exact 1-d maximization of the ball-aware dual by derivative bisection.
fn bisect_update(
    term: DualTerm,
    current: f64,
    v: &DVector<f64>,
    phi: &DVector<f64>,
    rho: f64,
    r_w: f64,
    n: f64,
) -> f64 {
    let deriv = |a: f64| -> f64 {
        // v(a) = v + (a - current) s phi / n
        let shifted = v + phi * ((a - current) * term.scale / n);
        let w = primal_from_dual(&shifted, rho, r_w);
        let conj = if term.quadratic { a } else { 0.0 };
        term.linear - conj - term.scale * w.dot(phi)
    };
    let (mut lo, mut hi) = (term.lo, term.hi);
    if lo.is_infinite() || hi.is_infinite() {
        // expand a finite bracket around the current point
        let mut radius = 1.0;
        lo = current - radius;
        hi = current + radius;
        for _ in 0..200 {
            if deriv(lo) <= 0.0 && deriv(hi) >= 0.0 {
                break;
            }
            radius *= 2.0;
            lo = current - radius;
            hi = current + radius;
        }
        // concave derivative decreasing: lo side should be nonnegative
        std::mem::swap(&mut lo, &mut hi);
        std::mem::swap(&mut lo, &mut hi);
    }
    if deriv(lo) <= 0.0 {
        return lo;
    }
    if deriv(hi) >= 0.0 {
        return hi;
    }
    for _ in 0..128 {
        let mid = 0.5 * (lo + hi);
        if deriv(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * (1.0 + hi.abs()) {
            break;
        }
    }
    0.5 * (lo + hi)
}

fn primal_from_dual(v: &DVector<f64>, rho: f64, r_w: f64) -> DVector<f64> {
    let norm = v.norm();
    if norm <= rho * r_w {
        v / rho
    } else {
        v * (r_w / norm)
    }
}

fn primal_value(
    features: &[DVector<f64>],
    labels: &[f64],
    loss: Loss,
    rho: f64,
    w: &DVector<f64>,
) -> f64 {
    let n = features.len() as f64;
    let risk: f64 = features
        .iter()
        .zip(labels)
        .map(|(phi, &y)| loss.eval(y, w.dot(phi)))
        .sum::<f64>()
        / n;
    risk + 0.5 * rho * w.norm_squared()
}

fn dual_value(
    alpha: &[f64],
    terms: &[DualTerm],
    v: &DVector<f64>,
    rho: f64,
    r_w: f64,
    n: f64,
) -> f64 {
    let mut linear = 0.0;
    for (a, t) in alpha.iter().zip(terms) {
        linear += t.linear * a;
        if t.quadratic {
            linear -= 0.5 * a * a;
        }
    }
    let norm = v.norm();
    let h = if norm <= rho * r_w {
        -norm * norm / (2.0 * rho)
    } else {
        0.5 * rho * r_w * r_w - r_w * norm
    };
    linear / n + h
}

/// Empirical risk of a predictor on featurized data.
pub fn empirical_risk(
    loss: Loss,
    weights: &DVector<f64>,
    features: &[DVector<f64>],
    labels: &[f64],
) -> f64 {
    let n = features.len() as f64;
    features
        .iter()
        .zip(labels)
        .map(|(phi, &y)| loss.eval(y, weights.dot(phi)))
        .sum::<f64>()
        / n
}

/// Both sides of the predictor-stability inequality.
#[derive(Clone, Debug, Serialize)]
pub struct WStabilityReport {
    /// `||w(D_hat) - w(D_star)||_2`.
    pub lhs: f64,
    /// `sqrt(2 R_W L_ell L_psi dist / rho)`.
    pub rhs: f64,
    pub dict_distance: f64,
    pub min_permissible_radius: f64,
    /// Distance within `min(lambda, permissible radius of every sample)`.
    pub in_regime: bool,
    pub rho: f64,
    pub l_psi: f64,
}

/// Train on the same data under both dictionaries and compare the predictor
/// gap against the strong-convexity bound.
pub fn w_stability_gap(
    dict_hat: &Dictionary,
    dict_star: &Dictionary,
    data: &[LabeledSample],
    config: &TransferConfig,
) -> Result<WStabilityReport> {
    let dist = dict_distance(dict_hat, dict_star)?;
    let trained_hat = train_target(dict_hat, data, config)?;
    let trained_star = train_target(dict_star, data, config)?;
    let lhs = (&trained_hat.weights - &trained_star.weights).norm();
    let mu = mu_incoherence(dict_star).mu;
    let l_psi = config.l_psi(mu, dict_star.ambient_dim())?;
    let rho = config.rho_value()?;
    let rhs = (2.0 * config.predictor_radius * config.lipschitz * l_psi * dist / rho).sqrt();
    let mut min_radius = f64::INFINITY;
    for sample in data {
        let radius =
            stability::permissible_radius(dict_star, &sample.x, config.sparsity, config.lambda)?;
        min_radius = min_radius.min(radius);
    }
    Ok(WStabilityReport {
        lhs,
        rhs,
        dict_distance: dist,
        min_permissible_radius: min_radius,
        in_regime: dist <= config.lambda.min(min_radius),
        rho,
        l_psi,
    })
}

/// The three printed summands of the excess-risk bound.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct BoundBreakdown {
    /// `L R_psi (R_W sqrt(2 log(2/delta)) + 2 sqrt(2 R_r (32 + log(2/delta)))) / sqrt(n)`.
    pub term_fast_rate: f64,
    /// `L L_psi R_psi ||theta_hat - theta*||` as printed; the proof derives
    /// the same term with `R_W` in place of `R_psi` (see
    /// `term_linear_rw_variant`).
    pub term_linear: f64,
    /// `L sqrt(L_psi R_W R_psi) (R_r / (2 (32 + log(2/delta))))^{1/4}
    ///  n^{1/4} sqrt(||theta_hat - theta*||)`.
    pub term_sqrt: f64,
    pub total: f64,
    pub l_psi_used: f64,
    /// Informational: the linear term with the proof's `R_W` constant.
    pub term_linear_rw_variant: f64,
}

/// Evaluate the excess-risk bound for a given dictionary error and
/// feature-stability constant.
pub fn excess_bound(
    config: &TransferConfig,
    dict_error: f64,
    l_psi: f64,
) -> Result<BoundBreakdown> {
    if dict_error < 0.0 || l_psi <= 0.0 {
        return Err(Error::InvalidArgument(
            "dict_error must be >= 0 and l_psi > 0".into(),
        ));
    }
    if !(0.0 < config.confidence && config.confidence < 1.0) {
        return Err(Error::InvalidArgument("delta must lie in (0,1)".into()));
    }
    let n = config.n_target as f64;
    if config.n_target == 0 {
        return Err(Error::InvalidArgument("n must be >= 1".into()));
    }
    let log_term = (2.0 / config.confidence).ln();
    let l = config.lipschitz;
    let r_psi = config.feature_radius;
    let r_w = config.predictor_radius;
    let r_r = config.regularizer_radius;

    let term_fast_rate =
        l * r_psi * (r_w * (2.0 * log_term).sqrt() + 2.0 * (2.0 * r_r * (32.0 + log_term)).sqrt())
            / n.sqrt();
    let term_linear = l * l_psi * r_psi * dict_error;
    let term_linear_rw_variant = l * l_psi * r_w * dict_error;
    let term_sqrt = l
        * (l_psi * r_w * r_psi).sqrt()
        * (r_r / (2.0 * (32.0 + log_term))).powf(0.25)
        * n.powf(0.25)
        * dict_error.sqrt();
    Ok(BoundBreakdown {
        term_fast_rate,
        term_linear,
        term_sqrt,
        total: term_fast_rate + term_linear + term_sqrt,
        l_psi_used: l_psi,
        term_linear_rw_variant,
    })
}

/// Linear labeling rule on true-dictionary codes, with optional bounded
/// label noise: `y = <w0, phi_{D*}(x)> + noise`.
#[derive(Clone, Debug)]
pub struct LabelRule {
    pub weights: DVector<f64>,
    pub noise_bound: f64,
}

impl LabelRule {
    pub fn label<R: Rng>(&self, code: &DVector<f64>, rng: &mut R) -> f64 {
        let clean = self.weights.dot(code);
        if self.noise_bound > 0.0 {
            clean + rng.random_range(-self.noise_bound..=self.noise_bound)
        } else {
            clean
        }
    }
}

/// Experiment sizes that are not part of the theoretical configuration.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct PipelineSettings {
    /// Held-out set size for risk estimation.
    pub heldout: usize,
    /// The reference predictor trains on `wstar_oversample * n` noiseless
    /// samples.
    pub wstar_oversample: usize,
    /// Number of decades in the vanishing-rho schedule (at least 2).
    pub wstar_rho_decades: usize,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        PipelineSettings {
            heldout: 4000,
            wstar_oversample: 50,
            wstar_rho_decades: 3,
        }
    }
}

/// Everything a pipeline run measured, plus the bound it is compared to.
#[derive(Clone, Debug, Serialize)]
pub struct ExperimentReport {
    pub seed: u64,
    /// Echo of the full theoretical configuration.
    pub config: TransferConfig,
    pub n_target: usize,
    pub n_source: usize,
    pub heldout: usize,
    /// `||D_hat - D*||_{1,2}` without alignment (the bound's distance).
    pub dict_error: f64,
    /// Aligned error, informational for learned dictionaries.
    pub dict_error_aligned: f64,
    pub min_permissible_radius: f64,
    pub within_regime: bool,
    pub lambda: f64,
    pub rho: f64,
    pub l_psi: f64,
    pub mu: f64,
    pub risk_transferred: f64,
    pub risk_baseline: f64,
    pub excess_risk: f64,
    pub bound: BoundBreakdown,
    /// Held-out risk shift of the reference predictor over the last rho
    /// decade; reported so the baseline approximation error is visible.
    pub wstar_approx_error: f64,
    pub gap_target: f64,
    pub gap_baseline: f64,
    pub label_noise_bound: f64,
}

// stream indices of the pipeline stages
const STREAM_SOURCE: u64 = 0;
const STREAM_TARGET: u64 = 1;
const STREAM_WSTAR: u64 = 2;
const STREAM_HELDOUT: u64 = 3;

/// Run the full transfer experiment: estimate the dictionary, train the
/// target predictor, and compare the held-out excess risk to the bound.
pub fn run_pipeline(
    gen: &GenModelParams,
    label_rule: &LabelRule,
    config: &TransferConfig,
    dict_source: &DictSource,
    settings: &PipelineSettings,
    seed: u64,
) -> Result<ExperimentReport> {
    if label_rule.weights.len() != gen.dict_size() {
        return Err(Error::Dimension(format!(
            "label rule has {} weights, dictionary size is {}",
            label_rule.weights.len(),
            gen.dict_size()
        ))
        .at_stage("configuration"));
    }
    if (config.lambda - gen.lambda()).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "config lambda {} differs from model lambda {}",
            config.lambda,
            gen.lambda()
        ))
        .at_stage("configuration"));
    }
    if config.sparsity != gen.sparsity() {
        return Err(Error::InvalidArgument(format!(
            "config sparsity {} differs from model sparsity {}",
            config.sparsity,
            gen.sparsity()
        ))
        .at_stage("configuration"));
    }
    if settings.wstar_rho_decades < 2 || settings.heldout == 0 || settings.wstar_oversample == 0 {
        return Err(Error::InvalidArgument(
            "pipeline settings need heldout >= 1, oversample >= 1, decades >= 2".into(),
        )
        .at_stage("configuration"));
    }
    let dict_star = gen.dictionary();
    let mu = gen.incoherence();
    let l_psi = config
        .l_psi(mu, gen.ambient_dim())
        .map_err(|e| e.at_stage("configuration"))?;
    let rho = config
        .rho_value()
        .map_err(|e| e.at_stage("configuration"))?;

    // dictionary estimation
    let mut source_rng = rng::stream(seed, STREAM_SOURCE);
    let estimate = match dict_source {
        DictSource::Oracle { target_error } => {
            dictlearn::oracle_estimator(dict_star, *target_error, &mut source_rng)
                .map_err(|e| e.at_stage("dictionary-estimation"))?
        }
        DictSource::Learned { rounds } => {
            let unlabeled: Vec<DVector<f64>> = (0..config.n_source)
                .map(|_| genmodel::sample(gen, &mut source_rng).x)
                .collect();
            dictlearn::learn_alternating(
                &unlabeled,
                gen.dict_size(),
                config.lambda,
                *rounds,
                &mut source_rng,
            )
            .map_err(|e| e.at_stage("dictionary-estimation"))?
            .estimate
        }
    };
    let dict_hat = &estimate.dictionary;
    let dict_err = dict_distance(dict_hat, dict_star).map_err(|e| e.at_stage("dict-error"))?;
    let (dict_err_aligned, _) =
        dictlearn::dict_error(dict_hat, dict_star).map_err(|e| e.at_stage("dict-error"))?;

    // target data, labeled through the true feature map
    let mut target_rng = rng::stream(seed, STREAM_TARGET);
    let (target_data, target_codes) =
        draw_labeled(gen, label_rule, config.n_target, true, &mut target_rng)
            .map_err(|e| e.at_stage("target-sampling"))?;

    // transfer-learnability regime on the drawn target set
    let mut min_radius = f64::INFINITY;
    for (sample, code) in target_data.iter().zip(&target_codes) {
        let margin = stability::k_margin_from_code(
            dict_star,
            &sample.x,
            config.sparsity,
            config.lambda,
            code,
        )
        .map_err(|e| e.at_stage("regime-check"))?;
        min_radius = min_radius.min(stability::radius_from_margin(
            margin.margin,
            sample.x.norm(),
            config.lambda,
        ));
    }
    let within_regime = dict_err <= config.lambda.min(min_radius);

    // target training under the estimated dictionary
    let trained =
        train_target(dict_hat, &target_data, config).map_err(|e| e.at_stage("target-training"))?;

    // reference predictor on an oversized noiseless set with vanishing rho
    let mut wstar_rng = rng::stream(seed, STREAM_WSTAR);
    let (wstar_data, _) = draw_labeled(
        gen,
        label_rule,
        settings.wstar_oversample * config.n_target,
        false,
        &mut wstar_rng,
    )
    .map_err(|e| e.at_stage("baseline-sampling"))?;
    let wstar_features =
        featurize(dict_star, &wstar_data, config).map_err(|e| e.at_stage("baseline-training"))?;
    let wstar_labels: Vec<f64> = wstar_data.iter().map(|s| s.y).collect();
    let rho_base = rho_auto(
        config.lipschitz,
        config.feature_radius,
        config.regularizer_radius,
        wstar_data.len(),
        config.confidence,
    )
    .map_err(|e| e.at_stage("baseline-training"))?;
    let mut schedule_weights = Vec::with_capacity(settings.wstar_rho_decades);
    let mut gap_baseline = 0.0;
    for decade in 0..settings.wstar_rho_decades {
        let rho_step = rho_base * 10f64.powi(-(decade as i32));
        let trained_star = train_on_features(
            &wstar_features,
            &wstar_labels,
            config,
            rho_step,
            &TrainOptions::default(),
        )
        .map_err(|e| e.at_stage("baseline-training"))?;
        gap_baseline = trained_star.duality_gap;
        schedule_weights.push(trained_star.weights);
    }

    // held-out risk estimation (true data distribution, labels noisy)
    let mut heldout_rng = rng::stream(seed, STREAM_HELDOUT);
    let (heldout_data, heldout_codes) =
        draw_labeled(gen, label_rule, settings.heldout, true, &mut heldout_rng)
            .map_err(|e| e.at_stage("heldout-evaluation"))?;
    let heldout_labels: Vec<f64> = heldout_data.iter().map(|s| s.y).collect();
    let heldout_hat =
        featurize(dict_hat, &heldout_data, config).map_err(|e| e.at_stage("heldout-evaluation"))?;
    let risk_transferred =
        empirical_risk(config.loss, &trained.weights, &heldout_hat, &heldout_labels);
    // codes under the true dictionary were already computed for the labels
    let risk_baseline = empirical_risk(
        config.loss,
        schedule_weights.last().expect("decades >= 2"),
        &heldout_codes_to_features(&heldout_codes),
        &heldout_labels,
    );
    let risk_baseline_prev = empirical_risk(
        config.loss,
        &schedule_weights[schedule_weights.len() - 2],
        &heldout_codes_to_features(&heldout_codes),
        &heldout_labels,
    );
    let wstar_approx_error = (risk_baseline - risk_baseline_prev).abs();

    let bound =
        excess_bound(config, dict_err, l_psi).map_err(|e| e.at_stage("bound-evaluation"))?;

    Ok(ExperimentReport {
        seed,
        config: config.clone(),
        n_target: config.n_target,
        n_source: config.n_source,
        heldout: settings.heldout,
        dict_error: dict_err,
        dict_error_aligned: dict_err_aligned,
        min_permissible_radius: min_radius,
        within_regime,
        lambda: config.lambda,
        rho,
        l_psi,
        mu,
        risk_transferred,
        risk_baseline,
        excess_risk: risk_transferred - risk_baseline,
        bound,
        wstar_approx_error,
        gap_target: trained.duality_gap,
        gap_baseline,
        label_noise_bound: label_rule.noise_bound,
    })
}

fn heldout_codes_to_features(codes: &[crate::lasso::SparseCode]) -> Vec<DVector<f64>> {
    codes.iter().map(|c| c.coefficients_vector()).collect()
}

/// Draw labeled samples; labels use the true-dictionary codes, which are
/// returned alongside so downstream checks can reuse them.
pub fn labeled_samples<R: Rng>(
    gen: &GenModelParams,
    rule: &LabelRule,
    count: usize,
    with_noise: bool,
    rng: &mut R,
) -> Result<(Vec<LabeledSample>, Vec<crate::lasso::SparseCode>)> {
    draw_labeled(gen, rule, count, with_noise, rng)
}

fn draw_labeled<R: Rng>(
    gen: &GenModelParams,
    rule: &LabelRule,
    count: usize,
    with_noise: bool,
    rng: &mut R,
) -> Result<(Vec<LabeledSample>, Vec<crate::lasso::SparseCode>)> {
    let opts = SolverOptions::default();
    let draws: Vec<_> = (0..count).map(|_| genmodel::sample(gen, rng)).collect();
    let codes: Result<Vec<_>> = draws
        .par_iter()
        .map(|draw| {
            let problem = LassoProblem::new(gen.dictionary(), &draw.x, gen.lambda())?;
            lasso::solve_with(&problem, &opts)
        })
        .collect();
    let codes = codes?;
    let mut data = Vec::with_capacity(count);
    for (draw, code) in draws.into_iter().zip(&codes) {
        let clean_rule = LabelRule {
            weights: rule.weights.clone(),
            noise_bound: if with_noise { rule.noise_bound } else { 0.0 },
        };
        let y = clean_rule.label(&code.coefficients_vector(), rng);
        data.push(LabeledSample { x: draw.x, y });
    }
    Ok((data, codes))
}

/// Write labeled samples as CSV: `d` feature columns then the label.
pub fn write_labeled_csv<W: Write>(samples: &[LabeledSample], mut w: W) -> Result<()> {
    use std::fmt::Write as _;
    let mut buf = String::new();
    for s in samples {
        for v in s.x.iter() {
            write!(buf, "{v:.16e},").expect("write to string");
        }
        writeln!(buf, "{:.16e}", s.y).expect("write to string");
    }
    w.write_all(buf.as_bytes())?;
    Ok(())
}

/// Read labeled samples from CSV produced by [`write_labeled_csv`].
pub fn read_labeled_csv<R: Read>(r: R) -> Result<Vec<LabeledSample>> {
    let reader = BufReader::new(r);
    let mut out = Vec::new();
    let mut width = None;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let values: std::result::Result<Vec<f64>, _> = line
            .split(',')
            .map(|tok| tok.trim().parse::<f64>())
            .collect();
        let values = values.map_err(|e| Error::Parse {
            line: idx + 1,
            message: format!("bad value: {e}"),
        })?;
        if values.len() < 2 {
            return Err(Error::Parse {
                line: idx + 1,
                message: "need at least one feature and a label".into(),
            });
        }
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("expected {w} columns, found {}", values.len()),
                });
            }
            _ => {}
        }
        let (features, label) = values.split_at(values.len() - 1);
        out.push(LabeledSample {
            x: DVector::from_column_slice(features),
            y: label[0],
        });
    }
    Ok(out)
}
