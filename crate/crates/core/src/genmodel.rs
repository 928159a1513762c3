//! The sparse generative model: seeded sampling, the printed failure
//! probability of the margin bound, and Monte Carlo verification of the
//! margin bound and its supporting lemmas.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::dict::{mu_incoherence, Dictionary};
use crate::error::{Error, Result};
use crate::lasso::{self, LassoProblem, SolverOptions};
use crate::rng;
use crate::stability;

/// Noise family; each coordinate is sub-Gaussian with parameter
/// `sigma / sqrt(d)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum NoiseLaw {
    /// Gaussian with standard deviation `sigma / sqrt(d)` per coordinate.
    Gaussian,
    /// Uniform on `[-sigma/sqrt(d), sigma/sqrt(d)]` per coordinate.
    BoundedUniform,
}

/// Distribution of the support of the sparse representation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum SupportLaw {
    /// Uniform over all size-`k` subsets.
    UniformSizeK,
    /// Always the given (sorted, distinct) index set.
    Fixed(Vec<usize>),
}

/// Nonzero magnitudes are uniform on `[lo, hi]` with random signs;
/// `lo` must be at least the model's magnitude floor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MagnitudeLaw {
    pub lo: f64,
    pub hi: f64,
}

/// Parameters of the sparse generative model.
#[derive(Clone, Debug)]
pub struct GenModelParams {
    dictionary: Dictionary,
    k: usize,
    min_magnitude: f64,
    sigma: f64,
    lambda: f64,
    margin_fraction: f64,
    lambda_exponent: Option<f64>,
    incoherence: f64,
    noise: NoiseLaw,
    magnitudes: MagnitudeLaw,
    supports: SupportLaw,
}

impl GenModelParams {
    /// Model with `lambda = d^(-tau)`; `tau` must lie in `[1/4, 1/2]`.
    pub fn new(
        dictionary: Dictionary,
        k: usize,
        min_magnitude: f64,
        sigma: f64,
        margin_fraction: f64,
        tau: f64,
    ) -> Result<Self> {
        if !(0.25..=0.5).contains(&tau) {
            return Err(Error::InvalidArgument(format!(
                "lambda exponent tau={tau} must lie in [1/4, 1/2]"
            )));
        }
        let lambda = (dictionary.ambient_dim() as f64).powf(-tau);
        let mut params =
            Self::with_lambda(dictionary, k, min_magnitude, sigma, margin_fraction, lambda)?;
        params.lambda_exponent = Some(tau);
        Ok(params)
    }

    /// Model with an explicitly chosen regularization weight.
    pub fn with_lambda(
        dictionary: Dictionary,
        k: usize,
        min_magnitude: f64,
        sigma: f64,
        margin_fraction: f64,
        lambda: f64,
    ) -> Result<Self> {
        if k > dictionary.size() {
            return Err(Error::InvalidArgument(format!(
                "sparsity k={k} exceeds dictionary size {}",
                dictionary.size()
            )));
        }
        if !min_magnitude.is_finite() || min_magnitude <= 0.0 {
            return Err(Error::InvalidArgument(
                "magnitude floor must be positive".into(),
            ));
        }
        if sigma < 0.0 {
            return Err(Error::InvalidArgument("sigma must be nonnegative".into()));
        }
        if !margin_fraction.is_finite() || margin_fraction <= 0.0 || margin_fraction >= 1.0 {
            return Err(Error::InvalidArgument(format!(
                "margin fraction t={margin_fraction} must lie in (0, 1)"
            )));
        }
        if !lambda.is_finite() || lambda <= 0.0 {
            return Err(Error::InvalidArgument("lambda must be positive".into()));
        }
        let incoherence = mu_incoherence(&dictionary).mu;
        let magnitudes = MagnitudeLaw {
            lo: min_magnitude,
            hi: 2.0 * min_magnitude,
        };
        Ok(Self {
            dictionary,
            k,
            min_magnitude,
            sigma,
            lambda,
            margin_fraction,
            lambda_exponent: None,
            incoherence,
            noise: NoiseLaw::Gaussian,
            magnitudes,
            supports: SupportLaw::UniformSizeK,
        })
    }

    pub fn with_noise(mut self, noise: NoiseLaw) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_magnitudes(mut self, magnitudes: MagnitudeLaw) -> Result<Self> {
        if magnitudes.lo < self.min_magnitude || magnitudes.hi < magnitudes.lo {
            return Err(Error::InvalidArgument(format!(
                "magnitude law [{}, {}] must sit above the floor {}",
                magnitudes.lo, magnitudes.hi, self.min_magnitude
            )));
        }
        self.magnitudes = magnitudes;
        Ok(self)
    }

    pub fn with_supports(mut self, supports: SupportLaw) -> Result<Self> {
        if let SupportLaw::Fixed(ref idx) = supports {
            if idx.len() != self.k {
                return Err(Error::InvalidArgument(format!(
                    "fixed support has {} indices, expected k={}",
                    idx.len(),
                    self.k
                )));
            }
            let mut sorted = idx.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != idx.len() || sorted.iter().any(|&i| i >= self.dictionary.size()) {
                return Err(Error::InvalidArgument(
                    "fixed support must be distinct indices below m".into(),
                ));
            }
        }
        self.supports = supports;
        Ok(self)
    }

    pub fn dictionary(&self) -> &Dictionary {
        &self.dictionary
    }
    pub fn ambient_dim(&self) -> usize {
        self.dictionary.ambient_dim()
    }
    pub fn dict_size(&self) -> usize {
        self.dictionary.size()
    }
    pub fn sparsity(&self) -> usize {
        self.k
    }
    pub fn min_magnitude(&self) -> f64 {
        self.min_magnitude
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn margin_fraction(&self) -> f64 {
        self.margin_fraction
    }
    pub fn lambda_exponent(&self) -> Option<f64> {
        self.lambda_exponent
    }
    /// Incoherence constant of the true dictionary, recorded at construction.
    pub fn incoherence(&self) -> f64 {
        self.incoherence
    }

    /// Regime conditions of the margin bound.
    pub fn regime(&self) -> RegimeReport {
        let d = self.ambient_dim() as f64;
        let t = self.margin_fraction;
        let mu = self.incoherence;
        let k = self.k as f64;
        let dimension_ok = d >= ((1.0 + 6.0 / (1.0 - t)) * mu * k).powi(2);
        let incoherence_ok = mu * k / d.sqrt() < 1.0;
        // condition used inside the sign-support lemma
        let lambda_code_ok = if incoherence_ok {
            self.lambda <= (1.0 - mu * k / d.sqrt()) * self.min_magnitude * d / k.max(1.0).sqrt()
        } else {
            false
        };
        let tau_ok = self
            .lambda_exponent
            .map(|tau| (0.25..=0.5).contains(&tau))
            .unwrap_or(false);
        RegimeReport {
            dimension_ok,
            incoherence_ok,
            lambda_code_ok,
            tau_ok,
            all: dimension_ok && incoherence_ok && lambda_code_ok && tau_ok,
        }
    }

    /// Failure probability of the margin bound, printed form.
    pub fn delta_failure_prob(&self) -> f64 {
        self.delta_breakdown(DeltaVariant::Theorem).total
    }

    pub fn delta_failure_prob_variant(&self, variant: DeltaVariant) -> f64 {
        self.delta_breakdown(variant).total
    }

    pub fn delta_breakdown(&self, variant: DeltaVariant) -> DeltaBreakdown {
        delta_breakdown_raw(
            self.ambient_dim(),
            self.dict_size(),
            self.k,
            self.min_magnitude,
            self.sigma,
            self.lambda,
            self.margin_fraction,
            self.incoherence,
            variant,
        )
    }
}

/// Regime flags for the margin bound.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct RegimeReport {
    /// `d >= {(1 + 6/(1-t)) mu k}^2`.
    pub dimension_ok: bool,
    /// `mu k / sqrt(d) < 1`.
    pub incoherence_ok: bool,
    /// `lambda <= (1 - mu k / sqrt(d)) C d / sqrt(k)` (used by the
    /// sign-support lemma).
    pub lambda_code_ok: bool,
    /// `lambda = d^(-tau)` with `tau` in `[1/4, 1/2]`.
    pub tau_ok: bool,
    pub all: bool,
}

/// Which printed form of the fourth failure-probability term to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum DeltaVariant {
    /// `8 sigma (d-k) / (sqrt(d) lambda) exp(-d lambda^2 / (32 sigma^2))`.
    Theorem,
    /// `8 sigma (d-k) / (d lambda) exp(-d^2 lambda^2 / (32 sigma^2))`,
    /// the variant printed in the appendix proof.
    AppendixTail,
}

/// The four summands of the failure probability.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DeltaBreakdown {
    /// Margin slack of the noise correlation at one atom.
    pub noise_margin: f64,
    /// Union bound over all atoms of the noise correlation (`delta_2`).
    pub noise_correlation: f64,
    /// Magnitude floor term (`delta_3'`).
    pub magnitude: f64,
    /// Off-support tail term (`delta_3''`).
    pub tail: f64,
    pub total: f64,
}

impl DeltaBreakdown {
    /// `delta_2`: failure probability of `lambda >= 2 ||D^T xi||_inf`.
    pub fn delta_noise(&self) -> f64 {
        self.noise_correlation
    }
    /// `delta_3`: failure probability of the sign-support lemma.
    pub fn delta_support(&self) -> f64 {
        self.magnitude + self.tail
    }
}

/// Failure probability from raw model quantities. The noiseless limit
/// returns zero exactly.
#[allow(clippy::too_many_arguments)]
pub fn delta_breakdown_raw(
    d: usize,
    m: usize,
    k: usize,
    min_magnitude: f64,
    sigma: f64,
    lambda: f64,
    t: f64,
    mu: f64,
    variant: DeltaVariant,
) -> DeltaBreakdown {
    if sigma == 0.0 {
        return DeltaBreakdown {
            noise_margin: 0.0,
            noise_correlation: 0.0,
            magnitude: 0.0,
            tail: 0.0,
            total: 0.0,
        };
    }
    let df = d as f64;
    let sqrt_d = df.sqrt();
    let s2 = sigma * sigma;
    let noise_margin = 2.0 * sigma / ((1.0 - t) * sqrt_d * lambda)
        * (-(1.0 - t) * (1.0 - t) * df * lambda * lambda / (8.0 * s2)).exp();
    let noise_correlation =
        2.0 * sigma * m as f64 / (sqrt_d * lambda) * (-df * lambda * lambda / (8.0 * s2)).exp();
    let incoherence_gap = 1.0 - mu * k as f64 / sqrt_d;
    let magnitude = if k == 0 {
        0.0
    } else if incoherence_gap <= 0.0 {
        f64::INFINITY
    } else {
        4.0 * sigma * k as f64 / (min_magnitude * (df * incoherence_gap).sqrt())
            * (-min_magnitude * min_magnitude * df * incoherence_gap / (8.0 * s2)).exp()
    };
    let tail = match variant {
        DeltaVariant::Theorem => {
            8.0 * sigma * (d - k) as f64 / (sqrt_d * lambda)
                * (-df * lambda * lambda / (32.0 * s2)).exp()
        }
        DeltaVariant::AppendixTail => {
            8.0 * sigma * (d - k) as f64 / (df * lambda)
                * (-df * df * lambda * lambda / (32.0 * s2)).exp()
        }
    };
    DeltaBreakdown {
        noise_margin,
        noise_correlation,
        magnitude,
        tail,
        total: noise_margin + noise_correlation + magnitude + tail,
    }
}

/// One draw from the model: `x = D* a + xi`.
#[derive(Clone, Debug)]
pub struct SampleDraw {
    pub x: DVector<f64>,
    pub a_true: DVector<f64>,
    pub xi: DVector<f64>,
    pub support: Vec<usize>,
}

impl SampleDraw {
    /// Recompute `D* a + xi` with the same summation order used by the
    /// sampler; the result is bitwise identical to `x`.
    pub fn reconstruct(&self, dict: &Dictionary) -> DVector<f64> {
        assemble(dict, &self.support, &self.a_true, &self.xi)
    }
}

fn assemble(
    dict: &Dictionary,
    support: &[usize],
    a: &DVector<f64>,
    xi: &DVector<f64>,
) -> DVector<f64> {
    let mut x = xi.clone();
    let cols = dict.columns();
    for &i in support {
        let coeff = a[i];
        for r in 0..x.len() {
            x[r] += coeff * cols[(r, i)];
        }
    }
    x
}

/// Draw a sample from the model.
pub fn sample<R: Rng>(params: &GenModelParams, rng: &mut R) -> SampleDraw {
    let m = params.dict_size();
    let d = params.ambient_dim();
    let k = params.k;
    let support: Vec<usize> = match &params.supports {
        SupportLaw::Fixed(idx) => idx.clone(),
        SupportLaw::UniformSizeK => floyd_sample(m, k, rng),
    };
    let mut a = DVector::zeros(m);
    for &i in &support {
        let mag = if params.magnitudes.hi > params.magnitudes.lo {
            rng.random_range(params.magnitudes.lo..=params.magnitudes.hi)
        } else {
            params.magnitudes.lo
        };
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        a[i] = sign * mag;
    }
    let scale = params.sigma / (d as f64).sqrt();
    let xi = match params.noise {
        NoiseLaw::Gaussian => {
            DVector::from_fn(d, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
        }
        NoiseLaw::BoundedUniform => DVector::from_fn(d, |_, _| {
            if scale == 0.0 {
                0.0
            } else {
                rng.random_range(-scale..=scale)
            }
        }),
    };
    let x = assemble(&params.dictionary, &support, &a, &xi);
    SampleDraw {
        x,
        a_true: a,
        xi,
        support,
    }
}

/// Floyd's algorithm: uniform size-`k` subset of `0..m`, sorted.
fn floyd_sample<R: Rng>(m: usize, k: usize, rng: &mut R) -> Vec<usize> {
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    for j in (m - k)..m {
        let t = rng.random_range(0..=j);
        if chosen.contains(&t) {
            chosen.push(j);
        } else {
            chosen.push(t);
        }
    }
    chosen.sort_unstable();
    chosen
}

/// Outcome of one margin trial.
#[derive(Clone, Debug, Serialize)]
pub struct MarginTrial {
    pub trial: usize,
    pub margin: Option<f64>,
    pub failed: bool,
    pub error: Option<String>,
}

/// Monte Carlo report for the margin bound.
#[derive(Clone, Debug, Serialize)]
pub struct MarginMcReport {
    pub trials: usize,
    /// Trials whose margin fell below `t lambda`.
    pub failures: usize,
    /// Trials excluded because the coder failed; counted, not hidden.
    pub excluded: usize,
    /// Failure fraction among non-excluded trials (`None` when empty).
    pub rate: Option<f64>,
    /// Wilson 95% confidence interval for the failure rate.
    pub wilson95: Option<(f64, f64)>,
    /// The printed failure probability `delta_{t,lambda}`.
    pub delta: f64,
    /// Margin threshold `t lambda`.
    pub threshold: f64,
    pub regime: RegimeReport,
    pub outcomes: Vec<MarginTrial>,
}

/// Estimate the probability that the k-margin of the true dictionary falls
/// below `t lambda`. The regime flags are recorded in the report; the
/// printed probability bound is only meaningful when they all hold.
pub fn margin_montecarlo(params: &GenModelParams, trials: usize, seed: u64) -> MarginMcReport {
    let threshold = params.margin_fraction * params.lambda;
    let outcomes: Vec<MarginTrial> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut stream = rng::stream(seed, trial as u64);
            let draw = sample(params, &mut stream);
            match stability::k_margin(params.dictionary(), &draw.x, params.k, params.lambda) {
                Ok(report) => MarginTrial {
                    trial,
                    margin: Some(report.margin),
                    failed: report.margin < threshold,
                    error: None,
                },
                Err(e) => MarginTrial {
                    trial,
                    margin: None,
                    failed: false,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let excluded = outcomes.iter().filter(|o| o.error.is_some()).count();
    let failures = outcomes.iter().filter(|o| o.failed).count();
    let effective = trials - excluded;
    let rate = if effective > 0 {
        Some(failures as f64 / effective as f64)
    } else {
        None
    };
    MarginMcReport {
        trials,
        failures,
        excluded,
        rate,
        wilson95: rate.map(|r| wilson_interval(r, effective)),
        delta: params.delta_failure_prob(),
        threshold,
        regime: params.regime(),
        outcomes,
    }
}

/// Wilson score interval at 95% confidence.
pub fn wilson_interval(p_hat: f64, n: usize) -> (f64, f64) {
    let z = 1.959963984540054_f64;
    let nf = n as f64;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p_hat + z2 / (2.0 * nf)) / denom;
    let half = z * (p_hat * (1.0 - p_hat) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Per-trial outcome of the lemma checks.
#[derive(Clone, Debug, Serialize)]
pub struct LemmaTrial {
    pub trial: usize,
    /// `lambda >= 2 ||D*^T xi||_inf`.
    pub noise_ok: Option<bool>,
    /// `||a - phi(x)||_2 <= 3 sqrt(k) lambda / (1 - mu k / sqrt(d))`.
    pub code_error_ok: Option<bool>,
    /// `sign(phi(x)) = sign(a)` coordinatewise.
    pub sign_ok: Option<bool>,
    /// `|supp(a - phi(x))| <= k`.
    pub support_ok: Option<bool>,
    pub error: Option<String>,
}

/// Empirical rates with their printed probability bounds.
#[derive(Clone, Debug, Serialize)]
pub struct LemmaRate {
    pub name: &'static str,
    pub successes: usize,
    pub rate: f64,
    /// Printed lower bound `1 - delta` for this event.
    pub bound: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LemmaCheckReport {
    pub trials: usize,
    pub excluded: usize,
    pub rates: Vec<LemmaRate>,
    pub regime: RegimeReport,
    pub outcomes: Vec<LemmaTrial>,
}

/// Monte Carlo rates for the noise-correlation, code-error, sign-consistency,
/// and support-difference lemmas.
pub fn lemma_checks(params: &GenModelParams, trials: usize, seed: u64) -> LemmaCheckReport {
    let d = params.ambient_dim() as f64;
    let mu = params.incoherence();
    let k = params.k;
    let lambda = params.lambda;
    let incoherence_gap = 1.0 - mu * k as f64 / d.sqrt();
    let code_error_bound = if incoherence_gap > 0.0 {
        3.0 * (k as f64).sqrt() * lambda / incoherence_gap
    } else {
        f64::INFINITY
    };
    let opts = SolverOptions::default();
    let outcomes: Vec<LemmaTrial> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut stream = rng::stream(seed, trial as u64);
            let draw = sample(params, &mut stream);
            let noise_ok = lambda >= 2.0 * params.dictionary().correlations(&draw.xi).amax();
            let problem = match LassoProblem::new(params.dictionary(), &draw.x, lambda) {
                Ok(p) => p,
                Err(e) => return LemmaTrial::failed(trial, e),
            };
            let code = match lasso::solve_with(&problem, &opts) {
                Ok(c) => c,
                Err(e) => return LemmaTrial::failed(trial, e),
            };
            let mut err_sq = 0.0;
            let mut support_diff = 0usize;
            let mut signs_match = true;
            for i in 0..params.dict_size() {
                let diff = draw.a_true[i] - code.coefficients[i];
                err_sq += diff * diff;
                if diff != 0.0 {
                    support_diff += 1;
                }
                if sign_of(draw.a_true[i]) != sign_of(code.coefficients[i]) {
                    signs_match = false;
                }
            }
            LemmaTrial {
                trial,
                noise_ok: Some(noise_ok),
                code_error_ok: Some(err_sq.sqrt() <= code_error_bound),
                sign_ok: Some(signs_match),
                support_ok: Some(support_diff <= k),
                error: None,
            }
        })
        .collect();
    let excluded = outcomes.iter().filter(|o| o.error.is_some()).count();
    let effective = (trials - excluded).max(1);
    let breakdown = params.delta_breakdown(DeltaVariant::Theorem);
    let delta2 = breakdown.delta_noise();
    let delta3 = breakdown.delta_support();
    let count = |f: fn(&LemmaTrial) -> Option<bool>| -> usize {
        outcomes.iter().filter(|o| f(o) == Some(true)).count()
    };
    let make = |name: &'static str, successes: usize, delta: f64| LemmaRate {
        name,
        successes,
        rate: successes as f64 / effective as f64,
        bound: 1.0 - delta,
    };
    let rates = vec![
        make("noise_correlation", count(|o| o.noise_ok), delta2),
        make("code_error", count(|o| o.code_error_ok), delta2 + delta3),
        make("sign_consistency", count(|o| o.sign_ok), delta3),
        make("support_diff", count(|o| o.support_ok), delta3),
    ];
    LemmaCheckReport {
        trials,
        excluded,
        rates,
        regime: params.regime(),
        outcomes,
    }
}

impl LemmaTrial {
    fn failed(trial: usize, e: Error) -> Self {
        LemmaTrial {
            trial,
            noise_ok: None,
            code_error_ok: None,
            sign_ok: None,
            support_ok: None,
            error: Some(e.to_string()),
        }
    }
}

fn sign_of(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}
