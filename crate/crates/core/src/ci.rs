//! Lower confidence limits for the maximum coordinate of a privatized estimate.
//!
//! The bootstrap limit shifts each bootstrap replicate by a bias-correction
//! term d_j = (1 − n^{r−1/2})(β̂_max − β̂_j), forms
//! T* = √n · max_j(β*_j + d_j − β̂_max), and reports β̂_max − c_α/√n with c_α
//! the (1−α) order-statistic quantile of T*. Naive and Bonferroni limits
//! based on a normal approximation are provided as baselines.
//!
//! To get a limit for the minimum, negate the data (or parameters) and negate
//! the returned limit.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::models::{BootstrapNoise, ExtremaModel};
use crate::rng::{fork_key, substream, SimRng};

pub const DEFAULT_DRAWS: usize = 1000;
pub const DEFAULT_INNER_DRAWS: usize = 200;
/// Bootstrap calls fail when more than this fraction of draws is degenerate.
pub const MAX_FAILED_FRACTION: f64 = 0.01;

/// Strength of the selection-bias correction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tuning {
    /// Exponent r in (0, 1/2]; r = 1/2 disables the correction.
    R(f64),
    /// Factor exactly 1: the n^{r−1/2} → 0 limit.
    FullCorrection,
}

impl Tuning {
    pub const SEMI_NAIVE: Tuning = Tuning::R(0.5);

    pub fn validate(self) -> Result<Self> {
        match self {
            Tuning::R(r) if !(r > 0.0 && r <= 0.5) => {
                Err(Error::param(format!("tuning parameter r must lie in (0, 0.5], got {r}")))
            }
            t => Ok(t),
        }
    }

    fn factor(self, n: usize) -> f64 {
        match self {
            Tuning::R(r) => 1.0 - (n as f64).powf(r - 0.5),
            Tuning::FullCorrection => 1.0,
        }
    }
}

impl fmt::Display for Tuning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tuning::R(r) => write!(f, "{r}"),
            Tuning::FullCorrection => write!(f, "full"),
        }
    }
}

impl std::str::FromStr for Tuning {
    type Err = Error;

    /// Accepts decimals, fractions such as `1/10`, and `full` (alias `-inf`).
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if matches!(t.to_ascii_lowercase().as_str(), "full" | "-inf" | "full_correction") {
            return Ok(Tuning::FullCorrection);
        }
        let bad = || Error::param(format!("cannot parse tuning parameter {s:?}"));
        let r = match t.split_once('/') {
            Some((a, b)) => {
                let a: f64 = a.trim().parse().map_err(|_| bad())?;
                let b: f64 = b.trim().parse().map_err(|_| bad())?;
                a / b
            }
            None => t.parse().map_err(|_| bad())?,
        };
        Tuning::R(r).validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasCorrection {
    pub d: Vec<f64>,
    pub tuning: Tuning,
    pub n: usize,
}

pub fn bias_correction(beta_priv: &[f64], tuning: Tuning, n: usize) -> Result<BiasCorrection> {
    if beta_priv.is_empty() {
        return Err(Error::param("need at least one coordinate"));
    }
    if n < 2 {
        return Err(Error::param(format!("sample size must be at least 2, got {n}")));
    }
    if beta_priv.iter().any(|b| !b.is_finite()) {
        return Err(Error::numeric("estimate has non-finite coordinates"));
    }
    let tuning = tuning.validate()?;
    let factor = tuning.factor(n);
    let max = max_of(beta_priv);
    let d = beta_priv.iter().map(|b| factor * (max - b)).collect();
    Ok(BiasCorrection { d, tuning, n })
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// T* = √n · max_j(β*_j + d_j − β̂_max).
pub fn bootstrap_statistic(beta_star: &[f64], correction: &BiasCorrection, beta_max: f64, n: usize) -> f64 {
    debug_assert_eq!(beta_star.len(), correction.d.len());
    let m = beta_star
        .iter()
        .zip(&correction.d)
        .map(|(b, d)| b + d - beta_max)
        .fold(f64::NEG_INFINITY, f64::max);
    (n as f64).sqrt() * m
}

/// The ⌈p(B+1)⌉-th smallest value, index clamped to [1, B].
pub fn quantile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::param("quantile of an empty sample"));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::param(format!("quantile level must lie in (0, 1), got {p}")));
    }
    let b = values.len();
    let rank = ((p * (b as f64 + 1.0)).ceil() as usize).clamp(1, b);
    let mut sorted = values.to_vec();
    let (_, nth, _) = sorted.select_nth_unstable_by(rank - 1, f64::total_cmp);
    Ok(*nth)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ppb,
    SemiNaive,
    /// Bootstrap without re-simulated privatization noise (ablation).
    Rppb,
    NaivePrivate,
    NaiveNonprivate,
    BonferroniPrivate,
    BonferroniNonprivate,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Ppb => "ppb",
            Method::SemiNaive => "semi_naive",
            Method::Rppb => "rppb",
            Method::NaivePrivate => "naive_private",
            Method::NaiveNonprivate => "naive_nonprivate",
            Method::BonferroniPrivate => "bonferroni_private",
            Method::BonferroniNonprivate => "bonferroni_nonprivate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceResult {
    pub lower_limit: f64,
    /// 1 − α.
    pub level: f64,
    /// Bootstrap quantile; for the normal-approximation baselines, z·se·√n.
    pub c_alpha: f64,
    pub beta_max: f64,
    pub draws: usize,
    pub method: Method,
    pub tuning: Option<Tuning>,
    pub failed_draws: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpbOptions {
    pub alpha: f64,
    pub draws: usize,
    pub noise: BootstrapNoise,
}

impl Default for PpbOptions {
    fn default() -> Self {
        Self { alpha: 0.05, draws: DEFAULT_DRAWS, noise: BootstrapNoise::Include }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::param(format!("alpha must lie in (0, 0.5), got {alpha}")));
    }
    Ok(())
}

/// B bootstrap replicates, each on its own substream, collected in draw order.
/// Numerically degenerate draws are dropped and counted.
fn bootstrap_replicates(
    model: &dyn ExtremaModel,
    draws: usize,
    noise: BootstrapNoise,
    rng: &mut SimRng,
) -> Result<(Vec<Vec<f64>>, usize)> {
    let key = fork_key(rng);
    let results: Vec<Result<Vec<f64>>> = (0..draws as u64)
        .into_par_iter()
        .map(|b| model.bootstrap_draw(noise, &mut substream(key, &[b])))
        .collect();
    let mut ok = Vec::with_capacity(draws);
    let mut failed = 0;
    for r in results {
        match r {
            Ok(v) => ok.push(v),
            Err(Error::Numeric(_)) => failed += 1,
            Err(e) => return Err(e),
        }
    }
    if failed as f64 > MAX_FAILED_FRACTION * draws as f64 {
        return Err(Error::numeric(format!("{failed} of {draws} bootstrap draws were degenerate")));
    }
    Ok((ok, failed))
}

/// Privatized parametric bootstrap lower limit for max_j β_j.
///
/// The bootstrap only re-simulates noise from the already-released estimate,
/// so the model's ledger is left untouched.
pub fn ppb_lower_limit(
    model: &dyn ExtremaModel,
    tuning: Tuning,
    opts: PpbOptions,
    rng: &mut SimRng,
) -> Result<ConfidenceResult> {
    check_alpha(opts.alpha)?;
    if opts.draws < 100 {
        return Err(Error::param(format!("need at least 100 bootstrap draws, got {}", opts.draws)));
    }
    let n = model.sample_size();
    let beta = model.beta();
    let correction = bias_correction(beta, tuning, n)?;
    let beta_max = max_of(beta);
    let (reps, failed) = bootstrap_replicates(model, opts.draws, opts.noise, rng)?;
    let stats: Vec<f64> = reps.iter().map(|b| bootstrap_statistic(b, &correction, beta_max, n)).collect();
    let c_alpha = quantile(&stats, 1.0 - opts.alpha)?;
    let method = match (opts.noise, tuning) {
        (BootstrapNoise::Skip, _) => Method::Rppb,
        (_, Tuning::R(0.5)) => Method::SemiNaive,
        _ => Method::Ppb,
    };
    Ok(ConfidenceResult {
        lower_limit: beta_max - c_alpha / (n as f64).sqrt(),
        level: 1.0 - opts.alpha,
        c_alpha,
        beta_max,
        draws: opts.draws,
        method,
        tuning: Some(correction.tuning),
        failed_draws: failed,
    })
}

pub(crate) fn z_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (j, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = j;
        }
    }
    best
}

/// Normal-approximation limit at the selected coordinate: β̂_max − z_{1−α}·se.
///
/// With `private`, se includes the Laplace variance of the released estimate.
pub fn naive_lower_limit(model: &dyn ExtremaModel, alpha: f64, private: bool) -> Result<ConfidenceResult> {
    check_alpha(alpha)?;
    let beta = model.beta();
    let var = model.coordinate_variances(private);
    let j = argmax(beta);
    let se = var[j].sqrt();
    let z = z_quantile(1.0 - alpha);
    let n = model.sample_size() as f64;
    Ok(ConfidenceResult {
        lower_limit: beta[j] - z * se,
        level: 1.0 - alpha,
        c_alpha: z * se * n.sqrt(),
        beta_max: beta[j],
        draws: 0,
        method: if private { Method::NaivePrivate } else { Method::NaiveNonprivate },
        tuning: None,
        failed_draws: 0,
    })
}

/// Maximum over coordinates of per-coordinate limits at level 1 − α/k.
pub fn bonferroni_lower_limit(model: &dyn ExtremaModel, alpha: f64, private: bool) -> Result<ConfidenceResult> {
    check_alpha(alpha)?;
    let beta = model.beta();
    let var = model.coordinate_variances(private);
    let k = beta.len() as f64;
    let z = z_quantile(1.0 - alpha / k);
    let lower_limit = beta.iter().zip(&var).map(|(b, v)| b - z * v.sqrt()).fold(f64::NEG_INFINITY, f64::max);
    let beta_max = max_of(beta);
    let n = model.sample_size() as f64;
    Ok(ConfidenceResult {
        lower_limit,
        level: 1.0 - alpha,
        c_alpha: (beta_max - lower_limit) * n.sqrt(),
        beta_max,
        draws: 0,
        method: if private { Method::BonferroniPrivate } else { Method::BonferroniNonprivate },
        tuning: None,
        failed_draws: 0,
    })
}

/// β̂_max − Ê*[max_j(β*_j + d_j) − β̂_max], averaging over `inner_draws` replicates.
pub fn bias_reduced_estimate(
    model: &dyn ExtremaModel,
    tuning: Tuning,
    inner_draws: usize,
    rng: &mut SimRng,
) -> Result<f64> {
    if inner_draws < 50 {
        return Err(Error::param(format!("need at least 50 inner bootstrap draws, got {inner_draws}")));
    }
    let reps = bootstrap_replicates(model, inner_draws, BootstrapNoise::Include, rng)?.0;
    bias_reduced_from_draws(model, tuning, &reps)
}

/// Same as [`bias_reduced_estimate`] over precomputed replicates, so several
/// tuning values can share one set of draws.
pub(crate) fn bias_reduced_from_draws(model: &dyn ExtremaModel, tuning: Tuning, reps: &[Vec<f64>]) -> Result<f64> {
    let beta = model.beta();
    let correction = bias_correction(beta, tuning, model.sample_size())?;
    let beta_max = max_of(beta);
    let mean_shift = reps
        .iter()
        .map(|b| b.iter().zip(&correction.d).map(|(b, d)| b + d).fold(f64::NEG_INFINITY, f64::max) - beta_max)
        .sum::<f64>()
        / reps.len() as f64;
    Ok(beta_max - mean_shift)
}

pub(crate) fn inner_replicates(model: &dyn ExtremaModel, inner_draws: usize, rng: &mut SimRng) -> Result<Vec<Vec<f64>>> {
    if inner_draws < 50 {
        return Err(Error::param(format!("need at least 50 inner bootstrap draws, got {inner_draws}")));
    }
    Ok(bootstrap_replicates(model, inner_draws, BootstrapNoise::Include, rng)?.0)
}
