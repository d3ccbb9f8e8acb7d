//! Monte Carlo coverage experiments.
//!
//! Replication `i` draws everything from substreams of the master seed:
//! `[i, 0]` generates the data, `[i, 1]` the privatized fit, `[i, 100 + m]`
//! the m-th configured method. The budget index is deliberately absent from
//! the path, so every ε in a sweep sees the same data and the same unit noise
//! draws (common random numbers). A fixed regression design uses `[u64::MAX]`.

mod config;
mod report;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

pub use config::{DesignMode, ExperimentConfig, MethodSpec, Truth};
pub use report::{emit_plot_data, ExperimentReport, PlotAxis, ReportRow};

use crate::ci::{bonferroni_lower_limit, naive_lower_limit, ppb_lower_limit, PpbOptions, Tuning};
use crate::cv::cv_choose_r;
use crate::dataset::{Dataset, FittedModel, ModelKind};
use crate::error::{Error, Result};
use crate::models::{BootstrapNoise, ExtremaModel, GaussianData, RegressionData};
use crate::partial::{NuisanceRegressionData, PartitionedGaussianData};
use crate::privacy::{Bounds, Epsilon};
use crate::rng::{substream, SimRng};

const FIXED_DESIGN_PATH: u64 = u64::MAX;
const METHOD_TAG: u64 = 100;

fn normal_matrix(n: usize, k: usize, rng: &mut SimRng) -> DMatrix<f64> {
    DMatrix::from_fn(n, k, |_, _| rng.sample(StandardNormal))
}

fn uniform_design(n: usize, k: usize, half: f64, rng: &mut SimRng) -> DMatrix<f64> {
    DMatrix::from_fn(n, k, |_, _| rng.random_range(-half..=half))
}

/// Randomized-trial layout with k₁ subgroups: row i is in subgroup i mod k₁,
/// treatment alternates ±1 within a subgroup, so consecutive members form a
/// treated/control pair. Z_ij = t_i·1[g_i = j]; X holds the subgroup
/// indicators followed by `covariates` columns shared within each pair, which
/// makes ZᵀX = 0 exactly.
pub fn randomized_trial_design(
    n: usize,
    k1: usize,
    covariates: usize,
    half: f64,
    rng: &mut SimRng,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if k1 == 0 || !n.is_multiple_of(2 * k1) {
        return Err(Error::param(format!("n={n} must be a positive multiple of 2·k1={}", 2 * k1)));
    }
    let mut z = DMatrix::zeros(n, k1);
    let mut x = DMatrix::zeros(n, k1 + covariates);
    let pairs = n / 2;
    let u = uniform_design(pairs, covariates, half, rng);
    for i in 0..n {
        let g = i % k1;
        let q = i / k1;
        let t = if q.is_multiple_of(2) { 1.0 } else { -1.0 };
        z[(i, g)] = t;
        x[(i, g)] = 1.0;
        let pair = g * (n / (2 * k1)) + q / 2;
        for c in 0..covariates {
            x[(i, k1 + c)] = u[(pair, c)];
        }
    }
    Ok((z, x))
}

/// Simulate one dataset from the configured truth.
pub fn generate_dataset(cfg: &ExperimentConfig, rng: &mut SimRng, fixed_design: Option<&DMatrix<f64>>) -> Result<Dataset> {
    let t = &cfg.truth;
    let n = cfg.n;
    let hw = cfg.bound_halfwidth;
    match cfg.model {
        ModelKind::Gaussian | ModelKind::PartialGaussian => {
            let k = t.mean.len();
            let mean = DMatrix::from_fn(n, k, |_, j| t.mean[j]);
            let x = mean + normal_matrix(n, k, rng) * t.sd;
            let lo: Vec<f64> = t.mean.iter().map(|m| m - hw * t.sd).collect();
            let hi: Vec<f64> = t.mean.iter().map(|m| m + hw * t.sd).collect();
            if cfg.model == ModelKind::Gaussian {
                return Ok(Dataset::Gaussian(GaussianData::new(x, Bounds::new(lo, hi)?)?));
            }
            let k1 = cfg.interest_dim();
            let b1 = Bounds::new(lo[..k1].to_vec(), hi[..k1].to_vec())?;
            let x1 = x.columns(0, k1).into_owned();
            let x2 = x.columns(k1, k - k1).into_owned();
            Ok(Dataset::PartialGaussian(PartitionedGaussianData::new(x1, x2, b1)?))
        }
        ModelKind::Regression => {
            let k = t.beta.len();
            let b = t.design_bound;
            let x = match fixed_design {
                Some(x) => x.clone(),
                None => uniform_design(n, k, b, rng),
            };
            let sigma = t.sigma2.sqrt();
            let noise = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal) * sigma);
            let y = &x * DVector::from_column_slice(&t.beta) + noise;
            let y_mag = b * t.beta.iter().map(|v| v.abs()).sum::<f64>() + hw * sigma;
            Ok(Dataset::Regression(RegressionData::new(x, y, Bounds::uniform(-b, b, k)?, (-y_mag, y_mag))?))
        }
        ModelKind::PartialRegression => {
            let k1 = t.beta.len();
            let covariates = t.gamma.len() - k1;
            let b = t.design_bound;
            let (z, x) = match fixed_design {
                Some(stacked) => (stacked.columns(0, k1).into_owned(), stacked.columns(k1, stacked.ncols() - k1).into_owned()),
                None => randomized_trial_design(n, k1, covariates, b, rng)?,
            };
            let sigma = t.sigma2.sqrt();
            let noise = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal) * sigma);
            let y = &z * DVector::from_column_slice(&t.beta) + &x * DVector::from_column_slice(&t.gamma) + noise;
            let max_abs = |v: &[f64]| v.iter().map(|x| x.abs()).fold(0.0, f64::max);
            let y_mag = max_abs(&t.beta)
                + max_abs(&t.gamma[..k1])
                + b * t.gamma[k1..].iter().map(|v| v.abs()).sum::<f64>()
                + hw * sigma;
            Ok(Dataset::PartialRegression(NuisanceRegressionData::new(
                z,
                x,
                y,
                Bounds::uniform(-1.0, 1.0, k1)?,
                (-y_mag, y_mag),
            )?))
        }
    }
}

fn fixed_design(cfg: &ExperimentConfig) -> Result<Option<DMatrix<f64>>> {
    if cfg.truth.design != DesignMode::Fixed {
        return Ok(None);
    }
    let mut rng = substream(cfg.seed, &[FIXED_DESIGN_PATH]);
    let t = &cfg.truth;
    Ok(match cfg.model {
        ModelKind::Regression => Some(uniform_design(cfg.n, t.beta.len(), t.design_bound, &mut rng)),
        ModelKind::PartialRegression => {
            let (z, x) = randomized_trial_design(cfg.n, t.beta.len(), t.gamma.len() - t.beta.len(), t.design_bound, &mut rng)?;
            let mut stacked = DMatrix::zeros(cfg.n, z.ncols() + x.ncols());
            stacked.columns_mut(0, z.ncols()).copy_from(&z);
            stacked.columns_mut(z.ncols(), x.ncols()).copy_from(&x);
            Some(stacked)
        }
        _ => None,
    })
}

#[derive(Debug, Clone, Copy)]
struct Outcome {
    lower_limit: f64,
    failed_draws: usize,
    chosen_r: Option<f64>,
    budget_parallel: f64,
    budget_sequential: f64,
}

struct Fits {
    private: Result<FittedModel>,
    nonprivate: Option<Result<FittedModel>>,
}

fn run_method(
    cfg: &ExperimentConfig,
    method: MethodSpec,
    data: &Dataset,
    epsilon: Epsilon,
    fits: &Fits,
    rng: &mut SimRng,
) -> Result<Outcome> {
    let split = cfg.split.as_deref();
    let opts = |noise| PpbOptions { alpha: cfg.alpha, draws: cfg.bootstrap_draws, noise };
    let model: &FittedModel = match method {
        MethodSpec::Naive { private: false } | MethodSpec::Bonferroni { private: false } => {
            fits.nonprivate.as_ref().expect("non-private fit requested").as_ref().map_err(Clone::clone)?
        }
        _ => fits.private.as_ref().map_err(Clone::clone)?,
    };
    let spent = model.ledger().total();
    let mut chosen_r = None;
    let mut budget = (spent, spent);
    let result = match method {
        MethodSpec::Ppb(t) => ppb_lower_limit(model, t, opts(BootstrapNoise::Include), rng)?,
        MethodSpec::SemiNaive => ppb_lower_limit(model, Tuning::SEMI_NAIVE, opts(BootstrapNoise::Include), rng)?,
        MethodSpec::Rppb(t) => ppb_lower_limit(model, t, opts(BootstrapNoise::Skip), rng)?,
        MethodSpec::PpbCv => {
            let cv = cv_choose_r(data, epsilon, split, &cfg.cv, rng)?;
            chosen_r = Some(cv.chosen_r);
            budget = (cv.parallel_total.max(spent), cv.sequential_total + spent);
            ppb_lower_limit(model, cv.tuning(), opts(BootstrapNoise::Include), rng)?
        }
        MethodSpec::Naive { private } => naive_lower_limit(model, cfg.alpha, private)?,
        MethodSpec::Bonferroni { private } => bonferroni_lower_limit(model, cfg.alpha, private)?,
    };
    Ok(Outcome {
        lower_limit: result.lower_limit,
        failed_draws: result.failed_draws,
        chosen_r,
        budget_parallel: budget.0,
        budget_sequential: budget.1,
    })
}

/// One replication across every budget and method, indexed [epsilon][method].
fn replicate(cfg: &ExperimentConfig, rep: u64, design: Option<&DMatrix<f64>>) -> Vec<Vec<Result<Outcome>>> {
    let data = generate_dataset(cfg, &mut substream(cfg.seed, &[rep, 0]), design);
    let needs_nonprivate = cfg.methods.iter().any(|m| {
        matches!(m, MethodSpec::Naive { private: false } | MethodSpec::Bonferroni { private: false })
    });
    let split = cfg.split.as_deref();
    cfg.epsilon
        .iter()
        .map(|&eps| {
            let data = match &data {
                Ok(d) => d,
                Err(e) => return cfg.methods.iter().map(|_| Err(e.clone())).collect(),
            };
            let fits = Fits {
                private: data.fit(eps, split, &mut substream(cfg.seed, &[rep, 1])),
                nonprivate: needs_nonprivate
                    .then(|| data.fit(Epsilon::INFINITE, split, &mut substream(cfg.seed, &[rep, 2]))),
            };
            cfg.methods
                .iter()
                .enumerate()
                .map(|(m, &method)| {
                    let mut rng = substream(cfg.seed, &[rep, METHOD_TAG + m as u64]);
                    run_method(cfg, method, data, eps, &fits, &mut rng)
                })
                .collect()
        })
        .collect()
}

/// Run every replication and aggregate coverage and length per (ε, method).
///
/// Replications run in parallel; results are collected in replication order,
/// so the report is identical for any thread count. A replication in which a
/// method fails is excluded from that method's averages and counted in
/// `errors`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let design = fixed_design(cfg)?;
    let outcomes: Vec<Vec<Vec<Result<Outcome>>>> =
        (0..cfg.reps as u64).into_par_iter().map(|rep| replicate(cfg, rep, design.as_ref())).collect();

    let truth_max = cfg.truth_max();
    let mut rows = Vec::new();
    for (e, eps) in cfg.epsilon.iter().enumerate() {
        for (m, method) in cfg.methods.iter().enumerate() {
            let cell: Vec<&Result<Outcome>> = outcomes.iter().map(|rep| &rep[e][m]).collect();
            let ok: Vec<&Outcome> = cell.iter().filter_map(|r| r.as_ref().ok()).collect();
            let errors = cell.len() - ok.len();
            if ok.is_empty() {
                let first = cell.iter().find_map(|r| r.as_ref().err()).cloned();
                return Err(first.unwrap_or_else(|| Error::numeric("no successful replications")));
            }
            let reps = ok.len() as f64;
            let coverage = ok.iter().filter(|o| o.lower_limit <= truth_max).count() as f64 / reps;
            let mean_length = ok.iter().map(|o| truth_max - o.lower_limit).sum::<f64>() / reps;
            let chosen: Vec<f64> = ok.iter().filter_map(|o| o.chosen_r).collect();
            rows.push(ReportRow {
                model: cfg.model.label().into(),
                method: method.label().into(),
                r: method.r_label(),
                epsilon: eps.to_string(),
                k: cfg.interest_dim(),
                truth: cfg.truth_label(),
                coverage,
                coverage_se: (coverage * (1.0 - coverage) / reps).sqrt(),
                mean_length,
                reps: ok.len(),
                seed: cfg.seed,
                failed_draws: ok.iter().map(|o| o.failed_draws).sum(),
                errors,
                mean_chosen_r: (!chosen.is_empty()).then(|| chosen.iter().sum::<f64>() / chosen.len() as f64),
                budget_parallel: ok.iter().map(|o| o.budget_parallel).fold(0.0, f64::max),
                budget_sequential: ok.iter().map(|o| o.budget_sequential).fold(0.0, f64::max),
            });
        }
    }
    Ok(ExperimentReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trial_design_is_orthogonal() {
        let (z, x) = randomized_trial_design(40, 2, 3, 1.0, &mut substream(3, &[])).unwrap();
        assert_eq!(z.transpose() * &x, DMatrix::zeros(2, 5));
        assert_eq!(z.column(0).iter().filter(|v| **v != 0.0).count(), 20);
        assert!(randomized_trial_design(30, 4, 1, 1.0, &mut substream(3, &[])).is_err());
    }

    #[test]
    fn small_experiment_is_deterministic() {
        let cfg = ExperimentConfig::from_toml(
            r#"
            model = "gaussian"
            n = 200
            epsilon = [1.0, "inf"]
            methods = ["ppb:1/10", "naive", "naive_nonprivate"]
            bootstrap_draws = 200
            reps = 20
            seed = 11
            [truth]
            mean = [0.0, 0.5]
            "#,
        )
        .unwrap();
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 6);
        for row in &a.rows {
            assert!((0.0..=1.0).contains(&row.coverage));
            assert_eq!(row.reps + row.errors, 20);
        }
        let inf = a.find("naive_private", "", "inf").unwrap();
        let np = a.find("naive_nonprivate", "", "inf").unwrap();
        assert_eq!(inf.coverage, np.coverage);
        assert_eq!(inf.budget_parallel, 0.0);
    }
}
