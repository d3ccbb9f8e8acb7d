//! Cross-validated choice of the bias-correction exponent r.
//!
//! Each fold in turn is the reference sample and the rest is training data.
//! The training fit gives a bias-reduced estimate of the maximum for every
//! grid value; the reference fit gives per-coordinate estimates and standard
//! errors. The grid value minimizing min_i mean_j[(reduced_j − β̂_{j,i})² − σ̂²_{j,i}]
//! wins, ties going to the larger r.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ci::{bias_reduced_from_draws, inner_replicates, Tuning, DEFAULT_INNER_DRAWS};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::models::ExtremaModel;
use crate::privacy::{Composition, Epsilon, PrivacyLedger};
use crate::rng::{fork_key, substream, SimRng};

/// How the cross-validation budget is reported.
///
/// `Parallel` treats the fold estimations as parallel composition, so the
/// total equals one full-data estimation. Training folds overlap, so the
/// `Sequential` sum over all fold estimations is always computed alongside.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetHandling {
    #[default]
    Parallel,
    Sequential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvConfig {
    pub folds: usize,
    pub grid: Vec<f64>,
    pub inner_draws: usize,
    pub budget_handling: BudgetHandling,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            grid: vec![1.0 / 30.0, 1.0 / 15.0, 1.0 / 10.0, 1.0 / 5.0],
            inner_draws: DEFAULT_INNER_DRAWS,
            budget_handling: BudgetHandling::Parallel,
        }
    }
}

impl CvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::param(format!("need at least 2 folds, got {}", self.folds)));
        }
        if self.grid.is_empty() {
            return Err(Error::param("tuning grid is empty"));
        }
        if let Some(r) = self.grid.iter().find(|r| !(**r > 0.0 && **r < 0.5)) {
            return Err(Error::param(format!("grid value {r} outside (0, 0.5)")));
        }
        // repeated values are tolerated; they tie and resolve to the later entry
        if self.grid.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::param("tuning grid must be increasing"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldAudit {
    pub reference_rows: Vec<usize>,
    /// Bias-reduced training estimate per grid value.
    pub reduced: Vec<f64>,
    pub reference_beta: Vec<f64>,
    pub reference_se: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvResult {
    pub chosen_r: f64,
    pub chosen_index: usize,
    /// Aggregated criterion per grid value.
    pub criteria: Vec<f64>,
    /// h scores indexed [grid][fold][coordinate].
    pub scores: Vec<Vec<Vec<f64>>>,
    pub folds: Vec<FoldAudit>,
    /// Every fold estimation, charged sequentially.
    pub ledger: PrivacyLedger,
    pub parallel_total: f64,
    pub sequential_total: f64,
    pub budget_handling: BudgetHandling,
}

impl CvResult {
    pub fn tuning(&self) -> Tuning {
        Tuning::R(self.chosen_r)
    }

    /// Total under the configured budget handling.
    pub fn reported_total(&self) -> f64 {
        match self.budget_handling {
            BudgetHandling::Parallel => self.parallel_total,
            BudgetHandling::Sequential => self.sequential_total,
        }
    }
}

/// Seeded shuffle of 0..n dealt round-robin into `v` folds (sizes differ by ≤ 1).
pub fn partition_folds(n: usize, v: usize, rng: &mut SimRng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let mut folds = vec![Vec::with_capacity(n / v.max(1) + 1); v];
    for (pos, i) in idx.into_iter().enumerate() {
        folds[pos % v].push(i);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    folds
}

struct FoldOutcome {
    audit: FoldAudit,
    train_ledger: PrivacyLedger,
    reference_ledger: PrivacyLedger,
}

pub fn cv_choose_r(
    data: &Dataset,
    epsilon: Epsilon,
    split: Option<&[f64]>,
    config: &CvConfig,
    rng: &mut SimRng,
) -> Result<CvResult> {
    config.validate()?;
    let n = data.n();
    let v = config.folds;
    if n < 2 * v {
        return Err(Error::param(format!("need n ≥ 2·folds, got n={n}, folds={v}")));
    }
    let folds = partition_folds(n, v, rng);
    let min_fold = folds.iter().map(Vec::len).min().unwrap_or(0);
    if min_fold <= data.interest_dim() || min_fold < data.min_rows() {
        return Err(Error::param(format!("fold of {min_fold} rows is too small for this model")));
    }
    let key = fork_key(rng);
    let grid = &config.grid;

    let outcomes: Vec<Result<FoldOutcome>> = (0..v)
        .into_par_iter()
        .map(|j| {
            let train_rows: Vec<usize> = (0..n).filter(|i| !folds[j].contains(i)).collect();
            let train = data.subset(&train_rows)?.fit(epsilon, split, &mut substream(key, &[j as u64, 0]))?;
            let reference = data.subset(&folds[j])?.fit(epsilon, split, &mut substream(key, &[j as u64, 1]))?;
            // one set of inner draws per fold, shared by every grid value
            let draws = inner_replicates(&train, config.inner_draws, &mut substream(key, &[j as u64, 2]))?;
            let reduced = grid
                .iter()
                .map(|&r| bias_reduced_from_draws(&train, Tuning::R(r), &draws))
                .collect::<Result<Vec<_>>>()?;
            let reference_se = reference.coordinate_variances(true).iter().map(|v| v.sqrt()).collect();
            Ok(FoldOutcome {
                audit: FoldAudit {
                    reference_rows: folds[j].clone(),
                    reduced,
                    reference_beta: reference.beta().to_vec(),
                    reference_se,
                },
                train_ledger: train.ledger().clone(),
                reference_ledger: reference.ledger().clone(),
            })
        })
        .collect();
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;

    let k = data.interest_dim();
    let scores: Vec<Vec<Vec<f64>>> = (0..grid.len())
        .map(|l| {
            outcomes
                .iter()
                .map(|o| {
                    let a = &o.audit;
                    (0..k).map(|i| (a.reduced[l] - a.reference_beta[i]).powi(2) - a.reference_se[i].powi(2)).collect()
                })
                .collect()
        })
        .collect();
    let criteria: Vec<f64> = scores
        .iter()
        .map(|per_fold| {
            (0..k)
                .map(|i| per_fold.iter().map(|h| h[i]).sum::<f64>() / v as f64)
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let mut chosen_index = 0;
    for (l, c) in criteria.iter().enumerate() {
        if *c <= criteria[chosen_index] {
            chosen_index = l;
        }
    }

    let mut ledger = PrivacyLedger::new(Composition::Sequential);
    let mut parallel_total: f64 = 0.0;
    for (j, o) in outcomes.iter().enumerate() {
        ledger.absorb(&format!("fold{j}/train"), &o.train_ledger)?;
        ledger.absorb(&format!("fold{j}/reference"), &o.reference_ledger)?;
        parallel_total = parallel_total.max(o.train_ledger.total()).max(o.reference_ledger.total());
    }

    Ok(CvResult {
        chosen_r: grid[chosen_index],
        chosen_index,
        criteria,
        scores,
        sequential_total: ledger.total(),
        parallel_total,
        ledger,
        folds: outcomes.into_iter().map(|o| o.audit).collect(),
        budget_handling: config.budget_handling,
    })
}
