use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{BootstrapNoise, ExtremaModel, ResampleMode};
use crate::error::{Error, Result};
use crate::linalg::{normal_with_root, psd_repair, sym_sqrt, PsdRepair};
use crate::privacy::{
    laplace_sample, laplace_symmetric, sensitivity_gram_bounded, sensitivity_sum_bounded, Bounds, Epsilon,
    LaplaceSpec, PrivacyLedger,
};
use crate::rng::SimRng;

/// Rows of `x` are observations, already clamped into `bounds`.
#[derive(Debug, Clone)]
pub struct GaussianData {
    x: DMatrix<f64>,
    bounds: Bounds,
}

impl GaussianData {
    pub fn new(x: DMatrix<f64>, bounds: Bounds) -> Result<Self> {
        if x.nrows() < 2 {
            return Err(Error::param(format!("need at least 2 observations, got {}", x.nrows())));
        }
        let x = bounds.clamp_rows(&x)?;
        Ok(Self { x, bounds })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn k(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        Self::new(self.x.select_rows(rows), self.bounds.clone())
    }
}

/// μ̂^priv and Σ̂^priv with the noise laws needed to re-simulate privatization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrivatizedGaussianEstimate {
    pub mu_priv: Vec<f64>,
    pub sigma_priv: DMatrix<f64>,
    pub n: usize,
    pub ledger: PrivacyLedger,
    pub mean_noise: LaplaceSpec,
    pub gram_noise: LaplaceSpec,
    pub repair: PsdRepair,
    #[serde(skip)]
    resample: ResampleMode,
    #[serde(skip)]
    sigma_root: DMatrix<f64>,
}

impl PrivatizedGaussianEstimate {
    pub fn with_resample_mode(mut self, mode: ResampleMode) -> Self {
        self.resample = mode;
        self
    }

    pub fn k(&self) -> usize {
        self.mu_priv.len()
    }

    /// Degeneracy warning: the PSD repair moved eigenvalues by more than the budget.
    pub fn degenerate(&self) -> bool {
        self.repair.degenerate
    }

    /// Same estimate, with the bootstrap run at a different sample size.
    pub fn with_sample_size(mut self, n: usize) -> Self {
        self.n = n;
        self
    }
}

/// Σ x_i and Σ x_i x_iᵀ of already-clamped rows.
pub(crate) fn sufficient_statistics(x: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let sum = x.row_sum().transpose();
    let gram = x.transpose() * x;
    (sum, gram)
}

/// Noisy sum → mean.
pub(crate) fn mean_from_noisy_sum(noisy_sum: &DVector<f64>, n: usize) -> Vec<f64> {
    noisy_sum.iter().map(|s| s / n as f64).collect()
}

/// Shared by the full and the block-partial estimators: privatize Σx and Σxxᵀ
/// of `x` under `bounds`, charging `ids`.
pub(crate) fn privatize_gaussian(
    x: &DMatrix<f64>,
    bounds: &Bounds,
    budget: (Epsilon, Epsilon),
    ids: (&str, &str),
    rng: &mut SimRng,
) -> Result<PrivatizedGaussianEstimate> {
    let n = x.nrows();
    let k = x.ncols();
    if n < 2 {
        return Err(Error::param(format!("need at least 2 observations, got {n}")));
    }
    let sum_sens = sensitivity_sum_bounded(bounds.lower(), bounds.upper())?;
    let gram_sens = sensitivity_gram_bounded(bounds.lower(), bounds.upper())?;
    let mean_noise = LaplaceSpec::calibrated(&sum_sens, budget.0, k)?;
    let gram_noise = LaplaceSpec::calibrated(&gram_sens, budget.1, k * (k + 1) / 2)?;

    let (sum, gram) = sufficient_statistics(x);
    let w1 = DVector::from_vec(laplace_sample(&mean_noise, rng));
    let w2 = laplace_symmetric(gram_noise.scale(), k, rng);
    let noisy_sum = sum + w1;
    let noisy_gram = gram + w2;

    let nf = n as f64;
    let sigma = noisy_gram / (nf - 1.0) - (&noisy_sum * noisy_sum.transpose()) / (nf * (nf - 1.0));
    let (sigma_priv, repair) = psd_repair(&sigma)?;
    let sigma_root = sym_sqrt(&sigma_priv);

    let mut ledger = PrivacyLedger::default();
    ledger.record(ids.0, budget.0)?;
    ledger.record(ids.1, budget.1)?;

    Ok(PrivatizedGaussianEstimate {
        mu_priv: mean_from_noisy_sum(&noisy_sum, n),
        sigma_priv,
        n,
        ledger,
        mean_noise,
        gram_noise,
        repair,
        resample: ResampleMode::default(),
        sigma_root,
    })
}

/// Privatized MLE: noisy mean and noisy unbiased covariance, covariance PSD-repaired.
pub fn gaussian_private_mle(
    data: &GaussianData,
    budget: (Epsilon, Epsilon),
    rng: &mut SimRng,
) -> Result<PrivatizedGaussianEstimate> {
    privatize_gaussian(&data.x, &data.bounds, budget, ("sum_x", "gram_x"), rng)
}

/// μ̂*,priv = (Σ x*_i + w₁*)/n with x*_i ~ N(μ̂^priv, Σ̂^priv) and w₁* a fresh,
/// non-charging draw from the mean's noise law.
pub fn gaussian_bootstrap_draw(
    est: &PrivatizedGaussianEstimate,
    noise: BootstrapNoise,
    rng: &mut SimRng,
) -> Vec<f64> {
    let k = est.k();
    let n = est.n;
    let nf = n as f64;
    let mu = DVector::from_column_slice(&est.mu_priv);
    let mut sum = match est.resample {
        ResampleMode::SufficientStatistic => &mu * nf + normal_with_root(&est.sigma_root, rng) * nf.sqrt(),
        ResampleMode::Observations => {
            let mut acc = DVector::zeros(k);
            for _ in 0..n {
                acc += &mu + normal_with_root(&est.sigma_root, rng);
            }
            acc
        }
    };
    if noise == BootstrapNoise::Include {
        let w = laplace_sample(&est.mean_noise, rng);
        for (s, w) in sum.iter_mut().zip(w) {
            *s += w;
        }
    }
    sum.iter().map(|s| s / nf).collect()
}

impl ExtremaModel for PrivatizedGaussianEstimate {
    fn beta(&self) -> &[f64] {
        &self.mu_priv
    }

    fn sample_size(&self) -> usize {
        self.n
    }

    fn bootstrap_draw(&self, noise: BootstrapNoise, rng: &mut SimRng) -> Result<Vec<f64>> {
        Ok(gaussian_bootstrap_draw(self, noise, rng))
    }

    fn coordinate_variances(&self, include_privacy_noise: bool) -> Vec<f64> {
        let nf = self.n as f64;
        let laplace = if include_privacy_noise { self.mean_noise.variance() / (nf * nf) } else { 0.0 };
        (0..self.k()).map(|j| self.sigma_priv[(j, j)] / nf + laplace).collect()
    }

    fn ledger(&self) -> &PrivacyLedger {
        &self.ledger
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn sample_data() -> GaussianData {
        let x = DMatrix::from_row_slice(5, 2, &[0.1, 0.5, -0.3, 0.2, 0.7, -0.4, 0.0, 0.9, -0.6, 0.1]);
        GaussianData::new(x, Bounds::uniform(-1.0, 1.0, 2).unwrap()).unwrap()
    }

    #[test]
    fn rejects_single_observation() {
        let x = DMatrix::from_row_slice(1, 2, &[0.0, 0.0]);
        assert!(GaussianData::new(x, Bounds::uniform(-1.0, 1.0, 2).unwrap()).is_err());
    }

    #[test]
    fn clamping_is_idempotent() {
        let raw = DMatrix::from_row_slice(3, 1, &[5.0, -5.0, 0.5]);
        let b = Bounds::uniform(-1.0, 1.0, 1).unwrap();
        let once = GaussianData::new(raw, b.clone()).unwrap();
        let twice = GaussianData::new(once.x().clone(), b).unwrap();
        assert_eq!(once.x(), twice.x());
        assert_eq!(once.x().as_slice(), &[1.0, -1.0, 0.5]);
    }

    #[test]
    fn deterministic_under_seed() {
        let d = sample_data();
        let eps = Epsilon::new(0.75).unwrap();
        let a = gaussian_private_mle(&d, (eps, eps), &mut substream(9, &[])).unwrap();
        let b = gaussian_private_mle(&d, (eps, eps), &mut substream(9, &[])).unwrap();
        assert_eq!(a.mu_priv, b.mu_priv);
        assert_eq!(a.sigma_priv, b.sigma_priv);
        let da = gaussian_bootstrap_draw(&a, BootstrapNoise::Include, &mut substream(1, &[]));
        let db = gaussian_bootstrap_draw(&b, BootstrapNoise::Include, &mut substream(1, &[]));
        assert_eq!(da, db);
    }

    #[test]
    fn ledger_charges_both_statistics() {
        let d = sample_data();
        let e = Epsilon::new(0.75).unwrap();
        let est = gaussian_private_mle(&d, (e, e), &mut substream(9, &[])).unwrap();
        assert_eq!(est.ledger.total(), 1.5);
        assert_eq!(est.ledger.charges().len(), 2);
    }

    #[test]
    fn zero_noise_bootstrap_is_plain_mean() {
        let d = sample_data();
        let inf = Epsilon::INFINITE;
        let est = gaussian_private_mle(&d, (inf, inf), &mut substream(2, &[])).unwrap();
        let with = gaussian_bootstrap_draw(&est, BootstrapNoise::Include, &mut substream(5, &[]));
        let without = gaussian_bootstrap_draw(&est, BootstrapNoise::Skip, &mut substream(5, &[]));
        assert_eq!(with, without);
    }
}
