use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{BootstrapNoise, ExtremaModel};
use crate::error::{Error, Result};
use crate::linalg::{invert, normal_with_root, psd_repair, sym_sqrt, PsdRepair};
use crate::privacy::{
    laplace_sample, laplace_symmetric, sensitivity_cross_bounded, sensitivity_gram_bounded, Bounds, Epsilon,
    LaplaceSpec, PrivacyLedger, SensitivitySpec,
};
use crate::rng::SimRng;

/// σ̂²,priv is clipped below at this value after adding its noise.
pub const SIGMA2_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct RegressionData {
    x: DMatrix<f64>,
    y: DVector<f64>,
    x_bounds: Bounds,
    y_bounds: (f64, f64),
}

impl RegressionData {
    /// Clamps rows of `x` into `x_bounds` and `y` into `y_bounds`.
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, x_bounds: Bounds, y_bounds: (f64, f64)) -> Result<Self> {
        let (n, k) = x.shape();
        if y.len() != n {
            return Err(Error::param(format!("design has {n} rows but response has {}", y.len())));
        }
        if n <= k {
            return Err(Error::param(format!("need more observations than coefficients (n={n}, k={k})")));
        }
        check_interval(y_bounds)?;
        let x = x_bounds.clamp_rows(&x)?;
        let y = y.map(|v| v.clamp(y_bounds.0, y_bounds.1));
        Ok(Self { x, y, x_bounds, y_bounds })
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

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn x_bounds(&self) -> &Bounds {
        &self.x_bounds
    }

    pub fn y_bounds(&self) -> (f64, f64) {
        self.y_bounds
    }

    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.y[i]));
        Self::new(self.x.select_rows(rows), y, self.x_bounds.clone(), self.y_bounds)
    }
}

pub(crate) fn check_interval((lo, hi): (f64, f64)) -> Result<()> {
    if !lo.is_finite() || !hi.is_finite() || lo > hi {
        return Err(Error::param(format!("invalid response bounds [{lo}, {hi}]")));
    }
    Ok(())
}

/// β̂^priv, σ̂²,priv and S^priv with the noise laws for re-simulation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrivatizedRegressionEstimate {
    pub beta_priv: Vec<f64>,
    pub sigma2_priv: f64,
    /// σ̂²,priv before the floor is applied.
    pub sigma2_raw: f64,
    /// (XᵀX + w₁)/n after PSD repair.
    pub s_priv: DMatrix<f64>,
    pub n: usize,
    pub ledger: PrivacyLedger,
    pub gram_noise: LaplaceSpec,
    pub cross_noise: LaplaceSpec,
    pub variance_noise: LaplaceSpec,
    pub repair: PsdRepair,
    #[serde(skip)]
    s_inv: DMatrix<f64>,
    #[serde(skip)]
    c_root: DMatrix<f64>,
}

impl PrivatizedRegressionEstimate {
    pub fn k(&self) -> usize {
        self.beta_priv.len()
    }
}

pub(crate) struct RegressionInputs<'a> {
    /// Clamped design of the coefficients being released.
    pub design: &'a DMatrix<f64>,
    pub design_bounds: &'a Bounds,
    /// Clamped response.
    pub y: &'a DVector<f64>,
    pub y_magnitude: f64,
    /// Degrees of freedom subtracted in the variance estimate.
    pub fitted_params: usize,
    pub ids: [&'a str; 3],
}

/// Privatized regression shared by the full and the nuisance-partial models.
/// `residuals` maps the released β̂^priv to the residual vector.
pub(crate) fn privatize_regression(
    inputs: RegressionInputs<'_>,
    budget: (Epsilon, Epsilon, Epsilon),
    residuals: impl Fn(&DVector<f64>) -> DVector<f64>,
    rng: &mut SimRng,
) -> Result<PrivatizedRegressionEstimate> {
    let RegressionInputs { design, design_bounds, y, y_magnitude, fitted_params, ids } = inputs;
    let (n, k) = design.shape();
    if n <= fitted_params {
        return Err(Error::param(format!("need n > {fitted_params}, got n={n}")));
    }
    let nf = n as f64;

    let gram_sens = sensitivity_gram_bounded(design_bounds.lower(), design_bounds.upper())?;
    let cross_sens = sensitivity_cross_bounded(design_bounds, y_magnitude)?;
    let gram_noise = LaplaceSpec::calibrated(&gram_sens, budget.0, k * (k + 1) / 2)?;
    let cross_noise = LaplaceSpec::calibrated(&cross_sens, budget.1, k)?;

    let w1 = laplace_symmetric(gram_noise.scale(), k, rng);
    let w2 = DVector::from_vec(laplace_sample(&cross_noise, rng));
    let (gram, repair) = psd_repair(&(design.transpose() * design + w1))?;
    if repair.degenerate {
        return Err(Error::numeric(format!(
            "noisy Gram matrix needed an eigenvalue shift of {:.3e}, beyond the repair budget",
            repair.shift
        )));
    }
    let gram_inv = invert(&gram)?;
    let beta = &gram_inv * (design.transpose() * y + w2);

    // Residuals are clipped to ±R with R public, so Δ₃ = R²/(n − p).
    let m = design_bounds.magnitudes();
    let r_bound = y_magnitude + m.iter().zip(beta.iter()).map(|(m, b)| m * b.abs()).sum::<f64>();
    let dof = (n - fitted_params) as f64;
    let rss: f64 = residuals(&beta).iter().map(|e| e.clamp(-r_bound, r_bound).powi(2)).sum();
    let var_sens = SensitivitySpec::user_supplied("variance", r_bound * r_bound / dof)?;
    let variance_noise = LaplaceSpec::calibrated(&var_sens, budget.2, 1)?;
    let w3 = laplace_sample(&variance_noise, rng)[0];
    let sigma2_raw = rss / dof + w3;
    let sigma2_priv = sigma2_raw.max(SIGMA2_FLOOR);

    let s_priv = gram / nf;
    let s_inv = invert(&s_priv)?;
    let c_root = sym_sqrt(&s_priv) * sigma2_priv.sqrt();

    let mut ledger = PrivacyLedger::default();
    for (id, eps) in ids.iter().zip([budget.0, budget.1, budget.2]) {
        ledger.record(id, eps)?;
    }

    Ok(PrivatizedRegressionEstimate {
        beta_priv: beta.iter().copied().collect(),
        sigma2_priv,
        sigma2_raw,
        s_priv,
        n,
        ledger,
        gram_noise,
        cross_noise,
        variance_noise,
        repair,
        s_inv,
        c_root,
    })
}

/// β̂^priv = (XᵀX + w₁)⁻¹(Xᵀy + w₂); σ̂²,priv from residuals plus w₃.
pub fn regression_private_mle(
    data: &RegressionData,
    budget: (Epsilon, Epsilon, Epsilon),
    rng: &mut SimRng,
) -> Result<PrivatizedRegressionEstimate> {
    let y_magnitude = data.y_bounds.0.abs().max(data.y_bounds.1.abs());
    let inputs = RegressionInputs {
        design: &data.x,
        design_bounds: &data.x_bounds,
        y: &data.y,
        y_magnitude,
        fitted_params: data.k(),
        ids: ["gram_xx", "cross_xy", "variance"],
    };
    privatize_regression(inputs, budget, |beta| &data.y - &data.x * beta, rng)
}

/// Bootstrap β̂*,priv without touching the design:
/// √n β* = √n M⁻¹ S β̂ + M⁻¹ (C* + w₂*/√n), M = S + w₁*/n, C* ~ N(0, σ̂² S).
///
/// A singular or badly indefinite M is retried once with a fresh w₁*.
pub fn regression_bootstrap_draw(
    est: &PrivatizedRegressionEstimate,
    noise: BootstrapNoise,
    rng: &mut SimRng,
) -> Result<Vec<f64>> {
    let k = est.k();
    let nf = est.n as f64;
    let beta = DVector::from_column_slice(&est.beta_priv);
    let c_star = normal_with_root(&est.c_root, rng);
    let resimulate = noise == BootstrapNoise::Include;
    let w2 = if resimulate {
        DVector::from_vec(laplace_sample(&est.cross_noise, rng))
    } else {
        DVector::zeros(k)
    };
    if !resimulate || est.gram_noise.is_degenerate() {
        return Ok((&beta + &est.s_inv * (c_star + w2 / nf.sqrt()) / nf.sqrt()).iter().copied().collect());
    }
    let mut last_err = None;
    for _ in 0..2 {
        let w1 = laplace_symmetric(est.gram_noise.scale(), k, rng);
        match perturbed_inverse(&est.s_priv, &w1, nf) {
            Ok(m_inv) => {
                let lead = &m_inv * (&est.s_priv * &beta);
                let tail = &m_inv * (&c_star + &w2 / nf.sqrt()) / nf.sqrt();
                return Ok((lead + tail).iter().copied().collect());
            }
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap_or_else(|| Error::numeric("bootstrap draw failed")))
}

fn perturbed_inverse(s: &DMatrix<f64>, w1: &DMatrix<f64>, nf: f64) -> Result<DMatrix<f64>> {
    let (m, repair) = psd_repair(&(s + w1 / nf))?;
    if repair.degenerate {
        return Err(Error::numeric("perturbed Gram matrix is degenerate"));
    }
    invert(&m)
}

impl ExtremaModel for PrivatizedRegressionEstimate {
    fn beta(&self) -> &[f64] {
        &self.beta_priv
    }

    fn sample_size(&self) -> usize {
        self.n
    }

    fn bootstrap_draw(&self, noise: BootstrapNoise, rng: &mut SimRng) -> Result<Vec<f64>> {
        regression_bootstrap_draw(self, noise, rng)
    }

    /// σ̂² [S⁻¹]_jj / n, plus the linearized Laplace contribution
    /// [S⁻¹ Cov(w₂ − w₁β) S⁻¹]_jj / n² when requested.
    fn coordinate_variances(&self, include_privacy_noise: bool) -> Vec<f64> {
        let k = self.k();
        let nf = self.n as f64;
        let mut var: Vec<f64> = (0..k).map(|j| self.sigma2_priv * self.s_inv[(j, j)] / nf).collect();
        if include_privacy_noise {
            let b = DVector::from_column_slice(&self.beta_priv);
            let g = self.gram_noise.variance();
            // Cov(w₁β) for symmetric w₁ with i.i.d. upper triangle
            let mut cov = (&b * b.transpose()) * g;
            let norm2 = b.norm_squared();
            for i in 0..k {
                cov[(i, i)] = g * norm2 + self.cross_noise.variance();
            }
            let total = &self.s_inv * cov * &self.s_inv;
            for (j, v) in var.iter_mut().enumerate() {
                *v += total[(j, j)] / (nf * nf);
            }
        }
        var
    }

    fn ledger(&self) -> &PrivacyLedger {
        &self.ledger
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn data() -> RegressionData {
        let x = DMatrix::from_row_slice(6, 2, &[1.0, 0.2, 1.0, -0.5, 1.0, 0.9, 1.0, -0.1, 1.0, 0.4, 1.0, -0.8]);
        let y = DVector::from_vec(vec![0.3, -0.2, 1.1, 0.0, 0.6, -0.9]);
        RegressionData::new(x, y, Bounds::uniform(-1.0, 1.0, 2).unwrap(), (-2.0, 2.0)).unwrap()
    }

    #[test]
    fn rejects_underdetermined() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let y = DVector::from_vec(vec![0.0, 1.0]);
        assert!(RegressionData::new(x, y, Bounds::uniform(-1.0, 1.0, 2).unwrap(), (-1.0, 1.0)).is_err());
    }

    #[test]
    fn identity_draw_without_noise() {
        let inf = Epsilon::INFINITE;
        let mut est = regression_private_mle(&data(), (inf, inf, inf), &mut substream(1, &[])).unwrap();
        est.c_root = DMatrix::zeros(2, 2);
        let draw = regression_bootstrap_draw(&est, BootstrapNoise::Include, &mut substream(2, &[])).unwrap();
        assert_eq!(draw, est.beta_priv);
    }

    #[test]
    fn zero_noise_draw_is_residual_bootstrap() {
        let inf = Epsilon::INFINITE;
        let est = regression_private_mle(&data(), (inf, inf, inf), &mut substream(1, &[])).unwrap();
        let mut rng = substream(4, &[]);
        let draw = regression_bootstrap_draw(&est, BootstrapNoise::Include, &mut rng).unwrap();
        let c = normal_with_root(&est.c_root, &mut substream(4, &[]));
        let nf = est.n as f64;
        let expect = DVector::from_column_slice(&est.beta_priv) + &est.s_inv * c / nf.sqrt();
        for (a, b) in draw.iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn ledger_charges_three_statistics() {
        let e = Epsilon::new(0.5).unwrap();
        let est = regression_private_mle(&data(), (e, e, e), &mut substream(1, &[]));
        // tiny n with unit box: the noisy Gram matrix may be hopeless; either way no panic
        if let Ok(est) = est {
            assert!((est.ledger.total() - 1.5).abs() < 1e-12);
        }
    }

    #[test]
    fn sigma2_clipped_at_floor() {
        let x = DMatrix::from_row_slice(5, 1, &[0.1, 0.2, 0.3, 0.4, 0.5]);
        let y = x.column(0) * 2.0;
        let d = RegressionData::new(x, y, Bounds::uniform(-1.0, 1.0, 1).unwrap(), (-2.0, 2.0)).unwrap();
        let inf = Epsilon::INFINITE;
        let est = regression_private_mle(&d, (inf, inf, inf), &mut substream(1, &[])).unwrap();
        assert!(est.sigma2_raw.abs() < 1e-20);
        assert_eq!(est.sigma2_priv, SIGMA2_FLOOR);
    }
}
