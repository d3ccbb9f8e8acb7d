//! Budget-saving estimators that privatize only the sufficient statistics the
//! parameter of interest depends on.
//!
//! Two families are covered: a Gaussian whose coordinates split into an
//! interest block x¹ and a nuisance block x², and a linear model
//! y = Zβ + Xγ + e with an orthogonal design (ZᵀX = 0), as in a randomized
//! trial. Nuisance quantities (μ̂₂, Σ̂₁₂, Σ̂₂₂, γ̂) are never part of a returned
//! value; only the interest block is released and charged.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{invert, psd_repair, PsdRepair};
use crate::models::gaussian::{privatize_gaussian, sufficient_statistics};
use crate::models::regression::{check_interval, privatize_regression, RegressionInputs};
use crate::models::{PrivatizedGaussianEstimate, PrivatizedRegressionEstimate};
use crate::privacy::{laplace_sample, laplace_symmetric, Bounds, Epsilon, LaplaceSpec, PrivacyLedger, SensitivitySpec};
use crate::privacy::{sensitivity_gram_bounded, sensitivity_sum_bounded};
use crate::rng::SimRng;

/// Relative tolerance on max |ZᵀX| (times n) for the orthogonal-design check.
pub const ORTHOGONALITY_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct PartitionedGaussianData {
    x1: DMatrix<f64>,
    x2: DMatrix<f64>,
    bounds1: Bounds,
    bounds2: Option<Bounds>,
}

impl PartitionedGaussianData {
    /// `x1` is clamped into `bounds1`; the nuisance block needs no bounds
    /// because it is never privatized.
    pub fn new(x1: DMatrix<f64>, x2: DMatrix<f64>, bounds1: Bounds) -> Result<Self> {
        if x1.nrows() != x2.nrows() {
            return Err(Error::param(format!("blocks have {} and {} rows", x1.nrows(), x2.nrows())));
        }
        if x1.ncols() == 0 {
            return Err(Error::param("interest block must have at least one coordinate"));
        }
        if x1.nrows() < 2 {
            return Err(Error::param("need at least 2 observations"));
        }
        let x1 = bounds1.clamp_rows(&x1)?;
        Ok(Self { x1, x2, bounds1, bounds2: None })
    }

    /// Bounds for the nuisance block, needed only by [`blockwise_gaussian_private_mle`].
    pub fn with_nuisance_bounds(mut self, bounds2: Bounds) -> Result<Self> {
        self.x2 = bounds2.clamp_rows(&self.x2)?;
        self.bounds2 = Some(bounds2);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.x1.nrows()
    }

    pub fn interest_dim(&self) -> usize {
        self.x1.ncols()
    }

    pub fn nuisance_dim(&self) -> usize {
        self.x2.ncols()
    }

    pub fn x1(&self) -> &DMatrix<f64> {
        &self.x1
    }

    pub fn x2(&self) -> &DMatrix<f64> {
        &self.x2
    }

    pub fn bounds1(&self) -> &Bounds {
        &self.bounds1
    }

    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        Ok(Self {
            x1: self.x1.select_rows(rows),
            x2: self.x2.select_rows(rows),
            bounds1: self.bounds1.clone(),
            bounds2: self.bounds2.clone(),
        })
    }
}

/// Noise only on Σx¹ and Σx¹(x¹)ᵀ; the estimate covers the interest block.
///
/// The bootstrap resamples x¹* of the block's sample size from
/// N(μ̂₁^priv, Σ̂₁₁^priv).
pub fn partial_gaussian_private_mle(
    data: &PartitionedGaussianData,
    budget: (Epsilon, Epsilon),
    rng: &mut SimRng,
) -> Result<PrivatizedGaussianEstimate> {
    privatize_gaussian(&data.x1, &data.bounds1, budget, ("sum_x1", "gram_x11"), rng)
}

/// Full release of every block statistic, for comparison with the partial
/// estimator. Charges sum_x1, gram_x11, sum_x2, gram_x12, gram_x22.
#[derive(Debug, Clone, Serialize)]
pub struct BlockwiseGaussianEstimate {
    /// The interest-block estimate, usable by the CI engine.
    pub interest: PrivatizedGaussianEstimate,
    pub mu_priv: Vec<f64>,
    pub sigma_priv: DMatrix<f64>,
    pub repair: PsdRepair,
    pub ledger: PrivacyLedger,
}

/// `budget` holds one ε per block statistic in the order
/// (sum_x1, gram_x11, sum_x2, gram_x12, gram_x22). The first two draws use
/// the same stream positions as [`partial_gaussian_private_mle`].
pub fn blockwise_gaussian_private_mle(
    data: &PartitionedGaussianData,
    budget: [Epsilon; 5],
    rng: &mut SimRng,
) -> Result<BlockwiseGaussianEstimate> {
    let bounds2 = data
        .bounds2
        .as_ref()
        .ok_or_else(|| Error::param("sensitivity undefined without bounds for the nuisance block"))?;
    let interest = privatize_gaussian(&data.x1, &data.bounds1, (budget[0], budget[1]), ("sum_x1", "gram_x11"), rng)?;
    let (k1, k2, n) = (data.interest_dim(), data.nuisance_dim(), data.n());
    let nf = n as f64;

    let sum2_noise = LaplaceSpec::calibrated(&sensitivity_sum_bounded(bounds2.lower(), bounds2.upper())?, budget[2], k2.max(1))?;
    let m1: f64 = data.bounds1.magnitudes().iter().sum();
    let m2: f64 = bounds2.magnitudes().iter().sum();
    let cross_sens = SensitivitySpec::user_supplied("gram_x12", 2.0 * m1 * m2)?;
    let cross_noise = LaplaceSpec::calibrated(&cross_sens, budget[3], (k1 * k2).max(1))?;
    let gram22_noise = LaplaceSpec::calibrated(&sensitivity_gram_bounded(bounds2.lower(), bounds2.upper())?, budget[4], 1)?;

    let (sum2, gram22) = sufficient_statistics(&data.x2);
    let sum2 = sum2 + DVector::from_vec(laplace_sample(&sum2_noise, rng)[..k2].to_vec());
    let w12 = laplace_sample(&cross_noise, rng);
    let gram12 = data.x1.transpose() * &data.x2 + DMatrix::from_row_slice(k1, k2, &w12[..k1 * k2]);
    let gram22 = gram22 + laplace_symmetric(gram22_noise.scale(), k2, rng);

    let sum1 = DVector::from_column_slice(&interest.mu_priv) * nf;
    let sum = DVector::from_iterator(k1 + k2, sum1.iter().chain(sum2.iter()).copied());
    let mut sigma = DMatrix::zeros(k1 + k2, k1 + k2);
    sigma.view_mut((0, 0), (k1, k1)).copy_from(&interest.sigma_priv);
    let outer = &sum * sum.transpose() / (nf * (nf - 1.0));
    let s12 = gram12 / (nf - 1.0) - outer.view((0, k1), (k1, k2));
    let s22 = gram22 / (nf - 1.0) - outer.view((k1, k1), (k2, k2));
    sigma.view_mut((0, k1), (k1, k2)).copy_from(&s12);
    sigma.view_mut((k1, 0), (k2, k1)).copy_from(&s12.transpose());
    sigma.view_mut((k1, k1), (k2, k2)).copy_from(&s22);
    let (sigma_priv, repair) = psd_repair(&sigma)?;

    let mut ledger = interest.ledger.clone();
    ledger.record("sum_x2", budget[2])?;
    ledger.record("gram_x12", budget[3])?;
    ledger.record("gram_x22", budget[4])?;

    Ok(BlockwiseGaussianEstimate {
        mu_priv: sum.iter().map(|s| s / nf).collect(),
        interest,
        sigma_priv,
        repair,
        ledger,
    })
}

#[derive(Debug, Clone)]
pub struct NuisanceRegressionData {
    z: DMatrix<f64>,
    x: DMatrix<f64>,
    y: DVector<f64>,
    z_bounds: Bounds,
    y_bounds: (f64, f64),
}

impl NuisanceRegressionData {
    /// Clamps Z and y, then requires max |ZᵀX| ≤ 1e-8·n.
    pub fn new(z: DMatrix<f64>, x: DMatrix<f64>, y: DVector<f64>, z_bounds: Bounds, y_bounds: (f64, f64)) -> Result<Self> {
        let n = z.nrows();
        if x.nrows() != n || y.len() != n {
            return Err(Error::param("Z, X and y must have the same number of rows"));
        }
        if n <= z.ncols() + x.ncols() {
            return Err(Error::param(format!("need n > k1 + k2 (n={n}, k1={}, k2={})", z.ncols(), x.ncols())));
        }
        check_interval(y_bounds)?;
        let z = z_bounds.clamp_rows(&z)?;
        let y = y.map(|v| v.clamp(y_bounds.0, y_bounds.1));
        let data = Self { z, x, y, z_bounds, y_bounds };
        let cross = data.max_cross();
        if cross > ORTHOGONALITY_TOLERANCE * n as f64 {
            return Err(Error::param(format!(
                "interest and nuisance designs are not orthogonal: max |ZᵀX| = {cross:.3e}"
            )));
        }
        Ok(data)
    }

    pub fn max_cross(&self) -> f64 {
        if self.x.ncols() == 0 {
            return 0.0;
        }
        (self.z.transpose() * &self.x).amax()
    }

    pub fn n(&self) -> usize {
        self.z.nrows()
    }

    pub fn k1(&self) -> usize {
        self.z.ncols()
    }

    pub fn k2(&self) -> usize {
        self.x.ncols()
    }

    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    /// Row subset. Orthogonality is not re-checked: folds of an orthogonal
    /// design are only approximately orthogonal.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        if rows.len() <= self.k1() + self.k2() {
            return Err(Error::param("subset too small for the regression"));
        }
        Ok(Self {
            z: self.z.select_rows(rows),
            x: self.x.select_rows(rows),
            y: DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.y[i])),
            z_bounds: self.z_bounds.clone(),
            y_bounds: self.y_bounds,
        })
    }
}

/// β̂^priv = (ZᵀZ + w₁)⁻¹(Zᵀy + w₂); γ̂ is fitted without noise and used only
/// inside the residual variance, which gets its own noise w₃.
pub fn partial_regression_private_mle(
    data: &NuisanceRegressionData,
    budget: (Epsilon, Epsilon, Epsilon),
    rng: &mut SimRng,
) -> Result<PrivatizedRegressionEstimate> {
    let nuisance_fit = if data.k2() > 0 {
        let xtx_inv = invert(&(data.x.transpose() * &data.x))?;
        Some(&data.x * (xtx_inv * (data.x.transpose() * &data.y)))
    } else {
        None
    };
    let y_magnitude = data.y_bounds.0.abs().max(data.y_bounds.1.abs());
    let inputs = RegressionInputs {
        design: &data.z,
        design_bounds: &data.z_bounds,
        y: &data.y,
        y_magnitude,
        fitted_params: data.k1() + data.k2(),
        ids: ["gram_zz", "cross_zy", "variance"],
    };
    privatize_regression(
        inputs,
        budget,
        |beta| {
            let r = &data.y - &data.z * beta;
            match &nuisance_fit {
                Some(fit) => r - fit,
                None => r,
            }
        },
        rng,
    )
}

/// Bootstrap draw for the nuisance-partial model; γ̂ is held fixed, so this is
/// the same transform as the full regression draw with S built from ZᵀZ.
pub fn partial_regression_bootstrap_draw(
    est: &PrivatizedRegressionEstimate,
    noise: crate::models::BootstrapNoise,
    rng: &mut SimRng,
) -> Result<Vec<f64>> {
    crate::models::regression_bootstrap_draw(est, noise, rng)
}
