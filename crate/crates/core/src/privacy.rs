//! Laplace mechanism, sensitivity bookkeeping and budget composition.
//!
//! Data bounds are mandatory: raw observations are clamped into a declared box
//! before any sufficient statistic is formed, and the L1 sensitivities below
//! are computed from that box. An infinite budget is a supported sentinel that
//! turns every mechanism into the identity (no noise, no charge).

use std::fmt;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;

/// A privacy budget. `Epsilon::INFINITE` means "do not privatize".
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Epsilon(f64);

impl Epsilon {
    pub const INFINITE: Epsilon = Epsilon(f64::INFINITY);

    pub fn new(value: f64) -> Result<Self> {
        if value.is_nan() || value <= 0.0 {
            return Err(Error::param(format!("epsilon must be positive, got {value}")));
        }
        Ok(Epsilon(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }

    /// Split a total budget into `weights.len()` parts proportional to `weights`.
    pub fn split(self, weights: &[f64]) -> Result<Vec<Epsilon>> {
        if weights.is_empty() {
            return Err(Error::param("budget split needs at least one share"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
            return Err(Error::param("budget split shares must be positive and finite"));
        }
        let total: f64 = weights.iter().sum();
        weights
            .iter()
            .map(|w| if self.is_infinite() { Ok(Epsilon::INFINITE) } else { Epsilon::new(self.0 * w / total) })
            .collect()
    }

    /// Equal division over `parts` statistics.
    pub fn split_equal(self, parts: usize) -> Result<Vec<Epsilon>> {
        self.split(&vec![1.0; parts])
    }
}

impl fmt::Display for Epsilon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            write!(f, "inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl std::str::FromStr for Epsilon {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if matches!(t.to_ascii_lowercase().as_str(), "inf" | "infinity" | "none") {
            return Ok(Epsilon::INFINITE);
        }
        let v: f64 = t.parse().map_err(|_| Error::param(format!("cannot parse epsilon {s:?}")))?;
        Epsilon::new(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Derivation {
    UserSupplied,
    BoundDerived,
}

/// L1 sensitivity of one released statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivitySpec {
    pub statistic_id: String,
    pub delta: f64,
    pub derivation: Derivation,
}

impl SensitivitySpec {
    pub fn user_supplied(statistic_id: impl Into<String>, delta: f64) -> Result<Self> {
        check_delta(delta)?;
        Ok(Self { statistic_id: statistic_id.into(), delta, derivation: Derivation::UserSupplied })
    }

    fn derived(statistic_id: &str, delta: f64) -> Result<Self> {
        check_delta(delta)?;
        Ok(Self { statistic_id: statistic_id.to_string(), delta, derivation: Derivation::BoundDerived })
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !delta.is_finite() || delta < 0.0 {
        return Err(Error::param(format!("sensitivity must be finite and nonnegative, got {delta}")));
    }
    Ok(())
}

/// Axis-aligned box that data are clamped into.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::param(format!(
                "bounds have {} lower and {} upper entries",
                lower.len(),
                upper.len()
            )));
        }
        if lower.is_empty() {
            return Err(Error::param("bounds must cover at least one coordinate"));
        }
        for (j, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::param(format!("bound {j} is unbounded")));
            }
            if lo > hi {
                return Err(Error::param(format!("bound {j} is inverted: {lo} > {hi}")));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The same interval on every one of `dim` coordinates.
    pub fn uniform(lo: f64, hi: f64, dim: usize) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// max(|lower_j|, |upper_j|) per coordinate.
    pub fn magnitudes(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| l.abs().max(u.abs())).collect()
    }

    pub fn clamp(&self, j: usize, v: f64) -> f64 {
        v.clamp(self.lower[j], self.upper[j])
    }

    pub fn clamp_rows(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.dim() {
            return Err(Error::param(format!("data have {} columns but bounds cover {}", x.ncols(), self.dim())));
        }
        Ok(DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| self.clamp(j, x[(i, j)])))
    }

    /// Restrict to a contiguous range of coordinates.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Self> {
        Self::new(self.lower[range.clone()].to_vec(), self.upper[range].to_vec())
    }
}

/// Sensitivity of Σ x_i over clamped data: the L1 diameter of the box.
pub fn sensitivity_sum_bounded(lower: &[f64], upper: &[f64]) -> Result<SensitivitySpec> {
    let b = Bounds::new(lower.to_vec(), upper.to_vec())?;
    let delta = b.lower.iter().zip(&b.upper).map(|(l, u)| u - l).sum();
    SensitivitySpec::derived("sum", delta)
}

/// Conservative sensitivity of Σ x_i x_iᵀ over clamped data:
/// ‖xxᵀ − x'x'ᵀ‖₁ ≤ ‖x‖₁² + ‖x'‖₁² ≤ 2 (Σ_j m_j)².
pub fn sensitivity_gram_bounded(lower: &[f64], upper: &[f64]) -> Result<SensitivitySpec> {
    let b = Bounds::new(lower.to_vec(), upper.to_vec())?;
    let m: f64 = b.magnitudes().iter().sum();
    SensitivitySpec::derived("gram", 2.0 * m * m)
}

/// Sensitivity of Σ x_i y_i with x in a box and |y| ≤ `y_magnitude`.
pub fn sensitivity_cross_bounded(x: &Bounds, y_magnitude: f64) -> Result<SensitivitySpec> {
    let m: f64 = x.magnitudes().iter().sum();
    SensitivitySpec::derived("cross", 2.0 * m * y_magnitude.abs())
}

/// Laplace noise with scale b = Δ/ε over `dimension` i.i.d. coordinates.
///
/// A scale of exactly zero is the degenerate "no noise" mechanism; it arises
/// only from an infinite budget or a zero sensitivity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplaceSpec {
    scale: f64,
    dimension: usize,
}

impl LaplaceSpec {
    pub fn new(scale: f64, dimension: usize) -> Result<Self> {
        if !scale.is_finite() || scale <= 0.0 {
            return Err(Error::param(format!("Laplace scale must be positive and finite, got {scale}")));
        }
        if dimension == 0 {
            return Err(Error::param("Laplace dimension must be positive"));
        }
        Ok(Self { scale, dimension })
    }

    pub fn calibrated(sensitivity: &SensitivitySpec, epsilon: Epsilon, dimension: usize) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::param("Laplace dimension must be positive"));
        }
        let scale = if epsilon.is_infinite() { 0.0 } else { sensitivity.delta / epsilon.value() };
        if !scale.is_finite() {
            return Err(Error::param(format!("Laplace scale {scale} is not finite")));
        }
        Ok(Self { scale, dimension })
    }

    pub fn zero(dimension: usize) -> Self {
        Self { scale: 0.0, dimension }
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn variance(&self) -> f64 {
        2.0 * self.scale * self.scale
    }

    pub fn is_degenerate(&self) -> bool {
        self.scale == 0.0
    }
}

fn laplace_one(scale: f64, rng: &mut SimRng) -> f64 {
    // inverse CDF on u ∈ [-1/2, 1/2)
    let u: f64 = rng.random::<f64>() - 0.5;
    let tail = 1.0 - 2.0 * u.abs();
    let mag = if tail > 0.0 { -tail.ln() } else { 745.0 };
    scale * mag * u.signum()
}

/// Draw `spec.dimension()` i.i.d. Laplace(0, b) values.
pub fn laplace_sample(spec: &LaplaceSpec, rng: &mut SimRng) -> Vec<f64> {
    if spec.is_degenerate() {
        return vec![0.0; spec.dimension];
    }
    (0..spec.dimension).map(|_| laplace_one(spec.scale, rng)).collect()
}

/// Symmetric k×k noise: i.i.d. draws on the upper triangle, mirrored below.
pub fn laplace_symmetric(scale: f64, k: usize, rng: &mut SimRng) -> DMatrix<f64> {
    let mut w = DMatrix::zeros(k, k);
    if scale == 0.0 {
        return w;
    }
    for i in 0..k {
        for j in i..k {
            let v = laplace_one(scale, rng);
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
    }
    w
}

/// CDF of Laplace(0, b).
pub fn laplace_cdf(x: f64, scale: f64) -> f64 {
    if x < 0.0 {
        0.5 * (x / scale).exp()
    } else {
        1.0 - 0.5 * (-x / scale).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Composition {
    Sequential,
    Parallel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Charge {
    pub statistic_id: String,
    pub epsilon: f64,
}

/// Ordered log of budget charges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyLedger {
    charges: Vec<Charge>,
    regime: Composition,
}

impl Default for PrivacyLedger {
    fn default() -> Self {
        Self::new(Composition::Sequential)
    }
}

impl PrivacyLedger {
    pub fn new(regime: Composition) -> Self {
        Self { charges: Vec::new(), regime }
    }

    pub fn regime(&self) -> Composition {
        self.regime
    }

    pub fn charges(&self) -> &[Charge] {
        &self.charges
    }

    /// Append a charge. Infinite budgets are not recorded; charging the same
    /// statistic twice is a double spend and is rejected.
    pub fn charge(mut self, statistic_id: &str, epsilon: Epsilon) -> Result<Self> {
        self.record(statistic_id, epsilon)?;
        Ok(self)
    }

    pub(crate) fn record(&mut self, statistic_id: &str, epsilon: Epsilon) -> Result<()> {
        if epsilon.is_infinite() {
            return Ok(());
        }
        if self.charges.iter().any(|c| c.statistic_id == statistic_id) {
            return Err(Error::Logic(format!("statistic {statistic_id:?} charged twice")));
        }
        self.charges.push(Charge { statistic_id: statistic_id.to_string(), epsilon: epsilon.value() });
        Ok(())
    }

    /// Total under this ledger's own regime.
    pub fn total(&self) -> f64 {
        self.total_under(self.regime)
    }

    pub fn total_under(&self, regime: Composition) -> f64 {
        match regime {
            Composition::Sequential => self.charges.iter().map(|c| c.epsilon).sum(),
            Composition::Parallel => self.charges.iter().map(|c| c.epsilon).fold(0.0, f64::max),
        }
    }

    /// Fold another ledger's charges in under a label prefix.
    pub(crate) fn absorb(&mut self, prefix: &str, other: &PrivacyLedger) -> Result<()> {
        for c in &other.charges {
            self.record(&format!("{prefix}/{}", c.statistic_id), Epsilon(c.epsilon))?;
        }
        Ok(())
    }
}
