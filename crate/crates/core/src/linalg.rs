//! Small dense linear-algebra helpers: PSD repair and symmetric square roots.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Relative eigenvalue floor: eigenvalues are clipped below at this times trace/k.
pub const PSD_FLOOR_RELATIVE: f64 = 1e-8;
/// Total eigenvalue shift, as a fraction of |trace|, tolerated before the repair
/// is flagged as degenerate.
pub const REPAIR_BUDGET_RELATIVE: f64 = 0.10;

/// Outcome of projecting a noisy symmetric matrix onto the PSD cone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsdRepair {
    /// Sum of upward eigenvalue shifts.
    pub shift: f64,
    /// True when the shift exceeded the repair budget.
    pub degenerate: bool,
}

/// Symmetrize, then clip eigenvalues below at `1e-8 · trace/k`.
///
/// Returns the input unchanged (bit for bit) when no eigenvalue is below the floor.
pub fn psd_repair(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, PsdRepair)> {
    let k = m.nrows();
    if k == 0 || m.ncols() != k {
        return Err(Error::numeric("PSD repair needs a non-empty square matrix"));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("matrix has non-finite entries"));
    }
    let sym = (m + m.transpose()) * 0.5;
    let trace = sym.trace();
    let scale = (trace.abs() / k as f64).max(f64::MIN_POSITIVE);
    let floor = PSD_FLOOR_RELATIVE * scale;
    let eig = SymmetricEigen::new(sym.clone());
    let shift: f64 = eig.eigenvalues.iter().map(|&l| (floor - l).max(0.0)).sum();
    if shift == 0.0 && trace > 0.0 {
        return Ok((sym, PsdRepair { shift: 0.0, degenerate: false }));
    }
    let clipped = eig.eigenvalues.map(|l| l.max(floor));
    let repaired = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    let repaired = (&repaired + repaired.transpose()) * 0.5;
    let degenerate = trace <= 0.0 || shift > REPAIR_BUDGET_RELATIVE * trace.abs();
    Ok((repaired, PsdRepair { shift, degenerate }))
}

/// Symmetric PSD square root R with R·R = M (eigenvalues below zero treated as zero).
pub fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new((m + m.transpose()) * 0.5);
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

pub fn invert(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let inv = m.clone().try_inverse().ok_or_else(|| Error::numeric("matrix is singular"))?;
    if inv.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("matrix inverse is not finite"));
    }
    Ok(inv)
}

/// Draw N(0, R Rᵀ) given a square root `root`.
pub fn normal_with_root(root: &DMatrix<f64>, rng: &mut SimRng) -> DVector<f64> {
    let z = DVector::from_fn(root.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal));
    root * z
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn repair_is_noop_on_pd_input() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let (r, info) = psd_repair(&m).unwrap();
        assert_eq!(r, m);
        assert_eq!(info.shift, 0.0);
        assert!(!info.degenerate);
    }

    #[test]
    fn repair_lifts_negative_eigenvalue() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]); // eigenvalues 3, -1
        let (r, info) = psd_repair(&m).unwrap();
        let eig = SymmetricEigen::new(r.clone());
        assert!(eig.eigenvalues.min() > 0.0);
        assert!((info.shift - 1.0).abs() < 1e-6);
        assert!(info.degenerate);
    }

    #[test]
    fn sqrt_squares_back() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let r = sym_sqrt(&m);
        assert!((&r * &r - &m).abs().max() < 1e-12);
    }

    #[test]
    fn sampled_covariance_matches() {
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]);
        let root = sym_sqrt(&cov);
        let mut rng = substream(3, &[]);
        let n = 40_000;
        let mut acc = DMatrix::zeros(2, 2);
        for _ in 0..n {
            let z = normal_with_root(&root, &mut rng);
            acc += &z * z.transpose();
        }
        acc /= n as f64;
        assert!((acc - cov).abs().max() < 0.06);
    }
}
