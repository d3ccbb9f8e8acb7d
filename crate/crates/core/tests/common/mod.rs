//! Closed-form zero-noise oracles shared by the oracle and acceptance suites.
//! They use a two-pass covariance and QR least squares, not the sufficient
//! statistics and normal equations of the estimators.

use extrema_dp::{gaussian_private_mle, regression_private_mle, substream, Bounds, Epsilon, GaussianData, RegressionData};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub const REL_TOL: f64 = 1e-10;

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / norm
}

pub fn two_pass_moments(x: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let (n, k) = x.shape();
    let mean: Vec<f64> = (0..k).map(|j| (0..n).map(|i| x[(i, j)]).sum::<f64>() / n as f64).collect();
    let mut cov = vec![0.0; k * k];
    for a in 0..k {
        for b in 0..k {
            cov[a * k + b] = (0..n).map(|i| (x[(i, a)] - mean[a]) * (x[(i, b)] - mean[b])).sum::<f64>() / (n - 1) as f64;
        }
    }
    (mean, cov)
}

pub fn qr_least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> (DVector<f64>, f64) {
    let (n, k) = x.shape();
    let qr = x.clone().qr();
    let qty = qr.q().transpose() * y;
    let beta = qr.r().solve_upper_triangular(&qty).unwrap();
    let sigma2 = (y - x * &beta).norm_squared() / (n - k) as f64;
    (beta, sigma2)
}

/// Random full-rank Gaussian instance `inst`, fitted at ε=∞ and compared
/// with the two-pass oracle.
pub fn check_gaussian_instance(inst: u64) -> Result<(), String> {
    let mut rng = substream(1000 + inst, &[]);
    let k = rng.random_range(1..=4);
    // n > k keeps the sample covariance full rank, so the eigenvalue floor stays inactive
    let n = rng.random_range(k + 1..=50);
    let centers: Vec<f64> = (0..k).map(|_| rng.random_range(1.0..4.0)).collect();
    let x = DMatrix::from_fn(n, k, |_, j| centers[j] + rng.random_range(-1.0..1.0));
    let bounds = Bounds::uniform(-10.0, 10.0, k).unwrap();
    let inf = Epsilon::INFINITE;
    let est = gaussian_private_mle(&GaussianData::new(x.clone(), bounds).unwrap(), (inf, inf), &mut rng)
        .map_err(|e| format!("instance {inst}: {e}"))?;
    let (mean, cov) = two_pass_moments(&x);
    let est_cov: Vec<f64> = (0..k * k).map(|i| est.sigma_priv[(i / k, i % k)]).collect();
    let (em, ec) = (rel_err(&est.mu_priv, &mean), rel_err(&est_cov, &cov));
    if em >= REL_TOL || ec >= REL_TOL {
        return Err(format!("instance {inst}: mean error {em:e}, covariance error {ec:e}"));
    }
    if est.ledger.total() != 0.0 {
        return Err(format!("instance {inst}: ledger charged at ε=∞"));
    }
    Ok(())
}

/// Random regression instance `inst`, fitted at ε=∞ and compared with QR OLS.
pub fn check_regression_instance(inst: u64) -> Result<(), String> {
    let mut rng = substream(2000 + inst, &[]);
    let k = rng.random_range(1..=4);
    let n = rng.random_range(k + 2..=50);
    let beta: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
    let x = DMatrix::from_fn(n, k, |_, _| rng.random_range(-1.0..1.0));
    let y = DVector::from_fn(n, |i, _| (0..k).map(|j| x[(i, j)] * beta[j]).sum::<f64>() + rng.random_range(-1.0..1.0));
    let data = RegressionData::new(x.clone(), y.clone(), Bounds::uniform(-1.0, 1.0, k).unwrap(), (-20.0, 20.0)).unwrap();
    let inf = Epsilon::INFINITE;
    let est = regression_private_mle(&data, (inf, inf, inf), &mut rng).map_err(|e| format!("instance {inst}: {e}"))?;
    let (ols, sigma2) = qr_least_squares(&x, &y);
    let s = x.transpose() * &x / n as f64;
    let errs = [
        rel_err(&est.beta_priv, ols.as_slice()),
        (est.sigma2_priv - sigma2).abs() / sigma2,
        rel_err(est.s_priv.as_slice(), s.as_slice()),
    ];
    if errs.iter().any(|e| *e >= REL_TOL) {
        return Err(format!("instance {inst}: beta/sigma2/S errors {errs:?}"));
    }
    Ok(())
}
