//! Differentially private confidence limits for the maximum of several
//! parameters.
//!
//! Sufficient statistics are released through the Laplace mechanism, and a
//! privatized parametric bootstrap with a bias correction `d_j` calibrates a
//! one-sided lower limit for `max_j β_j`. Gaussian means, linear regression
//! coefficients and their partially private variants are supported.
//!
//! ```
//! use extrema_dp::{gaussian_private_mle, ppb_lower_limit, substream, Bounds, Epsilon, GaussianData, PpbOptions, Tuning};
//! use nalgebra::DMatrix;
//!
//! let x = DMatrix::from_fn(400, 2, |i, j| ((i * 7 + j * 3) % 11) as f64 / 10.0 - 0.5);
//! let data = GaussianData::new(x, Bounds::uniform(-1.0, 1.0, 2).unwrap()).unwrap();
//! let budget = Epsilon::new(1.5).unwrap().split_equal(2).unwrap();
//! let mut rng = substream(42, &[]);
//! let est = gaussian_private_mle(&data, (budget[0], budget[1]), &mut rng).unwrap();
//! let ci = ppb_lower_limit(&est, Tuning::R(0.1), PpbOptions::default(), &mut rng).unwrap();
//! assert!(ci.lower_limit <= ci.beta_max);
//! ```

pub mod ci;
pub mod cv;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod models;
pub mod partial;
pub mod privacy;
pub mod rng;

pub use ci::{
    bias_correction, bias_reduced_estimate, bonferroni_lower_limit, bootstrap_statistic, naive_lower_limit,
    ppb_lower_limit, quantile, BiasCorrection, ConfidenceResult, Method, PpbOptions, Tuning,
};
pub use cv::{cv_choose_r, BudgetHandling, CvConfig, CvResult};
pub use dataset::{Dataset, FittedModel, ModelKind};
pub use error::{Error, Result};
pub use harness::{emit_plot_data, run_experiment, ExperimentConfig, ExperimentReport, PlotAxis};
pub use models::{
    gaussian_private_mle, regression_private_mle, BootstrapNoise, ExtremaModel, GaussianData,
    PrivatizedGaussianEstimate, PrivatizedRegressionEstimate, RegressionData, ResampleMode,
};
pub use partial::{
    blockwise_gaussian_private_mle, partial_gaussian_private_mle, partial_regression_private_mle,
    NuisanceRegressionData, PartitionedGaussianData,
};
pub use privacy::{Bounds, Composition, Epsilon, LaplaceSpec, PrivacyLedger, SensitivitySpec};
pub use rng::{substream, SimRng};
