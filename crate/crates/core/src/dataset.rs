//! Model-agnostic dispatch over the supported data layouts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{
    gaussian_private_mle, regression_private_mle, BootstrapNoise, ExtremaModel, GaussianData,
    PrivatizedGaussianEstimate, PrivatizedRegressionEstimate, RegressionData,
};
use crate::partial::{
    partial_gaussian_private_mle, partial_regression_private_mle, NuisanceRegressionData, PartitionedGaussianData,
};
use crate::privacy::{Epsilon, PrivacyLedger};
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Gaussian,
    Regression,
    PartialGaussian,
    PartialRegression,
}

impl ModelKind {
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Gaussian => "gaussian",
            ModelKind::Regression => "regression",
            ModelKind::PartialGaussian => "partial_gaussian",
            ModelKind::PartialRegression => "partial_regression",
        }
    }

    /// Number of privatized statistics the total budget is split over.
    pub fn statistic_count(self) -> usize {
        match self {
            ModelKind::Gaussian | ModelKind::PartialGaussian => 2,
            ModelKind::Regression | ModelKind::PartialRegression => 3,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Dataset {
    Gaussian(GaussianData),
    Regression(RegressionData),
    PartialGaussian(PartitionedGaussianData),
    PartialRegression(NuisanceRegressionData),
}

#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum FittedModel {
    Gaussian(PrivatizedGaussianEstimate),
    Regression(PrivatizedRegressionEstimate),
}

impl FittedModel {
    fn inner(&self) -> &dyn ExtremaModel {
        match self {
            FittedModel::Gaussian(e) => e,
            FittedModel::Regression(e) => e,
        }
    }
}

impl ExtremaModel for FittedModel {
    fn beta(&self) -> &[f64] {
        self.inner().beta()
    }

    fn sample_size(&self) -> usize {
        self.inner().sample_size()
    }

    fn bootstrap_draw(&self, noise: BootstrapNoise, rng: &mut SimRng) -> Result<Vec<f64>> {
        self.inner().bootstrap_draw(noise, rng)
    }

    fn coordinate_variances(&self, include_privacy_noise: bool) -> Vec<f64> {
        self.inner().coordinate_variances(include_privacy_noise)
    }

    fn ledger(&self) -> &PrivacyLedger {
        self.inner().ledger()
    }
}

impl Dataset {
    pub fn kind(&self) -> ModelKind {
        match self {
            Dataset::Gaussian(_) => ModelKind::Gaussian,
            Dataset::Regression(_) => ModelKind::Regression,
            Dataset::PartialGaussian(_) => ModelKind::PartialGaussian,
            Dataset::PartialRegression(_) => ModelKind::PartialRegression,
        }
    }

    pub fn n(&self) -> usize {
        match self {
            Dataset::Gaussian(d) => d.n(),
            Dataset::Regression(d) => d.n(),
            Dataset::PartialGaussian(d) => d.n(),
            Dataset::PartialRegression(d) => d.n(),
        }
    }

    /// Number of parameters of interest.
    pub fn interest_dim(&self) -> usize {
        match self {
            Dataset::Gaussian(d) => d.k(),
            Dataset::Regression(d) => d.k(),
            Dataset::PartialGaussian(d) => d.interest_dim(),
            Dataset::PartialRegression(d) => d.k1(),
        }
    }

    /// Smallest number of rows a model of this shape can be fitted on.
    pub fn min_rows(&self) -> usize {
        match self {
            Dataset::Gaussian(_) | Dataset::PartialGaussian(_) => 2,
            Dataset::Regression(d) => d.k() + 1,
            Dataset::PartialRegression(d) => d.k1() + d.k2() + 1,
        }
    }

    pub fn subset(&self, rows: &[usize]) -> Result<Dataset> {
        Ok(match self {
            Dataset::Gaussian(d) => Dataset::Gaussian(d.subset(rows)?),
            Dataset::Regression(d) => Dataset::Regression(d.subset(rows)?),
            Dataset::PartialGaussian(d) => Dataset::PartialGaussian(d.subset(rows)?),
            Dataset::PartialRegression(d) => Dataset::PartialRegression(d.subset(rows)?),
        })
    }

    /// Fit the privatized estimator with `epsilon` split over the model's
    /// statistics (equal shares unless `split` is given).
    pub fn fit(&self, epsilon: Epsilon, split: Option<&[f64]>, rng: &mut SimRng) -> Result<FittedModel> {
        let count = self.kind().statistic_count();
        let parts = match split {
            Some(w) if w.len() != count => {
                return Err(Error::param(format!(
                    "{} budget split needs {count} shares, got {}",
                    self.kind().label(),
                    w.len()
                )))
            }
            Some(w) => epsilon.split(w)?,
            None => epsilon.split_equal(count)?,
        };
        Ok(match self {
            Dataset::Gaussian(d) => FittedModel::Gaussian(gaussian_private_mle(d, (parts[0], parts[1]), rng)?),
            Dataset::PartialGaussian(d) => {
                FittedModel::Gaussian(partial_gaussian_private_mle(d, (parts[0], parts[1]), rng)?)
            }
            Dataset::Regression(d) => {
                FittedModel::Regression(regression_private_mle(d, (parts[0], parts[1], parts[2]), rng)?)
            }
            Dataset::PartialRegression(d) => {
                FittedModel::Regression(partial_regression_private_mle(d, (parts[0], parts[1], parts[2]), rng)?)
            }
        })
    }
}
