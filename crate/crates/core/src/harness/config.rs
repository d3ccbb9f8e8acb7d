use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize};

use crate::ci::{Tuning, DEFAULT_DRAWS};
use crate::cv::CvConfig;
use crate::dataset::ModelKind;
use crate::error::{Error, Result};
use crate::privacy::Epsilon;

/// One method evaluated in every replication.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MethodSpec {
    /// Privatized parametric bootstrap at a fixed tuning.
    Ppb(Tuning),
    /// Bootstrap with r = 1/2 (no bias correction).
    SemiNaive,
    /// Bootstrap without re-simulated privatization noise.
    Rppb(Tuning),
    /// Bootstrap at the cross-validated tuning.
    PpbCv,
    Naive { private: bool },
    Bonferroni { private: bool },
}

impl MethodSpec {
    pub fn label(&self) -> &'static str {
        match self {
            MethodSpec::Ppb(_) | MethodSpec::PpbCv => "ppb",
            MethodSpec::SemiNaive => "semi_naive",
            MethodSpec::Rppb(_) => "rppb",
            MethodSpec::Naive { private: true } => "naive_private",
            MethodSpec::Naive { private: false } => "naive_nonprivate",
            MethodSpec::Bonferroni { private: true } => "bonferroni_private",
            MethodSpec::Bonferroni { private: false } => "bonferroni_nonprivate",
        }
    }

    /// Text for the report's `r` column.
    pub fn r_label(&self) -> String {
        match self {
            MethodSpec::Ppb(t) | MethodSpec::Rppb(t) => t.to_string(),
            MethodSpec::SemiNaive => "0.5".into(),
            MethodSpec::PpbCv => "cv".into(),
            _ => String::new(),
        }
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MethodSpec::Ppb(t) => write!(f, "ppb:{t}"),
            MethodSpec::Rppb(t) => write!(f, "rppb:{t}"),
            MethodSpec::PpbCv => write!(f, "cv"),
            other => write!(f, "{}", other.label()),
        }
    }
}

impl FromStr for MethodSpec {
    type Err = Error;

    /// `ppb:<r>`, `rppb:<r>`, `cv`, `semi_naive`, `naive[_private|_nonprivate]`,
    /// `bonferroni[_private|_nonprivate]`. `<r>` accepts `1/10`, `0.1`, `full`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h.trim(), Some(a.trim())),
            None => (s, None),
        };
        let tuning = || -> Result<Tuning> {
            arg.ok_or_else(|| Error::Config(format!("method {s:?} needs a tuning value, e.g. {head}:1/10")))?
                .parse()
        };
        let plain = |m: MethodSpec| {
            if arg.is_some() {
                Err(Error::Config(format!("method {head:?} takes no argument")))
            } else {
                Ok(m)
            }
        };
        match head {
            "ppb" if arg == Some("cv") => Ok(MethodSpec::PpbCv),
            "ppb" => Ok(MethodSpec::Ppb(tuning()?)),
            "rppb" => Ok(MethodSpec::Rppb(tuning()?)),
            "cv" => plain(MethodSpec::PpbCv),
            "semi_naive" => plain(MethodSpec::SemiNaive),
            "naive" | "naive_private" => plain(MethodSpec::Naive { private: true }),
            "naive_nonprivate" => plain(MethodSpec::Naive { private: false }),
            "bonferroni" | "bonferroni_private" => plain(MethodSpec::Bonferroni { private: true }),
            "bonferroni_nonprivate" => plain(MethodSpec::Bonferroni { private: false }),
            _ => Err(Error::Config(format!("unknown method {s:?}"))),
        }
    }
}

impl<'de> Deserialize<'de> for MethodSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

impl Serialize for MethodSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignMode {
    /// One design drawn from the master seed, reused by every replication.
    Fixed,
    /// A fresh design per replication, drawn from the declared box.
    #[default]
    Resampled,
}

/// Data-generating truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Truth {
    /// Gaussian means (all coordinates, interest block first for partial_gaussian).
    pub mean: Vec<f64>,
    /// Common standard deviation; the covariance is sd²·I.
    pub sd: f64,
    /// partial_gaussian: number of leading coordinates of interest.
    pub interest: Option<usize>,
    /// Regression coefficients of interest.
    pub beta: Vec<f64>,
    /// partial_regression: nuisance coefficients. The first k₁ multiply the
    /// subgroup indicators, the rest multiply centered covariates.
    pub gamma: Vec<f64>,
    pub sigma2: f64,
    pub design: DesignMode,
    /// Regression designs are uniform on [-design_bound, design_bound]^k.
    pub design_bound: f64,
    pub label: Option<String>,
}

impl Default for Truth {
    fn default() -> Self {
        Self {
            mean: Vec::new(),
            sd: 1.0,
            interest: None,
            beta: Vec::new(),
            gamma: Vec::new(),
            sigma2: 1.0,
            design: DesignMode::Resampled,
            design_bound: 1.0,
            label: None,
        }
    }
}

fn epsilons<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<Epsilon>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum One {
        Num(f64),
        Text(String),
    }
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Many {
        One(One),
        List(Vec<One>),
    }
    let parse = |o: One| match o {
        One::Num(v) => Epsilon::new(v),
        One::Text(s) => s.parse(),
    };
    let items = match Many::deserialize(d)? {
        Many::One(o) => vec![o],
        Many::List(v) => v,
    };
    items.into_iter().map(parse).collect::<Result<_>>().map_err(serde::de::Error::custom)
}

/// A Monte Carlo experiment, read from TOML.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub n: usize,
    /// Total budget per estimation; a list runs a sweep. `"inf"` disables noise.
    #[serde(deserialize_with = "epsilons")]
    pub epsilon: Vec<Epsilon>,
    #[serde(default)]
    pub split: Option<Vec<f64>>,
    pub methods: Vec<MethodSpec>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_draws")]
    pub bootstrap_draws: usize,
    #[serde(default = "default_reps")]
    pub reps: usize,
    pub seed: u64,
    /// Clamping box half-width in units of the noise sd, centered at the truth
    /// (Gaussian) or covering the attainable responses (regression).
    #[serde(default = "default_halfwidth")]
    pub bound_halfwidth: f64,
    #[serde(default)]
    pub truth: Truth,
    #[serde(default)]
    pub cv: CvConfig,
}

fn default_alpha() -> f64 {
    0.05
}
fn default_draws() -> usize {
    DEFAULT_DRAWS
}
fn default_reps() -> usize {
    1000
}
fn default_halfwidth() -> f64 {
    3.0
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Number of parameters of interest.
    pub fn interest_dim(&self) -> usize {
        match self.model {
            ModelKind::Gaussian => self.truth.mean.len(),
            ModelKind::PartialGaussian => self.truth.interest.unwrap_or(0),
            ModelKind::Regression | ModelKind::PartialRegression => self.truth.beta.len(),
        }
    }

    /// The true parameters of interest.
    pub fn interest_truth(&self) -> &[f64] {
        match self.model {
            ModelKind::Gaussian => &self.truth.mean,
            ModelKind::PartialGaussian => &self.truth.mean[..self.interest_dim()],
            ModelKind::Regression | ModelKind::PartialRegression => &self.truth.beta,
        }
    }

    pub fn truth_max(&self) -> f64 {
        self.interest_truth().iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn truth_label(&self) -> String {
        if let Some(l) = &self.truth.label {
            return l.clone();
        }
        let v: Vec<String> = self.interest_truth().iter().map(|x| format!("{x}")).collect();
        format!("({})", v.join(" "))
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.reps < 1 {
            return fail("reps must be at least 1".into());
        }
        if self.epsilon.is_empty() {
            return fail("a privacy budget is mandatory: set epsilon".into());
        }
        if self.methods.is_empty() {
            return fail("no methods configured".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return fail(format!("alpha must lie in (0, 0.5), got {}", self.alpha));
        }
        let needs_bootstrap = self.methods.iter().any(|m| {
            matches!(m, MethodSpec::Ppb(_) | MethodSpec::Rppb(_) | MethodSpec::SemiNaive | MethodSpec::PpbCv)
        });
        if needs_bootstrap && self.bootstrap_draws < 100 {
            return fail("bootstrap_draws must be at least 100".into());
        }
        if !(self.bound_halfwidth > 0.0 && self.bound_halfwidth.is_finite()) {
            return fail("bound_halfwidth must be positive".into());
        }
        if let Some(split) = &self.split {
            if split.len() != self.model.statistic_count() {
                return fail(format!("split needs {} shares", self.model.statistic_count()));
            }
        }
        if self.methods.contains(&MethodSpec::PpbCv) {
            self.cv.validate()?;
        }
        if self.n < 2 {
            return fail("need n ≥ 2".into());
        }
        let t = &self.truth;
        let scales = [t.sd, t.sigma2, t.design_bound];
        if !scales.iter().all(|v| *v > 0.0 && v.is_finite()) {
            return fail("truth sd, sigma2 and design_bound must be positive".into());
        }
        if !t.mean.iter().chain(&t.beta).chain(&t.gamma).all(|v| v.is_finite()) {
            return fail("truth values must be finite".into());
        }
        match self.model {
            ModelKind::Gaussian if t.mean.is_empty() => fail("truth.mean is required".into()),
            ModelKind::PartialGaussian => match t.interest {
                Some(k1) if k1 >= 1 && k1 <= t.mean.len() => Ok(()),
                _ => fail("partial_gaussian needs 1 ≤ truth.interest ≤ len(truth.mean)".into()),
            },
            ModelKind::Regression | ModelKind::PartialRegression if t.beta.is_empty() => {
                fail("truth.beta is required".into())
            }
            ModelKind::PartialRegression if t.gamma.len() < t.beta.len() => {
                fail("truth.gamma needs one subgroup effect per interest coefficient".into())
            }
            ModelKind::PartialRegression if !self.n.is_multiple_of(2 * t.beta.len()) => {
                fail("partial_regression needs n divisible by 2·len(beta) for a balanced design".into())
            }
            ModelKind::Regression if self.n <= t.beta.len() => fail("need n > len(beta)".into()),
            _ => Ok(()),
        }
    }
}
