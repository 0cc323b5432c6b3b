//! Class-incremental training: loss terms, importance-coefficient schedules
//! and the per-task loop for Kaizen, CaSSLe and No-Distill.

mod learner;
mod losses;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::augment::AugmentConfig;
use crate::numerics::OptimizerConfig;
use crate::ssl::{SslConfig, SslMethod};
use crate::{Error, Result};

pub use learner::{ContinualLearner, EpochStats, TaskContext, TaskReport};
pub use losses::{
    clf_ct_graph, clf_ct_loss, clf_kd_graph, clf_kd_loss, fe_ct_loss, fe_kd_loss, label_targets, softmax_rows,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Kaizen,
    Cassle,
    #[serde(alias = "no-distill")]
    NoDistill,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Kaizen => "kaizen",
            Mode::Cassle => "cassle",
            Mode::NoDistill => "no_distill",
        }
    }

    /// Whether a frozen previous-task model is kept as teacher.
    pub fn uses_teacher(self) -> bool {
        self != Mode::NoDistill
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kaizen" => Ok(Mode::Kaizen),
            "cassle" => Ok(Mode::Cassle),
            "no_distill" | "no-distill" => Ok(Mode::NoDistill),
            _ => Err(Error::Config(format!("unknown mode `{s}` (kaizen | cassle | no-distill)"))),
        }
    }
}

/// `λ(t) = a + b·(t − 1)`, written `a+b`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct LambdaSchedule {
    pub a: f64,
    pub b: f64,
}

impl LambdaSchedule {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a >= 0.0 && b >= 0.0 && a.is_finite() && b.is_finite()) {
            return Err(Error::Config(format!("lambda schedule {a}+{b} needs finite a, b >= 0")));
        }
        Ok(Self { a, b })
    }

    pub fn constant(a: f64) -> Result<Self> {
        Self::new(a, 0.0)
    }
}

impl Default for LambdaSchedule {
    fn default() -> Self {
        Self { a: 1.0, b: 0.0 }
    }
}

impl fmt::Display for LambdaSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}+{:?}", self.a, self.b)
    }
}

impl FromStr for LambdaSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (a, b) = s.split_once(['+', '⊕']).unwrap_or((s, "0"));
        let parse = |v: &str| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad lambda schedule `{s}` (expected a+b)")))
        };
        Self::new(parse(a)?, parse(b)?)
    }
}

impl TryFrom<String> for LambdaSchedule {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<LambdaSchedule> for String {
    fn from(s: LambdaSchedule) -> String {
        s.to_string()
    }
}

/// Importance coefficient for task `t` (counted from 1).
pub fn lambda_at(s: &LambdaSchedule, t: usize) -> Result<f64> {
    if t < 1 {
        return Err(Error::InvalidArgument("task index starts at 1".into()));
    }
    Ok(s.a + s.b * (t - 1) as f64)
}

/// Values of the four loss terms. `None` means the term was not computed.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossComponents {
    pub fe_ct: Option<f64>,
    pub fe_kd: Option<f64>,
    pub clf_ct: Option<f64>,
    pub clf_kd: Option<f64>,
}

/// Multipliers of the four loss terms; zero marks an inactive term.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub fe_ct: f64,
    pub fe_kd: f64,
    pub clf_ct: f64,
    pub clf_kd: f64,
}

pub fn loss_weights(mode: Mode, t: usize, lambda: f64) -> LossWeights {
    let later = if t > 1 { 1.0 } else { 0.0 };
    match mode {
        Mode::Kaizen => LossWeights {
            fe_ct: 1.0,
            fe_kd: later,
            clf_ct: 1.0,
            clf_kd: later * lambda,
        },
        Mode::Cassle => LossWeights {
            fe_ct: 1.0,
            fe_kd: later,
            clf_ct: 0.0,
            clf_kd: 0.0,
        },
        Mode::NoDistill => LossWeights {
            fe_ct: 1.0,
            fe_kd: 0.0,
            clf_ct: 0.0,
            clf_kd: 0.0,
        },
    }
}

/// Weighted sum of the active components for `mode` at task `t`.
pub fn total_loss(c: &LossComponents, lambda: f64, mode: Mode, t: usize) -> Result<f64> {
    if t < 1 {
        return Err(Error::InvalidArgument("task index starts at 1".into()));
    }
    let w = loss_weights(mode, t, lambda);
    let mut total = 0.0;
    for (weight, value, name) in [
        (w.fe_ct, c.fe_ct, "fe_ct"),
        (w.fe_kd, c.fe_kd, "fe_kd"),
        (w.clf_ct, c.clf_ct, "clf_ct"),
        (w.clf_kd, c.clf_kd, "clf_kd"),
    ] {
        if weight != 0.0 || (mode == Mode::Kaizen && name == "clf_kd" && t > 1) {
            total += weight * value.ok_or(Error::MissingComponent(name))?;
        }
    }
    Ok(total)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContinualConfig {
    pub mode: Mode,
    pub ssl_method: SslMethod,
    pub lambda: LambdaSchedule,
    pub epochs_per_task: usize,
    /// Epochs of the classifier-only phase (CaSSLe and No-Distill).
    pub classifier_epochs: usize,
    pub batch_size: usize,
    pub replay_fraction: f64,
    pub optimizer: OptimizerConfig,
    pub ssl: SslConfig,
    pub augment: AugmentConfig,
}

impl Default for ContinualConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Kaizen,
            ssl_method: SslMethod::Byol,
            lambda: LambdaSchedule::default(),
            epochs_per_task: 50,
            classifier_epochs: 20,
            batch_size: 64,
            replay_fraction: 0.01,
            optimizer: OptimizerConfig::default(),
            ssl: SslConfig::default(),
            augment: AugmentConfig::default(),
        }
    }
}

impl ContinualConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.replay_fraction) {
            return Err(Error::Config(format!("replay fraction {} not in [0, 1]", self.replay_fraction)));
        }
        if !(self.optimizer.learning_rate > 0.0 && self.optimizer.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        self.ssl.validate()?;
        self.augment.validate()?;
        LambdaSchedule::new(self.lambda.a, self.lambda.b)?;
        Ok(())
    }
}
