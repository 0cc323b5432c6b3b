use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::{Error, Result};

/// A trainable tensor with its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    pub value: Tensor,
    pub grad: Tensor,
    pub trainable: bool,
}

impl Parameter {
    pub fn new(value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self {
            value,
            grad,
            trainable: true,
        }
    }

    pub fn frozen(value: Tensor) -> Self {
        Self {
            trainable: false,
            ..Self::new(value)
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn accumulate(&mut self, grad: &Tensor) -> Result<()> {
        if !grad.same_shape(&self.value) {
            return Err(Error::Shape(format!(
                "gradient {:?} for parameter {:?}",
                grad.shape(),
                self.value.shape()
            )));
        }
        self.grad.add_assign(grad);
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    Sgd,
    SgdMomentum,
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    #[serde(default)]
    pub hyperparameters: BTreeMap<String, f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            learning_rate: 1e-3,
            hyperparameters: BTreeMap::new(),
        }
    }
}

#[derive(Clone, Debug)]
struct Slot {
    m: Tensor,
    v: Tensor,
}

/// First-order optimizer keyed by parameter name.
///
/// Moment buffers are keyed by name; if a parameter changes shape (a
/// classifier that grew) its buffers restart from zero.
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    learning_rate: f64,
    hyper: BTreeMap<String, f64>,
    slots: BTreeMap<String, Slot>,
    steps: u64,
}

impl Optimizer {
    pub fn new(config: &OptimizerConfig) -> Result<Self> {
        if !(config.learning_rate > 0.0 && config.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive, got {}",
                config.learning_rate
            )));
        }
        let mut hyper: BTreeMap<String, f64> = match config.kind {
            OptimizerKind::Sgd => BTreeMap::new(),
            OptimizerKind::SgdMomentum => [("momentum".to_string(), 0.9)].into(),
            OptimizerKind::Adam => [
                ("beta1".to_string(), 0.9),
                ("beta2".to_string(), 0.999),
                ("eps".to_string(), 1e-8),
            ]
            .into(),
        };
        for (k, v) in &config.hyperparameters {
            if !hyper.contains_key(k) {
                return Err(Error::InvalidArgument(format!(
                    "unknown hyperparameter `{k}` for {:?}",
                    config.kind
                )));
            }
            hyper.insert(k.clone(), *v);
        }
        Ok(Self {
            kind: config.kind,
            learning_rate: config.learning_rate,
            hyper,
            slots: BTreeMap::new(),
            steps: 0,
        })
    }

    pub fn sgd(learning_rate: f64) -> Self {
        Self::new(&OptimizerConfig {
            kind: OptimizerKind::Sgd,
            learning_rate,
            hyperparameters: BTreeMap::new(),
        })
        .expect("valid sgd config")
    }

    pub fn adam(learning_rate: f64) -> Self {
        Self::new(&OptimizerConfig {
            kind: OptimizerKind::Adam,
            learning_rate,
            hyperparameters: BTreeMap::new(),
        })
        .expect("valid adam config")
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one update to every trainable parameter.
    ///
    /// Fails without touching anything if any trainable gradient is NaN or
    /// infinite.
    pub fn step<'a, I>(&mut self, params: I) -> Result<()>
    where
        I: IntoIterator<Item = (String, &'a mut Parameter)>,
    {
        let params: Vec<_> = params.into_iter().filter(|(_, p)| p.trainable).collect();
        if let Some((name, _)) = params.iter().find(|(_, p)| !p.grad.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of `{name}`")));
        }
        self.steps += 1;
        let lr = self.learning_rate;
        for (name, p) in params {
            match self.kind {
                OptimizerKind::Sgd => {
                    for (v, g) in p.value.data_mut().iter_mut().zip(p.grad.data()) {
                        *v -= lr * g;
                    }
                }
                OptimizerKind::SgdMomentum => {
                    let mu = self.hyper["momentum"];
                    let slot = slot_for(&mut self.slots, &name, &p.value);
                    for ((v, g), m) in p
                        .value
                        .data_mut()
                        .iter_mut()
                        .zip(p.grad.data())
                        .zip(slot.m.data_mut())
                    {
                        *m = mu * *m + g;
                        *v -= lr * *m;
                    }
                }
                OptimizerKind::Adam => {
                    let (b1, b2, eps) = (self.hyper["beta1"], self.hyper["beta2"], self.hyper["eps"]);
                    let t = self.steps as i32;
                    let (c1, c2) = (1.0 - b1.powi(t), 1.0 - b2.powi(t));
                    let slot = slot_for(&mut self.slots, &name, &p.value);
                    let Slot { m, v: s } = slot;
                    for (((v, g), m), s) in p
                        .value
                        .data_mut()
                        .iter_mut()
                        .zip(p.grad.data())
                        .zip(m.data_mut())
                        .zip(s.data_mut())
                    {
                        *m = b1 * *m + (1.0 - b1) * g;
                        *s = b2 * *s + (1.0 - b2) * g * g;
                        let mh = *m / c1;
                        let sh = *s / c2;
                        *v -= lr * mh / (sh.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

fn slot_for<'s>(slots: &'s mut BTreeMap<String, Slot>, name: &str, value: &Tensor) -> &'s mut Slot {
    let fresh = || Slot {
        m: Tensor::zeros(value.shape()),
        v: Tensor::zeros(value.shape()),
    };
    let slot = slots.entry(name.to_string()).or_insert_with(fresh);
    if !slot.m.same_shape(value) {
        *slot = fresh();
    }
    slot
}

/// `target <- m * target + (1 - m) * online`, pairwise and elementwise.
pub fn ema_update<'a, 'b>(
    target: impl IntoIterator<Item = &'a mut Parameter>,
    online: impl IntoIterator<Item = &'b Parameter>,
    m: f64,
) -> Result<()> {
    if !(0.0..=1.0).contains(&m) {
        return Err(Error::InvalidArgument(format!("EMA momentum {m} outside [0, 1]")));
    }
    let target: Vec<_> = target.into_iter().collect();
    let online: Vec<_> = online.into_iter().collect();
    if target.len() != online.len() {
        return Err(Error::Shape(format!(
            "EMA pairs {} target with {} online parameters",
            target.len(),
            online.len()
        )));
    }
    if let Some((t, o)) = target.iter().zip(&online).find(|(t, o)| !t.value.same_shape(&o.value)) {
        return Err(Error::Shape(format!(
            "EMA target {:?} vs online {:?}",
            t.value.shape(),
            o.value.shape()
        )));
    }
    for (t, o) in target.into_iter().zip(online) {
        for (tv, ov) in t.value.data_mut().iter_mut().zip(o.value.data()) {
            *tv = m * *tv + (1.0 - m) * ov;
        }
    }
    Ok(())
}
