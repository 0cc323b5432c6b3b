//! BYOL and MoCoV2+ objectives.
//!
//! Scalar reference forms (`byol_loss`, `infonce_loss`) work on plain
//! vectors. The `*_graph` forms record the same quantities for training.
//! [`SslState`] holds the EMA branch (BYOL target or MoCo key network) and,
//! for MoCo, the negative-key queue.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::model::{Bind, Head, ModelState};
use crate::numerics::{ema_update, Graph, NodeId, Optimizer, Tensor};
use crate::rng::Rng;
use crate::{Error, Result};

/// Parameter groups tracked by the EMA branch.
pub const EMA_GROUPS: [&str; 2] = ["encoder.", "projector."];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SslMethod {
    Byol,
    Mocov2p,
}

impl std::fmt::Display for SslMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SslMethod::Byol => "byol",
            SslMethod::Mocov2p => "mocov2p",
        })
    }
}

impl std::str::FromStr for SslMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "byol" => Ok(SslMethod::Byol),
            "mocov2p" | "mocov2+" | "moco" => Ok(SslMethod::Mocov2p),
            _ => Err(Error::Config(format!("unknown SSL method `{s}` (byol | mocov2p)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SslConfig {
    pub momentum: f64,
    pub temperature: f64,
    pub queue_size: usize,
}

impl Default for SslConfig {
    fn default() -> Self {
        Self {
            momentum: 0.99,
            temperature: 0.1,
            queue_size: 1024,
        }
    }
}

impl SslConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum {} not in [0, 1]", self.momentum)));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!("temperature {} must be positive", self.temperature)));
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> Result<f64> {
    let n = dot(a, a).sqrt();
    if n == 0.0 || !n.is_finite() {
        return Err(Error::InvalidArgument("zero-norm vector".into()));
    }
    Ok(n)
}

/// `2 − 2·cos(p, z)`.
pub fn byol_loss(p: &[f64], z: &[f64]) -> Result<f64> {
    if p.len() != z.len() {
        return Err(Error::Shape(format!("byol_loss: {} vs {}", p.len(), z.len())));
    }
    Ok(2.0 - 2.0 * dot(p, z) / (norm(p)? * norm(z)?))
}

/// `−log softmax([q·k⁺, q·k₁, …]/τ)[0]` for unit vectors.
pub fn infonce_loss(q: &[f64], k_pos: &[f64], negatives: &[Vec<f64>], tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("temperature {tau} must be positive")));
    }
    if k_pos.len() != q.len() || negatives.iter().any(|k| k.len() != q.len()) {
        return Err(Error::Shape("infonce_loss: key and query sizes differ".into()));
    }
    let pos = dot(q, k_pos) / tau;
    let logits: Vec<f64> = std::iter::once(pos)
        .chain(negatives.iter().map(|k| dot(q, k) / tau))
        .collect();
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    Ok(lse - pos)
}

/// Mean over rows of `2 − 2·cos(p_i, z_i)`. `z` should already be detached.
pub fn byol_graph(g: &mut Graph, p: NodeId, z: NodeId) -> Result<NodeId> {
    let pn = g.l2_normalize(p)?;
    let zn = g.l2_normalize(z)?;
    let cos = g.row_dot(pn, zn)?;
    let m = g.mean(cos);
    Ok(g.affine(m, -2.0, 2.0))
}

/// Mean InfoNCE of unit queries `q [N, D]` against their positive keys
/// `k [N, D]` and a shared set of negatives `[K, D]` (if any).
pub fn infonce_graph(g: &mut Graph, q: NodeId, k: NodeId, negatives: Option<&Tensor>, tau: f64) -> Result<NodeId> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("temperature {tau} must be positive")));
    }
    let n = g.value(q).shape()[0];
    let pos = g.row_dot(q, k)?;
    let mut logits = g.reshape(pos, &[n, 1])?;
    if let Some(neg) = negatives.filter(|t| t.numel() > 0) {
        let neg = g.constant(neg.clone());
        let l = g.matmul_t(q, neg)?;
        logits = g.concat_cols(logits, l)?;
    }
    let logits = g.scale(logits, 1.0 / tau);
    let width = g.value(logits).shape()[1];
    let mut targets = Tensor::zeros(&[n, width]);
    for i in 0..n {
        targets.set(&[i, 0], 1.0);
    }
    g.soft_cross_entropy(logits, targets, n as f64)
}

/// InfoNCE where row i of `k` is the positive for row i of `q` and every
/// other row of `k` is a negative.
pub fn infonce_in_batch_graph(g: &mut Graph, q: NodeId, k: NodeId, tau: f64) -> Result<NodeId> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("temperature {tau} must be positive")));
    }
    let n = g.value(q).shape()[0];
    let l = g.matmul_t(q, k)?;
    let logits = g.scale(l, 1.0 / tau);
    let mut targets = Tensor::zeros(&[n, n]);
    for i in 0..n {
        targets.set(&[i, i], 1.0);
    }
    g.soft_cross_entropy(logits, targets, n as f64)
}

/// Nodes produced while recording the new-task SSL loss.
#[derive(Debug)]
pub struct CtOutput {
    pub loss: NodeId,
    /// Live encoder features of each view, `[B, F]`.
    pub features: (NodeId, NodeId),
    /// Live projections of each view, `[B, P]`.
    pub projections: (NodeId, NodeId),
    /// Keys to enqueue after the step (MoCo only).
    pub keys: Option<Tensor>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ByolState {
    pub target: ModelState,
    pub momentum: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MocoState {
    pub key: ModelState,
    pub momentum: f64,
    pub temperature: f64,
    capacity: usize,
    queue: VecDeque<Vec<f64>>,
}

impl MocoState {
    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn queue(&self) -> &VecDeque<Vec<f64>> {
        &self.queue
    }

    /// Appends each row of `keys`, dropping the oldest beyond capacity.
    pub fn enqueue(&mut self, keys: &Tensor) {
        let d = keys.shape().get(1).copied().unwrap_or(keys.numel());
        if self.capacity == 0 || d == 0 {
            return;
        }
        for row in keys.data().chunks_exact(d) {
            self.queue.push_back(row.to_vec());
            if self.queue.len() > self.capacity {
                self.queue.pop_front();
            }
        }
    }

    pub fn queue_tensor(&self) -> Option<Tensor> {
        let d = self.queue.front()?.len();
        let data = self.queue.iter().flatten().copied().collect();
        Tensor::new(vec![self.queue.len(), d], data).ok()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SslState {
    Byol(ByolState),
    Moco(MocoState),
}

fn ema_copy(live: &ModelState) -> ModelState {
    live.snapshot()
}

impl SslState {
    pub fn new(method: SslMethod, cfg: &SslConfig, live: &ModelState) -> Result<Self> {
        cfg.validate()?;
        Ok(match method {
            SslMethod::Byol => SslState::Byol(ByolState {
                target: ema_copy(live),
                momentum: cfg.momentum,
            }),
            SslMethod::Mocov2p => SslState::Moco(MocoState {
                key: ema_copy(live),
                momentum: cfg.momentum,
                temperature: cfg.temperature,
                capacity: cfg.queue_size,
                queue: VecDeque::new(),
            }),
        })
    }

    pub fn method(&self) -> SslMethod {
        match self {
            SslState::Byol(_) => SslMethod::Byol,
            SslState::Moco(_) => SslMethod::Mocov2p,
        }
    }

    /// The EMA branch (BYOL target or MoCo key network).
    pub fn ema_model(&self) -> &ModelState {
        match self {
            SslState::Byol(s) => &s.target,
            SslState::Moco(s) => &s.key,
        }
    }

    /// Projection of the EMA branch, detached. Unit-normalized for MoCo.
    fn ema_projection(&self, g: &mut Graph, x: NodeId) -> Result<NodeId> {
        let m = self.ema_model();
        let h = m.encoder_graph(g, x, Bind::Detached("ema."), None)?;
        let z = m.head_graph(g, Head::Projector, h, Bind::Detached("ema."))?;
        match self {
            SslState::Byol(_) => Ok(z),
            SslState::Moco(_) => {
                let k = g.l2_normalize(z)?;
                Ok(g.detach(k))
            }
        }
    }

    /// Records the symmetrized new-task SSL loss for views `x1`, `x2`
    /// (`[B, 3, L]` each). Dropout on the live branch uses `rng` if given.
    pub fn ct_graph(
        &self,
        g: &mut Graph,
        live: &ModelState,
        x1: NodeId,
        x2: NodeId,
        mut rng: Option<&mut Rng>,
    ) -> Result<CtOutput> {
        let h1 = live.encoder_graph(g, x1, Bind::Live, rng.as_deref_mut())?;
        let h2 = live.encoder_graph(g, x2, Bind::Live, rng.as_deref_mut())?;
        let z1 = live.head_graph(g, Head::Projector, h1, Bind::Live)?;
        let z2 = live.head_graph(g, Head::Projector, h2, Bind::Live)?;
        let t1 = self.ema_projection(g, x1)?;
        let t2 = self.ema_projection(g, x2)?;
        let (a, b, keys) = match self {
            SslState::Byol(_) => {
                let p1 = live.head_graph(g, Head::Predictor, z1, Bind::Live)?;
                let p2 = live.head_graph(g, Head::Predictor, z2, Bind::Live)?;
                (byol_graph(g, p1, t2)?, byol_graph(g, p2, t1)?, None)
            }
            SslState::Moco(s) => {
                let q1 = g.l2_normalize(z1)?;
                let q2 = g.l2_normalize(z2)?;
                let queue = s.queue_tensor();
                let a = infonce_graph(g, q1, t2, queue.as_ref(), s.temperature)?;
                let b = infonce_graph(g, q2, t1, queue.as_ref(), s.temperature)?;
                (a, b, Some(g.value(t2).clone()))
            }
        };
        let sum = g.add(a, b)?;
        let loss = g.scale(sum, 0.5);
        Ok(CtOutput {
            loss,
            features: (h1, h2),
            projections: (z1, z2),
            keys,
        })
    }

    /// EMA update of the target/key branch, then enqueue of `keys`.
    pub fn after_step(&mut self, live: &ModelState, keys: Option<&Tensor>) -> Result<()> {
        let (ema, m) = match self {
            SslState::Byol(s) => (&mut s.target, s.momentum),
            SslState::Moco(s) => (&mut s.key, s.momentum),
        };
        ema_update(
            ema.params_under_mut(&EMA_GROUPS).map(|(_, p)| p),
            live.params_under(&EMA_GROUPS).map(|(_, p)| p),
            m,
        )?;
        if let (SslState::Moco(s), Some(k)) = (self, keys) {
            s.enqueue(k);
        }
        Ok(())
    }

    /// One self-supervised step on a batch of view pairs: loss, backward,
    /// optimizer step, EMA, enqueue. Returns the loss.
    pub fn step(
        &mut self,
        live: &mut ModelState,
        x1: &Tensor,
        x2: &Tensor,
        opt: &mut Optimizer,
        rng: Option<&mut Rng>,
    ) -> Result<f64> {
        let mut g = Graph::new();
        let (a, b) = (g.constant(x1.clone()), g.constant(x2.clone()));
        let out = self.ct_graph(&mut g, live, a, b, rng)?;
        let loss = g.value(out.loss).item();
        g.backward(out.loss)?;
        live.zero_grad();
        live.accumulate_grads(&g)?;
        opt.step(live.trainable_mut())?;
        self.after_step(live, out.keys.as_ref())?;
        Ok(loss)
    }
}
