//! Convolutional encoder, SSL heads and the growing classifier.
//!
//! All parameters live in one name-keyed map (`encoder.0.w`,
//! `projector.1.b`, `classifier.w`, ...). Forward passes are recorded into a
//! [`Graph`]; a [`Bind`] decides whether the pass is differentiable or a
//! stop-gradient branch.

mod checkpoint;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataio::{ClassId, Window, CHANNELS};
use crate::numerics::{Graph, NodeId, Parameter, Tensor};
use crate::rng::Rng;
use crate::{Error, Result};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};

pub type Params = BTreeMap<String, Parameter>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadConfig {
    pub hidden: usize,
    pub out: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub filters: Vec<usize>,
    pub kernels: Vec<usize>,
    pub dropout: f64,
    /// `None` makes the head an identity map, written `"identity"`.
    #[serde(with = "head_repr")]
    pub projector: Option<HeadConfig>,
    #[serde(with = "head_repr")]
    pub predictor: Option<HeadConfig>,
    #[serde(with = "head_repr")]
    pub distill: Option<HeadConfig>,
}

mod head_repr {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::HeadConfig;

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Dense(HeadConfig),
        Named(String),
    }

    pub fn serialize<S: Serializer>(h: &Option<HeadConfig>, s: S) -> Result<S::Ok, S::Error> {
        match h {
            Some(h) => Repr::Dense(*h),
            None => Repr::Named("identity".into()),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<HeadConfig>, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Dense(h) => Ok(Some(h)),
            Repr::Named(n) if n == "identity" => Ok(None),
            Repr::Named(n) => Err(serde::de::Error::custom(format!(
                "unknown head `{n}`, expected a table or \"identity\""
            ))),
        }
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        let head = Some(HeadConfig { hidden: 128, out: 64 });
        Self {
            filters: vec![32, 64, 96],
            kernels: vec![24, 16, 8],
            dropout: 0.1,
            projector: head,
            predictor: head,
            distill: head,
        }
    }
}

impl ModelConfig {
    pub fn feature_dim(&self) -> usize {
        self.filters.last().copied().unwrap_or(0)
    }

    pub fn projection_dim(&self) -> usize {
        self.projector.map_or(self.feature_dim(), |h| h.out)
    }

    /// Shortest window the encoder accepts.
    pub fn min_len(&self) -> usize {
        1 + self.kernels.iter().map(|k| k - 1).sum::<usize>()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.filters.is_empty() || self.filters.len() != self.kernels.len() {
            return bad(format!(
                "encoder needs matching, non-empty filter and kernel lists ({} vs {})",
                self.filters.len(),
                self.kernels.len()
            ));
        }
        if self.filters.contains(&0) || self.kernels.contains(&0) {
            return bad("filter counts and kernel sizes must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} not in [0, 1)", self.dropout));
        }
        for (name, h) in [("projector", self.projector), ("predictor", self.predictor), ("distill", self.distill)] {
            if let Some(h) = h {
                if h.hidden == 0 || h.out == 0 {
                    return bad(format!("{name} sizes must be positive"));
                }
            }
        }
        let p = self.projection_dim();
        for (name, h) in [("predictor", self.predictor), ("distill", self.distill)] {
            if h.is_some_and(|h| h.out != p) {
                return bad(format!("{name} output must match the projection size {p}"));
            }
        }
        Ok(())
    }
}

/// The three MLP heads stacked on the encoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Head {
    Projector,
    Predictor,
    /// Maps live projections towards the previous model's projections.
    Distill,
}

impl Head {
    pub fn prefix(self) -> &'static str {
        match self {
            Head::Projector => "projector",
            Head::Predictor => "predictor",
            Head::Distill => "distill",
        }
    }

    fn config(self, cfg: &ModelConfig) -> Option<HeadConfig> {
        match self {
            Head::Projector => cfg.projector,
            Head::Predictor => cfg.predictor,
            Head::Distill => cfg.distill,
        }
    }

    fn input_dim(self, cfg: &ModelConfig) -> usize {
        match self {
            Head::Projector => cfg.feature_dim(),
            Head::Predictor | Head::Distill => cfg.projection_dim(),
        }
    }
}

/// How a forward pass enters parameters into a graph.
#[derive(Clone, Copy, Debug)]
pub enum Bind<'a> {
    /// Parameters bound under their own names; gradients flow.
    Live,
    /// Parameters bound under `prefix` + name, output detached.
    Detached(&'a str),
}

impl Bind<'_> {
    fn param(self, g: &mut Graph, name: &str, p: &Parameter) -> NodeId {
        match self {
            Bind::Live => g.param(name, p),
            Bind::Detached(prefix) => g.param(&format!("{prefix}{name}"), p),
        }
    }

    fn finish(self, g: &mut Graph, out: NodeId) -> NodeId {
        match self {
            Bind::Live => out,
            Bind::Detached(_) => g.detach(out),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    config: ModelConfig,
    params: Params,
    classes: Vec<ClassId>,
    frozen: bool,
}

fn he(shape: &[usize], fan_in: usize, rng: &mut Rng) -> Parameter {
    Parameter::new(Tensor::randn(shape, (2.0 / fan_in as f64).sqrt(), rng))
}

fn zeros(shape: &[usize]) -> Parameter {
    Parameter::new(Tensor::zeros(shape))
}

impl ModelState {
    pub fn new(config: ModelConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let mut params = Params::new();
        let mut c_in = CHANNELS;
        for (i, (&f, &k)) in config.filters.iter().zip(&config.kernels).enumerate() {
            params.insert(format!("encoder.{i}.w"), he(&[f, c_in, k], c_in * k, rng));
            params.insert(format!("encoder.{i}.b"), zeros(&[f]));
            c_in = f;
        }
        for head in [Head::Projector, Head::Predictor, Head::Distill] {
            if let Some(h) = head.config(&config) {
                let (p, d_in) = (head.prefix(), head.input_dim(&config));
                params.insert(format!("{p}.0.w"), he(&[h.hidden, d_in], d_in, rng));
                params.insert(format!("{p}.0.b"), zeros(&[h.hidden]));
                let w = Tensor::randn(&[h.out, h.hidden], (1.0 / h.hidden as f64).sqrt(), rng);
                params.insert(format!("{p}.1.w"), Parameter::new(w));
                params.insert(format!("{p}.1.b"), zeros(&[h.out]));
            }
        }
        Ok(Self {
            config,
            params,
            classes: Vec::new(),
            frozen: false,
        })
    }

    pub(crate) fn from_parts(config: ModelConfig, params: Params, classes: Vec<ClassId>, frozen: bool) -> Self {
        Self {
            config,
            params,
            classes,
            frozen,
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn param(&self, name: &str) -> Option<&Parameter> {
        self.params.get(name)
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Classes in classifier output order.
    pub fn classes(&self) -> &[ClassId] {
        &self.classes
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_index(&self, class: ClassId) -> Option<usize> {
        self.classes.iter().position(|&c| c == class)
    }

    /// Deep copy that is never trained.
    pub fn snapshot(&self) -> ModelState {
        let mut s = self.clone();
        s.frozen = true;
        for p in s.params.values_mut() {
            p.trainable = false;
            p.zero_grad();
        }
        s
    }

    /// Trainable parameters, for an optimizer step. Empty when frozen.
    pub fn trainable_mut(&mut self) -> impl Iterator<Item = (String, &mut Parameter)> {
        let frozen = self.frozen;
        self.params
            .iter_mut()
            .filter(move |(_, p)| !frozen && p.trainable)
            .map(|(n, p)| (n.clone(), p))
    }

    /// Parameters whose names start with one of `prefixes`.
    pub fn params_under<'a>(&'a self, prefixes: &'a [&str]) -> impl Iterator<Item = (&'a String, &'a Parameter)> {
        self.params
            .iter()
            .filter(move |(n, _)| prefixes.iter().any(|p| n.starts_with(p)))
    }

    pub fn params_under_mut<'a>(
        &'a mut self,
        prefixes: &'a [&str],
    ) -> impl Iterator<Item = (&'a String, &'a mut Parameter)> {
        self.params
            .iter_mut()
            .filter(move |(n, _)| prefixes.iter().any(|p| n.starts_with(p)))
    }

    pub fn zero_grad(&mut self) {
        self.params.values_mut().for_each(Parameter::zero_grad);
    }

    /// Adds the graph's gradients for live-bound parameters.
    pub fn accumulate_grads(&mut self, g: &Graph) -> Result<()> {
        if self.frozen {
            return Ok(());
        }
        for (name, p) in &mut self.params {
            if let Some(grad) = g.param_grad(name) {
                p.accumulate(grad)?;
            }
        }
        Ok(())
    }

    /// Appends one classifier output per class in `new_classes`. Existing rows
    /// are untouched; new weights are drawn from N(0, 0.01²), biases are zero.
    pub fn grow_classifier(&mut self, new_classes: &[ClassId], rng: &mut Rng) -> Result<()> {
        if new_classes.is_empty() {
            return Err(Error::InvalidArgument("classifier must grow by at least one class".into()));
        }
        if self.frozen {
            return Err(Error::InvalidArgument("cannot grow a frozen snapshot".into()));
        }
        if let Some(c) = new_classes.iter().find(|c| self.classes.contains(c)) {
            return Err(Error::InvalidArgument(format!("class {c} already has an output")));
        }
        let f = self.config.feature_dim();
        let (old, add) = (self.classes.len(), new_classes.len());
        let mut w = self
            .params
            .remove("classifier.w")
            .map(|p| p.value.into_data())
            .unwrap_or_default();
        w.extend(Tensor::randn(&[add, f], 0.01, rng).into_data());
        let mut b = self
            .params
            .remove("classifier.b")
            .map(|p| p.value.into_data())
            .unwrap_or_default();
        b.extend(std::iter::repeat_n(0.0, add));
        self.params
            .insert("classifier.w".into(), Parameter::new(Tensor::new(vec![old + add, f], w)?));
        self.params
            .insert("classifier.b".into(), Parameter::new(Tensor::vector(b)));
        self.classes.extend_from_slice(new_classes);
        Ok(())
    }

    fn get(&self, name: &str) -> Result<&Parameter> {
        self.params
            .get(name)
            .ok_or_else(|| Error::Graph(format!("model has no parameter `{name}`")))
    }

    /// `[B, 3, L] -> [B, F]`. Dropout runs only when `dropout_rng` is given.
    pub fn encoder_graph(&self, g: &mut Graph, x: NodeId, bind: Bind, mut dropout_rng: Option<&mut Rng>) -> Result<NodeId> {
        let len = *g.value(x).shape().last().unwrap_or(&0);
        if len < self.config.min_len() {
            return Err(Error::Shape(format!(
                "encoder needs at least {} timesteps, got {len}",
                self.config.min_len()
            )));
        }
        let mut h = x;
        for i in 0..self.config.filters.len() {
            let w = bind.param(g, &format!("encoder.{i}.w"), self.get(&format!("encoder.{i}.w"))?);
            let b = bind.param(g, &format!("encoder.{i}.b"), self.get(&format!("encoder.{i}.b"))?);
            h = g.conv1d(h, w, b)?;
            h = g.relu(h);
            if let Some(r) = dropout_rng.as_deref_mut() {
                h = g.dropout(h, self.config.dropout, r)?;
            }
        }
        let out = g.max_pool_time(h)?;
        Ok(bind.finish(g, out))
    }

    pub fn head_graph(&self, g: &mut Graph, head: Head, x: NodeId, bind: Bind) -> Result<NodeId> {
        if head.config(&self.config).is_none() {
            return Ok(bind.finish(g, x));
        }
        let p = head.prefix();
        let w0 = bind.param(g, &format!("{p}.0.w"), self.get(&format!("{p}.0.w"))?);
        let b0 = bind.param(g, &format!("{p}.0.b"), self.get(&format!("{p}.0.b"))?);
        let w1 = bind.param(g, &format!("{p}.1.w"), self.get(&format!("{p}.1.w"))?);
        let b1 = bind.param(g, &format!("{p}.1.b"), self.get(&format!("{p}.1.b"))?);
        let h = g.linear(x, w0, b0)?;
        let h = g.relu(h);
        let out = g.linear(h, w1, b1)?;
        Ok(bind.finish(g, out))
    }

    /// Logits over [`ModelState::classes`].
    pub fn classifier_graph(&self, g: &mut Graph, features: NodeId, bind: Bind) -> Result<NodeId> {
        if self.classes.is_empty() {
            return Err(Error::MissingComponent("classifier"));
        }
        let w = bind.param(g, "classifier.w", self.get("classifier.w")?);
        let b = bind.param(g, "classifier.b", self.get("classifier.b")?);
        let out = g.linear(features, w, b)?;
        Ok(bind.finish(g, out))
    }

    /// Evaluation-mode features for a `[B, 3, L]` batch.
    pub fn encode(&self, batch: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let x = g.constant(batch.clone());
        let f = self.encoder_graph(&mut g, x, Bind::Live, None)?;
        Ok(g.value(f).clone())
    }

    pub fn classify(&self, features: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let x = g.constant(features.clone());
        let l = self.classifier_graph(&mut g, x, Bind::Live)?;
        Ok(g.value(l).clone())
    }

    /// Evaluation-mode features for windows, in chunks of `chunk`.
    pub fn encode_windows(&self, windows: &[Window], chunk: usize) -> Result<Tensor> {
        let f = self.config.feature_dim();
        let mut data = Vec::with_capacity(windows.len() * f);
        for part in windows.chunks(chunk.max(1)) {
            let batch = Window::batch_channels_first(part)?;
            data.extend(self.encode(&batch)?.into_data());
        }
        Tensor::new(vec![windows.len(), f], data)
    }

    /// Predicted class ids (argmax over every output).
    pub fn predict(&self, windows: &[Window]) -> Result<Vec<ClassId>> {
        let logits = self.classify(&self.encode_windows(windows, 256)?)?;
        Ok(argmax_rows(&logits).into_iter().map(|i| self.classes[i]).collect())
    }
}

/// Index of the largest entry in each row of a 2-D tensor; ties go to the
/// lowest index.
pub fn argmax_rows(t: &Tensor) -> Vec<usize> {
    let c = t.shape().get(1).copied().unwrap_or(1).max(1);
    t.data()
        .chunks_exact(c)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
                .0
        })
        .collect()
}
