use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::losses::{clf_ct_graph, clf_kd_graph, fe_ct_loss, fe_kd_parts, label_targets};
use super::{lambda_at, loss_weights, ContinualConfig, LossComponents, Mode};
use crate::augment::two_views;
use crate::dataio::{ClassId, ReplayBuffer, Window};
use crate::model::{Bind, ModelConfig, ModelState};
use crate::numerics::{Graph, Optimizer, Tensor};
use crate::rng::{self, tags, Rng};
use crate::ssl::SslState;
use crate::{Error, Result};

/// What one task's training sees.
#[derive(Clone, Copy, Debug)]
pub struct TaskContext<'a> {
    /// Counted from 1.
    pub task_index: usize,
    /// Present iff `task_index > 1` and the mode distils.
    pub teacher: Option<&'a ModelState>,
    pub replay: &'a ReplayBuffer,
    pub classes: &'a [ClassId],
    pub lambda: f64,
}

/// Batch-averaged losses over one epoch. Inactive terms are `None`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub total: f64,
    pub fe_ct: Option<f64>,
    pub fe_kd: Option<f64>,
    pub clf_ct: Option<f64>,
    pub clf_kd: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub task: usize,
    pub lambda: f64,
    pub epochs: Vec<EpochStats>,
    /// Per-epoch mean loss of the classifier-only phase, if one ran.
    pub classifier_epochs: Vec<f64>,
    pub replay_added: usize,
}

/// Owns everything that persists across tasks: the live model, the SSL
/// EMA branch, the replay buffer and the previous-task teacher.
#[derive(Clone, Debug)]
pub struct ContinualLearner {
    cfg: ContinualConfig,
    live: ModelState,
    ssl: SslState,
    replay: ReplayBuffer,
    teacher: Option<ModelState>,
    tasks_done: usize,
    train_rng: Rng,
    grow_rng: Rng,
    replay_rng: Rng,
}

impl ContinualLearner {
    pub fn new(cfg: ContinualConfig, model: ModelConfig, seed: u64) -> Result<Self> {
        let live = ModelState::new(model, &mut rng::stream(seed, tags::MODEL_INIT))?;
        Self::with_model(cfg, live, seed)
    }

    pub fn with_model(cfg: ContinualConfig, live: ModelState, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let ssl = SslState::new(cfg.ssl_method, &cfg.ssl, &live)?;
        let replay = ReplayBuffer::new(cfg.replay_fraction)?;
        Ok(Self {
            cfg,
            live,
            ssl,
            replay,
            teacher: None,
            tasks_done: 0,
            train_rng: rng::stream(seed, tags::TRAIN),
            grow_rng: rng::stream(seed, tags::GROW),
            replay_rng: rng::stream(seed, tags::REPLAY),
        })
    }

    pub fn config(&self) -> &ContinualConfig {
        &self.cfg
    }

    pub fn model(&self) -> &ModelState {
        &self.live
    }

    pub fn teacher(&self) -> Option<&ModelState> {
        self.teacher.as_ref()
    }

    pub fn replay(&self) -> &ReplayBuffer {
        &self.replay
    }

    pub fn ssl(&self) -> &SslState {
        &self.ssl
    }

    pub fn tasks_done(&self) -> usize {
        self.tasks_done
    }

    /// Trains the next task on `windows` (whose labelled members belong to
    /// `classes`), then extends replay and refreshes the teacher.
    pub fn train_task(&mut self, classes: &[ClassId], windows: &[Window]) -> Result<TaskReport> {
        if windows.is_empty() {
            return Err(Error::InvalidArgument("task has no training windows".into()));
        }
        if let Some(w) = windows.iter().find(|w| w.label.is_some_and(|l| !classes.contains(&l))) {
            return Err(Error::UnknownLabel(w.label.unwrap_or_default()));
        }
        let t = self.tasks_done + 1;
        let lambda = lambda_at(&self.cfg.lambda, t)?;
        self.live.grow_classifier(classes, &mut self.grow_rng)?;
        let Self {
            cfg,
            live,
            ssl,
            replay,
            teacher,
            train_rng,
            ..
        } = self;
        let ctx = TaskContext {
            task_index: t,
            teacher: teacher.as_ref(),
            replay,
            classes,
            lambda,
        };
        let mut pool: Vec<&Window> = windows.iter().chain(replay.windows()).collect();
        let mut opt = Optimizer::new(&cfg.optimizer)?;
        let mut epochs = Vec::with_capacity(cfg.epochs_per_task);
        for _ in 0..cfg.epochs_per_task {
            pool.shuffle(train_rng);
            let mut sums = [0.0; 5];
            let mut seen = [false; 4];
            let mut batches = 0;
            for batch in pool.chunks(cfg.batch_size) {
                let (total, c) = train_step(live, ssl, &ctx, cfg, batch, &mut opt, train_rng)?;
                sums[0] += total;
                for (i, v) in [c.fe_ct, c.fe_kd, c.clf_ct, c.clf_kd].into_iter().enumerate() {
                    if let Some(v) = v {
                        sums[i + 1] += v;
                        seen[i] = true;
                    }
                }
                batches += 1;
            }
            let mean = |i: usize| seen[i - 1].then(|| sums[i] / batches as f64);
            epochs.push(EpochStats {
                total: sums[0] / batches as f64,
                fe_ct: mean(1),
                fe_kd: mean(2),
                clf_ct: mean(3),
                clf_kd: mean(4),
            });
        }
        let classifier_epochs = if cfg.mode == Mode::Kaizen {
            Vec::new()
        } else {
            let labelled: Vec<&Window> = windows
                .iter()
                .chain(replay.windows())
                .filter(|w| w.label.is_some())
                .collect();
            classifier_phase(live, &labelled, cfg, train_rng)?
        };
        let replay_added = self.replay.extend(windows, &mut self.replay_rng)?;
        self.teacher = self.cfg.mode.uses_teacher().then(|| self.live.snapshot());
        self.tasks_done = t;
        Ok(TaskReport {
            task: t,
            lambda,
            epochs,
            classifier_epochs,
            replay_added,
        })
    }
}

/// One optimization step on a batch of raw windows. Returns the total loss
/// and its components.
pub(crate) fn train_step(
    live: &mut ModelState,
    ssl: &mut SslState,
    ctx: &TaskContext,
    cfg: &ContinualConfig,
    batch: &[&Window],
    opt: &mut Optimizer,
    rng: &mut Rng,
) -> Result<(f64, LossComponents)> {
    let w = loss_weights(cfg.mode, ctx.task_index, ctx.lambda);
    let mut v1 = Vec::with_capacity(batch.len());
    let mut v2 = Vec::with_capacity(batch.len());
    for win in batch {
        let (a, b) = two_views(win, &cfg.augment, rng)?;
        v1.push(a);
        v2.push(b);
    }
    let mut g = Graph::new();
    let x1 = g.constant(Window::batch_channels_first(&v1)?);
    let x2 = g.constant(Window::batch_channels_first(&v2)?);
    let mut c = LossComponents::default();

    let ct = fe_ct_loss(&mut g, live, ssl, x1, x2, Some(rng))?;
    c.fe_ct = Some(g.value(ct.loss).item());
    let mut total = g.scale(ct.loss, w.fe_ct);
    let mut teacher_features = None;
    if w.fe_kd != 0.0 {
        let (kd, tf) = fe_kd_parts(&mut g, live, ctx.teacher, ssl, [x1, x2], [ct.projections.0, ct.projections.1])?;
        c.fe_kd = Some(g.value(kd).item());
        let term = g.scale(kd, w.fe_kd);
        total = g.add(total, term)?;
        teacher_features = Some(tf);
    }
    if cfg.mode == Mode::Kaizen {
        let logits = live.classifier_graph(&mut g, ct.features.0, Bind::Live)?;
        let labels: Vec<Option<ClassId>> = batch.iter().map(|w| w.label).collect();
        let (targets, labelled) = label_targets(live, &labels)?;
        match clf_ct_graph(&mut g, logits, targets, labelled)? {
            Some(l) => {
                c.clf_ct = Some(g.value(l).item());
                let term = g.scale(l, w.clf_ct);
                total = g.add(total, term)?;
            }
            None => c.clf_ct = Some(0.0),
        }
        if ctx.task_index > 1 {
            let teacher = ctx.teacher.ok_or(Error::MissingComponent("teacher"))?;
            let tf = teacher_features.ok_or(Error::MissingComponent("fe_kd"))?;
            let tl = teacher.classifier_graph(&mut g, tf, Bind::Detached("teacher."))?;
            let tl = g.value(tl).clone();
            let kd = clf_kd_graph(&mut g, logits, &tl)?;
            c.clf_kd = Some(g.value(kd).item());
            let term = g.scale(kd, w.clf_kd);
            total = g.add(total, term)?;
        }
    }
    let value = g.value(total).item();
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("task {} loss", ctx.task_index)));
    }
    g.backward(total)?;
    live.zero_grad();
    live.accumulate_grads(&g)?;
    opt.step(live.trainable_mut())?;
    ssl.after_step(live, ct.keys.as_ref())?;
    Ok((value, c))
}

/// Cross-entropy training of the classifier alone on frozen,
/// evaluation-mode features of `labelled` windows.
fn classifier_phase(
    live: &mut ModelState,
    labelled: &[&Window],
    cfg: &ContinualConfig,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    if labelled.is_empty() || cfg.classifier_epochs == 0 {
        return Ok(Vec::new());
    }
    let owned: Vec<Window> = labelled.iter().map(|w| (*w).clone()).collect();
    let features = live.encode_windows(&owned, 256)?;
    let f = features.shape()[1];
    let labels: Vec<Option<ClassId>> = owned.iter().map(|w| w.label).collect();
    let (targets, _) = label_targets(live, &labels)?;
    let c = targets.shape()[1];
    let mut opt = Optimizer::new(&cfg.optimizer)?;
    let mut order: Vec<usize> = (0..owned.len()).collect();
    let mut losses = Vec::with_capacity(cfg.classifier_epochs);
    for _ in 0..cfg.classifier_epochs {
        order.shuffle(rng);
        let mut sum = 0.0;
        let mut batches = 0;
        for idx in order.chunks(cfg.batch_size) {
            let rows = |src: &Tensor, d: usize| -> Result<Tensor> {
                let data = idx.iter().flat_map(|&i| src.row(i).iter().copied()).collect();
                Tensor::new(vec![idx.len(), d], data)
            };
            let mut g = Graph::new();
            let x = g.constant(rows(&features, f)?);
            let logits = live.classifier_graph(&mut g, x, Bind::Live)?;
            let loss = g.soft_cross_entropy(logits, rows(&targets, c)?, idx.len() as f64)?;
            sum += g.value(loss).item();
            batches += 1;
            g.backward(loss)?;
            live.zero_grad();
            live.accumulate_grads(&g)?;
            opt.step(
                live.params_under_mut(&["classifier."])
                    .map(|(n, p)| (n.clone(), p)),
            )?;
        }
        losses.push(sum / batches as f64);
    }
    Ok(losses)
}
