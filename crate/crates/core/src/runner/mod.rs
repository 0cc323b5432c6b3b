//! Experiment configs, run orchestration, λ sweeps and plots.
//!
//! A run writes everything under `<root>/<run-id>/`:
//!
//! ```text
//! config.echo     effective config, TOML
//! matrix.csv      accuracy matrix, one row appended per finished task
//! baseline.csv    per-task accuracy of untrained models
//! history.json    per-task training losses
//! metrics.json    FA, CA, forgetting, forward transfer
//! checkpoints/    task_<t>.ckpt after every task
//! plots/          SVG charts
//! ```

mod plot;

use std::collections::BTreeSet;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::continual::{ContinualConfig, ContinualLearner, LambdaSchedule, Mode, TaskReport};
use crate::dataio::{
    fit_normalization, parse_wisdm, split_subjects, synth_har, window_signal, ClassId, SynthConfig, TaskSpec,
    Window, WINDOW_LEN,
};
use crate::eval::{evaluate, random_baseline, AccuracyMatrix, Metrics};
use crate::model::{save_checkpoint, ModelConfig};
use crate::rng::{self, tags};
use crate::ssl::SslMethod;
use crate::{Error, Result};

pub use plot::{emit_plots, line_chart_svg, bar_chart_svg, Series};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "CSSL_OUT";
const DEFAULT_OUT: &str = "out";
const BASELINE_SEEDS: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum DatasetSource {
    /// Raw WISDM accelerometer text file.
    Wisdm { path: PathBuf },
    Synthetic(SynthConfig),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase", deny_unknown_fields)]
pub enum TaskSource {
    /// The six three-class WISDM2019 tasks.
    Canonical,
    /// Random equal split of the dataset's classes.
    Seeded { n_tasks: usize },
    Explicit { tasks: Vec<Vec<ClassId>> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    /// Fraction of subjects held out for testing.
    #[serde(default = "default_holdout")]
    pub holdout: f64,
    /// Output root; falls back to `$CSSL_OUT`, then `out`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub dataset: DatasetSource,
    pub tasks: TaskSource,
    #[serde(default)]
    pub continual: ContinualConfig,
    #[serde(default)]
    pub model: ModelConfig,
}

fn default_holdout() -> f64 {
    0.22
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file. A relative WISDM path is resolved against the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let DatasetSource::Wisdm { path: data } = &mut cfg.dataset {
            if data.is_relative() {
                if let Some(dir) = path.parent() {
                    *data = dir.join(&*data);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.holdout > 0.0 && self.holdout < 1.0) {
            return Err(Error::Config(format!("holdout {} not in (0, 1)", self.holdout)));
        }
        if let TaskSource::Seeded { n_tasks: 0 } = self.tasks {
            return Err(Error::Config("n_tasks must be positive".into()));
        }
        self.model.validate()?;
        if self.model.min_len() > WINDOW_LEN {
            return Err(Error::Config(format!(
                "encoder needs windows of at least {} samples",
                self.model.min_len()
            )));
        }
        self.continual.validate()
    }

    /// `{mode}-{ssl}-lambda{a}+{b}-seed{seed}`.
    pub fn run_id(&self) -> String {
        format!(
            "{}-{}-lambda{}-seed{}",
            self.continual.mode, self.continual.ssl_method, self.continual.lambda, self.seed
        )
    }

    pub fn output_root(&self) -> PathBuf {
        self.output_dir
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }

    pub fn run_dir(&self) -> PathBuf {
        self.output_root().join(self.run_id())
    }
}

/// Command-line style overrides applied on top of a loaded config.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub mode: Option<Mode>,
    pub ssl_method: Option<SslMethod>,
    pub lambda: Option<LambdaSchedule>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(m) = self.mode {
            cfg.continual.mode = m;
        }
        if let Some(s) = self.ssl_method {
            cfg.continual.ssl_method = s;
        }
        if let Some(l) = self.lambda {
            cfg.continual.lambda = l;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.output_dir {
            cfg.output_dir = Some(o.clone());
        }
    }
}

/// Train and test windows per task, normalized with training statistics.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub spec: TaskSpec,
    pub train: Vec<Vec<Window>>,
    pub test: Vec<Vec<Window>>,
}

fn load_windows(cfg: &ExperimentConfig) -> Result<Vec<Window>> {
    match &cfg.dataset {
        DatasetSource::Synthetic(s) => synth_har(s, cfg.seed),
        DatasetSource::Wisdm { path } => {
            let mut out = Vec::new();
            for rec in parse_wisdm(path)? {
                out.extend(window_signal(&rec, WINDOW_LEN)?);
            }
            if out.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "{} yields no complete windows",
                    path.display()
                )));
            }
            Ok(out)
        }
    }
}

/// Loads the dataset, splits by subject, normalizes and groups by task.
pub fn prepare_data(cfg: &ExperimentConfig) -> Result<PreparedData> {
    let windows = load_windows(cfg)?;
    let (train, test) = split_subjects(windows, cfg.holdout, cfg.seed)?;
    let stats = fit_normalization(&train)?;
    let train = stats.apply_all(&train)?;
    let test = stats.apply_all(&test)?;
    let present: BTreeSet<ClassId> = train.iter().chain(&test).filter_map(|w| w.label).collect();
    let spec = match &cfg.tasks {
        TaskSource::Canonical => TaskSpec::canonical_wisdm(),
        TaskSource::Seeded { n_tasks } => {
            TaskSpec::seeded(&present, *n_tasks, &mut rng::stream(cfg.seed, tags::TASKS))?
        }
        TaskSource::Explicit { tasks } => {
            let listed: BTreeSet<ClassId> = tasks.iter().flatten().copied().collect();
            TaskSpec::explicit(tasks.clone(), &listed)?
        }
    };
    let group = |ws: &[Window], t: usize| -> Vec<Window> {
        let classes = spec.classes(t);
        ws.iter()
            .filter(|w| w.label.is_some_and(|l| classes.contains(&l)))
            .cloned()
            .collect()
    };
    let mut tr = Vec::with_capacity(spec.n_tasks());
    let mut te = Vec::with_capacity(spec.n_tasks());
    for t in 1..=spec.n_tasks() {
        let (a, b) = (group(&train, t), group(&test, t));
        if a.is_empty() || b.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "task {t} has {} training and {} test windows",
                a.len(),
                b.len()
            )));
        }
        tr.push(a);
        te.push(b);
    }
    Ok(PreparedData {
        spec,
        train: tr,
        test: te,
    })
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub matrix: AccuracyMatrix,
    pub baseline: Vec<f64>,
    pub metrics: Metrics,
    pub history: Vec<TaskReport>,
}

/// The flat `metrics.json` object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub fa: f64,
    pub ca: f64,
    pub forgetting: Option<f64>,
    pub forward_transfer: Option<f64>,
    pub lambda_schedule: LambdaSchedule,
    pub mode: Mode,
    pub ssl_method: SslMethod,
    pub seed: u64,
}

impl MetricsReport {
    pub fn new(m: &Metrics, cfg: &ExperimentConfig) -> Self {
        Self {
            fa: m.fa,
            ca: m.ca,
            forgetting: m.forgetting,
            forward_transfer: m.forward_transfer,
            lambda_schedule: cfg.continual.lambda,
            mode: cfg.continual.mode,
            ssl_method: cfg.continual.ssl_method,
            seed: cfg.seed,
        }
    }
}

pub fn baseline_csv(b: &[f64]) -> String {
    let mut s = String::from("task,accuracy\n");
    for (j, v) in b.iter().enumerate() {
        s.push_str(&format!("{},{v}\n", j + 1));
    }
    s
}

pub fn parse_baseline_csv(text: &str) -> Result<Vec<f64>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    if lines.next().map(str::trim) != Some("task,accuracy") {
        return Err(Error::Format("bad baseline header".into()));
    }
    lines
        .enumerate()
        .map(|(k, l)| {
            let (t, v) = l
                .split_once(',')
                .ok_or_else(|| Error::Format(format!("bad baseline line `{l}`")))?;
            if t.trim() != (k + 1).to_string() {
                return Err(Error::Format(format!("baseline task {} out of order", k + 1)));
            }
            v.trim()
                .parse()
                .map_err(|_| Error::Format(format!("bad baseline value `{v}`")))
        })
        .collect()
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    run_experiment_with(cfg, |_, _| {})
}

/// Like [`run_experiment`], calling `progress(t, row)` after each task.
pub fn run_experiment_with(
    cfg: &ExperimentConfig,
    mut progress: impl FnMut(usize, &[f64]),
) -> Result<RunOutput> {
    cfg.validate()?;
    let data = prepare_data(cfg)?;
    let dir = cfg.run_dir();
    fs::create_dir_all(dir.join("checkpoints"))?;
    fs::write(dir.join("config.echo"), cfg.to_toml()?)?;
    for stale in ["metrics.json", "history.json"] {
        let p = dir.join(stale);
        if p.exists() {
            fs::remove_file(p)?;
        }
    }

    let n = data.spec.n_tasks();
    let baseline = random_baseline(&cfg.model, data.spec.classes(1), &data.test, cfg.seed, BASELINE_SEEDS)?;
    fs::write(dir.join("baseline.csv"), baseline_csv(&baseline))?;

    let mut matrix = AccuracyMatrix::new(n)?;
    let matrix_path = dir.join("matrix.csv");
    fs::write(&matrix_path, matrix.to_csv())?;
    let mut learner = ContinualLearner::new(cfg.continual.clone(), cfg.model.clone(), cfg.seed)?;
    let mut history = Vec::with_capacity(n);
    for t in 1..=n {
        history.push(learner.train_task(data.spec.classes(t), &data.train[t - 1])?);
        save_checkpoint(learner.model(), dir.join("checkpoints").join(format!("task_{t}.ckpt")))?;
        let row = evaluate(learner.model(), &data.test)?;
        append_row(&matrix_path, t, &row)?;
        progress(t, &row);
        matrix.push_row(row)?;
    }
    fs::write(dir.join("history.json"), serde_json::to_string_pretty(&history)?)?;
    let metrics = Metrics::compute(&matrix, Some(&baseline))?;
    let report = MetricsReport::new(&metrics, cfg);
    fs::write(dir.join("metrics.json"), serde_json::to_string_pretty(&report)?)?;
    emit_plots(&dir)?;
    Ok(RunOutput {
        dir,
        matrix,
        baseline,
        metrics,
        history,
    })
}

fn append_row(path: &Path, t: usize, row: &[f64]) -> Result<()> {
    let mut f = OpenOptions::new().append(true).open(path)?;
    let mut line = t.to_string();
    for v in row {
        line.push_str(&format!(",{v}"));
    }
    line.push('\n');
    f.write_all(line.as_bytes())?;
    f.sync_data()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub schedule: LambdaSchedule,
    pub metrics: Metrics,
    pub run_dir: PathBuf,
}

#[derive(Debug)]
pub struct SweepOutput {
    pub dir: PathBuf,
    pub rows: Vec<SweepRow>,
}

pub fn sweep_dir(base: &ExperimentConfig) -> PathBuf {
    base.output_root().join(format!(
        "sweep-{}-{}-seed{}",
        base.continual.mode, base.continual.ssl_method, base.seed
    ))
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// One run per schedule with otherwise identical config. Rows of
/// `comparison.csv` are written as runs finish, so a failing run leaves the
/// earlier rows in place.
pub fn sweep(base: &ExperimentConfig, schedules: &[LambdaSchedule]) -> Result<SweepOutput> {
    if schedules.is_empty() {
        return Err(Error::Config("sweep needs at least one schedule".into()));
    }
    base.validate()?;
    let dir = sweep_dir(base);
    fs::create_dir_all(&dir)?;
    let csv = dir.join("comparison.csv");
    File::create(&csv)?.write_all(b"schedule,fa,ca,forgetting,forward_transfer\n")?;
    let mut rows = Vec::with_capacity(schedules.len());
    for s in schedules {
        let mut cfg = base.clone();
        cfg.continual.lambda = *s;
        let out = run_experiment(&cfg)?;
        let m = out.metrics;
        let line = format!(
            "{s},{},{},{},{}\n",
            m.fa,
            m.ca,
            opt_cell(m.forgetting),
            opt_cell(m.forward_transfer)
        );
        OpenOptions::new().append(true).open(&csv)?.write_all(line.as_bytes())?;
        rows.push(SweepRow {
            schedule: *s,
            metrics: m,
            run_dir: out.dir,
        });
    }
    let groups: Vec<(String, Vec<(String, f64)>)> = rows
        .iter()
        .map(|r| {
            let m = &r.metrics;
            let mut bars = vec![("fa".to_string(), m.fa), ("ca".to_string(), m.ca)];
            bars.extend(m.forgetting.map(|v| ("forgetting".to_string(), v)));
            bars.extend(m.forward_transfer.map(|v| ("forward_transfer".to_string(), v)));
            (r.schedule.to_string(), bars)
        })
        .collect();
    fs::write(dir.join("comparison.svg"), bar_chart_svg("Metrics by λ schedule", &groups))?;
    Ok(SweepOutput { dir, rows })
}
