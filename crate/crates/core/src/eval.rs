//! Accuracy matrix and the four class-incremental metrics.
//!
//! `A[i][j]` is the accuracy on task j's test windows after training through
//! task i (both counted from 1). Every row covers all T tasks; classes the
//! model has not seen yet simply count as misclassified.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataio::{ClassId, Window};
use crate::model::{ModelConfig, ModelState};
use crate::rng::{self, tags};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyMatrix {
    n_tasks: usize,
    rows: Vec<Vec<f64>>,
}

impl AccuracyMatrix {
    pub fn new(n_tasks: usize) -> Result<Self> {
        if n_tasks == 0 {
            return Err(Error::InvalidArgument("accuracy matrix needs at least one task".into()));
        }
        Ok(Self {
            n_tasks,
            rows: Vec::new(),
        })
    }

    /// Builds a complete or partial matrix from rows of length T.
    pub fn from_rows(n_tasks: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        let mut m = Self::new(n_tasks)?;
        for r in rows {
            m.push_row(r)?;
        }
        Ok(m)
    }

    pub fn push_row(&mut self, row: Vec<f64>) -> Result<()> {
        if self.rows.len() == self.n_tasks {
            return Err(Error::InvalidArgument("accuracy matrix already complete".into()));
        }
        if row.len() != self.n_tasks {
            return Err(Error::Shape(format!("row of {} for {} tasks", row.len(), self.n_tasks)));
        }
        if let Some(v) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!("accuracy {v} outside [0, 1]")));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn n_tasks(&self) -> usize {
        self.n_tasks
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn is_complete(&self) -> bool {
        self.rows.len() == self.n_tasks
    }

    /// `A[i][j]`, both indices from 1.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i - 1][j - 1]
    }

    fn require_complete(&self) -> Result<()> {
        if self.is_complete() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "metric needs all {} rows, matrix has {}",
                self.n_tasks,
                self.rows.len()
            )))
        }
    }

    /// CSV with header `after_task,task_1,...,task_T`, one line per row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("after_task");
        for j in 1..=self.n_tasks {
            write!(s, ",task_{j}").unwrap();
        }
        s.push('\n');
        for (i, row) in self.rows.iter().enumerate() {
            write!(s, "{}", i + 1).unwrap();
            for v in row {
                write!(s, ",{v}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Format("empty matrix file".into()))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        let t = cols.len().saturating_sub(1);
        let expected: Vec<String> = std::iter::once("after_task".to_string())
            .chain((1..=t).map(|j| format!("task_{j}")))
            .collect();
        if t == 0 || cols != expected {
            return Err(Error::Format(format!("bad matrix header `{header}`")));
        }
        let mut m = Self::new(t)?;
        for (k, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.first() != Some(&(k + 1).to_string().as_str()) {
                return Err(Error::Format(format!("matrix row {} is out of order", k + 1)));
            }
            let row = fields[1..]
                .iter()
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|_| Error::Format(format!("bad accuracy `{f}` in row {}", k + 1)))
                })
                .collect::<Result<Vec<_>>>()?;
            m.push_row(row)?;
        }
        Ok(m)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }
}

/// Mean of the last row.
pub fn final_accuracy(a: &AccuracyMatrix) -> Result<f64> {
    a.require_complete()?;
    let last = &a.rows[a.n_tasks - 1];
    Ok(last.iter().sum::<f64>() / a.n_tasks as f64)
}

/// Mean over steps of the mean accuracy on tasks seen so far.
pub fn continual_accuracy(a: &AccuracyMatrix) -> Result<f64> {
    a.require_complete()?;
    let t = a.n_tasks;
    let total: f64 = (1..=t)
        .map(|i| (1..=i).map(|j| a.get(i, j)).sum::<f64>() / i as f64)
        .sum();
    Ok(total / t as f64)
}

/// Mean drop from each earlier task's best accuracy to its final accuracy.
pub fn forgetting(a: &AccuracyMatrix) -> Result<f64> {
    a.require_complete()?;
    let t = a.n_tasks;
    if t < 2 {
        return Err(Error::InvalidArgument("forgetting needs at least 2 tasks".into()));
    }
    let total: f64 = (1..t)
        .map(|j| {
            let best = (j..t).map(|i| a.get(i, j)).fold(f64::NEG_INFINITY, f64::max);
            best - a.get(t, j)
        })
        .sum();
    Ok(total / (t - 1) as f64)
}

/// Mean gain on each task just before training it, over the random baseline.
pub fn forward_transfer(a: &AccuracyMatrix, baseline: &[f64]) -> Result<f64> {
    a.require_complete()?;
    let t = a.n_tasks;
    if t < 2 {
        return Err(Error::InvalidArgument("forward transfer needs at least 2 tasks".into()));
    }
    if baseline.len() != t {
        return Err(Error::Shape(format!("baseline of {} for {t} tasks", baseline.len())));
    }
    let total: f64 = (2..=t).map(|j| a.get(j - 1, j) - baseline[j - 1]).sum();
    Ok(total / (t - 1) as f64)
}

/// Fraction of windows whose predicted class equals their label.
pub fn accuracy(predicted: &[ClassId], windows: &[Window]) -> Result<f64> {
    if windows.is_empty() {
        return Err(Error::InvalidArgument("empty test set".into()));
    }
    let hits = predicted
        .iter()
        .zip(windows)
        .filter(|(p, w)| w.label == Some(**p))
        .count();
    Ok(hits as f64 / windows.len() as f64)
}

/// One matrix row: accuracy on every task's test set, argmax over all of
/// the model's outputs.
pub fn evaluate(model: &ModelState, task_test_sets: &[Vec<Window>]) -> Result<Vec<f64>> {
    task_test_sets
        .iter()
        .map(|ws| {
            if ws.is_empty() {
                return Err(Error::InvalidArgument("empty test set".into()));
            }
            accuracy(&model.predict(ws)?, ws)
        })
        .collect()
}

/// Per-task accuracy of untrained models whose head covers `first_classes`,
/// averaged over `n_seeds` initializations.
pub fn random_baseline(
    config: &ModelConfig,
    first_classes: &[ClassId],
    task_test_sets: &[Vec<Window>],
    seed: u64,
    n_seeds: usize,
) -> Result<Vec<f64>> {
    if n_seeds == 0 {
        return Err(Error::InvalidArgument("baseline needs at least one seed".into()));
    }
    let mut sum = vec![0.0; task_test_sets.len()];
    for k in 0..n_seeds as u64 {
        let mut r = rng::stream(seed.wrapping_add(k), tags::BASELINE);
        let mut m = ModelState::new(config.clone(), &mut r)?;
        m.grow_classifier(first_classes, &mut r)?;
        for (s, v) in sum.iter_mut().zip(evaluate(&m, task_test_sets)?) {
            *s += v;
        }
    }
    Ok(sum.into_iter().map(|s| s / n_seeds as f64).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub fa: f64,
    pub ca: f64,
    pub forgetting: Option<f64>,
    pub forward_transfer: Option<f64>,
}

impl Metrics {
    /// All four metrics; those undefined for T = 1 or without a baseline are
    /// `None`.
    pub fn compute(a: &AccuracyMatrix, baseline: Option<&[f64]>) -> Result<Self> {
        let multi = a.n_tasks() >= 2;
        Ok(Self {
            fa: final_accuracy(a)?,
            ca: continual_accuracy(a)?,
            forgetting: if multi { Some(forgetting(a)?) } else { None },
            forward_transfer: match baseline {
                Some(b) if multi => Some(forward_transfer(a, b)?),
                _ => None,
            },
        })
    }
}
