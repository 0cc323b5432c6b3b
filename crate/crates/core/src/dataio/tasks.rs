use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{activity_code, ClassId};
use crate::{Error, Result};

/// Ordered, pairwise-disjoint class groups defining a class-incremental
/// curriculum.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    tasks: Vec<Vec<ClassId>>,
}

impl TaskSpec {
    /// Validates an explicit assignment against the dataset's class set.
    pub fn explicit(tasks: Vec<Vec<ClassId>>, classes: &BTreeSet<ClassId>) -> Result<Self> {
        if tasks.is_empty() || tasks.iter().any(Vec::is_empty) {
            return Err(Error::InvalidArgument("every task needs at least one class".into()));
        }
        let mut seen = BTreeSet::new();
        for &c in tasks.iter().flatten() {
            if !seen.insert(c) {
                return Err(Error::InvalidArgument(format!("class {c} appears in two tasks")));
            }
        }
        if &seen != classes {
            return Err(Error::InvalidArgument(format!(
                "tasks cover {seen:?}, dataset has {classes:?}"
            )));
        }
        Ok(Self { tasks })
    }

    /// Random equal-size partition of `classes` into `n_tasks` groups.
    pub fn seeded<R: Rng + ?Sized>(classes: &BTreeSet<ClassId>, n_tasks: usize, rng: &mut R) -> Result<Self> {
        if n_tasks == 0 || classes.is_empty() || classes.len() % n_tasks != 0 {
            return Err(Error::InvalidArgument(format!(
                "{} classes cannot be split evenly into {n_tasks} tasks",
                classes.len()
            )));
        }
        let mut order: Vec<ClassId> = classes.iter().copied().collect();
        order.shuffle(rng);
        let per = order.len() / n_tasks;
        Ok(Self {
            tasks: order.chunks(per).map(<[ClassId]>::to_vec).collect(),
        })
    }

    /// The six three-class WISDM2019 tasks used in the reference evaluation.
    pub fn canonical_wisdm() -> Self {
        const LETTERS: [[char; 3]; 6] = [
            ['S', 'C', 'A'],
            ['D', 'K', 'I'],
            ['E', 'L', 'R'],
            ['G', 'B', 'J'],
            ['H', 'Q', 'F'],
            ['O', 'M', 'P'],
        ];
        Self {
            tasks: LETTERS
                .iter()
                .map(|t| t.iter().map(|&c| activity_code(c).expect("table letter")).collect())
                .collect(),
        }
    }

    pub fn tasks(&self) -> &[Vec<ClassId>] {
        &self.tasks
    }

    pub fn n_tasks(&self) -> usize {
        self.tasks.len()
    }

    /// Classes of task `t`, counted from 1.
    pub fn classes(&self, t: usize) -> &[ClassId] {
        &self.tasks[t - 1]
    }

    pub fn task_of(&self, class: ClassId) -> Option<usize> {
        self.tasks.iter().position(|g| g.contains(&class)).map(|i| i + 1)
    }

    pub fn all_classes(&self) -> BTreeSet<ClassId> {
        self.tasks.iter().flatten().copied().collect()
    }
}
