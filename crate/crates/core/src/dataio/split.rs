use std::collections::BTreeSet;

use rand::seq::SliceRandom;

use super::Window;
use crate::rng::{self, tags};
use crate::{Error, Result};

/// Holds out `round(fraction × subjects)` whole subjects as the test side.
///
/// The count is clamped to `[1, subjects - 1]` so both sides are non-empty.
pub fn split_subjects(
    windows: Vec<Window>,
    holdout_fraction: f64,
    seed: u64,
) -> Result<(Vec<Window>, Vec<Window>)> {
    if !(holdout_fraction > 0.0 && holdout_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "holdout fraction {holdout_fraction} not in (0, 1)"
        )));
    }
    let subjects: Vec<u32> = windows
        .iter()
        .map(|w| w.subject_id)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if subjects.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "a subject split needs at least 2 subjects, found {}",
            subjects.len()
        )));
    }
    let n_test = ((holdout_fraction * subjects.len() as f64).round() as usize).clamp(1, subjects.len() - 1);
    let mut order = subjects;
    order.shuffle(&mut rng::stream(seed, tags::SPLIT));
    let test_subjects: BTreeSet<u32> = order[..n_test].iter().copied().collect();
    Ok(windows
        .into_iter()
        .partition(|w| !test_subjects.contains(&w.subject_id)))
}
