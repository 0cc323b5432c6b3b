use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{ClassId, Window};
use crate::{Error, Result};

/// Labelled exemplars retained from earlier tasks.
///
/// Each task contributes `ceil(fraction × labelled windows)` raw
/// (un-augmented) windows, sampled stratified by class.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplayBuffer {
    windows: Vec<Window>,
    fraction: f64,
    contributed: Vec<usize>,
}

impl ReplayBuffer {
    pub fn new(fraction: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::InvalidArgument(format!("replay fraction {fraction} not in [0, 1]")));
        }
        Ok(Self {
            windows: Vec::new(),
            fraction,
            contributed: Vec::new(),
        })
    }

    pub fn windows(&self) -> &[Window] {
        &self.windows
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn fraction(&self) -> f64 {
        self.fraction
    }

    /// Number of windows each extension added, in order.
    pub fn contributions(&self) -> &[usize] {
        &self.contributed
    }

    /// Quota for a task with `labelled` windows.
    pub fn quota(&self, labelled: usize) -> usize {
        // The epsilon keeps e.g. 0.01 × 300 from rounding up to 4.
        ((self.fraction * labelled as f64) - 1e-9).ceil().max(0.0) as usize
    }

    /// Samples this task's exemplars and appends them. Unlabelled windows
    /// are ignored.
    pub fn extend<R: Rng + ?Sized>(&mut self, task_windows: &[Window], rng: &mut R) -> Result<usize> {
        let mut by_class: BTreeMap<ClassId, Vec<&Window>> = BTreeMap::new();
        for w in task_windows {
            if let Some(c) = w.label {
                by_class.entry(c).or_default().push(w);
            }
        }
        let labelled: usize = by_class.values().map(Vec::len).sum();
        let quota = self.quota(labelled);
        let counts = stratify(&by_class, quota, rng);
        let mut added = 0;
        for (class, members) in &by_class {
            let take = counts.get(class).copied().unwrap_or(0);
            let mut pool = members.clone();
            pool.shuffle(rng);
            self.windows.extend(pool.into_iter().take(take).cloned());
            added += take;
        }
        self.contributed.push(added);
        Ok(added)
    }
}

/// Splits `quota` across classes: one per class first (when the quota
/// allows), the remainder proportionally to class size by largest
/// remainder. With fewer slots than classes, the slots go to randomly
/// chosen classes.
fn stratify<R: Rng + ?Sized>(
    by_class: &BTreeMap<ClassId, Vec<&Window>>,
    quota: usize,
    rng: &mut R,
) -> BTreeMap<ClassId, usize> {
    let mut counts: BTreeMap<ClassId, usize> = by_class.keys().map(|&c| (c, 0)).collect();
    if quota == 0 || by_class.is_empty() {
        return counts;
    }
    let k = by_class.len();
    if quota < k {
        let mut classes: Vec<ClassId> = by_class.keys().copied().collect();
        classes.shuffle(rng);
        for c in classes.into_iter().take(quota) {
            counts.insert(c, 1);
        }
        return counts;
    }
    for v in counts.values_mut() {
        *v = 1;
    }
    let rest = quota - k;
    let spare: BTreeMap<ClassId, usize> = by_class.iter().map(|(&c, m)| (c, m.len() - 1)).collect();
    let total_spare: usize = spare.values().sum();
    if rest == 0 || total_spare == 0 {
        return counts;
    }
    let mut remainders = Vec::new();
    let mut given = 0;
    for (&c, &s) in &spare {
        let exact = rest as f64 * s as f64 / total_spare as f64;
        let floor = (exact.floor() as usize).min(s);
        *counts.get_mut(&c).unwrap() += floor;
        given += floor;
        remainders.push((exact - floor as f64, c));
    }
    remainders.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    // quota <= labelled, so rest <= total_spare and this terminates
    let order: Vec<ClassId> = remainders.into_iter().map(|(_, c)| c).collect();
    let mut i = 0;
    while given < rest {
        let c = order[i % order.len()];
        if counts[&c] - 1 < spare[&c] {
            *counts.get_mut(&c).unwrap() += 1;
            given += 1;
        }
        i += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn task(classes: &[(ClassId, usize)]) -> Vec<Window> {
        classes
            .iter()
            .flat_map(|&(c, n)| (0..n).map(move |i| Window::from_xyz(&[[i as f64; 3]], Some(c), 1).unwrap()))
            .collect()
    }

    fn per_class(buf: &ReplayBuffer) -> BTreeMap<ClassId, usize> {
        let mut m = BTreeMap::new();
        for w in buf.windows() {
            *m.entry(w.label.unwrap()).or_insert(0) += 1;
        }
        m
    }

    #[test]
    fn one_percent_of_thousand() {
        let mut b = ReplayBuffer::new(0.01).unwrap();
        let added = b.extend(&task(&[(0, 400), (1, 350), (2, 250)]), &mut rng::stream(0, 0)).unwrap();
        assert_eq!(added, 10);
        assert_eq!(b.len(), 10);
    }

    #[test]
    fn zero_fraction_leaves_buffer_empty() {
        let mut b = ReplayBuffer::new(0.0).unwrap();
        b.extend(&task(&[(0, 100)]), &mut rng::stream(0, 0)).unwrap();
        assert!(b.is_empty());
    }

    #[test]
    fn one_per_class() {
        let mut b = ReplayBuffer::new(0.01).unwrap();
        b.extend(&task(&[(0, 100), (1, 100), (2, 100)]), &mut rng::stream(3, 0)).unwrap();
        assert_eq!(per_class(&b), [(0, 1), (1, 1), (2, 1)].into());
    }

    #[test]
    fn retains_previous_tasks() {
        let mut b = ReplayBuffer::new(0.05).unwrap();
        let mut r = rng::stream(1, 0);
        b.extend(&task(&[(0, 40), (1, 40)]), &mut r).unwrap();
        let first = b.windows().to_vec();
        b.extend(&task(&[(2, 40), (3, 40)]), &mut r).unwrap();
        assert_eq!(&b.windows()[..first.len()], &first[..]);
        assert_eq!(b.contributions(), &[4, 4]);
    }

    #[test]
    fn fewer_slots_than_classes() {
        let mut b = ReplayBuffer::new(0.01).unwrap();
        b.extend(&task(&[(0, 50), (1, 50), (2, 50)]), &mut rng::stream(2, 0)).unwrap();
        assert_eq!(b.len(), 2);
        assert!(per_class(&b).values().all(|&n| n == 1));
    }

    #[test]
    fn unlabelled_windows_ignored() {
        let mut ws = task(&[(0, 100)]);
        ws.extend((0..100).map(|_| Window::from_xyz(&[[0.0; 3]], None, 1).unwrap()));
        let mut b = ReplayBuffer::new(0.02).unwrap();
        assert_eq!(b.extend(&ws, &mut rng::stream(0, 0)).unwrap(), 2);
        assert!(b.windows().iter().all(|w| w.label.is_some()));
    }

    #[test]
    fn bad_fraction() {
        assert!(ReplayBuffer::new(-0.1).is_err());
        assert!(ReplayBuffer::new(1.5).is_err());
    }

    proptest::proptest! {
        #[test]
        fn size_law(sizes in proptest::collection::vec(proptest::collection::vec(1usize..60, 1..5), 1..5),
                    fraction in 0.0f64..1.0, seed in 0u64..1000) {
            let mut b = ReplayBuffer::new(fraction).unwrap();
            let mut r = rng::stream(seed, 0);
            let mut expected = 0;
            for (t, classes) in sizes.iter().enumerate() {
                let spec: Vec<(ClassId, usize)> = classes.iter().enumerate().map(|(i, &n)| (t * 10 + i, n)).collect();
                let ws = task(&spec);
                expected += b.quota(ws.len());
                b.extend(&ws, &mut r).unwrap();
                proptest::prop_assert_eq!(b.len(), expected);
            }
        }
    }
}
