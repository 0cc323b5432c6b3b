use serde::{Deserialize, Serialize};

use super::{Window, CHANNELS};
use crate::numerics::Tensor;
use crate::{Error, Result};

const STD_FLOOR: f64 = 1e-8;

/// Per-channel z-normalization statistics fitted on training windows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub mean: [f64; CHANNELS],
    pub std: [f64; CHANNELS],
}

pub fn fit_normalization(train: &[Window]) -> Result<NormalizationStats> {
    if train.is_empty() {
        return Err(Error::InvalidArgument("cannot fit normalization on no windows".into()));
    }
    let mut sum = [0.0; CHANNELS];
    let mut n = 0usize;
    for w in train {
        for row in w.values().data().chunks_exact(CHANNELS) {
            for c in 0..CHANNELS {
                sum[c] += row[c];
            }
        }
        n += w.len();
    }
    let mean = sum.map(|s| s / n as f64);
    let mut sq = [0.0; CHANNELS];
    for w in train {
        for row in w.values().data().chunks_exact(CHANNELS) {
            for c in 0..CHANNELS {
                sq[c] += (row[c] - mean[c]).powi(2);
            }
        }
    }
    let std = sq.map(|s| (s / n as f64).sqrt());
    Ok(NormalizationStats { mean, std })
}

impl NormalizationStats {
    fn divisor(&self, c: usize) -> f64 {
        self.std[c].max(STD_FLOOR)
    }

    pub fn apply(&self, w: &Window) -> Result<Window> {
        let data = w
            .values()
            .data()
            .chunks_exact(CHANNELS)
            .flat_map(|row| (0..CHANNELS).map(move |c| (row[c] - self.mean[c]) / self.divisor(c)))
            .collect();
        w.with_values(Tensor::new(w.values().shape().to_vec(), data)?)
    }

    pub fn apply_all(&self, ws: &[Window]) -> Result<Vec<Window>> {
        ws.iter().map(|w| self.apply(w)).collect()
    }

    pub fn invert(&self, w: &Window) -> Result<Window> {
        let data = w
            .values()
            .data()
            .chunks_exact(CHANNELS)
            .flat_map(|row| (0..CHANNELS).map(move |c| row[c] * self.divisor(c) + self.mean[c]))
            .collect();
        w.with_values(Tensor::new(w.values().shape().to_vec(), data)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;

    fn window(rows: &[[f64; 3]]) -> Window {
        Window::from_xyz(rows, Some(0), 1).unwrap()
    }

    #[test]
    fn two_point_channel() {
        let w = window(&[[0.0, 5.0, 1.0], [2.0, 5.0, 3.0]]);
        let s = fit_normalization(std::slice::from_ref(&w)).unwrap();
        assert_eq!(s.mean[0], 1.0);
        assert_eq!(s.std[0], 1.0);
        let n = s.apply(&w).unwrap();
        assert_eq!(n.sample(0)[0], -1.0);
        assert_eq!(n.sample(1)[0], 1.0);
        // constant channel collapses to zero instead of dividing by zero
        assert_eq!(n.sample(0)[1], 0.0);
        assert_eq!(n.sample(1)[1], 0.0);
    }

    #[test]
    fn empty_fit_fails() {
        assert!(fit_normalization(&[]).is_err());
    }

    #[test]
    fn train_stats_differ_from_own_stats() {
        let mut r = rng::stream(11, 0);
        let make = |r: &mut rng::Rng, shift: f64| {
            let t = Tensor::uniform(&[50, 3], -1.0, 1.0, r).map(|v| 2.0 * v + shift);
            Window::new(t, None, 0).unwrap()
        };
        let train: Vec<_> = (0..4).map(|_| make(&mut r, 0.0)).collect();
        let test = make(&mut r, 3.0);
        let train_stats = fit_normalization(&train).unwrap();
        let own_stats = fit_normalization(std::slice::from_ref(&test)).unwrap();
        let a = train_stats.apply(&test).unwrap();
        let b = own_stats.apply(&test).unwrap();
        assert!(a.values().max_abs_diff(b.values()) > 1.0);
        // normalizing with its own stats centres the window exactly
        let m: f64 = (0..50).map(|t| b.sample(t)[0]).sum::<f64>() / 50.0;
        assert!(m.abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn round_trip(vals in proptest::collection::vec(-50.0f64..50.0, 30)) {
            let rows: Vec<[f64; 3]> = vals.chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
            let w = window(&rows);
            let s = fit_normalization(std::slice::from_ref(&w)).unwrap();
            prop_assume!(s.std.iter().all(|&d| d > 1e-3));
            let back = s.invert(&s.apply(&w).unwrap()).unwrap();
            prop_assert!(back.values().max_abs_diff(w.values()) < 1e-10);
        }
    }
}
