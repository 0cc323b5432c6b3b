//! Sensor time-series transforms and two-view generation.
//!
//! Each view is `warp(scale(rotate(w)))` with fresh randomness. All three
//! stages can be switched off independently.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataio::{Window, CHANNELS};
use crate::numerics::Tensor;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub rotation_enabled: bool,
    pub scaling_enabled: bool,
    pub scaling_sigma: f64,
    pub scaling_clip: (f64, f64),
    pub warp_enabled: bool,
    pub warp_knots: usize,
    pub warp_sigma: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            rotation_enabled: true,
            scaling_enabled: true,
            scaling_sigma: 0.1,
            scaling_clip: (0.7, 1.3),
            warp_enabled: true,
            warp_knots: 4,
            warp_sigma: 0.2,
        }
    }
}

impl AugmentConfig {
    pub fn disabled() -> Self {
        Self {
            rotation_enabled: false,
            scaling_enabled: false,
            warp_enabled: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.scaling_clip;
        if !(lo > 0.0 && lo <= 1.0 && hi >= 1.0) {
            return Err(Error::Config(format!("scaling clip ({lo}, {hi}) must satisfy 0 < lo <= 1 <= hi")));
        }
        if !(self.scaling_sigma > 0.0 && self.scaling_sigma.is_finite()) {
            return Err(Error::Config("scaling sigma must be positive".into()));
        }
        if self.warp_knots < 2 {
            return Err(Error::Config("time warp needs at least 2 knots".into()));
        }
        if !(self.warp_sigma > 0.0 && self.warp_sigma.is_finite()) {
            return Err(Error::Config("warp sigma must be positive".into()));
        }
        Ok(())
    }
}

/// Rodrigues rotation matrix about a unit `axis`.
pub fn rotation_matrix(axis: [f64; 3], angle: f64) -> [[f64; 3]; 3] {
    let [x, y, z] = axis;
    let (s, c) = angle.sin_cos();
    let t = 1.0 - c;
    [
        [c + x * x * t, x * y * t - z * s, x * z * t + y * s],
        [y * x * t + z * s, c + y * y * t, y * z * t - x * s],
        [z * x * t - y * s, z * y * t + x * s, c + z * z * t],
    ]
}

fn check_channels(w: &Window) -> Result<()> {
    match w.values().shape() {
        [_, c] if *c == CHANNELS => Ok(()),
        s => Err(Error::Shape(format!("rotation needs {CHANNELS} channels, window is {s:?}"))),
    }
}

pub fn rotate(w: &Window, r: &[[f64; 3]; 3]) -> Result<Window> {
    check_channels(w)?;
    let mut data = w.values().data().to_vec();
    for v in data.chunks_exact_mut(3) {
        let p = [v[0], v[1], v[2]];
        for (out, row) in v.iter_mut().zip(r) {
            *out = row[0] * p[0] + row[1] * p[1] + row[2] * p[2];
        }
    }
    w.with_values(Tensor::new(w.values().shape().to_vec(), data)?)
}

pub fn random_rotation<R: Rng + ?Sized>(w: &Window, rng: &mut R) -> Result<Window> {
    // A normalized isotropic Gaussian is uniform on the sphere.
    let axis = loop {
        let g: [f64; 3] = [(); 3].map(|_| StandardNormal.sample(rng));
        let n = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
        if n > 1e-12 {
            break g.map(|v| v / n);
        }
    };
    let angle = rng.random_range(0.0..TAU);
    rotate(w, &rotation_matrix(axis, angle))
}

pub fn scale(w: &Window, s: f64) -> Result<Window> {
    w.with_values(w.values().map(|v| v * s))
}

pub fn sample_scale<R: Rng + ?Sized>(cfg: &AugmentConfig, rng: &mut R) -> f64 {
    let (lo, hi) = cfg.scaling_clip;
    let n = Normal::new(1.0, cfg.scaling_sigma).expect("validated sigma");
    n.sample(rng).clamp(lo, hi)
}

pub fn random_scaling<R: Rng + ?Sized>(w: &Window, cfg: &AugmentConfig, rng: &mut R) -> Result<Window> {
    scale(w, sample_scale(cfg, rng))
}

/// Warp path τ(t) for t = 0..len from per-segment log-speeds.
///
/// The time axis is cut into `displacements.len()` equal segments; segment k
/// runs at speed `exp(d_k)` and the cumulative sum is rescaled so that
/// τ(0) = 0 and τ(len−1) = len−1. Values within 1e−9 of an integer snap to it.
pub fn warp_path(len: usize, displacements: &[f64]) -> Vec<f64> {
    if len < 2 || displacements.is_empty() {
        return (0..len).map(|t| t as f64).collect();
    }
    let last = (len - 1) as f64;
    let k = displacements.len();
    let speeds: Vec<f64> = displacements.iter().map(|d| d.exp()).collect();
    let total: f64 = speeds.iter().sum();
    let mut knots = Vec::with_capacity(k + 1);
    let mut acc = 0.0;
    knots.push(0.0);
    for s in &speeds {
        acc += s;
        knots.push(last * acc / total);
    }
    knots[k] = last;
    let seg = last / k as f64;
    (0..len)
        .map(|t| {
            let u = t as f64 / seg;
            let i = (u.floor() as usize).min(k - 1);
            let frac = u - i as f64;
            let tau = knots[i] + frac * (knots[i + 1] - knots[i]);
            let r = tau.round();
            if (tau - r).abs() < 1e-9 {
                r
            } else {
                tau.clamp(0.0, last)
            }
        })
        .collect()
}

/// Resamples `w` at the fractional positions in `path` by linear interpolation.
pub fn apply_warp(w: &Window, path: &[f64]) -> Result<Window> {
    let v = w.values();
    let len = w.len();
    if path.len() != len {
        return Err(Error::Shape(format!("warp path length {} for window of {len}", path.len())));
    }
    let c = v.shape()[1];
    let src = v.data();
    let mut data = Vec::with_capacity(src.len());
    for &tau in path {
        let i0 = tau.floor() as usize;
        let frac = tau - i0 as f64;
        for ch in 0..c {
            let a = src[i0 * c + ch];
            data.push(if frac == 0.0 || i0 + 1 >= len {
                a
            } else {
                a + frac * (src[(i0 + 1) * c + ch] - a)
            });
        }
    }
    w.with_values(Tensor::new(v.shape().to_vec(), data)?)
}

pub fn sample_warp_path<R: Rng + ?Sized>(len: usize, cfg: &AugmentConfig, rng: &mut R) -> Vec<f64> {
    let n = Normal::new(0.0, cfg.warp_sigma).expect("validated sigma");
    let d: Vec<f64> = (0..cfg.warp_knots).map(|_| n.sample(rng)).collect();
    warp_path(len, &d)
}

pub fn time_warp<R: Rng + ?Sized>(w: &Window, cfg: &AugmentConfig, rng: &mut R) -> Result<Window> {
    apply_warp(w, &sample_warp_path(w.len(), cfg, rng))
}

/// One augmented view.
pub fn augment<R: Rng + ?Sized>(w: &Window, cfg: &AugmentConfig, rng: &mut R) -> Result<Window> {
    let mut out = w.clone();
    if cfg.rotation_enabled {
        out = random_rotation(&out, rng)?;
    }
    if cfg.scaling_enabled {
        out = random_scaling(&out, cfg, rng)?;
    }
    if cfg.warp_enabled {
        out = time_warp(&out, cfg, rng)?;
    }
    Ok(out)
}

pub fn two_views<R: Rng + ?Sized>(w: &Window, cfg: &AugmentConfig, rng: &mut R) -> Result<(Window, Window)> {
    Ok((augment(w, cfg, rng)?, augment(w, cfg, rng)?))
}
