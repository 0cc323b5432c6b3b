use std::f64::consts::TAU;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{ClassId, Window, WINDOW_LEN};
use crate::rng::{self, tags};
use crate::{Error, Result};

const SAMPLE_RATE_HZ: f64 = 20.0;

/// Parameters of the synthetic tri-axial activity generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub n_classes: usize,
    pub n_subjects: usize,
    pub windows_per_class: usize,
    #[serde(default = "default_noise")]
    pub noise_std: f64,
    /// Per-subject spread of gain and tempo.
    #[serde(default = "default_subject_spread")]
    pub subject_spread: f64,
}

fn default_noise() -> f64 {
    0.3
}

fn default_subject_spread() -> f64 {
    0.1
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_classes: 12,
            n_subjects: 10,
            windows_per_class: 200,
            noise_std: default_noise(),
            subject_spread: default_subject_spread(),
        }
    }
}

struct ClassFamily {
    freq_hz: f64,
    amplitude: [f64; 3],
    axis_phase: [f64; 3],
    harmonic: f64,
    phase_noise: f64,
    gravity: [f64; 3],
}

struct Subject {
    gain: f64,
    tempo: f64,
    offset: [f64; 3],
}

/// Points spread evenly over the unit sphere (Fibonacci lattice).
fn sphere_points(n: usize) -> Vec<[f64; 3]> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - y * y).sqrt();
            let th = golden * i as f64;
            [r * th.cos(), y, r * th.sin()]
        })
        .collect()
}

fn families<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<ClassFamily> {
    let mut freqs: Vec<f64> = (0..n)
        .map(|i| 0.4 + 3.1 * i as f64 / (n.max(2) - 1) as f64)
        .collect();
    freqs.shuffle(rng);
    let mut gravity = sphere_points(n);
    gravity.shuffle(rng);
    freqs
        .into_iter()
        .zip(gravity)
        .map(|(freq_hz, g)| ClassFamily {
            freq_hz,
            amplitude: [(); 3].map(|_| rng.random_range(0.3..1.5)),
            axis_phase: [(); 3].map(|_| rng.random_range(0.0..TAU)),
            harmonic: rng.random_range(0.0..0.5),
            phase_noise: rng.random_range(0.01..0.15),
            gravity: g,
        })
        .collect()
}

/// Generates `windows_per_class` labelled windows for each class, spread
/// round-robin over subjects `1..=n_subjects`. Deterministic per seed.
pub fn synth_har(cfg: &SynthConfig, seed: u64) -> Result<Vec<Window>> {
    if cfg.n_classes == 0 || cfg.n_subjects == 0 || cfg.windows_per_class == 0 {
        return Err(Error::InvalidArgument(
            "synthetic data needs at least one class, subject and window".into(),
        ));
    }
    if !(cfg.noise_std >= 0.0 && cfg.subject_spread >= 0.0) {
        return Err(Error::InvalidArgument("noise levels must be non-negative".into()));
    }
    let mut r = rng::stream(seed, tags::SYNTH);
    let fams = families(cfg.n_classes, &mut r);
    let spread = Normal::new(0.0, cfg.subject_spread).expect("finite spread");
    let subjects: Vec<Subject> = (0..cfg.n_subjects)
        .map(|_| Subject {
            gain: 1.0 + spread.sample(&mut r),
            tempo: 1.0 + 0.5 * spread.sample(&mut r),
            offset: [(); 3].map(|_| 2.0 * spread.sample(&mut r)),
        })
        .collect();
    let noise = Normal::new(0.0, cfg.noise_std).expect("finite noise");
    let mut out = Vec::with_capacity(cfg.n_classes * cfg.windows_per_class);
    for (class, fam) in fams.iter().enumerate() {
        let jitter = Normal::new(0.0, fam.phase_noise).expect("finite phase noise");
        for i in 0..cfg.windows_per_class {
            let s = i % cfg.n_subjects;
            let subj = &subjects[s];
            let step = TAU * fam.freq_hz * subj.tempo / SAMPLE_RATE_HZ;
            let mut phase = r.random_range(0.0..TAU);
            let mut xyz = Vec::with_capacity(WINDOW_LEN);
            for _ in 0..WINDOW_LEN {
                let mut v = [0.0; 3];
                for a in 0..3 {
                    let p = phase + fam.axis_phase[a];
                    let wave = p.sin() + fam.harmonic * (2.0 * p).sin();
                    v[a] = fam.gravity[a] + subj.offset[a] + subj.gain * fam.amplitude[a] * wave + noise.sample(&mut r);
                }
                xyz.push(v);
                phase += step + jitter.sample(&mut r);
            }
            out.push(Window::from_xyz(&xyz, Some(class as ClassId), s as u32 + 1)?);
        }
    }
    Ok(out)
}
