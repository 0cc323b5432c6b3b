use super::{ClassId, RawRecording};
use crate::numerics::Tensor;
use crate::{Error, Result};

pub const WINDOW_LEN: usize = 384;
pub const CHANNELS: usize = 3;

/// A `[timesteps × 3]` accelerometer segment, stored time-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Window {
    values: Tensor,
    pub label: Option<ClassId>,
    pub subject_id: u32,
}

impl Window {
    pub fn new(values: Tensor, label: Option<ClassId>, subject_id: u32) -> Result<Self> {
        match *values.shape() {
            [t, CHANNELS] if t > 0 => {}
            ref s => {
                return Err(Error::Shape(format!(
                    "window must be [T, {CHANNELS}], got {s:?}"
                )))
            }
        }
        if !values.is_finite() {
            return Err(Error::NonFinite("window values".into()));
        }
        Ok(Self {
            values,
            label,
            subject_id,
        })
    }

    /// Builds a window from `(x, y, z)` triples.
    pub fn from_xyz(samples: &[[f64; 3]], label: Option<ClassId>, subject_id: u32) -> Result<Self> {
        let data = samples.iter().flatten().copied().collect();
        Self::new(Tensor::new(vec![samples.len(), CHANNELS], data)?, label, subject_id)
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample(&self, t: usize) -> [f64; 3] {
        let d = self.values.data();
        [d[3 * t], d[3 * t + 1], d[3 * t + 2]]
    }

    /// Same label and subject with new values.
    pub fn with_values(&self, values: Tensor) -> Result<Self> {
        Self::new(values, self.label, self.subject_id)
    }

    pub fn with_label(mut self, label: Option<ClassId>) -> Self {
        self.label = label;
        self
    }

    /// Stacks windows into a channels-first batch `[B, 3, T]`.
    pub fn batch_channels_first<'a>(windows: impl IntoIterator<Item = &'a Window>) -> Result<Tensor> {
        let mut data = Vec::new();
        let mut count = 0;
        let mut len = None;
        for w in windows {
            let t = w.len();
            if *len.get_or_insert(t) != t {
                return Err(Error::Shape("windows in a batch differ in length".into()));
            }
            let v = w.values.data();
            for c in 0..CHANNELS {
                data.extend((0..t).map(|i| v[i * CHANNELS + c]));
            }
            count += 1;
        }
        let len = len.ok_or_else(|| Error::InvalidArgument("empty batch".into()))?;
        Tensor::new(vec![count, CHANNELS, len], data)
    }
}

/// Cuts a recording into non-overlapping windows of `length` samples.
/// A trailing partial window is dropped.
pub fn window_signal(rec: &RawRecording, length: usize) -> Result<Vec<Window>> {
    if length == 0 {
        return Err(Error::InvalidArgument("window length must be at least 1".into()));
    }
    rec.samples
        .chunks_exact(length)
        .map(|chunk| {
            let xyz: Vec<[f64; 3]> = chunk.iter().map(|r| r.xyz).collect();
            Window::from_xyz(&xyz, Some(rec.activity), rec.subject_id)
        })
        .collect()
}
