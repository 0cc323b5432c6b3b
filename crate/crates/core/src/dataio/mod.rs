//! Sensor data: WISDM ingestion, windowing, normalization, subject splits,
//! class-incremental task specs, the labelled replay buffer, a synthetic
//! generator and the binary window cache.

mod cache;
mod norm;
mod replay;
mod split;
mod synth;
mod tasks;
mod window;
mod wisdm;

pub use cache::{read_cache, write_cache, CACHE_MAGIC};
pub use norm::{fit_normalization, NormalizationStats};
pub use replay::ReplayBuffer;
pub use split::split_subjects;
pub use synth::{synth_har, SynthConfig};
pub use tasks::TaskSpec;
pub use window::{window_signal, Window, CHANNELS, WINDOW_LEN};
pub use wisdm::{
    activity_code, activity_name, parse_wisdm, parse_wisdm_str, RawRecording, Reading, ACTIVITIES,
};

/// Index of an activity class; for WISDM data this is the position of the
/// activity letter in [`ACTIVITIES`].
pub type ClassId = usize;
