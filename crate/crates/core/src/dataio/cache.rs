//! Windowed dataset cache.
//!
//! `<path>` holds the magic `CSSLHAR1`, then window count, window length and
//! channel count as little-endian `u64`, then every window's values as
//! little-endian `f64` in time-major order. `<path>.json` holds labels and
//! subject ids.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ClassId, Window, CHANNELS};
use crate::numerics::Tensor;
use crate::{Error, Result};

pub const CACHE_MAGIC: &[u8; 8] = b"CSSLHAR1";

#[derive(Serialize, Deserialize)]
struct Index {
    labels: Vec<Option<ClassId>>,
    subjects: Vec<u32>,
}

fn index_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".json");
    PathBuf::from(p)
}

pub fn write_cache(path: impl AsRef<Path>, windows: &[Window]) -> Result<()> {
    let path = path.as_ref();
    let len = windows.first().map_or(0, Window::len);
    if windows.iter().any(|w| w.len() != len) {
        return Err(Error::Shape("cached windows must share one length".into()));
    }
    let mut f = BufWriter::new(File::create(path)?);
    f.write_all(CACHE_MAGIC)?;
    for n in [windows.len(), len, CHANNELS] {
        f.write_all(&(n as u64).to_le_bytes())?;
    }
    for w in windows {
        for v in w.values().data() {
            f.write_all(&v.to_le_bytes())?;
        }
    }
    f.flush()?;
    let index = Index {
        labels: windows.iter().map(|w| w.label).collect(),
        subjects: windows.iter().map(|w| w.subject_id).collect(),
    };
    std::fs::write(index_path(path), serde_json::to_vec(&index)?)?;
    Ok(())
}

pub fn read_cache(path: impl AsRef<Path>) -> Result<Vec<Window>> {
    let path = path.as_ref();
    let mut f = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    f.read_exact(&mut magic)?;
    if &magic != CACHE_MAGIC {
        return Err(Error::Format(format!("{} is not a window cache", path.display())));
    }
    let mut u64s = [0usize; 3];
    for slot in &mut u64s {
        let mut b = [0u8; 8];
        f.read_exact(&mut b)?;
        *slot = u64::from_le_bytes(b) as usize;
    }
    let [count, len, channels] = u64s;
    if channels != CHANNELS {
        return Err(Error::Format(format!("cache has {channels} channels, expected {CHANNELS}")));
    }
    let index: Index = serde_json::from_slice(&std::fs::read(index_path(path))?)?;
    if index.labels.len() != count || index.subjects.len() != count {
        return Err(Error::Format("cache index does not match window count".into()));
    }
    let mut buf = vec![0u8; len * channels * 8];
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        f.read_exact(&mut buf)?;
        let data = buf
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
            .collect();
        out.push(Window::new(
            Tensor::new(vec![len, channels], data)?,
            index.labels[i],
            index.subjects[i],
        )?);
    }
    let mut trailing = [0u8; 1];
    if f.read(&mut trailing)? != 0 {
        return Err(Error::Format("trailing bytes after cached windows".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{synth_har, SynthConfig};

    #[test]
    fn round_trip_is_bit_exact() {
        let mut ws = synth_har(
            &SynthConfig {
                n_classes: 2,
                n_subjects: 2,
                windows_per_class: 3,
                ..SynthConfig::default()
            },
            3,
        )
        .unwrap();
        ws[0].label = None;
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("windows.bin");
        write_cache(&p, &ws).unwrap();
        let back = read_cache(&p).unwrap();
        assert_eq!(back.len(), ws.len());
        for (a, b) in ws.iter().zip(&back) {
            assert!(a.values().bit_eq(b.values()));
            assert_eq!((a.label, a.subject_id), (b.label, b.subject_id));
        }
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[..8], b"CSSLHAR1");
        assert_eq!(bytes.len(), 8 + 24 + 6 * 384 * 3 * 8);
    }

    #[test]
    fn rejects_wrong_magic() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.bin");
        std::fs::write(&p, b"NOTACACHE000000000000000000000000").unwrap();
        assert!(matches!(read_cache(&p), Err(Error::Format(_))));
    }
}
