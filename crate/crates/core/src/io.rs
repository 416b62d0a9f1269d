//! Hashing, atomic writes and snapshot dumps.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::SceneConfig;
use crate::scalar::Real;
use crate::synth::{Channel, SnapshotMatrix, SnapshotMeta};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Short content hash of a scene, stable across scalar types.
pub fn scene_hash<T: Real>(scene: &SceneConfig<T>) -> String {
    let json = serde_json::to_vec(&scene.cast::<f64>()).expect("scene serialises");
    sha256_hex(&json)[..16].to_string()
}

/// Writes through a temporary file in the destination directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct SnapshotHeader {
    samples: usize,
    receivers: usize,
    layout: String,
    meta: SnapshotMeta,
}

/// Dumps `<base>.bin` (little-endian interleaved re/im f64, sample-major) and `<base>.json`.
pub fn write_snapshot<T: Real>(base: &Path, snap: &SnapshotMatrix<T>) -> Result<()> {
    let mut bin = Vec::with_capacity(snap.data.len() * 16);
    for v in &snap.data {
        bin.extend_from_slice(&v.re.to_f64v().to_le_bytes());
        bin.extend_from_slice(&v.im.to_f64v().to_le_bytes());
    }
    let header = SnapshotHeader {
        samples: snap.k,
        receivers: snap.nr,
        layout: "sample-major, interleaved re/im f64 little-endian".into(),
        meta: snap.meta.clone(),
    };
    write_atomic(&base.with_extension("bin"), &bin)?;
    let json = serde_json::to_vec_pretty(&header).map_err(|e| Error::Config(e.to_string()))?;
    write_atomic(&base.with_extension("json"), &json)
}

pub fn read_snapshot(base: &Path) -> Result<SnapshotMatrix<f64>> {
    let header: SnapshotHeader =
        serde_json::from_slice(&fs::read(base.with_extension("json"))?).map_err(|e| Error::Config(e.to_string()))?;
    let bin = fs::read(base.with_extension("bin"))?;
    if bin.len() != header.samples * header.receivers * 16 {
        return Err(Error::Dimension("snapshot payload length".into()));
    }
    let data = bin
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            Complex::new(re, im)
        })
        .collect();
    Ok(SnapshotMatrix {
        nr: header.receivers,
        k: header.samples,
        data,
        channel: Channel::None,
        meta: header.meta,
    })
}
