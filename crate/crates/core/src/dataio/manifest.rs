//! On-disk dataset layout.
//!
//! ```text
//! manifest.json   { "samples": [ { "id", "height", "width", "image", "masks": [..], "fold"? } ] }
//! images/<id>.raw       height × width int16 little-endian HU, row-major
//! masks/<id>_<j>.raw    height × width uint8, 0 or 255
//! ```
//! Paths inside the manifest are relative to the manifest's directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::NoduleSample;
use crate::error::{Error, Result};
use crate::maskops::{Grid, Mask};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    samples: Vec<ManifestEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestEntry {
    id: String,
    height: usize,
    width: usize,
    image: String,
    masks: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fold: Option<usize>,
}

fn read_file(path: &Path, id: &str) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::Data(format!("sample '{id}': cannot read {}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn decode_image(bytes: &[u8], entry: &ManifestEntry, path: &Path) -> Result<Grid> {
    let expected = entry.height * entry.width * 2;
    if bytes.len() != expected {
        return Err(Error::Data(format!(
            "sample '{}': image {} has {} bytes, expected {expected} for {}x{}",
            entry.id,
            path.display(),
            bytes.len(),
            entry.height,
            entry.width
        )));
    }
    let data = bytes
        .chunks_exact(2)
        .map(|c| f64::from(i16::from_le_bytes([c[0], c[1]])))
        .collect();
    Ok(Grid {
        height: entry.height,
        width: entry.width,
        data,
    })
}

fn decode_mask(bytes: &[u8], entry: &ManifestEntry, path: &Path) -> Result<Mask> {
    let expected = entry.height * entry.width;
    if bytes.len() != expected {
        return Err(Error::Data(format!(
            "sample '{}': mask {} has {} bytes, expected {expected} for {}x{}",
            entry.id,
            path.display(),
            bytes.len(),
            entry.height,
            entry.width
        )));
    }
    let mut data = Vec::with_capacity(expected);
    for &b in bytes {
        match b {
            0 => data.push(0),
            255 => data.push(1),
            other => {
                return Err(Error::Data(format!(
                    "sample '{}': mask {} is non-binary (byte {other})",
                    entry.id,
                    path.display()
                )))
            }
        }
    }
    Mask::new(entry.height, entry.width, data)
}

pub fn load_manifest(path: &Path) -> Result<Vec<NoduleSample>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::Data(format!("{}: malformed manifest: {e}", path.display())))?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    manifest
        .samples
        .iter()
        .map(|entry| {
            let image_path = root.join(&entry.image);
            let hu = decode_image(&read_file(&image_path, &entry.id)?, entry, &image_path)?;
            let masks = entry
                .masks
                .iter()
                .map(|rel| {
                    let p = root.join(rel);
                    decode_mask(&read_file(&p, &entry.id)?, entry, &p)
                })
                .collect::<Result<Vec<_>>>()?;
            NoduleSample::new(entry.id.clone(), hu, masks, entry.fold)
                .map_err(|e| Error::Data(format!("sample '{}': {e}", entry.id)))
        })
        .collect()
}

/// Writes `samples` under `dir` and returns the manifest path.
pub fn save_manifest(samples: &[NoduleSample], dir: &Path) -> Result<PathBuf> {
    let mut entries = Vec::with_capacity(samples.len());
    for s in samples {
        let (height, width) = s.hu_patch.shape();
        let mut bytes = Vec::with_capacity(height * width * 2);
        for &v in &s.hu_patch.data {
            if v.fract() != 0.0 || v < f64::from(i16::MIN) || v > f64::from(i16::MAX) {
                return Err(Error::Data(format!(
                    "sample '{}': HU value {v} is not representable as int16",
                    s.sample_id
                )));
            }
            bytes.extend_from_slice(&(v as i16).to_le_bytes());
        }
        let image = format!("images/{}.raw", s.sample_id);
        write_file(&dir.join(&image), &bytes)?;
        let mut masks = Vec::new();
        for (j, m) in s.annotations.masks().iter().enumerate() {
            let rel = format!("masks/{}_{j}.raw", s.sample_id);
            let raw: Vec<u8> = m.data().iter().map(|&v| if v != 0 { 255 } else { 0 }).collect();
            write_file(&dir.join(&rel), &raw)?;
            masks.push(rel);
        }
        entries.push(ManifestEntry {
            id: s.sample_id.clone(),
            height,
            width,
            image,
            masks,
            fold: s.fold,
        });
    }
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&Manifest { samples: entries })
        .map_err(|e| Error::Data(e.to_string()))?;
    write_file(&path, text.as_bytes())?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::synth_generate;

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut samples = synth_generate(5, 3, 42).unwrap();
        samples[2].fold = Some(1);
        let path = save_manifest(&samples, dir.path()).unwrap();
        assert_eq!(load_manifest(&path).unwrap(), samples);
    }

    #[test]
    fn missing_mask_names_file() {
        let dir = tempfile::tempdir().unwrap();
        let samples = synth_generate(2, 2, 1).unwrap();
        let path = save_manifest(&samples, dir.path()).unwrap();
        let victim = format!("masks/{}_1.raw", samples[1].sample_id);
        fs::remove_file(dir.path().join(&victim)).unwrap();
        let err = load_manifest(&path).unwrap_err().to_string();
        assert!(err.contains(&victim), "{err}");
        assert!(err.contains(&samples[1].sample_id), "{err}");
    }

    #[test]
    fn non_binary_mask_byte_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let samples = synth_generate(1, 2, 1).unwrap();
        let path = save_manifest(&samples, dir.path()).unwrap();
        let mask_path = dir.path().join(format!("masks/{}_0.raw", samples[0].sample_id));
        let mut bytes = fs::read(&mask_path).unwrap();
        bytes[10] = 7;
        fs::write(&mask_path, bytes).unwrap();
        let err = load_manifest(&path).unwrap_err().to_string();
        assert!(err.contains("non-binary"), "{err}");
        assert!(err.contains("byte 7"), "{err}");
    }

    #[test]
    fn wrong_size_image_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let samples = synth_generate(1, 2, 1).unwrap();
        let path = save_manifest(&samples, dir.path()).unwrap();
        let img = dir.path().join(format!("images/{}.raw", samples[0].sample_id));
        fs::write(&img, [0u8; 10]).unwrap();
        assert!(matches!(load_manifest(&path), Err(Error::Data(_))));
    }
}
