//! Processed datasets on disk: one binary file per window plus `manifest.json`.
//!
//! Window file layout (little-endian):
//!
//! ```text
//! "MFLW" | label u8 | abnormal mask, 4096 bits row-major, LSB first (512 bytes) | 4096 f64 pixels
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::{DatasetRange, FillingMethod};
use crate::scan::{ClassCounts, Label, LabeledDataset, Split, WindowImage, WINDOW_CELLS};

const WINDOW_MAGIC: &[u8; 4] = b"MFLW";
const MASK_BYTES: usize = WINDOW_CELLS / 8;
pub const WINDOW_FILE_LEN: usize = 4 + 1 + MASK_BYTES + WINDOW_CELLS * 8;
pub const MANIFEST_FILE: &str = "manifest.json";

pub fn encode_window(img: &WindowImage) -> Vec<u8> {
    let mut buf = Vec::with_capacity(WINDOW_FILE_LEN);
    buf.extend_from_slice(WINDOW_MAGIC);
    buf.push(img.label as u8);
    let mut mask = [0u8; MASK_BYTES];
    for (i, &m) in img.abnormal_mask.iter().enumerate() {
        if m {
            mask[i / 8] |= 1 << (i % 8);
        }
    }
    buf.extend_from_slice(&mask);
    for p in &img.pixels {
        buf.extend_from_slice(&p.to_le_bytes());
    }
    buf
}

/// Decodes a window file. The source range is not stored in the file and comes back as `(0, 64)`.
pub fn decode_window(bytes: &[u8]) -> Result<WindowImage> {
    if bytes.len() != WINDOW_FILE_LEN {
        return Err(Error::format(
            "window file",
            format!("expected {WINDOW_FILE_LEN} bytes, found {}", bytes.len()),
        ));
    }
    if &bytes[..4] != WINDOW_MAGIC {
        return Err(Error::format("window file", "bad magic"));
    }
    let label = Label::from_index(bytes[4] as usize)
        .ok_or_else(|| Error::format("window file", format!("unknown label {}", bytes[4])))?;
    let mask_bytes = &bytes[5..5 + MASK_BYTES];
    let abnormal_mask = (0..WINDOW_CELLS)
        .map(|i| mask_bytes[i / 8] >> (i % 8) & 1 == 1)
        .collect();
    let pixels = bytes[5 + MASK_BYTES..]
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok(WindowImage {
        pixels,
        abnormal_mask,
        source_range: (0, crate::scan::WINDOW),
        label,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowEntry {
    pub file: String,
    pub split: Split,
    pub label: Label,
    pub start: usize,
    pub end: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub augmentation: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub artifact_version: String,
    pub stage: String,
    pub config: serde_json::Value,
    pub config_hash: String,
    /// Input name -> sha256 of its bytes.
    pub inputs: BTreeMap<String, String>,
    pub filling: FillingMethod,
    pub range: Option<DatasetRange>,
    pub class_counts: ClassCounts,
    pub windows: Vec<WindowEntry>,
}

/// Provenance for one `save_dataset` call; counts and window entries are filled in.
#[derive(Debug, Clone)]
pub struct ManifestMeta {
    pub stage: String,
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub filling: FillingMethod,
    pub range: Option<DatasetRange>,
}

pub fn save_dataset(
    dir: &Path,
    dataset: &LabeledDataset,
    augmentation: &[Option<String>],
    meta: ManifestMeta,
) -> Result<DatasetManifest> {
    let windows_dir = dir.join("windows");
    std::fs::create_dir_all(&windows_dir)?;
    let mut windows = Vec::with_capacity(dataset.len());
    for (i, (img, split)) in dataset.images.iter().zip(&dataset.splits).enumerate() {
        let file = format!("windows/{i:06}.mflw");
        std::fs::write(dir.join(&file), encode_window(img))?;
        windows.push(WindowEntry {
            file,
            split: *split,
            label: img.label,
            start: img.source_range.0,
            end: img.source_range.1,
            augmentation: augmentation.get(i).cloned().flatten(),
        });
    }
    let manifest = DatasetManifest {
        artifact_version: crate::VERSION.to_string(),
        stage: meta.stage,
        config_hash: crate::hashing::hash_json(&meta.config),
        config: meta.config,
        inputs: meta.inputs,
        filling: meta.filling,
        range: meta.range,
        class_counts: dataset.class_counts(),
        windows,
    };
    std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    Ok(serde_json::from_str(&std::fs::read_to_string(
        dir.join(MANIFEST_FILE),
    )?)?)
}

pub fn load_dataset(dir: &Path) -> Result<(LabeledDataset, DatasetManifest)> {
    let manifest = read_manifest(dir)?;
    let mut dataset = LabeledDataset::default();
    for entry in &manifest.windows {
        let mut img = decode_window(&std::fs::read(dir.join(&entry.file))?)?;
        if img.label != entry.label {
            return Err(Error::Data(format!(
                "{}: label {:?} disagrees with manifest {:?}",
                entry.file, img.label, entry.label
            )));
        }
        img.source_range = (entry.start, entry.end);
        dataset.images.push(img);
        dataset.splits.push(entry.split);
    }
    if dataset.class_counts() != manifest.class_counts {
        return Err(Error::Data("manifest class counts disagree with its windows".into()));
    }
    Ok((dataset, manifest))
}
