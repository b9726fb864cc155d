//! Scan, annotation and window types plus their on-disk formats.
//!
//! Scan files are little-endian binary:
//!
//! ```text
//! "MFLS" | version u16 | samples u64 | columns u16 | axial_step_mm f64 | sensor_pitch_mm f64
//! samples x 64 u16 readings, row-major (one row per axial sample)
//! ```
//!
//! Reports are a JSON array of `{"kind", "coordinate_mm", "defected", "note"}` objects.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of sensors around the circumference of the inspection tool.
pub const SENSORS: usize = 64;
/// Largest raw reading the tool reports.
pub const MAX_VALUE: u16 = 4095;
/// Side length of a window image.
pub const WINDOW: usize = 64;
pub const WINDOW_CELLS: usize = WINDOW * WINDOW;

pub const DEFAULT_AXIAL_STEP_MM: f64 = 3.37;
pub const DEFAULT_SENSOR_PITCH_MM: f64 = 10.75;

const SCAN_MAGIC: &[u8; 4] = b"MFLS";
const SCAN_VERSION: u16 = 1;
pub const SCAN_HEADER_LEN: u64 = 4 + 2 + 8 + 2 + 8 + 8;

/// A full inspection run: `samples` rows of 64 raw readings.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorScan {
    values: Vec<u16>,
    samples: usize,
    pub axial_step_mm: f64,
    pub sensor_pitch_mm: f64,
    pub run_id: String,
}

impl SensorScan {
    /// Builds a scan from row-major readings, validating the value range.
    pub fn new(values: Vec<u16>, axial_step_mm: f64, sensor_pitch_mm: f64, run_id: impl Into<String>) -> Result<Self> {
        if !values.len().is_multiple_of(SENSORS) {
            return Err(Error::Shape(format!(
                "{} readings is not a multiple of {SENSORS} sensors",
                values.len()
            )));
        }
        if !(axial_step_mm.is_finite() && axial_step_mm > 0.0) {
            return Err(Error::Data(format!("axial step {axial_step_mm} must be positive")));
        }
        if !(sensor_pitch_mm.is_finite() && sensor_pitch_mm > 0.0) {
            return Err(Error::Data(format!("sensor pitch {sensor_pitch_mm} must be positive")));
        }
        if let Some(pos) = values.iter().position(|&v| v > MAX_VALUE) {
            return Err(Error::ValueOutOfRange {
                row: pos / SENSORS,
                col: pos % SENSORS,
                value: values[pos],
            });
        }
        Ok(Self {
            samples: values.len() / SENSORS,
            values,
            axial_step_mm,
            sensor_pitch_mm,
            run_id: run_id.into(),
        })
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn values(&self) -> &[u16] {
        &self.values
    }

    pub fn row(&self, sample: usize) -> &[u16] {
        &self.values[sample * SENSORS..(sample + 1) * SENSORS]
    }

    #[inline]
    pub fn get(&self, sample: usize, sensor: usize) -> u16 {
        self.values[sample * SENSORS + sensor]
    }

    /// Along-pipe coordinate of a sample.
    pub fn coordinate_mm(&self, sample: usize) -> f64 {
        sample as f64 * self.axial_step_mm
    }

    /// Nearest sample index for a coordinate (may be out of range).
    pub fn sample_index(&self, coordinate_mm: f64) -> i64 {
        (coordinate_mm / self.axial_step_mm).round() as i64
    }

    pub fn length_mm(&self) -> f64 {
        self.samples as f64 * self.axial_step_mm
    }

    /// Mean over all 64 sensors for every sample.
    pub fn cross_sensor_mean(&self) -> Vec<f64> {
        self.values
            .chunks_exact(SENSORS)
            .map(|row| row.iter().map(|&v| v as f64).sum::<f64>() / SENSORS as f64)
            .collect()
    }
}

/// Exact size in bytes of a scan file holding `samples` rows.
pub fn scan_file_len(samples: u64) -> u64 {
    SCAN_HEADER_LEN + samples * SENSORS as u64 * 2
}

pub fn write_scan(scan: &SensorScan, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(SCAN_MAGIC)?;
    w.write_all(&SCAN_VERSION.to_le_bytes())?;
    w.write_all(&(scan.samples as u64).to_le_bytes())?;
    w.write_all(&(SENSORS as u16).to_le_bytes())?;
    w.write_all(&scan.axial_step_mm.to_le_bytes())?;
    w.write_all(&scan.sensor_pitch_mm.to_le_bytes())?;
    let mut buf = Vec::with_capacity(SENSORS * 2 * 1024);
    for chunk in scan.values.chunks(SENSORS * 1024) {
        buf.clear();
        for v in chunk {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a scan file. The run id is taken from the file stem.
pub fn read_scan(path: impl AsRef<Path>) -> Result<SensorScan> {
    let path = path.as_ref();
    let mut r = BufReader::new(File::open(path)?);
    let mut header = [0u8; SCAN_HEADER_LEN as usize];
    r.read_exact(&mut header)
        .map_err(|_| Error::format("scan header", "file shorter than header"))?;
    if &header[0..4] != SCAN_MAGIC {
        return Err(Error::format("scan header", "bad magic"));
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != SCAN_VERSION {
        return Err(Error::format("scan header", format!("unsupported version {version}")));
    }
    let samples = u64::from_le_bytes(header[6..14].try_into().unwrap());
    let columns = u16::from_le_bytes([header[14], header[15]]);
    if columns as usize != SENSORS {
        return Err(Error::format(
            "scan header",
            format!("column count {columns} != {SENSORS}"),
        ));
    }
    let step = f64::from_le_bytes(header[16..24].try_into().unwrap());
    let pitch = f64::from_le_bytes(header[24..32].try_into().unwrap());

    let expected = samples
        .checked_mul(SENSORS as u64 * 2)
        .ok_or_else(|| Error::format("scan header", "sample count overflows"))?;
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    if body.len() as u64 != expected {
        return Err(Error::format(
            "scan body",
            format!("expected {expected} bytes for {samples} rows, found {}", body.len()),
        ));
    }
    let values: Vec<u16> = body.chunks_exact(2).map(|b| u16::from_le_bytes([b[0], b[1]])).collect();
    let run_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    SensorScan::new(values, step, pitch, run_id)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnnotationKind {
    Weld,
    Defect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub kind: AnnotationKind,
    pub coordinate_mm: f64,
    #[serde(default)]
    pub defected: bool,
    #[serde(default)]
    pub note: String,
}

/// Weld and defect annotations, sorted by coordinate.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnnotationReport {
    annotations: Vec<Annotation>,
    /// Shift subtracted from delivered coordinates by alignment; zero until aligned.
    pub origin_offset_mm: f64,
}

impl AnnotationReport {
    pub fn new(mut annotations: Vec<Annotation>) -> Result<Self> {
        for (i, a) in annotations.iter().enumerate() {
            if !a.coordinate_mm.is_finite() {
                return Err(Error::Data(format!("annotation {i}: non-finite coordinate")));
            }
            if a.coordinate_mm < 0.0 {
                return Err(Error::Data(format!(
                    "annotation {i}: negative coordinate {}",
                    a.coordinate_mm
                )));
            }
        }
        annotations.sort_by(|a, b| a.coordinate_mm.total_cmp(&b.coordinate_mm));
        Ok(Self {
            annotations,
            origin_offset_mm: 0.0,
        })
    }

    pub fn annotations(&self) -> &[Annotation] {
        &self.annotations
    }

    pub fn len(&self) -> usize {
        self.annotations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.annotations.is_empty()
    }

    pub fn count(&self, kind: AnnotationKind) -> usize {
        self.annotations.iter().filter(|a| a.kind == kind).count()
    }

    pub fn of_kind(&self, kind: AnnotationKind) -> impl Iterator<Item = &Annotation> {
        self.annotations.iter().filter(move |a| a.kind == kind)
    }

    /// Returns a copy with every coordinate moved by `-offset_mm` and the offset recorded.
    /// Coordinates pushed below zero are clamped to zero.
    pub fn shifted(&self, offset_mm: f64) -> Self {
        let mut annotations: Vec<Annotation> = self
            .annotations
            .iter()
            .map(|a| Annotation {
                coordinate_mm: (a.coordinate_mm - offset_mm).max(0.0),
                ..a.clone()
            })
            .collect();
        annotations.sort_by(|a, b| a.coordinate_mm.total_cmp(&b.coordinate_mm));
        Self {
            annotations,
            origin_offset_mm: self.origin_offset_mm + offset_mm,
        }
    }
}

pub fn read_report(path: impl AsRef<Path>) -> Result<AnnotationReport> {
    let text = std::fs::read_to_string(path)?;
    let annotations: Vec<Annotation> = serde_json::from_str(&text)?;
    AnnotationReport::new(annotations)
}

pub fn write_report(report: &AnnotationReport, path: impl AsRef<Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(&report.annotations)?;
    std::fs::write(path, text)?;
    Ok(())
}

/// Window class. The discriminant is the class index used by the classifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Healthy = 0,
    Defect = 1,
    Weld = 2,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Healthy, Label::Defect, Label::Weld];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Label> {
        Label::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Healthy => "healthy",
            Label::Defect => "defect",
            Label::Weld => "weld",
        }
    }
}

/// A 64x64 tile. Rows are sensors, columns are axial samples, so a dead
/// sensor shows up as a horizontal line.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowImage {
    pub pixels: Vec<f64>,
    pub abnormal_mask: Vec<bool>,
    /// Half-open sample range `[start, end)` in the parent scan.
    pub source_range: (usize, usize),
    pub label: Label,
}

impl WindowImage {
    /// Cuts samples `[start, start + 64)` out of a scan. The mask marks raw values below `threshold`.
    pub fn from_scan(scan: &SensorScan, start: usize, threshold: u16) -> Self {
        debug_assert!(start + WINDOW <= scan.samples());
        let mut pixels = vec![0.0; WINDOW_CELLS];
        let mut abnormal_mask = vec![false; WINDOW_CELLS];
        for col in 0..WINDOW {
            let row_values = scan.row(start + col);
            for (sensor, &v) in row_values.iter().enumerate() {
                pixels[sensor * WINDOW + col] = v as f64;
                abnormal_mask[sensor * WINDOW + col] = v < threshold;
            }
        }
        Self {
            pixels,
            abnormal_mask,
            source_range: (start, start + WINDOW),
            label: Label::Healthy,
        }
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * WINDOW + col]
    }

    pub fn abnormal_count(&self) -> usize {
        self.abnormal_mask.iter().filter(|&&m| m).count()
    }

    /// Mean over the 64 sensors for each axial column.
    pub fn column_means(&self) -> Vec<f64> {
        (0..WINDOW)
            .map(|c| (0..WINDOW).map(|r| self.at(r, c)).sum::<f64>() / WINDOW as f64)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
}

/// Per-class tallies, indexed by [`Label::index`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassCounts {
    pub train: [usize; 3],
    pub validation: [usize; 3],
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledDataset {
    pub images: Vec<WindowImage>,
    pub splits: Vec<Split>,
}

impl LabeledDataset {
    /// All images tagged as training data.
    pub fn unsplit(images: Vec<WindowImage>) -> Self {
        let splits = vec![Split::Train; images.len()];
        Self { images, splits }
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn class_counts(&self) -> ClassCounts {
        let mut counts = ClassCounts::default();
        for (img, split) in self.images.iter().zip(&self.splits) {
            match split {
                Split::Train => counts.train[img.label.index()] += 1,
                Split::Validation => counts.validation[img.label.index()] += 1,
            }
        }
        counts
    }

    pub fn subset(&self, split: Split) -> Vec<&WindowImage> {
        self.images
            .iter()
            .zip(&self.splits)
            .filter(|(_, s)| **s == split)
            .map(|(img, _)| img)
            .collect()
    }
}
