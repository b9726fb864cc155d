//! Browser bindings: generate a scan, compare filling methods on a tile, preview augmentations.
//!
//! Images cross the boundary as RGBA bytes ready for `ImageData`.

use wasm_bindgen::prelude::*;

use mflkit::augment::{self, AugmentationKind};
use mflkit::preprocess::{fill, normalize, FillingMethod, NormalizationScope, DEFAULT_ABNORMAL_THRESHOLD};
use mflkit::scan::{AnnotationKind, SensorScan, WindowImage, SENSORS, WINDOW};
use mflkit::synth::{default_desk_config, generate, SynthConfig};

/// Piecewise-linear dark blue → teal → yellow ramp.
const RAMP: [[f64; 3]; 3] = [[20.0, 24.0, 82.0], [32.0, 150.0, 140.0], [250.0, 230.0, 60.0]];
const ABNORMAL_RGB: [u8; 3] = [220, 40, 40];

fn ramp(t: f64) -> [u8; 3] {
    let t = t.clamp(0.0, 1.0) * 2.0;
    let i = (t as usize).min(1);
    let f = t - i as f64;
    let mut out = [0; 3];
    for (k, o) in out.iter_mut().enumerate() {
        *o = (RAMP[i][k] + (RAMP[i + 1][k] - RAMP[i][k]) * f).round() as u8;
    }
    out
}

/// Min-max colors `values`; cells flagged in `mask` are painted red.
pub fn to_rgba(values: &[f64], mask: Option<&[bool]>) -> Vec<u8> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut out = Vec::with_capacity(values.len() * 4);
    for (i, &v) in values.iter().enumerate() {
        let rgb = if mask.is_some_and(|m| m[i]) {
            ABNORMAL_RGB
        } else {
            ramp((v - lo) / span)
        };
        out.extend_from_slice(&rgb);
        out.push(255);
    }
    out
}

fn err(e: mflkit::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn kind_by_name(name: &str) -> Result<AugmentationKind, JsError> {
    AugmentationKind::DEFECT
        .into_iter()
        .find(|k| k.name().eq_ignore_ascii_case(name))
        .ok_or_else(|| JsError::new(&format!("unknown augmentation {name}")))
}

/// Names accepted by [`Scan::augment`].
#[wasm_bindgen(js_name = augmentationNames)]
pub fn augmentation_names() -> Vec<String> {
    AugmentationKind::DEFECT.iter().map(|k| k.name().to_string()).collect()
}

/// A generated scan plus its true events.
#[wasm_bindgen]
pub struct Scan {
    scan: SensorScan,
    /// (sample index, "weld" | "defect").
    events: Vec<(usize, &'static str)>,
}

#[wasm_bindgen]
impl Scan {
    /// Small scan with the desk noise model; `dead_sensors` are stuck below the abnormal threshold.
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u64, samples: usize, welds: usize, defects: usize, dead_sensors: usize) -> Result<Scan, JsError> {
        let config = SynthConfig {
            samples,
            weld_count: welds,
            defect_count: defects,
            dead_sensor_count: dead_sensors,
            seed,
            ..default_desk_config()
        };
        config.validate().map_err(err)?;
        let out = generate(&config).map_err(err)?;
        let events = out
            .clean
            .annotations()
            .iter()
            .map(|a| {
                let kind = match a.kind {
                    AnnotationKind::Weld => "weld",
                    AnnotationKind::Defect => "defect",
                };
                (out.scan.sample_index(a.coordinate_mm).max(0) as usize, kind)
            })
            .collect();
        Ok(Scan { scan: out.scan, events })
    }

    pub fn samples(&self) -> usize {
        self.scan.samples()
    }

    pub fn tiles(&self) -> usize {
        self.scan.samples() / WINDOW
    }

    /// JSON list of `{"sample", "tile", "kind"}`.
    pub fn events(&self) -> String {
        let list: Vec<serde_json::Value> = self
            .events
            .iter()
            .map(|&(s, k)| serde_json::json!({ "sample": s, "tile": s / WINDOW, "kind": k }))
            .collect();
        serde_json::Value::Array(list).to_string()
    }

    /// RGBA strip of samples `[start, start + len)`: 64 rows (sensors) by `len` columns.
    pub fn strip(&self, start: usize, len: usize) -> Vec<u8> {
        let start = start.min(self.scan.samples());
        let len = len.min(self.scan.samples() - start);
        let mut values = vec![0.0; SENSORS * len];
        let mut mask = vec![false; SENSORS * len];
        for col in 0..len {
            for (sensor, &v) in self.scan.row(start + col).iter().enumerate() {
                values[sensor * len + col] = v as f64;
                mask[sensor * len + col] = v < DEFAULT_ABNORMAL_THRESHOLD;
            }
        }
        to_rgba(&values, Some(&mask))
    }

    fn tile(&self, tile: usize) -> Result<WindowImage, JsError> {
        if (tile + 1) * WINDOW > self.scan.samples() {
            return Err(JsError::new(&format!("tile {tile} is past the end of the scan")));
        }
        Ok(WindowImage::from_scan(
            &self.scan,
            tile * WINDOW,
            DEFAULT_ABNORMAL_THRESHOLD,
        ))
    }

    /// Six 64×64 RGBA panels back to back: the raw tile, then filling methods 1-5
    /// after per-image normalization.
    #[wasm_bindgen(js_name = fillingComparison)]
    pub fn filling_comparison(&self, tile: usize) -> Result<Vec<u8>, JsError> {
        let raw = self.tile(tile)?;
        let mut out = to_rgba(&raw.pixels, Some(&raw.abnormal_mask));
        for method in FillingMethod::ALL {
            let img = normalize(&fill(&raw, method), method, &NormalizationScope::PerImage).map_err(err)?;
            out.extend(to_rgba(&img.pixels, None));
        }
        Ok(out)
    }

    /// The tile filled with method 1 and normalized, then augmented.
    pub fn augment(&self, tile: usize, kind: &str, seed: u64) -> Result<Vec<u8>, JsError> {
        let raw = self.tile(tile)?;
        let img = normalize(
            &fill(&raw, FillingMethod::Zero),
            FillingMethod::Zero,
            &NormalizationScope::PerImage,
        )
        .map_err(err)?;
        let out = augment::apply(&img, kind_by_name(kind)?, seed);
        Ok(to_rgba(&out.pixels, None))
    }
}
