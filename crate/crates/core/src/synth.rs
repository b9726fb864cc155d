//! Deterministic synthetic MFL scans with ground-truth and as-delivered reports.
//!
//! Welds are Gaussian ridges (sigma 2 samples) raised equally on all 64 sensors.
//! Defects are compact bumps on 2-6 adjacent sensors with a weaker opposite-sign
//! lobe trailing or leading them axially, a rough stand-in for the dipole shape
//! of real leakage fields. Dead sensors are zeroed spans along one sensor row.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Rng64};
use crate::scan::{
    Annotation, AnnotationKind, AnnotationReport, SensorScan, DEFAULT_AXIAL_STEP_MM, DEFAULT_SENSOR_PITCH_MM,
    MAX_VALUE, SENSORS, WINDOW,
};
use rand::Rng;

const WELD_SIGMA: f64 = 2.0;
const WELD_HALF_WIDTH: i64 = 8;
const DEFECT_AXIAL_SIGMA: f64 = 2.5;
const DEFECT_HALF_WIDTH: i64 = 10;
const DEFECT_LOBE_SHIFT: i64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub samples: usize,
    pub axial_step_mm: f64,
    pub sensor_pitch_mm: f64,
    pub baseline_level: f64,
    pub noise_sigma: f64,
    pub weld_count: usize,
    pub defect_count: usize,
    pub weld_amplitude: f64,
    pub defect_amplitude: f64,
    pub dead_sensor_count: usize,
    pub report_offset_mm: f64,
    pub report_jitter_mm: f64,
    /// Minimum distance between consecutive events, in samples.
    pub min_event_spacing: usize,
    /// Fraction of welds flagged as defected in the reports (no signal change).
    pub defected_weld_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        default_desk_config()
    }
}

/// Desk-scale run: 200k samples with the field-run event densities.
///
/// 745 defects and 1462 welds over 4,470,704 samples scale to about 33 defects
/// and 65 welds here.
pub fn default_desk_config() -> SynthConfig {
    SynthConfig {
        samples: 200_000,
        axial_step_mm: DEFAULT_AXIAL_STEP_MM,
        sensor_pitch_mm: DEFAULT_SENSOR_PITCH_MM,
        baseline_level: 3000.0,
        noise_sigma: 60.0,
        weld_count: 65,
        defect_count: 33,
        weld_amplitude: 800.0,
        defect_amplitude: 800.0,
        dead_sensor_count: 3,
        report_offset_mm: 120.0,
        report_jitter_mm: 3.0,
        min_event_spacing: 128,
        defected_weld_fraction: 34.0 / 1462.0,
        seed: 2022,
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let events = self.weld_count + self.defect_count;
        if events > 0 && self.samples < WINDOW {
            return bad(format!(
                "{} samples cannot hold events (need at least {WINDOW})",
                self.samples
            ));
        }
        if !(0.0..=MAX_VALUE as f64).contains(&self.baseline_level) {
            return bad(format!("baseline_level {} outside [0, 4095]", self.baseline_level));
        }
        if !(self.weld_amplitude >= 0.0 && self.defect_amplitude >= 0.0) {
            return bad("amplitudes must be non-negative".into());
        }
        if self.baseline_level + self.weld_amplitude > MAX_VALUE as f64 {
            return bad(format!(
                "baseline_level + weld_amplitude = {} exceeds 4095",
                self.baseline_level + self.weld_amplitude
            ));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma {} must be >= 0", self.noise_sigma));
        }
        if self.dead_sensor_count > SENSORS {
            return bad(format!("dead_sensor_count {} > {SENSORS}", self.dead_sensor_count));
        }
        if !(self.axial_step_mm > 0.0 && self.sensor_pitch_mm > 0.0) {
            return bad("steps must be positive".into());
        }
        if !self.report_offset_mm.is_finite() || !(self.report_jitter_mm >= 0.0) {
            return bad("report offset must be finite and jitter >= 0".into());
        }
        if self.min_event_spacing < WINDOW {
            return bad(format!("min_event_spacing must be >= {WINDOW}"));
        }
        if !(0.0..=1.0).contains(&self.defected_weld_fraction) {
            return bad("defected_weld_fraction must be in [0, 1]".into());
        }
        Ok(())
    }

    /// Samples kept free of events at both ends so that delivered coordinates
    /// stay on the scan and centered windows fit.
    fn edge_margin(&self) -> usize {
        let slack = (self.report_offset_mm.abs() + self.report_jitter_mm) / self.axial_step_mm;
        WINDOW + slack.ceil() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub scan: SensorScan,
    /// True event coordinates.
    pub clean: AnnotationReport,
    /// Coordinates as an inspection report would deliver them: offset and jittered.
    pub delivered: AnnotationReport,
}

struct Event {
    kind: AnnotationKind,
    sample: usize,
}

fn place_events(config: &SynthConfig, rng: &mut Rng64) -> Result<Vec<Event>> {
    let n = config.weld_count + config.defect_count;
    if n == 0 {
        return Ok(Vec::new());
    }
    let margin = config.edge_margin();
    let usable = config.samples.saturating_sub(2 * margin);
    let needed = (n - 1) * config.min_event_spacing + 1;
    if usable < needed {
        return Err(Error::Config(format!(
            "cannot place {n} events {} samples apart in {} samples",
            config.min_event_spacing, config.samples
        )));
    }
    let free = usable - needed;
    let mut offsets: Vec<usize> = (0..n).map(|_| rng.gen_range(0..=free)).collect();
    offsets.sort_unstable();

    let mut kinds: Vec<AnnotationKind> = std::iter::repeat_n(AnnotationKind::Weld, config.weld_count)
        .chain(std::iter::repeat_n(AnnotationKind::Defect, config.defect_count))
        .collect();
    rng::shuffle(rng, &mut kinds);

    Ok(offsets
        .into_iter()
        .zip(kinds)
        .enumerate()
        .map(|(k, (u, kind))| Event {
            kind,
            sample: margin + u + k * config.min_event_spacing,
        })
        .collect())
}

fn add_weld(grid: &mut [f64], samples: usize, at: usize, amplitude: f64) {
    for d in -WELD_HALF_WIDTH..=WELD_HALF_WIDTH {
        let i = at as i64 + d;
        if i < 0 || i >= samples as i64 {
            continue;
        }
        let lift = amplitude * (-(d * d) as f64 / (2.0 * WELD_SIGMA * WELD_SIGMA)).exp();
        for v in &mut grid[i as usize * SENSORS..(i as usize + 1) * SENSORS] {
            *v += lift;
        }
    }
}

fn add_defect(grid: &mut [f64], samples: usize, at: usize, amplitude: f64, rng: &mut Rng64) {
    let width = rng.gen_range(2..=6usize);
    let first = rng.gen_range(0..=SENSORS - width);
    let peak = amplitude * rng::uniform(rng, 0.7, 1.3);
    let lobe = rng::uniform(rng, 0.0, 0.5);
    let side = if rng.gen::<bool>() { 1 } else { -1 };
    let centre = first as f64 + (width as f64 - 1.0) / 2.0;
    let spread = width as f64 / 2.0;
    let g = |d: f64| (-(d * d) / (2.0 * DEFECT_AXIAL_SIGMA * DEFECT_AXIAL_SIGMA)).exp();
    for d in -DEFECT_HALF_WIDTH..=DEFECT_HALF_WIDTH {
        let i = at as i64 + d;
        if i < 0 || i >= samples as i64 {
            continue;
        }
        let axial = g(d as f64) - lobe * g((d - side * DEFECT_LOBE_SHIFT) as f64);
        for s in first..first + width {
            let across = 0.5 + 0.5 * (std::f64::consts::PI * (s as f64 - centre) / (2.0 * spread)).cos();
            grid[i as usize * SENSORS + s] += peak * axial * across;
        }
    }
}

/// Generates a scan plus its clean and delivered reports. Pure in `config`.
pub fn generate(config: &SynthConfig) -> Result<SynthOutput> {
    config.validate()?;
    let mut rng = rng::rng(config.seed);
    let samples = config.samples;
    let events = place_events(config, &mut rng)?;

    let mut grid = vec![config.baseline_level; samples * SENSORS];
    for ev in &events {
        match ev.kind {
            AnnotationKind::Weld => add_weld(&mut grid, samples, ev.sample, config.weld_amplitude),
            AnnotationKind::Defect => add_defect(&mut grid, samples, ev.sample, config.defect_amplitude, &mut rng),
        }
    }

    let mut dead = vec![false; samples * SENSORS];
    if samples > 0 {
        let mut sensors: Vec<usize> = (0..SENSORS).collect();
        rng::shuffle(&mut rng, &mut sensors);
        for &sensor in &sensors[..config.dead_sensor_count] {
            let len = rng.gen_range((samples / 10).max(1)..=(samples / 3).max(1));
            let start = rng.gen_range(0..samples);
            for i in start..(start + len).min(samples) {
                dead[i * SENSORS + sensor] = true;
            }
        }
    }

    let mut values = Vec::with_capacity(samples * SENSORS);
    for (&v, &is_dead) in grid.iter().zip(&dead) {
        let noisy = if config.noise_sigma > 0.0 {
            v + config.noise_sigma * rng::standard_normal(&mut rng)
        } else {
            v
        };
        let raw = if is_dead {
            0
        } else {
            noisy.round().clamp(0.0, MAX_VALUE as f64) as u16
        };
        values.push(raw);
    }
    let scan = SensorScan::new(
        values,
        config.axial_step_mm,
        config.sensor_pitch_mm,
        format!("synth-{}", config.seed),
    )?;

    let mut clean = Vec::with_capacity(events.len());
    let mut delivered = Vec::with_capacity(events.len());
    for ev in &events {
        let defected = ev.kind == AnnotationKind::Weld && rng.gen::<f64>() < config.defected_weld_fraction;
        let note = match ev.kind {
            AnnotationKind::Weld => "synthetic weld",
            AnnotationKind::Defect => "synthetic defect",
        };
        let truth = ev.sample as f64 * config.axial_step_mm;
        let jitter = if config.report_jitter_mm > 0.0 {
            rng::uniform(&mut rng, -config.report_jitter_mm, config.report_jitter_mm)
        } else {
            0.0
        };
        clean.push(Annotation {
            kind: ev.kind,
            coordinate_mm: truth,
            defected,
            note: note.into(),
        });
        delivered.push(Annotation {
            kind: ev.kind,
            coordinate_mm: truth + config.report_offset_mm + jitter,
            defected,
            note: note.into(),
        });
    }

    Ok(SynthOutput {
        scan,
        clean: AnnotationReport::new(clean)?,
        delivered: AnnotationReport::new(delivered)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SynthConfig {
        SynthConfig {
            samples: 8_000,
            weld_count: 6,
            defect_count: 10,
            dead_sensor_count: 2,
            seed,
            ..default_desk_config()
        }
    }

    #[test]
    fn quiet_config_is_constant() {
        let cfg = SynthConfig {
            samples: 256,
            weld_count: 0,
            defect_count: 0,
            dead_sensor_count: 0,
            noise_sigma: 0.0,
            ..default_desk_config()
        };
        let out = generate(&cfg).unwrap();
        assert!(out.scan.values().iter().all(|&v| v == 3000));
        assert!(out.clean.is_empty());
    }

    #[test]
    fn deterministic_in_seed() {
        assert_eq!(generate(&small(5)).unwrap(), generate(&small(5)).unwrap());
        assert_ne!(generate(&small(5)).unwrap().scan, generate(&small(6)).unwrap().scan);
    }

    #[test]
    fn delivered_defects_track_truth() {
        let out = generate(&small(11)).unwrap();
        let truth: Vec<f64> = out
            .clean
            .of_kind(AnnotationKind::Defect)
            .map(|a| a.coordinate_mm)
            .collect();
        let got: Vec<f64> = out
            .delivered
            .of_kind(AnnotationKind::Defect)
            .map(|a| a.coordinate_mm)
            .collect();
        assert_eq!(got.len(), 10);
        for (t, g) in truth.iter().zip(&got) {
            assert!((g - t - 120.0).abs() <= 3.0 + 1e-9, "{t} -> {g}");
        }
    }

    #[test]
    fn infeasible_placement_is_rejected() {
        let cfg = SynthConfig {
            samples: 2_000,
            weld_count: 40,
            ..small(1)
        };
        assert!(matches!(generate(&cfg), Err(Error::Config(_))));
        let cfg = SynthConfig { samples: 0, ..small(1) };
        assert!(matches!(generate(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn weld_mean_peaks_at_truth() {
        let out = generate(&small(21)).unwrap();
        let mean = out.scan.cross_sensor_mean();
        for w in out.clean.of_kind(AnnotationKind::Weld) {
            let i = out.scan.sample_index(w.coordinate_mm) as usize;
            let lo = i - 8;
            let best = (lo..=i + 8)
                .max_by(|&a, &b| mean[a].total_cmp(&mean[b]).then(b.cmp(&a)))
                .unwrap();
            assert!((best as i64 - i as i64).abs() <= 2, "weld {i} peak {best}");
        }
    }

    #[test]
    fn dead_cells_are_exactly_the_low_cells() {
        let out = generate(&small(3)).unwrap();
        let zeros = out.scan.values().iter().filter(|&&v| v == 0).count();
        let low = out.scan.values().iter().filter(|&&v| v < 2000).count();
        assert!(zeros > 0);
        assert_eq!(zeros, low);
    }

    #[test]
    fn desk_config_matches_table_density() {
        let cfg = default_desk_config();
        cfg.validate().unwrap();
        let per_sample = cfg.defect_count as f64 / cfg.samples as f64;
        let table = 745.0 / 4_470_704.0;
        assert!((per_sample / table - 1.0).abs() <= 0.2);
        let weld_rate = cfg.weld_count as f64 / cfg.samples as f64;
        assert!((weld_rate / (1462.0 / 4_470_704.0) - 1.0).abs() <= 0.2);
    }
}
