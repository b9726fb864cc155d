use crate::error::{Error, Result};
use crate::scan::{AnnotationKind, AnnotationReport, Label, LabeledDataset, SensorScan, WindowImage, WINDOW};

/// `true` where a raw reading is strictly below `threshold`. Row-major, samples x 64.
pub fn mark_abnormal(scan: &SensorScan, threshold: u16) -> Vec<bool> {
    scan.values().iter().map(|&v| v < threshold).collect()
}

/// Non-overlapping 64-sample tiles; the trailing remainder is dropped.
pub fn window(scan: &SensorScan, threshold: u16) -> Vec<WindowImage> {
    let count = scan.samples() / WINDOW;
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..count)
            .into_par_iter()
            .map(|k| WindowImage::from_scan(scan, k * WINDOW, threshold))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..count)
            .map(|k| WindowImage::from_scan(scan, k * WINDOW, threshold))
            .collect()
    }
}

/// Re-cuts a window so the strongest cross-sensor mean near `coordinate_mm` sits at column 32.
///
/// The search covers `[i0 - radius, i0 + radius]` around the nearest sample `i0`;
/// the earliest maximum wins. Windows that would run off the scan are rejected.
pub fn center_window(scan: &SensorScan, coordinate_mm: f64, radius: usize, threshold: u16) -> Result<WindowImage> {
    let i0 = scan.sample_index(coordinate_mm);
    let half = (WINDOW / 2) as i64;
    let r = radius as i64;
    if i0 - r - half < 0 || i0 + r + half > scan.samples() as i64 {
        return Err(Error::Data(format!(
            "coordinate {coordinate_mm} mm (sample {i0}) is within {} samples of the scan edge",
            half + r
        )));
    }
    let mean = |i: usize| scan.row(i).iter().map(|&v| v as f64).sum::<f64>();
    let mut best = (i0 - r) as usize;
    let mut best_value = mean(best);
    for i in (i0 - r + 1) as usize..=(i0 + r) as usize {
        let v = mean(i);
        if v > best_value {
            best = i;
            best_value = v;
        }
    }
    Ok(WindowImage::from_scan(scan, best - WINDOW / 2, threshold))
}

/// Labels each window from the annotations whose nearest sample falls inside it.
/// Defect outranks weld; windows with neither are healthy.
pub fn label_windows(mut windows: Vec<WindowImage>, report: &AnnotationReport, axial_step_mm: f64) -> LabeledDataset {
    let mut events: Vec<(i64, AnnotationKind)> = report
        .annotations()
        .iter()
        .map(|a| ((a.coordinate_mm / axial_step_mm).round() as i64, a.kind))
        .collect();
    events.sort_unstable_by_key(|&(i, k)| (i, k == AnnotationKind::Weld));

    for img in windows.iter_mut() {
        let (start, end) = (img.source_range.0 as i64, img.source_range.1 as i64);
        let first = events.partition_point(|&(i, _)| i < start);
        let mut label = Label::Healthy;
        for &(_, kind) in events[first..].iter().take_while(|&&(i, _)| i < end) {
            match kind {
                AnnotationKind::Defect => {
                    label = Label::Defect;
                    break;
                }
                AnnotationKind::Weld => label = Label::Weld,
            }
        }
        img.label = label;
    }
    LabeledDataset::unsplit(windows)
}
