use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::scan::{AnnotationKind, AnnotationReport, SensorScan};

/// A weld counts as aligned when it lands this close to a signal peak.
pub const MATCH_TOLERANCE_SAMPLES: f64 = 5.0;

/// Half-width of the neighborhood a peak must dominate.
const PEAK_NEIGHBORHOOD: usize = 16;
/// Half-width of the window used for the local baseline.
const BASELINE_HALF_WIDTH: usize = 64;
/// Required peak height over the local baseline, in robust noise units.
const PROMINENCE_SIGMAS: f64 = 8.0;

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_unstable_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Sample indices where the cross-sensor mean has a prominent local maximum.
///
/// A peak dominates its +-16 sample neighborhood (earlier index wins ties) and
/// rises more than 8 robust noise units above the local median. Noise is
/// estimated from first differences, which ignores level shifts such as
/// dead-sensor spans.
pub fn weld_peaks(mean: &[f64]) -> Vec<usize> {
    let n = mean.len();
    if n < 3 {
        return Vec::new();
    }
    let mut diffs: Vec<f64> = mean.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let sigma = 1.4826 * median(&mut diffs) / std::f64::consts::SQRT_2;
    let threshold = PROMINENCE_SIGMAS * sigma;

    let mut peaks = Vec::new();
    let mut scratch = Vec::with_capacity(2 * BASELINE_HALF_WIDTH + 1);
    for i in 0..n {
        let lo = i.saturating_sub(PEAK_NEIGHBORHOOD);
        let hi = (i + PEAK_NEIGHBORHOOD).min(n - 1);
        let v = mean[i];
        let dominates = mean[lo..i].iter().all(|&u| v > u) && mean[i + 1..=hi].iter().all(|&u| v >= u);
        if !dominates {
            continue;
        }
        scratch.clear();
        scratch.extend_from_slice(&mean[i.saturating_sub(BASELINE_HALF_WIDTH)..=(i + BASELINE_HALF_WIDTH).min(n - 1)]);
        if v - median(&mut scratch) > threshold {
            peaks.push(i);
        }
    }
    peaks
}

fn nearest_distance(peaks: &[usize], x: f64) -> f64 {
    let idx = peaks.partition_point(|&p| (p as f64) < x);
    let mut best = f64::INFINITY;
    if idx < peaks.len() {
        best = best.min((peaks[idx] as f64 - x).abs());
    }
    if idx > 0 {
        best = best.min((x - peaks[idx - 1] as f64).abs());
    }
    best
}

/// (matched welds, sum of squared residuals) for one offset in samples.
fn score(welds: &[f64], peaks: &[usize], offset: i64) -> (usize, f64) {
    let mut matched = 0;
    let mut residual = 0.0;
    for &w in welds {
        let d = nearest_distance(peaks, w - offset as f64);
        if d <= MATCH_TOLERANCE_SAMPLES {
            matched += 1;
            residual += d * d;
        }
    }
    (matched, residual)
}

/// Estimates the report-to-scan origin shift from weld positions and removes it.
///
/// Offsets are searched on the axial-step grid. The winner maximizes the number of
/// welds within +-5 samples of a weld peak; ties go to the smaller squared residual,
/// then to the smaller |offset|.
pub fn align_report(scan: &SensorScan, report: &AnnotationReport) -> Result<AnnotationReport> {
    let step = scan.axial_step_mm;
    let welds: Vec<f64> = report
        .of_kind(AnnotationKind::Weld)
        .map(|a| a.coordinate_mm / step)
        .collect();
    if welds.is_empty() {
        return Err(Error::Alignment("report has no welds".into()));
    }
    if welds.len() < 2 {
        return Err(Error::Alignment("at least two welds are needed".into()));
    }
    if scan.samples() == 0 {
        return Err(Error::Alignment("scan is empty".into()));
    }
    let peaks = weld_peaks(&scan.cross_sensor_mean());
    if peaks.is_empty() {
        return Err(Error::Alignment("no weld-like peaks in the scan".into()));
    }

    // Every offset with a nonzero score lies within the tolerance of some weld/peak pair.
    let tol = MATCH_TOLERANCE_SAMPLES as i64;
    let mut pair_offsets: Vec<f64> = Vec::with_capacity(welds.len() * peaks.len());
    let mut candidates = BTreeSet::new();
    for &w in &welds {
        for &p in &peaks {
            let r = w - p as f64;
            pair_offsets.push(r);
            let base = r.round() as i64;
            candidates.extend(base - tol..=base + tol);
        }
    }
    pair_offsets.sort_unstable_by(f64::total_cmp);

    // Peaks are more than 2 * tolerance apart, so a weld matches at most one peak per
    // offset and the pair count inside the tolerance band equals the matched-weld count.
    let mut counts = Vec::with_capacity(candidates.len());
    let (mut lo, mut hi) = (0usize, 0usize);
    for &k in &candidates {
        let (a, b) = (k as f64 - MATCH_TOLERANCE_SAMPLES, k as f64 + MATCH_TOLERANCE_SAMPLES);
        while lo < pair_offsets.len() && pair_offsets[lo] < a {
            lo += 1;
        }
        hi = hi.max(lo);
        while hi < pair_offsets.len() && pair_offsets[hi] <= b {
            hi += 1;
        }
        counts.push((k, hi - lo));
    }
    let top = counts.iter().map(|&(_, c)| c).max().unwrap_or(0);

    let mut best: Option<(i64, usize, f64)> = None;
    for &(k, c) in &counts {
        if c != top {
            continue;
        }
        let (matched, residual) = score(&welds, &peaks, k);
        let better = match best {
            None => true,
            Some((bk, bm, br)) => {
                matched > bm
                    || (matched == bm && residual < br)
                    || (matched == bm && residual == br && (k.abs(), k) < (bk.abs(), bk))
            }
        };
        if better {
            best = Some((k, matched, residual));
        }
    }
    let (offset, matched, _) = best.ok_or_else(|| Error::Alignment("no candidate offsets".into()))?;
    if 2 * matched <= welds.len() {
        return Err(Error::Alignment(format!(
            "best offset aligns only {matched} of {} welds",
            welds.len()
        )));
    }
    Ok(report.shifted(offset as f64 * step))
}
