//! Resampling distortions. Pixels are bilinearly interpolated, masks use the
//! nearest source cell, and coordinates outside the image reflect without
//! repeating the edge (`dcb|abcd|cba`).

use serde::{Deserialize, Serialize};

use crate::rng::{self, Rng64};
use crate::scan::{WindowImage, WINDOW};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistortionParams {
    /// Largest elastic displacement, in pixels.
    pub elastic_alpha: f64,
    /// Gaussian smoothing of the elastic displacement field, in pixels.
    pub elastic_sigma: f64,
    pub grid_steps: usize,
    /// Relative jitter of each grid cell's width and height.
    pub grid_limit: f64,
    /// Bound on the radial distortion coefficient.
    pub optical_limit: f64,
}

impl Default for DistortionParams {
    fn default() -> Self {
        Self {
            elastic_alpha: 1.0,
            elastic_sigma: 8.0,
            grid_steps: 5,
            grid_limit: 0.3,
            optical_limit: 0.05,
        }
    }
}

fn reflect(i: i64) -> usize {
    let n = WINDOW as i64;
    let period = 2 * (n - 1);
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - m;
    }
    m as usize
}

/// Resamples with `source(r, c) -> (row, col)` in fractional pixel coordinates.
fn remap(image: &WindowImage, source: impl Fn(usize, usize) -> (f64, f64)) -> WindowImage {
    let (lo, hi) = image
        .pixels
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &p| (a.min(p), b.max(p)));
    let px = |r: i64, c: i64| image.pixels[reflect(r) * WINDOW + reflect(c)];
    let mut out = image.clone();
    for r in 0..WINDOW {
        for c in 0..WINDOW {
            let (sr, sc) = source(r, c);
            let (r0, c0) = (sr.floor(), sc.floor());
            let (fr, fc) = (sr - r0, sc - c0);
            let (r0, c0) = (r0 as i64, c0 as i64);
            let top = (1.0 - fc) * px(r0, c0) + fc * px(r0, c0 + 1);
            let bottom = (1.0 - fc) * px(r0 + 1, c0) + fc * px(r0 + 1, c0 + 1);
            let v = (1.0 - fr) * top + fr * bottom;
            out.pixels[r * WINDOW + c] = v.clamp(lo, hi);
            let (nr, nc) = (reflect(sr.round() as i64), reflect(sc.round() as i64));
            out.abnormal_mask[r * WINDOW + c] = image.abnormal_mask[nr * WINDOW + nc];
        }
    }
    out
}

fn gaussian_blur(field: &[f64], sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return field.to_vec();
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    let pass = |src: &[f64], horizontal: bool| -> Vec<f64> {
        let mut dst = vec![0.0; src.len()];
        for r in 0..WINDOW {
            for c in 0..WINDOW {
                let mut acc = 0.0;
                for (k, w) in kernel.iter().enumerate() {
                    let d = k as i64 - radius;
                    let v = if horizontal {
                        src[r * WINDOW + reflect(c as i64 + d)]
                    } else {
                        src[reflect(r as i64 + d) * WINDOW + c]
                    };
                    acc += w * v;
                }
                dst[r * WINDOW + c] = acc / norm;
            }
        }
        dst
    };
    pass(&pass(field, true), false)
}

/// Smoothed random displacement field, rescaled so its largest component is `elastic_alpha` pixels.
pub(super) fn elastic(image: &WindowImage, params: &DistortionParams, rng: &mut Rng64) -> WindowImage {
    let cells = WINDOW * WINDOW;
    let mut noise = || -> Vec<f64> { (0..cells).map(|_| rng::uniform(rng, -1.0, 1.0)).collect() };
    let (dx, dy) = (noise(), noise());
    let (dx, dy) = (
        gaussian_blur(&dx, params.elastic_sigma),
        gaussian_blur(&dy, params.elastic_sigma),
    );
    let peak = dx.iter().chain(&dy).fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = if peak > 0.0 { params.elastic_alpha / peak } else { 0.0 };
    remap(image, |r, c| {
        let i = r * WINDOW + c;
        (r as f64 + scale * dy[i], c as f64 + scale * dx[i])
    })
}

/// Piecewise-linear axis map with jittered cell sizes; endpoints stay fixed.
fn grid_axis(steps: usize, limit: f64, rng: &mut Rng64) -> impl Fn(f64) -> f64 {
    let steps = steps.max(1);
    let nominal = (WINDOW - 1) as f64 / steps as f64;
    let widths: Vec<f64> = (0..steps)
        .map(|_| nominal * (1.0 + rng::uniform(rng, -limit, limit)))
        .collect();
    let scale = (WINDOW - 1) as f64 / widths.iter().sum::<f64>();
    let mut starts = Vec::with_capacity(steps);
    let mut acc = 0.0;
    for w in &widths {
        starts.push(acc);
        acc += w;
    }
    move |x: f64| {
        let cell = ((x / nominal).floor() as usize).min(steps - 1);
        let t = (x - cell as f64 * nominal) / nominal;
        scale * (starts[cell] + t * widths[cell])
    }
}

pub(super) fn grid(image: &WindowImage, params: &DistortionParams, rng: &mut Rng64) -> WindowImage {
    let map_x = grid_axis(params.grid_steps, params.grid_limit, rng);
    let map_y = grid_axis(params.grid_steps, params.grid_limit, rng);
    remap(image, |r, c| (map_y(r as f64), map_x(c as f64)))
}

/// Radial distortion about the image center with coefficient `k`, `|k| <= optical_limit`.
pub(super) fn optical(image: &WindowImage, params: &DistortionParams, rng: &mut Rng64) -> WindowImage {
    let k = rng::uniform(rng, -params.optical_limit, params.optical_limit);
    let centre = (WINDOW - 1) as f64 / 2.0;
    remap(image, |r, c| {
        let (y, x) = ((r as f64 - centre) / centre, (c as f64 - centre) / centre);
        let f = 1.0 + k * (x * x + y * y);
        (centre + y * f * centre, centre + x * f * centre)
    })
}
