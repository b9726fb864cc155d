use std::io::BufWriter;
use std::path::Path;

use mflkit::scan::{SensorScan, WindowImage, SENSORS, WINDOW};

use crate::error::{CliError, CliResult};

/// Min-max maps `values` to 8-bit gray; a constant input becomes mid gray.
pub fn to_gray(values: &[f64]) -> Vec<u8> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !(hi > lo) {
        return vec![128; values.len()];
    }
    values
        .iter()
        .map(|&v| ((v - lo) / (hi - lo) * 255.0).round() as u8)
        .collect()
}

pub fn write_gray_png(path: &Path, width: usize, height: usize, pixels: &[u8]) -> CliResult<()> {
    if pixels.len() != width * height {
        return Err(CliError::Internal(format!(
            "{} pixels for {width}x{height}",
            pixels.len()
        )));
    }
    let file = std::fs::File::create(path)?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let mut w = enc.write_header().map_err(|e| CliError::Internal(e.to_string()))?;
    w.write_image_data(pixels)
        .map_err(|e| CliError::Internal(e.to_string()))?;
    Ok(())
}

/// Rows are sensors, columns are axial samples, as in the window layout.
pub fn render_window(img: &WindowImage, path: &Path) -> CliResult<()> {
    write_gray_png(path, WINDOW, WINDOW, &to_gray(&img.pixels))
}

/// Renders samples `start..end` of a scan as a sensors × samples strip.
pub fn render_scan_segment(scan: &SensorScan, start: usize, end: usize, path: &Path) -> CliResult<()> {
    let width = end - start;
    let mut values = vec![0.0; SENSORS * width];
    for (col, sample) in (start..end).enumerate() {
        for (sensor, &v) in scan.row(sample).iter().enumerate() {
            values[sensor * width + col] = v as f64;
        }
    }
    write_gray_png(path, width, SENSORS, &to_gray(&values))
}
