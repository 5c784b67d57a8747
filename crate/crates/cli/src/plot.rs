//! Minimal plotting helper: renders bar charts (histograms, gains) to
//! PNG. Plot-ready numbers always go to CSV alongside; the images are a
//! quick visual check, not the primary artifact.

use std::path::Path;

use anyhow::{Context, Result};
use image::{Rgb, RgbImage};

const WIDTH: u32 = 640;
const HEIGHT: u32 = 400;
const MARGIN: u32 = 30;
const BG: Rgb<u8> = Rgb([255, 255, 255]);
const AXIS: Rgb<u8> = Rgb([40, 40, 40]);
const BAR: Rgb<u8> = Rgb([70, 120, 190]);
const NEG_BAR: Rgb<u8> = Rgb([190, 95, 70]);

fn fill_rect(img: &mut RgbImage, x0: u32, y0: u32, x1: u32, y1: u32, color: Rgb<u8>) {
    for x in x0..=x1.min(WIDTH - 1) {
        for y in y0..=y1.min(HEIGHT - 1) {
            img.put_pixel(x, y, color);
        }
    }
}

/// Renders values as vertical bars around a zero baseline; negative values
/// hang below it.
pub fn bar_chart(path: &Path, values: &[f64]) -> Result<()> {
    let mut img = RgbImage::from_pixel(WIDTH, HEIGHT, BG);
    let plot_w = WIDTH - 2 * MARGIN;
    let plot_h = HEIGHT - 2 * MARGIN;

    let max = values.iter().cloned().fold(0.0f64, f64::max);
    let min = values.iter().cloned().fold(0.0f64, f64::min);
    let span = (max - min).max(f64::MIN_POSITIVE);
    let to_y = |v: f64| -> u32 {
        let frac = (max - v) / span;
        MARGIN + (frac * plot_h as f64).round() as u32
    };
    let baseline = to_y(0.0);

    if !values.is_empty() {
        let slot = plot_w as f64 / values.len() as f64;
        for (i, &v) in values.iter().enumerate() {
            let x0 = MARGIN + (i as f64 * slot).round() as u32 + 1;
            let x1 = MARGIN + ((i as f64 + 0.85) * slot).round() as u32;
            let (y0, y1, color) = if v >= 0.0 {
                (to_y(v), baseline, BAR)
            } else {
                (baseline, to_y(v), NEG_BAR)
            };
            if x1 > x0 {
                fill_rect(&mut img, x0, y0.min(y1), x1, y0.max(y1), color);
            }
        }
    }

    // axes: left border and zero baseline
    fill_rect(&mut img, MARGIN, MARGIN, MARGIN, HEIGHT - MARGIN, AXIS);
    fill_rect(&mut img, MARGIN, baseline, WIDTH - MARGIN, baseline, AXIS);

    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating directory {}", dir.display()))?;
    }
    img.save(path)
        .with_context(|| format!("writing plot {}", path.display()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_histogram_and_mixed_sign_bars() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("hist.png");
        bar_chart(&p1, &[1.0, 4.0, 2.0, 0.0, 7.0]).unwrap();
        assert!(p1.exists());
        let p2 = dir.path().join("gains.png");
        bar_chart(&p2, &[0.5, -0.3, 0.0]).unwrap();
        assert!(p2.exists());
        // byte-identical across renders
        let a = std::fs::read(&p1).unwrap();
        bar_chart(&p1, &[1.0, 4.0, 2.0, 0.0, 7.0]).unwrap();
        assert_eq!(a, std::fs::read(&p1).unwrap());
    }
}
