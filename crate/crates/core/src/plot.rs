//! Static PNG comparison plots for mel spectrograms and LF0 tracks.

use std::path::Path;

use image::{Rgb, RgbImage};
use ndarray::Array2;

use crate::{Error, Result};

const PANEL_HEIGHT: u32 = 160;
const GAP: u32 = 6;

fn heat(v: f32) -> Rgb<u8> {
    let v = v.clamp(0.0, 1.0);
    let r = (255.0 * (1.5 * v).min(1.0)) as u8;
    let g = (255.0 * (2.0 * v - 0.6).clamp(0.0, 1.0)) as u8;
    let b = (255.0 * (0.5 - (v - 0.25).abs() * 2.0).max(0.0) + 60.0 * (1.0 - v)) as u8;
    Rgb([r, g, b])
}

/// Stacks mel spectrograms (frames x bands) vertically, low bands at the
/// bottom of each panel, sharing one colour scale.
pub fn mel_comparison(panels: &[&Array2<f32>], path: &Path) -> Result<()> {
    if panels.is_empty() || panels.iter().any(|m| m.nrows() == 0) {
        return Err(Error::Validation("nothing to plot".into()));
    }
    let width = panels.iter().map(|m| m.nrows()).max().unwrap_or(1) as u32;
    let lo = panels.iter().flat_map(|m| m.iter()).cloned().fold(f32::INFINITY, f32::min);
    let hi = panels.iter().flat_map(|m| m.iter()).cloned().fold(f32::NEG_INFINITY, f32::max);
    let span = (hi - lo).max(1e-6);
    let height = panels.len() as u32 * (PANEL_HEIGHT + GAP) - GAP;
    let mut img = RgbImage::from_pixel(width, height, Rgb([255, 255, 255]));
    for (p, mel) in panels.iter().enumerate() {
        let top = p as u32 * (PANEL_HEIGHT + GAP);
        let bands = mel.ncols();
        for x in 0..mel.nrows() as u32 {
            for y in 0..PANEL_HEIGHT {
                let band = ((PANEL_HEIGHT - 1 - y) as usize * bands) / PANEL_HEIGHT as usize;
                let v = (mel[[x as usize, band]] - lo) / span;
                img.put_pixel(x, top + y, heat(v));
            }
        }
    }
    img.save(path).map_err(Error::from)
}

/// Draws each track (Hz per frame) as a coloured polyline on one panel.
pub fn lf0_comparison(tracks: &[&[f64]], path: &Path) -> Result<()> {
    let colours = [Rgb([20, 20, 200]), Rgb([220, 40, 40]), Rgb([20, 150, 40])];
    let n = tracks.iter().map(|t| t.len()).max().unwrap_or(0);
    if n == 0 {
        return Err(Error::Validation("nothing to plot".into()));
    }
    let width = (n as u32 * 2).max(2);
    let height = 240u32;
    let lo = tracks.iter().flat_map(|t| t.iter()).cloned().fold(f64::INFINITY, f64::min);
    let hi = tracks.iter().flat_map(|t| t.iter()).cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1.0);
    let mut img = RgbImage::from_pixel(width, height, Rgb([255, 255, 255]));
    let to_y = |v: f64| -> i64 { ((1.0 - (v - lo) / span) * (height - 11) as f64) as i64 + 5 };
    for (k, track) in tracks.iter().enumerate() {
        let colour = colours[k % colours.len()];
        for i in 1..track.len() {
            let (x0, x1) = ((i - 1) as i64 * 2, i as i64 * 2);
            let (y0, y1) = (to_y(track[i - 1]), to_y(track[i]));
            let steps = (x1 - x0).abs().max((y1 - y0).abs()).max(1);
            for s in 0..=steps {
                let x = x0 + (x1 - x0) * s / steps;
                let y = y0 + (y1 - y0) * s / steps;
                if (0..width as i64).contains(&x) && (0..height as i64).contains(&y) {
                    img.put_pixel(x as u32, y as u32, colour);
                }
            }
        }
    }
    img.save(path).map_err(Error::from)
}
