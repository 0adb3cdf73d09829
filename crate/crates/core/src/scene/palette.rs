use std::fs;
use std::path::Path;

use super::LabelMap;
use crate::error::Result;

const GOLDEN_ANGLE_DEG: f64 = 137.508;

/// RGB color for a class id. Class 0 (unlabeled) is black; class `c >= 1`
/// is the fully saturated hue `(c - 1) * 137.508` degrees.
pub fn palette_color(class_index: u16) -> [u8; 3] {
    if class_index == 0 {
        return [0, 0, 0];
    }
    let hue = (f64::from(class_index - 1) * GOLDEN_ANGLE_DEG).rem_euclid(360.0);
    hsv_to_rgb(hue, 1.0, 1.0)
}

/// Hexcone HSV to RGB, each channel rounded half-up to a byte.
fn hsv_to_rgb(hue: f64, s: f64, v: f64) -> [u8; 3] {
    let h = hue / 60.0;
    let sector = h.floor();
    let f = h - sector;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    let (r, g, b) = match sector as i64 % 6 {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    };
    let byte = |x: f64| (x * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8;
    [byte(r), byte(g), byte(b)]
}

/// Binary PPM (P6) bytes for a class map.
pub fn encode_ppm(labels: &LabelMap) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", labels.cols, labels.rows).into_bytes();
    out.reserve(3 * labels.data.len());
    for &l in &labels.data {
        out.extend_from_slice(&palette_color(l));
    }
    out
}

pub fn write_class_map(labels: &LabelMap, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_ppm(labels))?;
    Ok(())
}
