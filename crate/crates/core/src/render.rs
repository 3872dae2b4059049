//! Binary PPM (P6) rendering of single fields with a fixed diverging colour
//! map. North is up; land and missing cells are grey.

use std::path::Path;

use crate::error::Result;
use crate::grid::GeoGrid;

pub const LAND: [u8; 3] = [128, 128, 128];

/// Blue (−1) through white (0) to red (+1); input is clamped.
pub fn diverging(x: f64) -> [u8; 3] {
    let x = x.clamp(-1.0, 1.0);
    let lerp = |a: f64, b: f64, t: f64| (a + (b - a) * t).round() as u8;
    if x < 0.0 {
        let t = -x;
        [lerp(255.0, 33.0, t), lerp(255.0, 102.0, t), lerp(255.0, 172.0, t)]
    } else {
        [lerp(255.0, 178.0, x), lerp(255.0, 24.0, x), lerp(255.0, 43.0, x)]
    }
}

/// Symmetric colour limit: the largest finite |value|, or 1 for an empty or
/// all-zero field.
pub fn symmetric_limit(values: &[f64]) -> f64 {
    let m = values.iter().filter(|v| v.is_finite()).fold(0.0f64, |a, v| a.max(v.abs()));
    if m > 0.0 { m } else { 1.0 }
}

/// Encodes `values` (`[n_lat × n_lon]`, row 0 southernmost when latitudes
/// increase) with each cell drawn as a `scale × scale` block.
pub fn encode_ppm(grid: &GeoGrid, values: &[f64], limit: f64, scale: usize) -> Vec<u8> {
    let (h, w) = (grid.n_lat(), grid.n_lon());
    let scale = scale.max(1);
    let north_first = grid.lat().len() < 2 || grid.lat()[0] < grid.lat()[1];
    let mut out = format!("P6\n{} {}\n255\n", w * scale, h * scale).into_bytes();
    for r in 0..h {
        let i = if north_first { h - 1 - r } else { r };
        let row: Vec<[u8; 3]> = (0..w)
            .map(|j| {
                let v = values[i * w + j];
                if grid.is_ocean(i, j) && v.is_finite() { diverging(v / limit) } else { LAND }
            })
            .collect();
        for _ in 0..scale {
            for px in &row {
                for _ in 0..scale {
                    out.extend_from_slice(px);
                }
            }
        }
    }
    out
}

pub fn write_ppm(path: impl AsRef<Path>, grid: &GeoGrid, values: &[f64], limit: f64, scale: usize) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, encode_ppm(grid, values, limit, scale))?;
    Ok(())
}
