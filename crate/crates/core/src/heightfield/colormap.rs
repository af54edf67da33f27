use std::fs;
use std::path::Path;

use super::HeightMap;
use crate::error::{Error, Result};

/// An 8-bit RGB raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColorImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u8; 3]>,
}

impl ColorImage {
    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width as u32, self.height as u32);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            let mut writer = enc
                .write_header()
                .map_err(|e| Error::Format(format!("PNG encode failed: {e}")))?;
            writer
                .write_image_data(self.pixels.as_flattened())
                .map_err(|e| Error::Format(format!("PNG encode failed: {e}")))?;
        }
        Ok(out)
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.encode_png()?).map_err(|e| Error::io(path, e))
    }
}

type Stop = (f64, [f64; 3]);

// Stops in increasing position, covering [0, 1].
const GRAY: &[Stop] = &[(0.0, [0.0, 0.0, 0.0]), (1.0, [255.0, 255.0, 255.0])];

const TERRAIN: &[Stop] = &[
    (0.00, [51.0, 51.0, 153.0]),
    (0.15, [0.0, 153.0, 255.0]),
    (0.25, [0.0, 204.0, 102.0]),
    (0.50, [255.0, 255.0, 153.0]),
    (0.75, [128.0, 92.0, 84.0]),
    (1.00, [255.0, 255.0, 255.0]),
];

const VIRIDIS: &[Stop] = &[
    (0.00, [68.0, 1.0, 84.0]),
    (0.25, [59.0, 82.0, 139.0]),
    (0.50, [33.0, 145.0, 140.0]),
    (0.75, [94.0, 201.0, 98.0]),
    (1.00, [253.0, 231.0, 37.0]),
];

const PALETTES: &[(&str, &[Stop])] = &[("gray", GRAY), ("terrain", TERRAIN), ("viridis", VIRIDIS)];

pub fn palette_names() -> Vec<&'static str> {
    PALETTES.iter().map(|(name, _)| *name).collect()
}

/// Maps every elevation through a piecewise-linear palette.
pub fn apply_colormap(map: &HeightMap, palette: &str) -> Result<ColorImage> {
    let stops = PALETTES
        .iter()
        .find(|(name, _)| *name == palette)
        .map(|(_, stops)| *stops)
        .ok_or_else(|| {
            Error::arg(format!(
                "unknown palette {palette:?}; available: {}",
                palette_names().join(", ")
            ))
        })?;
    let pixels = map.values().iter().map(|&v| lookup(stops, v)).collect();
    Ok(ColorImage {
        width: map.width(),
        height: map.height(),
        pixels,
    })
}

fn lookup(stops: &[Stop], v: f64) -> [u8; 3] {
    let v = v.clamp(0.0, 1.0);
    let upper = stops
        .iter()
        .position(|&(pos, _)| pos >= v)
        .unwrap_or(stops.len() - 1);
    let color = if upper == 0 {
        stops[0].1
    } else {
        let (p0, c0) = stops[upper - 1];
        let (p1, c1) = stops[upper];
        let t = (v - p0) / (p1 - p0);
        std::array::from_fn(|k| c0[k] + t * (c1[k] - c0[k]))
    };
    color.map(|c| (c + 0.5).floor().clamp(0.0, 255.0) as u8)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gray_midpoint() {
        let img = apply_colormap(&HeightMap::filled(2, 2, 0.5), "gray").unwrap();
        assert!(img.pixels.iter().all(|&p| p == [128, 128, 128]));
    }

    #[test]
    fn terrain_endpoints() {
        let m = HeightMap::new(2, 1, vec![0.0, 1.0]).unwrap();
        let img = apply_colormap(&m, "terrain").unwrap();
        assert_eq!(img.pixels[0], [51, 51, 153]);
        assert_eq!(img.pixels[1], [255, 255, 255]);
    }

    #[test]
    fn gray_luminance_is_monotone() {
        let m = HeightMap::from_fn(1000, 1, |_, c| c as f64 / 999.0);
        let img = apply_colormap(&m, "gray").unwrap();
        let lum: Vec<f64> = img
            .pixels
            .iter()
            .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
            .collect();
        assert!(lum.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(lum[0], 0.0);
        assert!((lum[999] - 255.0).abs() < 1e-9);
    }

    #[test]
    fn unknown_palette_lists_choices() {
        let err = apply_colormap(&HeightMap::filled(1, 1, 0.0), "plasma")
            .unwrap_err()
            .to_string();
        assert!(err.contains("gray") && err.contains("terrain"), "{err}");
    }
}
