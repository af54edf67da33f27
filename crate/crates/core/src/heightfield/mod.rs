//! Height maps: a row-major grid of elevations, nominally in `[0, 1]`.
//!
//! 0 is the lowest elevation and 1 the highest. Every other module consumes and
//! produces [`HeightMap`]s; the submodules cover file formats, colour rendering and
//! mesh export.

mod colormap;
mod io;
mod mesh;

pub use colormap::{apply_colormap, palette_names, ColorImage};
pub use io::{
    decode_heightmap, encode_png, encode_raw, load_heightmap, save_heightmap, save_raw, BitDepth,
    RAW_MAGIC,
};
pub use mesh::{to_mesh, TriangleMesh};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct HeightMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl HeightMap {
    /// Wraps a row-major value buffer, checking dimensions and finiteness.
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::arg(format!(
                "height map dimensions must be positive, got {width}x{height}"
            )));
        }
        if values.len() != width * height {
            return Err(Error::arg(format!(
                "{} values supplied for a {width}x{height} height map",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::arg(format!(
                "non-finite elevation at row {}, column {}",
                i / width,
                i % width
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0 && value.is_finite());
        Self {
            width,
            height,
            values: vec![value; width * height],
        }
    }

    /// Builds a map by evaluating `f(row, col)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0);
        let mut values = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                let v = f(row, col);
                assert!(v.is_finite(), "non-finite elevation at ({row}, {col})");
                values.push(v);
            }
        }
        Self {
            width,
            height,
            values,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.width..(row + 1) * self.width]
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Affine rescale onto `[0, 1]`. A flat map has no elevation range to stretch,
    /// so it becomes a uniform 0.5.
    pub fn normalize(&self) -> HeightMap {
        let (lo, hi) = self.min_max();
        let values = if hi > lo {
            let span = hi - lo;
            self.values.iter().map(|&v| (v - lo) / span).collect()
        } else {
            vec![0.5; self.values.len()]
        };
        HeightMap {
            width: self.width,
            height: self.height,
            values,
        }
    }

    /// Bilinear enlargement. Corner pixels map exactly onto corner pixels.
    pub fn upscale(&self, target_w: usize, target_h: usize) -> Result<HeightMap> {
        if target_w < self.width || target_h < self.height {
            return Err(Error::arg(format!(
                "upscale target {target_w}x{target_h} is smaller than the source {}x{}",
                self.width, self.height
            )));
        }
        Ok(self.resample(target_w, target_h))
    }

    /// Bilinear resampling to arbitrary positive dimensions (corner-aligned).
    pub fn resample(&self, target_w: usize, target_h: usize) -> HeightMap {
        assert!(target_w > 0 && target_h > 0);
        if (target_w, target_h) == self.dims() {
            return self.clone();
        }
        let xs = axis_samples(self.width, target_w);
        let ys = axis_samples(self.height, target_h);
        let mut values = Vec::with_capacity(target_w * target_h);
        for &(y0, y1, ty) in &ys {
            let (r0, r1) = (self.row(y0), self.row(y1));
            for &(x0, x1, tx) in &xs {
                let top = lerp(r0[x0], r0[x1], tx);
                let bottom = lerp(r1[x0], r1[x1], tx);
                values.push(lerp(top, bottom, ty));
            }
        }
        HeightMap {
            width: target_w,
            height: target_h,
            values,
        }
    }

    /// Resamples so the long side equals `long_side`, preserving the aspect ratio.
    pub fn fit_long_side(&self, long_side: usize) -> HeightMap {
        let long = self.width.max(self.height);
        if long == long_side {
            return self.clone();
        }
        let scale = long_side as f64 / long as f64;
        let w = ((self.width as f64 * scale).round() as usize).max(1);
        let h = ((self.height as f64 * scale).round() as usize).max(1);
        self.resample(w, h)
    }
}

/// For each destination index: the two source neighbours and the blend factor.
fn axis_samples(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    (0..dst)
        .map(|i| {
            if dst == 1 || src == 1 {
                return (0, 0, 0.0);
            }
            let x = (i * (src - 1)) as f64 / (dst - 1) as f64;
            let x0 = (x.floor() as usize).min(src - 1);
            let x1 = (x0 + 1).min(src - 1);
            (x0, x1, x - x0 as f64)
        })
        .collect()
}

/// Linear blend clamped to the endpoints so interpolation never overshoots.
#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    let v = (1.0 - t) * a + t * b;
    v.clamp(a.min(b), a.max(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_buffers() {
        assert!(HeightMap::new(2, 2, vec![0.0; 3]).is_err());
        assert!(HeightMap::new(0, 2, vec![]).is_err());
        assert!(HeightMap::new(1, 2, vec![0.0, f64::NAN]).is_err());
    }

    #[test]
    fn normalize_examples() {
        let m = HeightMap::new(3, 1, vec![0.0, 5.0, 10.0]).unwrap();
        assert_eq!(m.normalize().values(), &[0.0, 0.5, 1.0]);

        let unit = HeightMap::new(3, 1, vec![0.0, 0.25, 1.0]).unwrap();
        assert_eq!(unit.normalize(), unit);

        let flat = HeightMap::filled(4, 3, 7.3).normalize();
        assert!(flat.values().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn upscale_examples() {
        let m = HeightMap::new(2, 2, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        let up = m.upscale(3, 3).unwrap();
        for row in 0..3 {
            assert_eq!(up.get(row, 0), 0.0);
            assert_eq!(up.get(row, 1), 0.5);
            assert_eq!(up.get(row, 2), 1.0);
        }
        assert_eq!(m.upscale(2, 2).unwrap(), m);

        let flat = HeightMap::filled(3, 2, 0.3).upscale(7, 5).unwrap();
        assert_eq!(flat.dims(), (7, 5));
        assert!(flat.values().iter().all(|&v| v == 0.3));

        assert!(matches!(m.upscale(1, 3), Err(Error::Argument(_))));
    }

    #[test]
    fn upscale_keeps_corners() {
        let m = HeightMap::from_fn(5, 4, |r, c| (r * 7 + c * 3) as f64 % 5.0);
        let up = m.upscale(13, 9).unwrap();
        assert_eq!(up.get(0, 0), m.get(0, 0));
        assert_eq!(up.get(0, 12), m.get(0, 4));
        assert_eq!(up.get(8, 0), m.get(3, 0));
        assert_eq!(up.get(8, 12), m.get(3, 4));
    }

    #[test]
    fn fit_long_side_preserves_aspect() {
        let m = HeightMap::filled(300, 150, 0.2);
        assert_eq!(m.fit_long_side(100).dims(), (100, 50));
        assert_eq!(m.fit_long_side(300).dims(), (300, 150));
    }
}
