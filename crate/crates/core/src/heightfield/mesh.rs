use std::io::{self, Write};

use super::HeightMap;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<[f64; 3]>,
    /// Zero-based vertex indices, counter-clockwise seen from +z.
    pub triangles: Vec<[u32; 3]>,
}

impl TriangleMesh {
    /// Wavefront OBJ: `v x y z` lines then `f a b c` lines with 1-based indices.
    pub fn write_obj<W: Write>(&self, mut out: W) -> io::Result<()> {
        for [x, y, z] in &self.vertices {
            writeln!(out, "v {x} {y} {z}")?;
        }
        for [a, b, c] in &self.triangles {
            writeln!(out, "f {} {} {}", a + 1, b + 1, c + 1)?;
        }
        out.flush()
    }
}

/// Vertex `(row, col)` lands at `(col * step, row * step, value * vertical_scale)`;
/// every grid cell becomes two triangles.
pub fn to_mesh(map: &HeightMap, vertical_scale: f64, horizontal_step: f64) -> Result<TriangleMesh> {
    let (w, h) = map.dims();
    if w < 2 || h < 2 {
        return Err(Error::arg(format!(
            "mesh export needs at least a 2x2 map, got {w}x{h}"
        )));
    }
    if !(vertical_scale > 0.0 && vertical_scale.is_finite()) {
        return Err(Error::arg(format!(
            "vertical scale must be positive, got {vertical_scale}"
        )));
    }
    if !(horizontal_step > 0.0 && horizontal_step.is_finite()) {
        return Err(Error::arg(format!(
            "horizontal step must be positive, got {horizontal_step}"
        )));
    }
    if w * h > u32::MAX as usize {
        return Err(Error::arg("map too large for 32-bit mesh indices"));
    }

    let mut vertices = Vec::with_capacity(w * h);
    for row in 0..h {
        for col in 0..w {
            vertices.push([
                col as f64 * horizontal_step,
                row as f64 * horizontal_step,
                map.get(row, col) * vertical_scale,
            ]);
        }
    }

    let mut triangles = Vec::with_capacity(2 * (w - 1) * (h - 1));
    let idx = |row: usize, col: usize| (row * w + col) as u32;
    for row in 0..h - 1 {
        for col in 0..w - 1 {
            let (a, b) = (idx(row, col), idx(row, col + 1));
            let (c, d) = (idx(row + 1, col), idx(row + 1, col + 1));
            triangles.push([a, b, d]);
            triangles.push([a, d, c]);
        }
    }
    Ok(TriangleMesh {
        vertices,
        triangles,
    })
}
