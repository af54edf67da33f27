//! Structural similarity (SSIM) between height maps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heightfield::HeightMap;
use crate::procgen::gaussian_kernel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SsimParams {
    /// Odd side length of the Gaussian window.
    pub window: usize,
    pub window_sigma: f64,
    pub k1: f64,
    pub k2: f64,
    /// Value range `L` of the compared maps.
    pub dynamic_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: 11,
            window_sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 1.0,
        }
    }
}

impl SsimParams {
    pub fn validate(&self) -> Result<()> {
        if self.window % 2 == 0 {
            return Err(Error::arg(format!("SSIM window must be odd, got {}", self.window)));
        }
        if !(self.window_sigma > 0.0) {
            return Err(Error::arg("SSIM window_sigma must be positive"));
        }
        if !(self.k1 > 0.0 && self.k2 > 0.0) {
            return Err(Error::arg("SSIM k1 and k2 must be positive"));
        }
        if !(self.dynamic_range > 0.0) {
            return Err(Error::arg("SSIM dynamic_range must be positive"));
        }
        Ok(())
    }

    pub fn c1(&self) -> f64 {
        (self.k1 * self.dynamic_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.dynamic_range).powi(2)
    }
}

/// Mean SSIM over every fully-contained Gaussian window.
///
/// Local statistics use the same expressions for both inputs, so `ssim(x, x)` is
/// exactly 1 and the result is symmetric in its arguments.
pub fn ssim(a: &HeightMap, b: &HeightMap, p: &SsimParams) -> Result<f64> {
    p.validate()?;
    if a.dims() != b.dims() {
        return Err(Error::arg(format!(
            "SSIM inputs differ in size: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let (w, h) = a.dims();
    if w < p.window || h < p.window {
        return Err(Error::arg(format!(
            "SSIM window {} larger than the {w}x{h} maps",
            p.window
        )));
    }
    let taps = gaussian_kernel(p.window_sigma, p.window);
    let (av, bv) = (a.values(), b.values());
    let mu_a = filter_valid(av, w, h, &taps);
    let mu_b = filter_valid(bv, w, h, &taps);
    let sq = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).collect::<Vec<_>>();
    let e_aa = filter_valid(&sq(av, av), w, h, &taps);
    let e_bb = filter_valid(&sq(bv, bv), w, h, &taps);
    let e_ab = filter_valid(&sq(av, bv), w, h, &taps);

    let (c1, c2) = (p.c1(), p.c2());
    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let var_a = e_aa[i] - ma * ma;
        let var_b = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        let num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
        let den = (ma * ma + mb * mb + c1) * (var_a + var_b + c2);
        total += num / den;
    }
    Ok(total / mu_a.len() as f64)
}

/// Outcome of [`compare`]: the score and whether a map was resized first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsimReport {
    pub ssim: f64,
    pub params: SsimParams,
    /// `"a"` or `"b"` when that input was bilinearly resampled to the other's size.
    pub resampled: Option<String>,
}

/// SSIM that tolerates a size mismatch by resampling the smaller map (by pixel
/// count) to the larger one's dimensions.
pub fn compare(a: &HeightMap, b: &HeightMap, p: &SsimParams) -> Result<SsimReport> {
    let (score, resampled) = if a.dims() == b.dims() {
        (ssim(a, b, p)?, None)
    } else if a.values().len() < b.values().len() {
        (ssim(&a.resample(b.width(), b.height()), b, p)?, Some("a".to_string()))
    } else {
        (ssim(a, &b.resample(a.width(), a.height()), p)?, Some("b".to_string()))
    };
    Ok(SsimReport {
        ssim: score,
        params: *p,
        resampled,
    })
}

/// Separable filtering keeping only positions where the window fits entirely.
fn filter_valid(x: &[f64], w: usize, h: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (ow, oh) = (w - k + 1, h - k + 1);
    let mut horizontal = vec![0.0; ow * h];
    for row in 0..h {
        let src = &x[row * w..(row + 1) * w];
        for col in 0..ow {
            horizontal[row * ow + col] = taps.iter().zip(&src[col..col + k]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for row in 0..oh {
        for (t_i, &t) in taps.iter().enumerate() {
            let src = &horizontal[(row + t_i) * ow..(row + t_i + 1) * ow];
            for (o, &s) in out[row * ow..(row + 1) * ow].iter_mut().zip(src) {
                *o += t * s;
            }
        }
    }
    out
}
