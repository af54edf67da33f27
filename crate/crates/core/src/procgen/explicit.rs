use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heightfield::HeightMap;

/// Parameters of multi-scale smoothed uniform noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplicitNoiseConfig {
    /// Number of random matrices averaged together.
    pub n: usize,
    /// Side length of each matrix before upscaling, one per matrix.
    pub base_sizes: Vec<usize>,
    /// Side length of the output map.
    pub target_dim: usize,
    /// Gaussian standard deviations (pixels) of the smoothing passes.
    pub sigmas: Vec<f64>,
    /// Odd kernel side lengths, paired with `sigmas`.
    pub kernels: Vec<usize>,
    /// Optional per-matrix replacement for `sigmas`/`kernels`, indexed like `base_sizes`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_matrix_sigmas: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_matrix_kernels: Option<Vec<Vec<usize>>>,
    pub seed: u64,
}

impl Default for ExplicitNoiseConfig {
    fn default() -> Self {
        Self {
            n: 4,
            base_sizes: vec![4, 8, 16, 32],
            target_dim: 1500,
            sigmas: vec![8.0, 4.0, 2.0],
            kernels: vec![33, 17, 9],
            per_matrix_sigmas: None,
            per_matrix_kernels: None,
            seed: 0,
        }
    }
}

impl ExplicitNoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::arg("n must be at least 1"));
        }
        if self.base_sizes.len() != self.n {
            return Err(Error::arg(format!(
                "base_sizes has {} entries but n = {}",
                self.base_sizes.len(),
                self.n
            )));
        }
        if self.target_dim == 0 {
            return Err(Error::arg("target_dim must be positive"));
        }
        if let Some(&bad) = self
            .base_sizes
            .iter()
            .find(|&&s| s == 0 || s > self.target_dim)
        {
            return Err(Error::arg(format!(
                "base size {bad} must lie in 1..={}",
                self.target_dim
            )));
        }
        match (&self.per_matrix_sigmas, &self.per_matrix_kernels) {
            (None, None) => check_passes(&self.sigmas, &self.kernels, self.target_dim),
            (Some(s), Some(k)) => {
                if s.len() != self.n || k.len() != self.n {
                    return Err(Error::arg(
                        "per_matrix_sigmas and per_matrix_kernels need one entry per matrix",
                    ));
                }
                s.iter()
                    .zip(k)
                    .try_for_each(|(s, k)| check_passes(s, k, self.target_dim))
            }
            _ => Err(Error::arg(
                "per_matrix_sigmas and per_matrix_kernels must be given together",
            )),
        }
    }

    fn passes(&self, matrix: usize) -> (&[f64], &[usize]) {
        match (&self.per_matrix_sigmas, &self.per_matrix_kernels) {
            (Some(s), Some(k)) => (&s[matrix], &k[matrix]),
            _ => (&self.sigmas, &self.kernels),
        }
    }
}

fn check_passes(sigmas: &[f64], kernels: &[usize], dim: usize) -> Result<()> {
    if sigmas.len() != kernels.len() {
        return Err(Error::arg(format!(
            "{} sigmas but {} kernels",
            sigmas.len(),
            kernels.len()
        )));
    }
    for (&sigma, &kernel) in sigmas.iter().zip(kernels) {
        check_kernel(sigma, kernel, dim, dim)?;
    }
    Ok(())
}

fn check_kernel(sigma: f64, kernel: usize, w: usize, h: usize) -> Result<()> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::arg(format!("sigma must be positive, got {sigma}")));
    }
    if kernel % 2 == 0 {
        return Err(Error::arg(format!("kernel size must be odd, got {kernel}")));
    }
    if kernel > w.min(h) {
        return Err(Error::arg(format!(
            "kernel size {kernel} exceeds the {w}x{h} matrix"
        )));
    }
    Ok(())
}

/// A `size` x `size` matrix of i.i.d. uniform values on `[0, 1)`.
pub fn gen_random_matrix<R: Rng + ?Sized>(size: usize, rng: &mut R) -> HeightMap {
    let values = (0..size * size).map(|_| rng.random::<f64>()).collect();
    HeightMap::new(size, size, values).expect("uniform samples are finite")
}

/// Normalized 1-D Gaussian taps of odd length `kernel`.
///
/// The 2-D kernel is the outer product of this vector with itself, so it also sums
/// to one.
pub fn gaussian_kernel(sigma: f64, kernel: usize) -> Vec<f64> {
    let half = (kernel / 2) as isize;
    let taps: Vec<f64> = (-half..=half)
        .map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

/// Convolution with a `kernel` x `kernel` normalized Gaussian, borders reflected
/// (edge sample repeated).
pub fn gaussian_smooth(m: &HeightMap, sigma: f64, kernel: usize) -> Result<HeightMap> {
    let (w, h) = m.dims();
    check_kernel(sigma, kernel, w, h)?;
    let taps = gaussian_kernel(sigma, kernel);
    let half = kernel / 2;
    let (lo, hi) = m.min_max();

    let mut horizontal = vec![0.0; w * h];
    for row in 0..h {
        let src = m.row(row);
        let dst = &mut horizontal[row * w..(row + 1) * w];
        for (col, out) in dst.iter_mut().enumerate() {
            *out = taps
                .iter()
                .enumerate()
                .map(|(k, &t)| t * src[reflect(col as isize + k as isize - half as isize, w)])
                .sum();
        }
    }

    let mut values = vec![0.0; w * h];
    for row in 0..h {
        for (k, &t) in taps.iter().enumerate() {
            let src_row = reflect(row as isize + k as isize - half as isize, h);
            let src = &horizontal[src_row * w..(src_row + 1) * w];
            for (out, &s) in values[row * w..(row + 1) * w].iter_mut().zip(src) {
                *out += t * s;
            }
        }
    }
    // A convex combination stays within the input range; clamp away rounding.
    for v in &mut values {
        *v = v.clamp(lo, hi);
    }
    HeightMap::new(w, h, values)
}

#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let r = if i < 0 {
        -i - 1
    } else if i >= n {
        2 * n - i - 1
    } else {
        i
    };
    r.clamp(0, n - 1) as usize
}

/// Multi-scale noise: average of smoothed, upscaled random matrices, then normalized.
pub fn generate_explicit(cfg: &ExplicitNoiseConfig) -> Result<HeightMap> {
    Ok(explicit_field_with(cfg, |size, rng| gen_random_matrix(size, rng))?.normalize())
}

/// The averaged field before normalization, with a pluggable matrix source.
pub fn explicit_field_with<F>(cfg: &ExplicitNoiseConfig, mut gen_matrix: F) -> Result<HeightMap>
where
    F: FnMut(usize, &mut ChaCha8Rng) -> HeightMap,
{
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dim = cfg.target_dim;
    let mut sum = vec![0.0; dim * dim];
    for (i, &base) in cfg.base_sizes.iter().enumerate() {
        let mut matrix = gen_matrix(base, &mut rng).upscale(dim, dim)?;
        let (sigmas, kernels) = cfg.passes(i);
        for (&sigma, &kernel) in sigmas.iter().zip(kernels) {
            matrix = gaussian_smooth(&matrix, sigma, kernel)?;
        }
        for (acc, v) in sum.iter_mut().zip(matrix.values()) {
            *acc += v;
        }
    }
    let n = cfg.n as f64;
    HeightMap::new(dim, dim, sum.into_iter().map(|v| v / n).collect())
}
