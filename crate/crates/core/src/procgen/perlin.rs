use std::f64::consts::FRAC_1_SQRT_2;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heightfield::HeightMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerlinConfig {
    pub octaves: usize,
    /// Lattice cycles per pixel at the first octave.
    pub base_freq: f64,
    pub base_amplitude: f64,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
}

impl Default for PerlinConfig {
    fn default() -> Self {
        Self {
            octaves: 6,
            base_freq: 1.0 / 256.0,
            base_amplitude: 1.0,
            seed: 0,
            width: 512,
            height: 512,
        }
    }
}

impl PerlinConfig {
    pub fn validate(&self) -> Result<()> {
        if self.octaves == 0 {
            return Err(Error::arg("octaves must be at least 1"));
        }
        if !(self.base_freq > 0.0 && self.base_freq.is_finite()) {
            return Err(Error::arg(format!(
                "base_freq must be positive, got {}",
                self.base_freq
            )));
        }
        if !(self.base_amplitude > 0.0 && self.base_amplitude.is_finite()) {
            return Err(Error::arg(format!(
                "base_amplitude must be positive, got {}",
                self.base_amplitude
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::arg("width and height must be positive"));
        }
        Ok(())
    }
}

/// One frequency band: lattice frequency and weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Octave {
    pub freq: f64,
    pub amplitude: f64,
}

const GRADIENTS: [(f64, f64); 8] = [
    (1.0, 0.0),
    (-1.0, 0.0),
    (0.0, 1.0),
    (0.0, -1.0),
    (FRAC_1_SQRT_2, FRAC_1_SQRT_2),
    (-FRAC_1_SQRT_2, FRAC_1_SQRT_2),
    (FRAC_1_SQRT_2, -FRAC_1_SQRT_2),
    (-FRAC_1_SQRT_2, -FRAC_1_SQRT_2),
];

/// Seeded gradient lattice plus the octave schedule of a [`PerlinConfig`].
///
/// All octaves share one permutation table; each reads it at its own frequency.
#[derive(Debug, Clone)]
pub struct Perlin {
    perm: [u8; 256],
    octaves: Vec<Octave>,
}

impl Perlin {
    pub fn new(cfg: &PerlinConfig) -> Result<Self> {
        cfg.validate()?;
        let mut perm: [u8; 256] = std::array::from_fn(|i| i as u8);
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));

        let mut octaves = Vec::with_capacity(cfg.octaves);
        let (mut freq, mut amplitude) = (cfg.base_freq, cfg.base_amplitude);
        for _ in 0..cfg.octaves {
            octaves.push(Octave { freq, amplitude });
            freq *= 2.0;
            amplitude *= 0.5;
        }
        Ok(Self { perm, octaves })
    }

    pub fn octaves(&self) -> &[Octave] {
        &self.octaves
    }

    /// Sum over octaves of `gradient_noise(x * freq, y * freq) * amplitude`.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        self.sample_traced(x, y, |_, _| {})
    }

    /// Like [`sample`](Self::sample), reporting each octave and its raw noise value.
    pub fn sample_traced(&self, x: f64, y: f64, mut trace: impl FnMut(&Octave, f64)) -> f64 {
        let mut total = 0.0;
        for octave in &self.octaves {
            let n = self.gradient_noise(x * octave.freq, y * octave.freq);
            trace(octave, n);
            total += n * octave.amplitude;
        }
        total
    }

    /// Single-octave 2-D gradient noise: unit gradients on the integer lattice,
    /// quintic fade, bilinear blend of the four corner dot products.
    pub fn gradient_noise(&self, x: f64, y: f64) -> f64 {
        let (xf, yf) = (x.floor(), y.floor());
        let (dx, dy) = (x - xf, y - yf);
        let (xi, yi) = (xf as i64, yf as i64);

        let corner = |cx: i64, cy: i64, ox: f64, oy: f64| {
            let (gx, gy) = GRADIENTS[(self.hash(cx, cy) & 7) as usize];
            gx * ox + gy * oy
        };
        let n00 = corner(xi, yi, dx, dy);
        let n10 = corner(xi + 1, yi, dx - 1.0, dy);
        let n01 = corner(xi, yi + 1, dx, dy - 1.0);
        let n11 = corner(xi + 1, yi + 1, dx - 1.0, dy - 1.0);

        let (u, v) = (fade(dx), fade(dy));
        let bottom = n00 + u * (n10 - n00);
        let top = n01 + u * (n11 - n01);
        bottom + v * (top - bottom)
    }

    #[inline]
    fn hash(&self, x: i64, y: i64) -> u8 {
        let a = self.perm[(x & 255) as usize] as i64;
        self.perm[((a + y) & 255) as usize]
    }
}

#[inline]
fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

/// Evaluates octave-summed gradient noise at one point.
///
/// Builds the lattice on each call; use [`Perlin`] directly for many samples.
pub fn perlin_sample(x: f64, y: f64, cfg: &PerlinConfig) -> Result<f64> {
    Ok(Perlin::new(cfg)?.sample(x, y))
}

/// Samples every pixel at integer coordinates `(col, row)`, then
/// normalizes to `[0, 1]`.
pub fn generate_perlin_map(cfg: &PerlinConfig) -> Result<HeightMap> {
    let perlin = Perlin::new(cfg)?;
    Ok(HeightMap::from_fn(cfg.width, cfg.height, |row, col| perlin.sample(col as f64, row as f64)).normalize())
}
