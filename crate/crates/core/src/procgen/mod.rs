//! Procedural noise height maps and designer-steered blending.
//!
//! Two generators: [`generate_explicit`] averages several uniform random matrices
//! drawn at different base resolutions, each upscaled and Gaussian-smoothed;
//! [`generate_perlin_map`] sums octaves of lattice gradient noise. Either output can
//! be mixed with a hand-drawn feature map through [`blend_custom_feature`] before it
//! serves as content for style transfer.

mod explicit;
mod perlin;

pub use explicit::{
    explicit_field_with, gaussian_kernel, gaussian_smooth, gen_random_matrix, generate_explicit,
    ExplicitNoiseConfig,
};
pub use perlin::{generate_perlin_map, perlin_sample, Octave, Perlin, PerlinConfig};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heightfield::HeightMap;

/// A generator choice plus its parameters, serialized with a `method` tag:
/// `{"method": "perlin", "seed": 7, "octaves": 6, ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum NoiseConfig {
    Explicit(ExplicitNoiseConfig),
    Perlin(PerlinConfig),
}

impl NoiseConfig {
    pub const METHODS: [&'static str; 2] = ["explicit", "perlin"];

    pub fn validate(&self) -> Result<()> {
        match self {
            NoiseConfig::Explicit(cfg) => cfg.validate(),
            NoiseConfig::Perlin(cfg) => cfg.validate(),
        }
    }

    pub fn generate(&self) -> Result<HeightMap> {
        match self {
            NoiseConfig::Explicit(cfg) => generate_explicit(cfg),
            NoiseConfig::Perlin(cfg) => generate_perlin_map(cfg),
        }
    }

    /// Output `(width, height)`.
    pub fn dims(&self) -> (usize, usize) {
        match self {
            NoiseConfig::Explicit(cfg) => (cfg.target_dim, cfg.target_dim),
            NoiseConfig::Perlin(cfg) => (cfg.width, cfg.height),
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            NoiseConfig::Explicit(cfg) => cfg.seed,
            NoiseConfig::Perlin(cfg) => cfg.seed,
        }
    }
}

/// A user-drawn feature map and its share in the blend.
#[derive(Debug, Clone)]
pub struct BlendSpec {
    pub custom: HeightMap,
    pub weight: f64,
}

impl Default for BlendSpec {
    fn default() -> Self {
        Self {
            custom: HeightMap::filled(1, 1, 0.0),
            weight: 0.5,
        }
    }
}

impl BlendSpec {
    pub fn apply(&self, noise: &HeightMap) -> Result<HeightMap> {
        blend_custom_feature(&self.custom, noise, self.weight)
    }
}

/// `weight * custom + (1 - weight) * noise`, normalized. Weight 0.5 is a plain average.
pub fn blend_custom_feature(custom: &HeightMap, noise: &HeightMap, weight: f64) -> Result<HeightMap> {
    Ok(blend_raw(custom, noise, weight)?.normalize())
}

/// The blend before normalization.
pub fn blend_raw(custom: &HeightMap, noise: &HeightMap, weight: f64) -> Result<HeightMap> {
    if custom.dims() != noise.dims() {
        return Err(Error::arg(format!(
            "custom map is {}x{} but noise map is {}x{}",
            custom.width(),
            custom.height(),
            noise.width(),
            noise.height()
        )));
    }
    if !(0.0..=1.0).contains(&weight) {
        return Err(Error::arg(format!("blend weight {weight} outside [0, 1]")));
    }
    let values = custom
        .values()
        .iter()
        .zip(noise.values())
        .map(|(&c, &n)| weight * c + (1.0 - weight) * n)
        .collect();
    HeightMap::new(custom.width(), custom.height(), values)
}
