//! Weight archives: safetensors files holding `conv{g}_{i}.weight` (`out x in x 3 x 3`)
//! and `conv{g}_{i}.bias` (`out`) as little-endian float32 for all 16 stages.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use safetensors::tensor::{Dtype, TensorView};
use safetensors::SafeTensors;

use super::vgg::{ConvLayer, FeatureExtractor, KERNEL, VGG19};
use crate::error::{Error, Result};

/// Seed used by `init-weights` and the test suites when no archive is supplied.
pub const DEFAULT_WEIGHT_SEED: u64 = 19;

/// Extra gain on the first stage of seeded weights.
///
/// He scaling keeps activation magnitude roughly constant with depth, so this
/// factor sets the magnitude of every activation. Style terms grow with its fourth
/// power and content terms with its square; at this value the default loss
/// weights give a style-dominated objective that descends stably.
pub const SEEDED_INPUT_GAIN: f32 = 1e4;

fn format_err(entry: &str, reason: impl Into<String>) -> Error {
    Error::WeightFormat {
        entry: entry.to_string(),
        reason: reason.into(),
    }
}

/// Loads and validates a weight archive from disk.
pub fn load_weights(path: impl AsRef<Path>) -> Result<FeatureExtractor> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_safetensors(&bytes)
}

/// Parses an in-memory archive.
pub fn from_safetensors(bytes: &[u8]) -> Result<FeatureExtractor> {
    let archive =
        SafeTensors::deserialize(bytes).map_err(|e| format_err("<archive>", format!("not a safetensors file: {e}")))?;
    let mut layers = Vec::with_capacity(VGG19.len());
    for spec in VGG19 {
        let weight = read_entry(
            &archive,
            &format!("{}.weight", spec.name),
            &[spec.out_channels, spec.in_channels, KERNEL, KERNEL],
        )?;
        let bias = read_entry(&archive, &format!("{}.bias", spec.name), &[spec.out_channels])?;
        layers.push(ConvLayer { spec, weight, bias });
    }
    FeatureExtractor::from_layers(layers)
}

fn read_entry(archive: &SafeTensors<'_>, name: &str, shape: &[usize]) -> Result<Vec<f32>> {
    let view = archive.tensor(name).map_err(|_| format_err(name, "missing entry"))?;
    if view.dtype() != Dtype::F32 {
        return Err(format_err(name, format!("dtype {:?}, expected F32", view.dtype())));
    }
    if view.shape() != shape {
        return Err(format_err(
            name,
            format!("shape {:?}, expected {:?}", view.shape(), shape),
        ));
    }
    Ok(view
        .data()
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect())
}

/// Serializes an extractor into the archive layout read by [`from_safetensors`].
pub fn to_safetensors(ex: &FeatureExtractor) -> Result<Vec<u8>> {
    let mut buffers: Vec<(String, Vec<usize>, Vec<u8>)> = Vec::with_capacity(2 * VGG19.len());
    for layer in ex.layers() {
        let s = layer.spec;
        buffers.push((
            format!("{}.weight", s.name),
            vec![s.out_channels, s.in_channels, KERNEL, KERNEL],
            le_bytes(&layer.weight),
        ));
        buffers.push((format!("{}.bias", s.name), vec![s.out_channels], le_bytes(&layer.bias)));
    }
    let views = buffers
        .iter()
        .map(|(name, shape, data)| {
            TensorView::new(Dtype::F32, shape.clone(), data)
                .map(|v| (name.clone(), v))
                .map_err(|e| format_err(name, e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    safetensors::serialize(views, &None).map_err(|e| format_err("<archive>", e.to_string()))
}

pub fn save_weights(ex: &FeatureExtractor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_safetensors(ex)?).map_err(|e| Error::io(path, e))
}

fn le_bytes(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

impl FeatureExtractor {
    /// Random VGG-19 trunk: He-normal weights (`N(0, 2 / fan_in)`, times
    /// [`SEEDED_INPUT_GAIN`] on the first stage) and zero biases.
    ///
    /// A stand-in when no pretrained archive is available; random convolutional
    /// features still carry usable texture statistics for Gram-based style transfer.
    pub fn seeded(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = VGG19
            .iter()
            .map(|&spec| {
                let fan_in = (spec.in_channels * KERNEL * KERNEL) as f32;
                let gain = if spec.in_channels == 3 { SEEDED_INPUT_GAIN } else { 1.0 };
                let normal = Normal::new(0.0f32, gain * (2.0 / fan_in).sqrt()).expect("finite std");
                let weight = (0..spec.out_channels * spec.in_channels * KERNEL * KERNEL)
                    .map(|_| normal.sample(&mut rng))
                    .collect();
                ConvLayer {
                    spec,
                    weight,
                    bias: vec![0.0; spec.out_channels],
                }
            })
            .collect();
        Self { layers }
    }
}
