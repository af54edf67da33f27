//! VGG-19 convolutional trunk: topology, forward pass with activation capture, and
//! the input-gradient backward pass.
//!
//! Only the 16 convolution stages are modelled (3x3, stride 1, zero padding 1, ReLU
//! after each). Groups are separated by 2x2 max pooling; the pool after the fifth
//! group is never needed and is omitted along with the dense classifier.

use super::linalg::{gemm, Real, View};
use super::loss::FeatureActivations;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub name: &'static str,
    pub in_channels: usize,
    pub out_channels: usize,
    /// A 2x2 max pool follows this stage.
    pub pool_after: bool,
}

const fn conv(name: &'static str, in_channels: usize, out_channels: usize, pool_after: bool) -> ConvSpec {
    ConvSpec {
        name,
        in_channels,
        out_channels,
        pool_after,
    }
}

pub const VGG19: [ConvSpec; 16] = [
    conv("conv1_1", 3, 64, false),
    conv("conv1_2", 64, 64, true),
    conv("conv2_1", 64, 128, false),
    conv("conv2_2", 128, 128, true),
    conv("conv3_1", 128, 256, false),
    conv("conv3_2", 256, 256, false),
    conv("conv3_3", 256, 256, false),
    conv("conv3_4", 256, 256, true),
    conv("conv4_1", 256, 512, false),
    conv("conv4_2", 512, 512, false),
    conv("conv4_3", 512, 512, false),
    conv("conv4_4", 512, 512, true),
    conv("conv5_1", 512, 512, false),
    conv("conv5_2", 512, 512, false),
    conv("conv5_3", 512, 512, false),
    conv("conv5_4", 512, 512, false),
];

pub const KERNEL: usize = 3;
const TAPS: usize = KERNEL * KERNEL;

/// Elements of im2col scratch per band; bounds memory at large resolutions.
const COL_BUDGET: usize = 1 << 22;

pub fn stage_index(name: &str) -> Option<usize> {
    VGG19.iter().position(|s| s.name == name)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<T> {
    pub spec: ConvSpec,
    /// `out x in x 3 x 3`, row-major.
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

/// Pretrained (or seeded) VGG-19 convolution weights. Immutable once built, so one
/// extractor can serve any number of concurrent transfers.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureExtractor<T = f32> {
    pub(crate) layers: Vec<ConvLayer<T>>,
}

/// Activations kept from a forward pass for the backward pass.
pub(crate) struct Forward<T> {
    /// Post-ReLU output of each stage up to the deepest one evaluated.
    pub outputs: Vec<Tensor<T>>,
    /// Winning offset (0..4) of every pooled cell, for stages followed by a pool.
    pub pool_argmax: Vec<Vec<u8>>,
}

impl<T: Real> FeatureExtractor<T> {
    pub(crate) fn from_layers(layers: Vec<ConvLayer<T>>) -> Result<Self> {
        if layers.len() != VGG19.len() {
            return Err(Error::WeightFormat {
                entry: "<archive>".into(),
                reason: format!("expected 16 convolution stages, got {}", layers.len()),
            });
        }
        for (layer, spec) in layers.iter().zip(&VGG19) {
            let expect = spec.out_channels * spec.in_channels * TAPS;
            if layer.spec != *spec || layer.weight.len() != expect || layer.bias.len() != spec.out_channels {
                return Err(Error::WeightFormat {
                    entry: spec.name.into(),
                    reason: "shape mismatch".into(),
                });
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[ConvLayer<T>] {
        &self.layers
    }

    /// The same weights in another precision.
    pub fn cast<U: Real>(&self) -> FeatureExtractor<U> {
        FeatureExtractor {
            layers: self
                .layers
                .iter()
                .map(|l| ConvLayer {
                    spec: l.spec,
                    weight: l.weight.iter().map(|&w| U::of(w.to_f64())).collect(),
                    bias: l.bias.iter().map(|&b| U::of(b.to_f64())).collect(),
                })
                .collect(),
        }
    }

    /// Runs the trunk and returns the requested stage outputs in request order.
    pub fn extract_features(&self, img: &Tensor<T>, layers: &[&str]) -> Result<Vec<FeatureActivations<T>>> {
        let indices = layers
            .iter()
            .map(|name| resolve(name))
            .collect::<Result<Vec<_>>>()?;
        let Some(&deepest) = indices.iter().max() else {
            return Ok(Vec::new());
        };
        let fwd = self.forward(img, deepest)?;
        Ok(indices
            .iter()
            .map(|&i| FeatureActivations::from_tensor(VGG19[i].name, &fwd.outputs[i]))
            .collect())
    }

    pub(crate) fn forward(&self, img: &Tensor<T>, deepest: usize) -> Result<Forward<T>> {
        if img.channels() != 3 {
            return Err(Error::arg(format!(
                "feature extractor expects 3 channels, got {}",
                img.channels()
            )));
        }
        let mut outputs = Vec::with_capacity(deepest + 1);
        let mut pool_argmax = Vec::with_capacity(deepest + 1);
        let mut pooled: Option<Tensor<T>> = None;
        for layer in &self.layers[..=deepest] {
            let input = pooled.as_ref().unwrap_or(if outputs.is_empty() {
                img
            } else {
                outputs.last().unwrap()
            });
            if input.height() == 0 || input.width() == 0 {
                return Err(Error::arg(format!(
                    "input too small to reach {}: pooled away to nothing",
                    layer.spec.name
                )));
            }
            let out = conv_forward(layer, input);
            pooled = None;
            if layer.spec.pool_after && outputs.len() < deepest {
                let (p, arg) = max_pool(&out);
                pooled = Some(p);
                pool_argmax.push(arg);
            } else {
                pool_argmax.push(Vec::new());
            }
            outputs.push(out);
        }
        Ok(Forward { outputs, pool_argmax })
    }

    /// Gradient with respect to the input image, given gradients injected at the
    /// post-ReLU outputs of some stages (`injected[i]` for stage `i`).
    pub(crate) fn backward(&self, fwd: &Forward<T>, mut injected: Vec<Option<Tensor<T>>>) -> Tensor<T> {
        let deepest = fwd.outputs.len() - 1;
        injected.resize_with(deepest + 1, || None);
        let mut grad: Option<Tensor<T>> = None;
        for stage in (0..=deepest).rev() {
            let out = &fwd.outputs[stage];
            if let Some(inj) = injected[stage].take() {
                grad = Some(match grad {
                    None => inj,
                    Some(mut g) => {
                        for (a, b) in g.data_mut().iter_mut().zip(inj.data()) {
                            *a = *a + *b;
                        }
                        g
                    }
                });
            }
            let Some(mut g) = grad.take() else { continue };
            for (gv, &o) in g.data_mut().iter_mut().zip(out.data()) {
                if o <= T::zero() {
                    *gv = T::zero();
                }
            }
            let layer = &self.layers[stage];
            let (h, w) = (out.height(), out.width());
            let g_in = conv_backward_input(layer, &g, h, w);
            grad = Some(if stage > 0 && VGG19[stage - 1].pool_after {
                let prev = &fwd.outputs[stage - 1];
                max_pool_backward(&g_in, &fwd.pool_argmax[stage - 1], prev.height(), prev.width())
            } else {
                g_in
            });
        }
        grad.expect("at least one stage receives a gradient")
    }
}

pub(crate) fn resolve(name: &str) -> Result<usize> {
    stage_index(name).ok_or_else(|| {
        Error::arg(format!(
            "unknown layer {name:?}; valid layers are conv1_1 .. conv5_4 ({})",
            VGG19.iter().map(|s| s.name).collect::<Vec<_>>().join(", ")
        ))
    })
}

fn band_rows(k: usize, width: usize) -> usize {
    (COL_BUDGET / (k * width).max(1)).max(1)
}

/// Convolution + bias + ReLU.
pub(crate) fn conv_forward<T: Real>(layer: &ConvLayer<T>, x: &Tensor<T>) -> Tensor<T> {
    let mut y = conv_linear(layer, x);
    let plane = y.plane();
    for (c, chunk) in y.data_mut().chunks_exact_mut(plane).enumerate() {
        let b = layer.bias[c];
        for v in chunk {
            let z = *v + b;
            *v = if z > T::zero() { z } else { T::zero() };
        }
    }
    y
}

/// Convolution without bias or activation.
pub(crate) fn conv_linear<T: Real>(layer: &ConvLayer<T>, x: &Tensor<T>) -> Tensor<T> {
    let (c_in, h, w) = (x.channels(), x.height(), x.width());
    let c_out = layer.spec.out_channels;
    debug_assert_eq!(c_in, layer.spec.in_channels);
    let k = c_in * TAPS;
    let plane = h * w;
    let mut y = Tensor::zeros(c_out, h, w);
    let rows = band_rows(k, w);
    let mut col = vec![T::zero(); k * rows.min(h) * w];
    let mut r0 = 0;
    while r0 < h {
        let r1 = (r0 + rows).min(h);
        let band = (r1 - r0) * w;
        let col = &mut col[..k * band];
        im2col(x, r0, r1, col);
        gemm(
            T::one(),
            View::dense(&layer.weight, c_out, k),
            View::dense(col, k, band),
            T::zero(),
            &mut y.data_mut()[r0 * w..],
            plane,
        );
        r0 = r1;
    }
    y
}

/// Input gradient of [`conv_linear`] for an output gradient `g` of size `h x w`.
pub(crate) fn conv_backward_input<T: Real>(layer: &ConvLayer<T>, g: &Tensor<T>, h: usize, w: usize) -> Tensor<T> {
    let (c_in, c_out) = (layer.spec.in_channels, layer.spec.out_channels);
    let k = c_in * TAPS;
    let plane = h * w;
    let mut dx = Tensor::zeros(c_in, h, w);
    let rows = band_rows(k, w);
    let mut dcol = vec![T::zero(); k * rows.min(h) * w];
    let mut r0 = 0;
    while r0 < h {
        let r1 = (r0 + rows).min(h);
        let band = (r1 - r0) * w;
        let dcol = &mut dcol[..k * band];
        gemm(
            T::one(),
            View::dense(&layer.weight, c_out, k).t(),
            View::strided(&g.data()[r0 * w..], c_out, band, plane, 1),
            T::zero(),
            dcol,
            band,
        );
        col2im(dcol, r0, r1, &mut dx);
        r0 = r1;
    }
    dx
}

/// Unfolds rows `r0..r1` of `x` into `(c_in * 9) x ((r1 - r0) * w)` patches.
fn im2col<T: Real>(x: &Tensor<T>, r0: usize, r1: usize, col: &mut [T]) {
    let (h, w) = (x.height(), x.width());
    let band = (r1 - r0) * w;
    for c in 0..x.channels() {
        let src = x.channel(c);
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let dst = &mut col[(c * TAPS + ky * KERNEL + kx) * band..][..band];
                for r in r0..r1 {
                    let d = &mut dst[(r - r0) * w..(r - r0 + 1) * w];
                    let sr = r as isize + ky as isize - 1;
                    if sr < 0 || sr >= h as isize {
                        d.fill(T::zero());
                        continue;
                    }
                    let s = &src[sr as usize * w..(sr as usize + 1) * w];
                    match kx {
                        0 => {
                            d[0] = T::zero();
                            d[1..].copy_from_slice(&s[..w - 1]);
                        }
                        1 => d.copy_from_slice(s),
                        _ => {
                            d[..w - 1].copy_from_slice(&s[1..]);
                            d[w - 1] = T::zero();
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto `dx`.
fn col2im<T: Real>(dcol: &[T], r0: usize, r1: usize, dx: &mut Tensor<T>) {
    let (h, w) = (dx.height(), dx.width());
    let plane = h * w;
    let band = (r1 - r0) * w;
    let channels = dx.channels();
    let data = dx.data_mut();
    for c in 0..channels {
        let dst_plane = &mut data[c * plane..(c + 1) * plane];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let src = &dcol[(c * TAPS + ky * KERNEL + kx) * band..][..band];
                for r in r0..r1 {
                    let sr = r as isize + ky as isize - 1;
                    if sr < 0 || sr >= h as isize {
                        continue;
                    }
                    let s = &src[(r - r0) * w..(r - r0 + 1) * w];
                    let d = &mut dst_plane[sr as usize * w..(sr as usize + 1) * w];
                    let (d, s) = match kx {
                        0 => (&mut d[..w - 1], &s[1..]),
                        1 => (&mut d[..], s),
                        _ => (&mut d[1..], &s[..w - 1]),
                    };
                    for (a, &b) in d.iter_mut().zip(s) {
                        *a = *a + b;
                    }
                }
            }
        }
    }
}

/// 2x2 stride-2 max pooling (odd trailing rows/columns dropped). Ties go to the
/// first cell in row-major order.
pub(crate) fn max_pool<T: Real>(x: &Tensor<T>) -> (Tensor<T>, Vec<u8>) {
    let (h, w) = (x.height(), x.width());
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros(x.channels(), oh, ow);
    let mut arg = vec![0u8; x.channels() * oh * ow];
    let out_plane = oh * ow;
    for c in 0..x.channels() {
        let src = x.channel(c);
        let dst = &mut out.data_mut()[c * out_plane..(c + 1) * out_plane];
        let arg = &mut arg[c * out_plane..(c + 1) * out_plane];
        for i in 0..oh {
            for j in 0..ow {
                let base = 2 * i * w + 2 * j;
                let cells = [src[base], src[base + 1], src[base + w], src[base + w + 1]];
                let mut best = 0;
                for (k, &v) in cells.iter().enumerate().skip(1) {
                    if v > cells[best] {
                        best = k;
                    }
                }
                dst[i * ow + j] = cells[best];
                arg[i * ow + j] = best as u8;
            }
        }
    }
    (out, arg)
}

pub(crate) fn max_pool_backward<T: Real>(g: &Tensor<T>, arg: &[u8], h: usize, w: usize) -> Tensor<T> {
    let (oh, ow) = (g.height(), g.width());
    let mut dx = Tensor::zeros(g.channels(), h, w);
    let plane = h * w;
    for c in 0..g.channels() {
        let gc = g.channel(c);
        let dst = &mut dx.data_mut()[c * plane..(c + 1) * plane];
        for i in 0..oh {
            for j in 0..ow {
                let o = i * ow + j;
                let a = arg[c * oh * ow + o] as usize;
                dst[(2 * i + a / 2) * w + 2 * j + a % 2] = gc[o];
            }
        }
    }
    dx
}
