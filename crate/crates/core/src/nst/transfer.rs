//! The combined objective and the pixel-space gradient-descent loop.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::linalg::Real;
use super::loss::{content_loss, gram, style_grad, style_loss, tv_grad, tv_loss, FeatureActivations, GramMatrix};
use super::params::{InitMode, TransferParams, MIN_SIDE};
use super::tensor::Tensor;
use super::vgg::{resolve, FeatureExtractor};
use crate::error::{Error, Result};
use crate::heightfield::HeightMap;

/// Per-channel means subtracted from `[0, 255]` RGB input, in R, G, B order.
pub const IMAGENET_MEAN: [f64; 3] = [123.68, 116.779, 103.939];

/// Scales to `[0, 255]`, replicates into three channels and subtracts the channel means.
pub fn preprocess<T: Real>(map: &HeightMap) -> Tensor<T> {
    let mut data = Vec::with_capacity(3 * map.values().len());
    for mean in IMAGENET_MEAN {
        data.extend(map.values().iter().map(|&v| T::of(v * 255.0 - mean)));
    }
    Tensor::from_vec(3, map.height(), map.width(), data).expect("shape matches map")
}

/// Adds the means back, averages channels, clamps to `[0, 255]` and rescales to `[0, 1]`.
pub fn postprocess<T: Real>(img: &Tensor<T>) -> Result<HeightMap> {
    if img.channels() != 3 {
        return Err(Error::arg(format!("postprocess expects 3 channels, got {}", img.channels())));
    }
    let plane = img.plane();
    let values = (0..plane)
        .map(|k| {
            let sum: f64 = (0..3).map(|c| img.channel(c)[k].to_f64() + IMAGENET_MEAN[c]).sum();
            (sum / 3.0).clamp(0.0, 255.0) / 255.0
        })
        .collect();
    HeightMap::new(img.width(), img.height(), values)
}

/// Loss components at one iteration, unweighted, plus the weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub iteration: usize,
    pub content: f64,
    pub style: f64,
    pub tv: f64,
    pub total: f64,
}

impl LossBreakdown {
    fn is_finite(&self) -> bool {
        [self.content, self.style, self.tv, self.total].iter().all(|v| v.is_finite())
    }
}

/// `alpha * content(r, o) + beta * style(t, o) + gamma * tv(o)` with the targets
/// from `r` and `t` precomputed.
pub struct TransferObjective<'a, T: Real = f32> {
    extractor: &'a FeatureExtractor<T>,
    params: TransferParams,
    content_stage: usize,
    content_target: FeatureActivations<T>,
    style_stages: Vec<usize>,
    style_targets: Vec<GramMatrix<T>>,
    deepest: usize,
    width: usize,
    height: usize,
}

impl<'a, T: Real> TransferObjective<'a, T> {
    /// `content` and `style` are preprocessed images of the same spatial size.
    pub fn new(
        extractor: &'a FeatureExtractor<T>,
        content: &Tensor<T>,
        style: &Tensor<T>,
        params: &TransferParams,
    ) -> Result<Self> {
        params.validate()?;
        if !content.same_shape(style) {
            return Err(Error::arg(format!(
                "content {}x{} and style {}x{} differ in size",
                content.width(),
                content.height(),
                style.width(),
                style.height()
            )));
        }
        let content_stage = resolve(&params.content_layer)?;
        let style_stages = params
            .style_layers
            .iter()
            .map(|n| resolve(n))
            .collect::<Result<Vec<_>>>()?;
        let deepest = style_stages.iter().copied().chain([content_stage]).max().unwrap_or(0);

        let fwd = extractor.forward(content, deepest)?;
        let content_target = FeatureActivations::from_tensor(&params.content_layer, &fwd.outputs[content_stage]);
        let fwd = extractor.forward(style, deepest)?;
        let style_targets = style_stages
            .iter()
            .zip(&params.style_layers)
            .map(|(&s, name)| gram(&FeatureActivations::from_tensor(name, &fwd.outputs[s])))
            .collect();
        Ok(Self {
            extractor,
            params: params.clone(),
            content_stage,
            content_target,
            style_stages,
            style_targets,
            deepest,
            width: content.width(),
            height: content.height(),
        })
    }

    pub fn params(&self) -> &TransferParams {
        &self.params
    }

    /// Loss components of `o` without the gradient.
    pub fn loss(&self, o: &Tensor<T>) -> Result<LossBreakdown> {
        self.run(o, false).map(|(l, _)| l)
    }

    /// Loss components of `o` and the gradient of the total with respect to `o`.
    pub fn evaluate(&self, o: &Tensor<T>) -> Result<(LossBreakdown, Tensor<T>)> {
        self.run(o, true).map(|(l, g)| (l, g.expect("gradient requested")))
    }

    fn run(&self, o: &Tensor<T>, want_grad: bool) -> Result<(LossBreakdown, Option<Tensor<T>>)> {
        let p = &self.params;
        if (o.channels(), o.height(), o.width()) != (3, self.height(), self.width()) {
            return Err(Error::arg("image does not match the objective's working size"));
        }
        let fwd = self.extractor.forward(o, self.deepest)?;
        let mut injected: Vec<Option<Tensor<T>>> = vec![None; self.deepest + 1];

        let out = &fwd.outputs[self.content_stage];
        let f = FeatureActivations::from_tensor(&p.content_layer, out);
        let content = content_loss(&f, &self.content_target)?;
        if want_grad && p.alpha != 0.0 {
            let scale = T::of(2.0 * p.alpha);
            let g: Vec<T> = f
                .matrix()
                .iter()
                .zip(self.content_target.matrix())
                .map(|(&a, &b)| scale * (a - b))
                .collect();
            add_injection(&mut injected, self.content_stage, out, g);
        }

        let mut style = 0.0;
        for (k, (&stage, target)) in self.style_stages.iter().zip(&self.style_targets).enumerate() {
            let out = &fwd.outputs[stage];
            let f = FeatureActivations::from_tensor(&p.style_layers[k], out);
            let g = gram(&f);
            let w = p.style_weights[k];
            style += w * style_loss(&g, target)?;
            if want_grad && p.beta != 0.0 && w != 0.0 {
                add_injection(&mut injected, stage, out, style_grad(&f, &g, target, p.beta * w));
            }
        }

        let tv = tv_loss(o);
        let total = p.alpha * content + p.beta * style + p.gamma * tv;
        let loss = LossBreakdown {
            iteration: 0,
            content,
            style,
            tv,
            total,
        };
        if !want_grad {
            return Ok((loss, None));
        }
        let mut grad = if injected.iter().any(Option::is_some) {
            self.extractor.backward(&fwd, injected)
        } else {
            Tensor::zeros(3, o.height(), o.width())
        };
        if p.gamma != 0.0 {
            for (a, b) in grad.data_mut().iter_mut().zip(tv_grad(o, p.gamma)) {
                *a = *a + b;
            }
        }
        Ok((loss, Some(grad)))
    }

    fn height(&self) -> usize {
        self.height
    }

    fn width(&self) -> usize {
        self.width
    }
}

fn add_injection<T: Real>(injected: &mut [Option<Tensor<T>>], stage: usize, like: &Tensor<T>, g: Vec<T>) {
    let t = Tensor::from_vec(like.channels(), like.height(), like.width(), g).expect("gradient shape");
    injected[stage] = Some(match injected[stage].take() {
        None => t,
        Some(mut acc) => {
            for (a, b) in acc.data_mut().iter_mut().zip(t.data()) {
                *a = *a + *b;
            }
            acc
        }
    });
}

/// Receives progress from [`run_transfer`]. Calls arrive sequentially on the
/// optimizing thread.
pub trait TransferObserver {
    /// Called at iteration 0, every `progress_every` iterations, and after the last step.
    fn on_progress(&mut self, loss: &LossBreakdown, preview: Option<&HeightMap>);

    /// Attach a preview of the current output to reports at multiples of this stride.
    fn preview_every(&self) -> Option<usize> {
        None
    }

    /// Polled before every iteration.
    fn is_cancelled(&self) -> bool {
        false
    }
}

impl<F: FnMut(&LossBreakdown, Option<&HeightMap>)> TransferObserver for F {
    fn on_progress(&mut self, loss: &LossBreakdown, preview: Option<&HeightMap>) {
        self(loss, preview)
    }
}

/// Observer that ignores everything.
pub struct Silent;

impl TransferObserver for Silent {
    fn on_progress(&mut self, _: &LossBreakdown, _: Option<&HeightMap>) {}
}

#[derive(Debug, Clone)]
pub struct TransferResult {
    pub map: HeightMap,
    /// Every reported breakdown, in iteration order.
    pub history: Vec<LossBreakdown>,
    /// Initial step size actually used (differs from `params.lr0` with `first_step_rms`).
    pub lr0: f64,
}

/// Working resolution: the content aspect ratio with the long side limited to the
/// shorter of the two inputs' long sides and `max_side`.
pub fn working_dims(content: &HeightMap, style: &HeightMap, max_side: usize) -> Result<(usize, usize)> {
    let (cw, ch) = content.dims();
    let long = cw.max(ch).min(style.width().max(style.height())).min(max_side);
    let scale = long as f64 / cw.max(ch) as f64;
    let w = ((cw as f64 * scale).round() as usize).max(1);
    let h = ((ch as f64 * scale).round() as usize).max(1);
    if w.min(h) < MIN_SIDE {
        return Err(Error::arg(format!(
            "working resolution {w}x{h} is below the {MIN_SIDE}-pixel minimum side"
        )));
    }
    Ok((w, h))
}

/// Optimizes the pixels of `o` so its deep features follow `content` and its Gram
/// statistics follow `style`. Both maps are resampled to [`working_dims`].
pub fn run_transfer(
    extractor: &FeatureExtractor,
    content: &HeightMap,
    style: &HeightMap,
    params: &TransferParams,
    observer: &mut dyn TransferObserver,
) -> Result<TransferResult> {
    params.validate()?;
    let (w, h) = working_dims(content, style, params.max_side)?;
    let content = content.resample(w, h);
    let style = style.resample(w, h);
    let objective = TransferObjective::new(extractor, &preprocess(&content), &preprocess(&style), params)?;

    let mut o: Tensor<f32> = match params.init_mode {
        InitMode::Content => preprocess(&content),
        InitMode::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            let noise = HeightMap::from_fn(w, h, |_, _| rng.random::<f64>());
            preprocess(&noise)
        }
    };

    let mut history = Vec::new();
    let mut lr0 = params.lr0;
    let last = params.iterations;
    let preview_every = observer.preview_every();
    for iter in 0..=last {
        if observer.is_cancelled() {
            return Err(Error::Cancelled);
        }
        let (mut loss, grad) = if iter < last {
            let (l, g) = objective.evaluate(&o)?;
            (l, Some(g))
        } else {
            (objective.loss(&o)?, None)
        };
        loss.iteration = iter;
        if !loss.is_finite() || grad.as_ref().is_some_and(|g| g.data().iter().any(|v| !v.is_finite())) {
            return Err(Error::Divergence {
                iteration: iter,
                content: loss.content,
                style: loss.style,
                tv: loss.tv,
                total: loss.total,
            });
        }
        if iter == 0 || iter == last || iter % params.progress_every == 0 {
            let preview = match preview_every {
                Some(k) if k > 0 && iter > 0 && (iter % k == 0 || iter == last) => Some(postprocess(&o)?),
                _ => None,
            };
            observer.on_progress(&loss, preview.as_ref());
            history.push(loss);
        }
        if let Some(g) = grad {
            if let (0, Some(target)) = (iter, params.first_step_rms) {
                let rms = rms(g.data());
                if rms > 0.0 {
                    lr0 = target / rms;
                }
            }
            let lr = params.learning_rate_from(lr0, iter) as f32;
            for (x, &d) in o.data_mut().iter_mut().zip(g.data()) {
                *x -= lr * d;
            }
        }
    }
    Ok(TransferResult {
        map: postprocess(&o)?,
        history,
        lr0,
    })
}

fn rms<T: Real>(v: &[T]) -> f64 {
    (v.iter().map(|x| Real::to_f64(*x).powi(2)).sum::<f64>() / v.len().max(1) as f64).sqrt()
}
