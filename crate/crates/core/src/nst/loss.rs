//! Content, style and total-variation losses with their gradients.

use std::cmp::Ordering;

use super::linalg::{gemm, Real, View};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Responses of one layer as an `N x M` matrix: `N` filters by `M` spatial positions.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureActivations<T> {
    pub layer: String,
    pub height: usize,
    pub width: usize,
    n: usize,
    data: Vec<T>,
}

impl<T: Real> FeatureActivations<T> {
    pub fn new(layer: impl Into<String>, n: usize, height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != n * height * width {
            return Err(Error::arg(format!(
                "{} activations for {n} filters over {height}x{width} positions",
                data.len()
            )));
        }
        Ok(Self {
            layer: layer.into(),
            height,
            width,
            n,
            data,
        })
    }

    pub(crate) fn from_tensor(layer: &str, t: &Tensor<T>) -> Self {
        Self {
            layer: layer.to_string(),
            height: t.height(),
            width: t.width(),
            n: t.channels(),
            data: t.data().to_vec(),
        }
    }

    /// Filter count `N_l`.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Spatial positions `M_l`.
    pub fn m(&self) -> usize {
        self.height * self.width
    }

    /// Row-major `N x M` matrix; entry `(i, j)` is filter `i` at position `j`.
    pub fn matrix(&self) -> &[T] {
        &self.data
    }

    pub fn filter(&self, i: usize) -> &[T] {
        &self.data[i * self.m()..(i + 1) * self.m()]
    }

    /// Reorders spatial positions: column `j` of the result is column `perm[j]` here.
    pub fn permute_positions(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.m());
        let mut data = Vec::with_capacity(self.data.len());
        for i in 0..self.n {
            let row = self.filter(i);
            data.extend(perm.iter().map(|&j| row[j]));
        }
        Self { data, ..self.clone() }
    }
}

/// Filter correlations `G = F F^T` of one layer, with the layer's `N` and `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix<T> {
    n: usize,
    m: usize,
    data: Vec<T>,
}

impl<T: Real> GramMatrix<T> {
    pub fn new(n: usize, m: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::arg(format!("{} entries for a {n}x{n} Gram matrix", data.len())));
        }
        Ok(Self { n, m, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }
}

/// `G_ij = sum_k F_ik F_jk`, unnormalized.
///
/// Positions are accumulated in a canonical order (columns sorted
/// lexicographically by content), so any permutation of positions yields a
/// bit-identical result.
pub fn gram<T: Real>(f: &FeatureActivations<T>) -> GramMatrix<T> {
    let (n, m) = (f.n(), f.m());
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_unstable_by(|&a, &b| {
        for i in 0..n {
            let row = f.filter(i);
            match row[a].to_f64().total_cmp(&row[b].to_f64()) {
                Ordering::Equal => continue,
                other => return other,
            }
        }
        Ordering::Equal
    });
    let canonical = f.permute_positions(&order);
    let mut data = vec![T::zero(); n * n];
    let view = View::dense(canonical.matrix(), n, m);
    gemm(T::one(), view, view.t(), T::zero(), &mut data, n);
    GramMatrix { n, m, data }
}

/// Sum of squared differences between two same-shaped activations.
pub fn content_loss<T: Real>(f1: &FeatureActivations<T>, f2: &FeatureActivations<T>) -> Result<f64> {
    if (f1.n(), f1.height, f1.width) != (f2.n(), f2.height, f2.width) {
        return Err(Error::arg(format!(
            "content features differ in shape: {}x{}x{} vs {}x{}x{}",
            f1.n(),
            f1.height,
            f1.width,
            f2.n(),
            f2.height,
            f2.width
        )));
    }
    Ok(f1
        .matrix()
        .iter()
        .zip(f2.matrix())
        .map(|(&a, &b)| {
            let d = a.to_f64() - b.to_f64();
            d * d
        })
        .sum())
}

/// `(1 / (4 N^2 M^2)) * sum_ij (G1_ij - G2_ij)^2` for one layer.
pub fn style_loss<T: Real>(g1: &GramMatrix<T>, g2: &GramMatrix<T>) -> Result<f64> {
    if (g1.n, g1.m) != (g2.n, g2.m) {
        return Err(Error::arg(format!(
            "Gram matrices differ: N={} M={} vs N={} M={}",
            g1.n, g1.m, g2.n, g2.m
        )));
    }
    let sq: f64 = g1
        .data
        .iter()
        .zip(&g2.data)
        .map(|(&a, &b)| {
            let d = a.to_f64() - b.to_f64();
            d * d
        })
        .sum();
    Ok(sq / style_norm(g1.n, g1.m))
}

fn style_norm(n: usize, m: usize) -> f64 {
    let (n, m) = (n as f64, m as f64);
    4.0 * n * n * m * m
}

/// Gradient of `style_loss(gram(f), target)` with respect to `f`:
/// `(G - A) F / (N^2 M^2)`, scaled by `scale`.
pub(crate) fn style_grad<T: Real>(
    f: &FeatureActivations<T>,
    g: &GramMatrix<T>,
    target: &GramMatrix<T>,
    scale: f64,
) -> Vec<T> {
    let (n, m) = (f.n(), f.m());
    let diff: Vec<T> = g.data.iter().zip(&target.data).map(|(&a, &b)| a - b).collect();
    let coeff = T::of(scale * 4.0 / style_norm(n, m));
    let mut out = vec![T::zero(); n * m];
    gemm(coeff, View::dense(&diff, n, n), View::dense(f.matrix(), n, m), T::zero(), &mut out, m);
    out
}

/// Anisotropic total variation: absolute differences between vertical and
/// horizontal neighbours, summed over channels.
pub fn tv_loss<T: Real>(img: &Tensor<T>) -> f64 {
    let (h, w) = (img.height(), img.width());
    let mut total = 0.0;
    for c in 0..img.channels() {
        let x = img.channel(c);
        for i in 0..h {
            for j in 0..w {
                let v = x[i * w + j].to_f64();
                if i + 1 < h {
                    total += (v - x[(i + 1) * w + j].to_f64()).abs();
                }
                if j + 1 < w {
                    total += (v - x[i * w + j + 1].to_f64()).abs();
                }
            }
        }
    }
    total
}

/// Subgradient of [`tv_loss`] (sign of each difference, zero on ties) times `scale`.
pub(crate) fn tv_grad<T: Real>(img: &Tensor<T>, scale: f64) -> Vec<T> {
    let (h, w) = (img.height(), img.width());
    let plane = h * w;
    let mut out = vec![T::zero(); img.data().len()];
    let s = T::of(scale);
    let sign = |d: T| {
        if d > T::zero() {
            s
        } else if d < T::zero() {
            -s
        } else {
            T::zero()
        }
    };
    for c in 0..img.channels() {
        let x = img.channel(c);
        let g = &mut out[c * plane..(c + 1) * plane];
        for i in 0..h {
            for j in 0..w {
                let a = i * w + j;
                for b in [(i + 1 < h).then(|| a + w), (j + 1 < w).then(|| a + 1)].into_iter().flatten() {
                    let d = sign(x[a] - x[b]);
                    g[a] = g[a] + d;
                    g[b] = g[b] - d;
                }
            }
        }
    }
    out
}
