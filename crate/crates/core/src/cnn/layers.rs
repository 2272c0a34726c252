//! Layers with explicit backward passes. Batched activations are row-major
//! `B x C x H x W` (or `B x F` for dense layers).

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::tensor::{Param, Tensor};
use crate::rng::Rng;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Padding {
    Valid,
    /// Output keeps the input size; an even kernel puts the extra padding
    /// row/column after the input.
    Same,
}

#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub padding: Padding,
    /// `out x in x k x k`.
    pub weight: Param<T>,
    pub bias: Param<T>,
}

struct Geometry {
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    pad_top: usize,
    pad_left: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn col_rows(&self) -> usize {
        self.c * self.k * self.k
    }

    fn col_cols(&self) -> usize {
        self.oh * self.ow
    }
}

fn im2col<T: Scalar>(x: &[T], g: &Geometry, cols: &mut [T]) {
    let n = g.col_cols();
    for ci in 0..g.c {
        let plane = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (ci * g.k + ky) * g.k + kx;
                let dst = &mut cols[row * n..(row + 1) * n];
                for oy in 0..g.oh {
                    let out_row = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    let iy = oy + ky;
                    if iy < g.pad_top || iy - g.pad_top >= g.h {
                        out_row.fill(T::zero());
                        continue;
                    }
                    let src = &plane[(iy - g.pad_top) * g.w..(iy - g.pad_top + 1) * g.w];
                    for (ox, o) in out_row.iter_mut().enumerate() {
                        let ix = ox + kx;
                        *o = if ix < g.pad_left || ix - g.pad_left >= g.w { T::zero() } else { src[ix - g.pad_left] };
                    }
                }
            }
        }
    }
}

fn col2im<T: Scalar>(cols: &[T], g: &Geometry, dx: &mut [T]) {
    let n = g.col_cols();
    for ci in 0..g.c {
        let plane = &mut dx[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (ci * g.k + ky) * g.k + kx;
                let src = &cols[row * n..(row + 1) * n];
                for oy in 0..g.oh {
                    let iy = oy + ky;
                    if iy < g.pad_top || iy - g.pad_top >= g.h {
                        continue;
                    }
                    let dst = &mut plane[(iy - g.pad_top) * g.w..(iy - g.pad_top + 1) * g.w];
                    for ox in 0..g.ow {
                        let ix = ox + kx;
                        if ix >= g.pad_left && ix - g.pad_left < g.w {
                            dst[ix - g.pad_left] += src[oy * g.ow + ox];
                        }
                    }
                }
            }
        }
    }
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(name: &str, in_channels: usize, out_channels: usize, kernel: usize, padding: Padding) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            padding,
            weight: Param::zeros(format!("{name}/weight"), vec![out_channels, in_channels, kernel, kernel]),
            bias: Param::zeros(format!("{name}/bias"), vec![out_channels]),
        }
    }

    pub fn output_hw(&self, h: usize, w: usize) -> (usize, usize) {
        match self.padding {
            Padding::Same => (h, w),
            Padding::Valid => ((h + 1).saturating_sub(self.kernel), (w + 1).saturating_sub(self.kernel)),
        }
    }

    fn geometry(&self, h: usize, w: usize) -> Geometry {
        let (oh, ow) = self.output_hw(h, w);
        let pad = match self.padding {
            Padding::Same => (self.kernel - 1) / 2,
            Padding::Valid => 0,
        };
        Geometry { c: self.in_channels, h, w, k: self.kernel, pad_top: pad, pad_left: pad, oh, ow }
    }

    fn check_input(&self, x: &Tensor<T>) -> (usize, usize, usize) {
        let [b, c, h, w] = x.dims4();
        assert_eq!(c, self.in_channels, "conv input channels");
        let (oh, ow) = self.output_hw(h, w);
        assert!(oh > 0 && ow > 0, "conv kernel larger than input");
        (b, h, w)
    }

    /// Cross-correlation plus bias.
    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        let (b, h, w) = self.check_input(x);
        let g = self.geometry(h, w);
        let (kk, n, f) = (g.col_rows(), g.col_cols(), self.out_channels);
        let mut out = Tensor::zeros(vec![b, f, g.oh, g.ow]);
        let mut cols = vec![T::zero(); kk * n];
        let in_size = self.in_channels * h * w;
        for s in 0..b {
            im2col(&x.data[s * in_size..(s + 1) * in_size], &g, &mut cols);
            let y = &mut out.data[s * f * n..(s + 1) * f * n];
            for (fi, row) in y.chunks_exact_mut(n).enumerate() {
                row.fill(self.bias.value[fi]);
            }
            T::gemm(f, kk, n, T::one(), &self.weight.value, kk, 1, &cols, n, 1, T::one(), y, n, 1);
        }
        out
    }

    /// Accumulates parameter gradients; returns the input gradient when asked.
    pub fn backward(&mut self, x: &Tensor<T>, grad_out: &Tensor<T>, input_grad: bool) -> Option<Tensor<T>> {
        let (b, h, w) = self.check_input(x);
        let g = self.geometry(h, w);
        let (kk, n, f) = (g.col_rows(), g.col_cols(), self.out_channels);
        assert_eq!(grad_out.shape, vec![b, f, g.oh, g.ow], "conv grad_out shape");
        let mut cols = vec![T::zero(); kk * n];
        let mut dcols = vec![T::zero(); if input_grad { kk * n } else { 0 }];
        let mut dx = input_grad.then(|| Tensor::zeros(x.shape.clone()));
        let in_size = self.in_channels * h * w;
        for s in 0..b {
            let dy = &grad_out.data[s * f * n..(s + 1) * f * n];
            for (fi, row) in dy.chunks_exact(n).enumerate() {
                self.bias.grad[fi] += row.iter().copied().sum::<T>();
            }
            im2col(&x.data[s * in_size..(s + 1) * in_size], &g, &mut cols);
            // dW (f x kk) += dY (f x n) * cols^T (n x kk)
            T::gemm(f, n, kk, T::one(), dy, n, 1, &cols, 1, n, T::one(), &mut self.weight.grad, kk, 1);
            if let Some(dx) = dx.as_mut() {
                // dcols (kk x n) = W^T (kk x f) * dY (f x n)
                T::gemm(kk, f, n, T::one(), &self.weight.value, 1, kk, dy, n, 1, T::zero(), &mut dcols, n, 1);
                col2im(&dcols, &g, &mut dx.data[s * in_size..(s + 1) * in_size]);
            }
        }
        dx
    }
}

/// 2x2 max pooling with stride 2; a trailing odd row/column is dropped.
#[derive(Debug, Clone, Default)]
pub struct MaxPool2 {
    /// Flat input index of each output's winner.
    argmax: Vec<usize>,
    input_shape: Vec<usize>,
}

impl MaxPool2 {
    pub fn forward<T: Scalar>(&mut self, x: &Tensor<T>) -> Tensor<T> {
        let [b, c, h, w] = x.dims4();
        assert!(h >= 2 && w >= 2, "max pooling needs at least 2x2 input");
        let (oh, ow) = (h / 2, w / 2);
        let mut out = Tensor::zeros(vec![b, c, oh, ow]);
        self.argmax.clear();
        self.argmax.reserve(out.data.len());
        self.input_shape = x.shape.clone();
        let mut o = 0;
        for plane in 0..b * c {
            let base = plane * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = base + 2 * oy * w + 2 * ox;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                        // strict comparison keeps the first maximum on ties
                        if x.data[idx] > x.data[best] {
                            best = idx;
                        }
                    }
                    out.data[o] = x.data[best];
                    self.argmax.push(best);
                    o += 1;
                }
            }
        }
        out
    }

    /// Routes each output gradient to its winning input.
    pub fn backward<T: Scalar>(&self, grad_out: &Tensor<T>) -> Tensor<T> {
        assert_eq!(grad_out.data.len(), self.argmax.len(), "pool grad_out shape");
        let mut dx = Tensor::zeros(self.input_shape.clone());
        for (&idx, &g) in self.argmax.iter().zip(&grad_out.data) {
            dx.data[idx] += g;
        }
        dx
    }
}

#[derive(Debug, Clone)]
pub struct Dense<T> {
    pub inputs: usize,
    pub outputs: usize,
    /// `outputs x inputs`.
    pub weight: Param<T>,
    pub bias: Param<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn new(name: &str, inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weight: Param::zeros(format!("{name}/weight"), vec![outputs, inputs]),
            bias: Param::zeros(format!("{name}/bias"), vec![outputs]),
        }
    }

    /// `x` is `B x inputs` (any trailing shape flattening to `inputs`).
    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        let b = x.shape[0];
        assert_eq!(x.data.len(), b * self.inputs, "dense input width");
        let mut y = Tensor::zeros(vec![b, self.outputs]);
        for row in y.data.chunks_exact_mut(self.outputs) {
            row.copy_from_slice(&self.bias.value);
        }
        T::gemm(
            b,
            self.inputs,
            self.outputs,
            T::one(),
            &x.data,
            self.inputs,
            1,
            &self.weight.value,
            1,
            self.inputs,
            T::one(),
            &mut y.data,
            self.outputs,
            1,
        );
        y
    }

    pub fn backward(&mut self, x: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
        let b = x.shape[0];
        assert_eq!(grad_out.shape, vec![b, self.outputs], "dense grad_out shape");
        for row in grad_out.data.chunks_exact(self.outputs) {
            for (g, &d) in self.bias.grad.iter_mut().zip(row) {
                *g += d;
            }
        }
        // dW (out x in) += dY^T (out x b) * X (b x in)
        T::gemm(
            self.outputs,
            b,
            self.inputs,
            T::one(),
            &grad_out.data,
            1,
            self.outputs,
            &x.data,
            self.inputs,
            1,
            T::one(),
            &mut self.weight.grad,
            self.inputs,
            1,
        );
        let mut dx = Tensor::zeros(x.shape.clone());
        // dX (b x in) = dY (b x out) * W (out x in)
        T::gemm(
            b,
            self.outputs,
            self.inputs,
            T::one(),
            &grad_out.data,
            self.outputs,
            1,
            &self.weight.value,
            self.inputs,
            1,
            T::zero(),
            &mut dx.data,
            self.inputs,
            1,
        );
        dx
    }
}

pub fn relu_inplace<T: Scalar>(x: &mut Tensor<T>) {
    x.data.iter_mut().for_each(|v| *v = v.max(T::zero()));
}

/// Gradient through ReLU given the ReLU *output*.
pub fn relu_backward<T: Scalar>(output: &Tensor<T>, grad: &mut Tensor<T>) {
    for (g, &y) in grad.data.iter_mut().zip(&output.data) {
        if y <= T::zero() {
            *g = T::zero();
        }
    }
}

/// Inverted dropout: kept units are scaled by `1 / (1 - rate)` at training
/// time so inference needs no mask.
#[derive(Debug, Clone)]
pub struct Dropout<T> {
    pub rate: f64,
    mask: Option<Vec<T>>,
}

impl<T: Scalar> Dropout<T> {
    pub fn new(rate: f64) -> Self {
        assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0, 1)");
        Self { rate, mask: None }
    }

    pub fn forward(&mut self, x: &mut Tensor<T>, train: bool, rng: &mut Rng) {
        if !train || self.rate == 0.0 {
            self.mask = None;
            return;
        }
        let keep = T::of(1.0 / (1.0 - self.rate));
        let mask: Vec<T> =
            (0..x.data.len()).map(|_| if rng.random::<f64>() < self.rate { T::zero() } else { keep }).collect();
        for (v, &m) in x.data.iter_mut().zip(&mask) {
            *v *= m;
        }
        self.mask = Some(mask);
    }

    pub fn backward(&self, grad: &mut Tensor<T>) {
        if let Some(mask) = &self.mask {
            for (g, &m) in grad.data.iter_mut().zip(mask) {
                *g *= m;
            }
        }
    }
}

/// Row-wise softmax of `B x K` logits.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Tensor<T> {
    let k = logits.shape[1];
    let mut out = logits.clone();
    for row in out.data.chunks_exact_mut(k) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    out
}

/// Mean categorical cross-entropy of softmax(logits), the probabilities,
/// and the gradient with respect to the logits.
pub fn softmax_cross_entropy<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> (f64, Tensor<T>, Tensor<T>) {
    let (b, k) = (logits.shape[0], logits.shape[1]);
    assert_eq!(labels.len(), b, "one label per row");
    let probs = softmax(logits);
    let mut grad = probs.clone();
    let mut loss = 0.0;
    let inv_b = T::of(1.0 / b as f64);
    for (i, &y) in labels.iter().enumerate() {
        assert!(y < k, "label {y} out of range for {k} classes");
        let row = &mut grad.data[i * k..(i + 1) * k];
        // log-sum-exp form stays finite when a probability underflows
        let lrow = &logits.data[i * k..(i + 1) * k];
        let max = lrow.iter().copied().fold(T::neg_infinity(), T::max).as_f64();
        let lse = max + lrow.iter().map(|v| (v.as_f64() - max).exp()).sum::<f64>().ln();
        loss += lse - lrow[y].as_f64();
        row[y] -= T::one();
        row.iter_mut().for_each(|v| *v *= inv_b);
    }
    (loss / b as f64, probs, grad)
}
