//! Layer kernels with explicit forward caches and backward maps.

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};

use super::tensor::{dot, gemm, Scalar, Tensor};
use crate::error::{Error, Result};

fn he_normal<T: Scalar>(shape: &[usize], fan_in: usize, rng: &mut dyn RngCore) -> Tensor<T> {
    let std = (2.0 / fan_in as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("finite std");
    let data = (0..shape.iter().product::<usize>()).map(|_| T::of(normal.sample(rng))).collect();
    Tensor::from_vec(shape, data).expect("shape matches")
}

fn image_dims<T: Scalar>(x: &Tensor<T>, what: &str) -> Result<(usize, usize, usize, usize)> {
    match *x.shape() {
        [n, c, h, w] => Ok((n, c, h, w)),
        _ => Err(Error::Shape(format!("{what} expects [N, C, H, W], got {:?}", x.shape()))),
    }
}

/// 2D cross-correlation with square kernels and symmetric zero padding.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    /// `[out_channels, in_channels * kernel * kernel]`
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut dyn RngCore,
    ) -> Self {
        let fan_in = in_channels * kernel * kernel;
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            weight: he_normal(&[out_channels, fan_in], fan_in, rng),
            bias: Tensor::zeros(&[out_channels]),
        }
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let (hp, wp) = (h + 2 * self.padding, w + 2 * self.padding);
        if hp < self.kernel || wp < self.kernel {
            return Err(Error::Shape(format!(
                "{h}x{w} input too small for {k}x{k} kernel",
                k = self.kernel
            )));
        }
        Ok(((hp - self.kernel) / self.stride + 1, (wp - self.kernel) / self.stride + 1))
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    /// Output columns `[lo, hi)` whose tap `kj` lands inside a row of width `w`.
    fn valid_cols(&self, kj: usize, w: usize, wo: usize) -> (usize, usize) {
        let (s, p) = (self.stride, self.padding);
        let lo = if p > kj { (p - kj).div_ceil(s) } else { 0 };
        let hi = if w + p > kj { ((w - 1 + p - kj) / s + 1).min(wo) } else { 0 };
        (lo.min(hi), hi)
    }

    fn im2col(&self, x: &[T], h: usize, w: usize, ho: usize, wo: usize, cols: &mut [T]) {
        let (k, s, p) = (self.kernel, self.stride, self.padding);
        let hw = ho * wo;
        for c in 0..self.in_channels {
            let plane = &x[c * h * w..(c + 1) * h * w];
            for ki in 0..k {
                for kj in 0..k {
                    let (lo, hi) = self.valid_cols(kj, w, wo);
                    let row = &mut cols[((c * k + ki) * k + kj) * hw..][..hw];
                    for oy in 0..ho {
                        let dst = &mut row[oy * wo..(oy + 1) * wo];
                        let iy = (oy * s + ki) as isize - p as isize;
                        if iy < 0 || iy >= h as isize || lo == hi {
                            dst.fill(T::zero());
                            continue;
                        }
                        let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                        dst[..lo].fill(T::zero());
                        dst[hi..].fill(T::zero());
                        let first = lo * s + kj - p;
                        if s == 1 {
                            dst[lo..hi].copy_from_slice(&src[first..first + hi - lo]);
                        } else {
                            for (j, d) in dst[lo..hi].iter_mut().enumerate() {
                                *d = src[first + j * s];
                            }
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, cols: &[T], h: usize, w: usize, ho: usize, wo: usize, dx: &mut [T]) {
        let (k, s, p) = (self.kernel, self.stride, self.padding);
        let hw = ho * wo;
        for c in 0..self.in_channels {
            let plane = &mut dx[c * h * w..(c + 1) * h * w];
            for ki in 0..k {
                for kj in 0..k {
                    let (lo, hi) = self.valid_cols(kj, w, wo);
                    if lo == hi {
                        continue;
                    }
                    let row = &cols[((c * k + ki) * k + kj) * hw..][..hw];
                    for oy in 0..ho {
                        let iy = (oy * s + ki) as isize - p as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                        let first = lo * s + kj - p;
                        for (j, &g) in row[oy * wo + lo..oy * wo + hi].iter().enumerate() {
                            dst[first + j * s] += g;
                        }
                    }
                }
            }
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (n, c, h, w) = image_dims(x, "conv")?;
        if c != self.in_channels {
            return Err(Error::Shape(format!(
                "conv expects {} channels, got {c}",
                self.in_channels
            )));
        }
        let (ho, wo) = self.output_hw(h, w)?;
        let (pl, hw, f) = (self.patch_len(), ho * wo, self.out_channels);
        let mut out = Tensor::zeros(&[n, f, ho, wo]);
        let mut cols = vec![T::zero(); pl * hw];
        for s in 0..n {
            self.im2col(&x.data()[s * c * h * w..(s + 1) * c * h * w], h, w, ho, wo, &mut cols);
            let y = &mut out.data_mut()[s * f * hw..(s + 1) * f * hw];
            for (chan, b) in y.chunks_exact_mut(hw).zip(self.bias.data()) {
                chan.fill(*b);
            }
            gemm(false, false, f, hw, pl, self.weight.data(), &cols, T::one(), y);
        }
        Ok(out)
    }

    /// Columns are rebuilt from the cached input one sample at a time, which
    /// keeps the working set small instead of storing them for the whole batch.
    pub fn backward(
        &self,
        input: &Tensor<T>,
        grad_out: &Tensor<T>,
        grads: &mut [Tensor<T>],
        need_input: bool,
    ) -> Option<Tensor<T>> {
        let in_shape = input.shape();
        let (n, c, h, w) = (in_shape[0], in_shape[1], in_shape[2], in_shape[3]);
        let (ho, wo) = (grad_out.shape()[2], grad_out.shape()[3]);
        let (pl, hw, f) = (self.patch_len(), ho * wo, self.out_channels);
        let (gw, gb) = grads.split_at_mut(1);
        let mut dx = need_input.then(|| Tensor::zeros(in_shape));
        let mut col = vec![T::zero(); pl * hw];
        let mut dcols = vec![T::zero(); if need_input { pl * hw } else { 0 }];
        for s in 0..n {
            let dy = &grad_out.data()[s * f * hw..(s + 1) * f * hw];
            self.im2col(&input.data()[s * c * h * w..(s + 1) * c * h * w], h, w, ho, wo, &mut col);
            if hw >= 256 {
                // Long, skinny reduction: direct dot products beat the blocked gemm here.
                for (gw_row, dy_row) in gw[0].data_mut().chunks_exact_mut(pl).zip(dy.chunks_exact(hw)) {
                    for (g, col_row) in gw_row.iter_mut().zip(col.chunks_exact(hw)) {
                        *g += dot(dy_row, col_row);
                    }
                }
            } else {
                gemm(false, true, f, pl, hw, dy, &col, T::one(), gw[0].data_mut());
            }
            for (b, chan) in gb[0].data_mut().iter_mut().zip(dy.chunks_exact(hw)) {
                *b += chan.iter().fold(T::zero(), |a, &v| a + v);
            }
            if let Some(dx) = dx.as_mut() {
                gemm(true, false, pl, hw, f, self.weight.data(), dy, T::zero(), &mut dcols);
                let dst = &mut dx.data_mut()[s * c * h * w..(s + 1) * c * h * w];
                self.col2im(&dcols, h, w, ho, wo, dst);
            }
        }
        dx
    }
}

/// Non-overlapping max pooling; ragged borders are padded with `-inf`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaxPool2d {
    pub size: usize,
}

impl MaxPool2d {
    pub fn output_hw(&self, h: usize, w: usize) -> (usize, usize) {
        (h.div_ceil(self.size), w.div_ceil(self.size))
    }

    /// Output plus, for each output element, the flat input index of its maximum.
    pub fn forward<T: Scalar>(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>)> {
        let (n, c, h, w) = image_dims(x, "maxpool")?;
        let (ho, wo) = self.output_hw(h, w);
        let mut out = Tensor::zeros(&[n, c, ho, wo]);
        let mut argmax = Vec::with_capacity(n * c * ho * wo);
        let xd = x.data();
        let od = out.data_mut();
        let mut o = 0;
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = T::neg_infinity();
                    let mut best_idx = base + oy * self.size * w + ox * self.size;
                    for iy in oy * self.size..((oy + 1) * self.size).min(h) {
                        for ix in ox * self.size..((ox + 1) * self.size).min(w) {
                            let idx = base + iy * w + ix;
                            if xd[idx] > best {
                                best = xd[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    od[o] = best;
                    argmax.push(best_idx);
                    o += 1;
                }
            }
        }
        Ok((out, argmax))
    }

    pub fn backward<T: Scalar>(argmax: &[usize], in_shape: &[usize], grad_out: &Tensor<T>) -> Tensor<T> {
        let mut dx = Tensor::zeros(in_shape);
        let d = dx.data_mut();
        for (&idx, &g) in argmax.iter().zip(grad_out.data()) {
            d[idx] += g;
        }
        dx
    }
}

/// Affine map over the flattened per-sample features.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub inputs: usize,
    pub outputs: usize,
    /// `[outputs, inputs]`
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    /// Frozen layers propagate gradients but never accumulate parameter gradients.
    pub frozen: bool,
}

impl<T: Scalar> Dense<T> {
    pub fn new(inputs: usize, outputs: usize, rng: &mut dyn RngCore) -> Self {
        Self {
            inputs,
            outputs,
            weight: he_normal(&[outputs, inputs], inputs, rng),
            bias: Tensor::zeros(&[outputs]),
            frozen: false,
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let n = x.batch();
        if x.item_len() != self.inputs {
            return Err(Error::Shape(format!(
                "dense layer expects {} inputs, got {}",
                self.inputs,
                x.item_len()
            )));
        }
        let mut y = Tensor::zeros(&[n, self.outputs]);
        for row in y.data_mut().chunks_exact_mut(self.outputs) {
            row.copy_from_slice(self.bias.data());
        }
        gemm(false, true, n, self.outputs, self.inputs, x.data(), self.weight.data(), T::one(), y.data_mut());
        Ok(y)
    }

    pub fn backward(
        &self,
        input: &Tensor<T>,
        grad_out: &Tensor<T>,
        grads: &mut [Tensor<T>],
        need_input: bool,
    ) -> Option<Tensor<T>> {
        let n = input.batch();
        if !self.frozen {
            let (gw, gb) = grads.split_at_mut(1);
            gemm(true, false, self.outputs, self.inputs, n, grad_out.data(), input.data(), T::one(), gw[0].data_mut());
            for row in grad_out.data().chunks_exact(self.outputs) {
                for (b, &g) in gb[0].data_mut().iter_mut().zip(row) {
                    *b += g;
                }
            }
        }
        need_input.then(|| {
            let mut dx = Tensor::zeros(input.shape());
            gemm(false, false, n, self.inputs, self.outputs, grad_out.data(), self.weight.data(), T::zero(), dx.data_mut());
            dx
        })
    }
}

pub fn relu_forward<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let data = x.data().iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect();
    Tensor::from_vec(x.shape(), data).expect("same shape")
}

pub fn relu_backward<T: Scalar>(output: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let data = output
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&y, &g)| if y > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(output.shape(), data).expect("same shape")
}

/// Inverted dropout: in training, zero with probability `rate` and rescale survivors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dropout {
    pub rate: f64,
}

impl Dropout {
    /// Returns the output and the applied multiplicative mask (`None` = identity).
    pub fn forward<T: Scalar>(
        &self,
        x: &Tensor<T>,
        rng: Option<&mut dyn RngCore>,
    ) -> (Tensor<T>, Option<Vec<T>>) {
        match rng {
            Some(rng) if self.rate > 0.0 => {
                let keep = T::of(1.0 / (1.0 - self.rate));
                let mask: Vec<T> = (0..x.len())
                    .map(|_| if rng.random::<f64>() < self.rate { T::zero() } else { keep })
                    .collect();
                let data = x.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
                (Tensor::from_vec(x.shape(), data).expect("same shape"), Some(mask))
            }
            _ => (x.clone(), None),
        }
    }

    pub fn backward<T: Scalar>(mask: Option<&[T]>, grad_out: &Tensor<T>) -> Tensor<T> {
        match mask {
            None => grad_out.clone(),
            Some(mask) => {
                let data = grad_out.data().iter().zip(mask).map(|(&g, &m)| g * m).collect();
                Tensor::from_vec(grad_out.shape(), data).expect("same shape")
            }
        }
    }
}

/// Residual module: a convolutional branch plus an identity or 1x1 projection shortcut.
/// The sum is returned without a trailing activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual<T> {
    pub branch: Vec<Layer<T>>,
    pub shortcut: Option<Conv2d<T>>,
}

/// A network layer with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    Conv(Conv2d<T>),
    MaxPool(MaxPool2d),
    Dense(Dense<T>),
    Relu,
    Dropout(Dropout),
    Residual(Box<Residual<T>>),
}

/// Values saved by a training-mode forward pass.
#[derive(Debug, Clone)]
pub enum Cache<T> {
    Conv { input: Tensor<T> },
    MaxPool { in_shape: Vec<usize>, argmax: Vec<usize> },
    Dense { input: Tensor<T> },
    Relu { output: Tensor<T> },
    Dropout { mask: Option<Vec<T>> },
    Residual { branch: Vec<Cache<T>>, shortcut: Option<Box<Cache<T>>> },
    None,
}

impl<T: Scalar> Layer<T> {
    pub fn params(&self) -> Vec<&Tensor<T>> {
        match self {
            Layer::Conv(c) => vec![&c.weight, &c.bias],
            Layer::Dense(d) => vec![&d.weight, &d.bias],
            Layer::Residual(r) => {
                let mut v: Vec<&Tensor<T>> = r.branch.iter().flat_map(|l| l.params()).collect();
                if let Some(s) = &r.shortcut {
                    v.push(&s.weight);
                    v.push(&s.bias);
                }
                v
            }
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        match self {
            Layer::Conv(c) => vec![&mut c.weight, &mut c.bias],
            Layer::Dense(d) => vec![&mut d.weight, &mut d.bias],
            Layer::Residual(r) => {
                let mut v: Vec<&mut Tensor<T>> = r.branch.iter_mut().flat_map(|l| l.params_mut()).collect();
                if let Some(s) = &mut r.shortcut {
                    v.push(&mut s.weight);
                    v.push(&mut s.bias);
                }
                v
            }
            _ => Vec::new(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.params().len()
    }

    /// Forward pass. Caches are built only when `train` is set; dropout draws
    /// from `rng` only in training.
    pub fn forward(
        &self,
        x: &Tensor<T>,
        train: bool,
        rng: &mut Option<&mut dyn RngCore>,
    ) -> Result<(Tensor<T>, Cache<T>)> {
        Ok(match self {
            Layer::Conv(c) => {
                let y = c.forward(x)?;
                (y, if train { Cache::Conv { input: x.clone() } } else { Cache::None })
            }
            Layer::MaxPool(p) => {
                let (y, argmax) = p.forward(x)?;
                (y, if train { Cache::MaxPool { in_shape: x.shape().to_vec(), argmax } } else { Cache::None })
            }
            Layer::Dense(d) => {
                let y = d.forward(x)?;
                (y, if train { Cache::Dense { input: x.clone() } } else { Cache::None })
            }
            Layer::Relu => {
                let y = relu_forward(x);
                let cache = if train { Cache::Relu { output: y.clone() } } else { Cache::None };
                (y, cache)
            }
            Layer::Dropout(d) => {
                let (y, mask) = match rng.as_mut() {
                    Some(r) if train => d.forward(x, Some(&mut **r)),
                    _ => d.forward(x, None),
                };
                (y, if train { Cache::Dropout { mask } } else { Cache::None })
            }
            Layer::Residual(r) => {
                let mut h = x.clone();
                let mut caches = Vec::with_capacity(r.branch.len());
                for l in &r.branch {
                    let (y, c) = l.forward(&h, train, rng)?;
                    h = y;
                    caches.push(c);
                }
                let (skip, sc) = match &r.shortcut {
                    Some(conv) => {
                        let y = conv.forward(x)?;
                        let c = train.then(|| Box::new(Cache::Conv { input: x.clone() }));
                        (y, c)
                    }
                    None => (x.clone(), None),
                };
                if skip.shape() != h.shape() {
                    return Err(Error::Shape(format!(
                        "residual branch {:?} does not match shortcut {:?}",
                        h.shape(),
                        skip.shape()
                    )));
                }
                for (a, &b) in h.data_mut().iter_mut().zip(skip.data()) {
                    *a += b;
                }
                (h, if train { Cache::Residual { branch: caches, shortcut: sc } } else { Cache::None })
            }
        })
    }

    /// Backward pass: accumulates parameter gradients into `grads` (this
    /// layer's slice, in `params()` order) and returns the input gradient
    /// when `need_input` is set.
    pub fn backward(
        &self,
        cache: &Cache<T>,
        grad_out: &Tensor<T>,
        grads: &mut [Tensor<T>],
        need_input: bool,
    ) -> Option<Tensor<T>> {
        match (self, cache) {
            (Layer::Conv(c), Cache::Conv { input }) => {
                c.backward(input, grad_out, grads, need_input)
            }
            (Layer::MaxPool(_), Cache::MaxPool { in_shape, argmax }) => {
                need_input.then(|| MaxPool2d::backward(argmax, in_shape, grad_out))
            }
            (Layer::Dense(d), Cache::Dense { input }) => d.backward(input, grad_out, grads, need_input),
            (Layer::Relu, Cache::Relu { output }) => need_input.then(|| relu_backward(output, grad_out)),
            (Layer::Dropout(_), Cache::Dropout { mask }) => {
                need_input.then(|| Dropout::backward(mask.as_deref(), grad_out))
            }
            (Layer::Residual(r), Cache::Residual { branch, shortcut }) => {
                let branch_params: usize = r.branch.iter().map(|l| l.num_params()).sum();
                let (bg, sg) = grads.split_at_mut(branch_params);
                let mut offsets = Vec::with_capacity(r.branch.len());
                let mut acc = 0;
                for l in &r.branch {
                    offsets.push(acc);
                    acc += l.num_params();
                }
                let mut g = grad_out.clone();
                for (i, (l, c)) in r.branch.iter().zip(branch).enumerate().rev() {
                    let np = l.num_params();
                    let slice = &mut bg[offsets[i]..offsets[i] + np];
                    let needs = need_input || i > 0;
                    match l.backward(c, &g, slice, needs) {
                        Some(next) => g = next,
                        None => break,
                    }
                }
                let skip = match (&r.shortcut, shortcut) {
                    (Some(conv), Some(c)) => match c.as_ref() {
                        Cache::Conv { input } => conv.backward(input, grad_out, sg, need_input),
                        _ => unreachable!("shortcut cache is always a conv cache"),
                    },
                    _ => need_input.then(|| grad_out.clone()),
                };
                match (need_input, skip) {
                    (true, Some(mut s)) => {
                        for (a, &b) in s.data_mut().iter_mut().zip(g.data()) {
                            *a += b;
                        }
                        Some(s)
                    }
                    _ => None,
                }
            }
            _ => panic!("layer/cache mismatch: backward called without a training forward pass"),
        }
    }
}
