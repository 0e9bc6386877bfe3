//! Layer kernels: valid stride-1 3D cross-correlation, non-overlapping max
//! pooling, dense, inverted dropout, and the stabilized softmax, each with
//! its analytic backward pass.
//!
//! All loops keep the time axis (last, contiguous) innermost so the hot
//! paths reduce to slice-against-slice multiply-adds.

use crate::error::{Error, Result};
use crate::nn::arch::Activation;
use crate::rng::SplitMix64;
use crate::tensor::{Real, Tensor};

impl Activation {
    #[inline]
    pub(crate) fn apply<T: Real>(self, x: T) -> T {
        match self {
            Activation::Relu => x.maximum(T::ZERO),
            Activation::Linear => x,
        }
    }

    /// Derivative as a function of the pre-activation value.
    #[inline]
    pub(crate) fn grad<T: Real>(self, preact: T) -> T {
        match self {
            Activation::Relu => {
                if preact > T::ZERO {
                    T::ONE
                } else {
                    T::ZERO
                }
            }
            Activation::Linear => T::ONE,
        }
    }
}

/// 3D convolution layer; weights are (out_ch, in_ch, kh, kw, kt).
#[derive(Debug, Clone)]
pub struct Conv3d<T> {
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
    pub activation: Activation,
}

impl<T: Real> Conv3d<T> {
    pub fn zeroed(out_ch: usize, in_ch: usize, kernel: [usize; 3], activation: Activation) -> Self {
        Conv3d {
            weights: Tensor::zeros(&[out_ch, in_ch, kernel[0], kernel[1], kernel[2]]),
            bias: Tensor::zeros(&[out_ch]),
            activation,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn kernel(&self) -> [usize; 3] {
        let s = self.weights.shape();
        [s[2], s[3], s[4]]
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<[usize; 4]> {
        let s = input.shape();
        if s.len() != 4 {
            return Err(Error::Shape(format!("conv3d wants (C,H,W,T), got {s:?}")));
        }
        if s[0] != self.in_channels() {
            return Err(Error::Shape(format!(
                "conv3d expects {} input channels, got {}",
                self.in_channels(),
                s[0]
            )));
        }
        let k = self.kernel();
        for axis in 0..3 {
            if s[axis + 1] < k[axis] {
                return Err(Error::Shape(format!(
                    "conv3d kernel {} exceeds input extent {} on axis {}",
                    k[axis],
                    s[axis + 1],
                    axis + 1
                )));
            }
        }
        Ok([
            self.out_channels(),
            s[1] - k[0] + 1,
            s[2] - k[1] + 1,
            s[3] - k[2] + 1,
        ])
    }

    /// Valid (no padding) stride-1 cross-correlation plus bias. Returns
    /// (activated output, pre-activation).
    pub fn forward(&self, input: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let [oc, oh, ow, ot] = self.check_input(input)?;
        let ic = self.in_channels();
        let [kh, kw, kt] = self.kernel();
        let (ih_s, iw_s) = {
            let s = input.shape();
            (s[2] * s[3], s[3])
        };
        let in_ch_stride = input.shape()[1] * ih_s;
        let mut pre = Tensor::zeros(&[oc, oh, ow, ot]);
        let block = oh * ow * ot;
        let w_data = self.weights.data();
        let in_data = input.data();
        let pre_data = pre.data_mut();
        for o in 0..oc {
            let out_block = &mut pre_data[o * block..(o + 1) * block];
            out_block.fill(self.bias.data()[o]);
            for c in 0..ic {
                let in_ch = &in_data[c * in_ch_stride..(c + 1) * in_ch_stride];
                let w_base = (o * ic + c) * kh * kw * kt;
                for ki in 0..kh {
                    for kj in 0..kw {
                        for kk in 0..kt {
                            let w = w_data[w_base + (ki * kw + kj) * kt + kk];
                            for y in 0..oh {
                                let src_row = (y + ki) * ih_s + kj * iw_s + kk;
                                let dst_row = y * ow * ot;
                                for x in 0..ow {
                                    let src = &in_ch[src_row + x * iw_s..src_row + x * iw_s + ot];
                                    let dst = &mut out_block[dst_row + x * ot..dst_row + (x + 1) * ot];
                                    for (d, &s) in dst.iter_mut().zip(src) {
                                        *d += w * s;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        let mut post = pre.clone();
        for v in post.data_mut() {
            *v = self.activation.apply(*v);
        }
        Ok((post, pre))
    }

    /// Gradients of the forward map. Returns (input_grad, weight_grad,
    /// bias_grad).
    pub fn backward(
        &self,
        input: &Tensor<T>,
        preact: &Tensor<T>,
        upstream: &Tensor<T>,
    ) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
        let out_shape = self.check_input(input)?;
        if upstream.shape() != out_shape {
            return Err(Error::Shape(format!(
                "conv3d upstream shape {:?} vs output shape {:?}",
                upstream.shape(),
                out_shape
            )));
        }
        let [oc, oh, ow, ot] = out_shape;
        let ic = self.in_channels();
        let [kh, kw, kt] = self.kernel();
        let s = input.shape();
        let (ih_s, iw_s) = (s[2] * s[3], s[3]);
        let in_ch_stride = s[1] * ih_s;

        // Push upstream through the activation derivative once.
        let mut dpre = upstream.clone();
        for (d, &p) in dpre.data_mut().iter_mut().zip(preact.data()) {
            *d *= self.activation.grad(p);
        }

        let mut dinput = Tensor::zeros(input.shape());
        let mut dweights = Tensor::zeros(self.weights.shape());
        let mut dbias = Tensor::zeros(&[oc]);
        let block = oh * ow * ot;
        let in_data = input.data();
        let w_data = self.weights.data();
        let dpre_data = dpre.data();
        let din_data = dinput.data_mut();
        let dw_data = dweights.data_mut();
        for o in 0..oc {
            let dpre_block = &dpre_data[o * block..(o + 1) * block];
            let mut bsum = T::ZERO;
            for &g in dpre_block {
                bsum += g;
            }
            dbias.data_mut()[o] = bsum;
            for c in 0..ic {
                let in_ch = &in_data[c * in_ch_stride..(c + 1) * in_ch_stride];
                let din_ch = &mut din_data[c * in_ch_stride..(c + 1) * in_ch_stride];
                let w_base = (o * ic + c) * kh * kw * kt;
                for ki in 0..kh {
                    for kj in 0..kw {
                        for kk in 0..kt {
                            let w_off = w_base + (ki * kw + kj) * kt + kk;
                            let w = w_data[w_off];
                            let mut wsum = T::ZERO;
                            for y in 0..oh {
                                let src_row = (y + ki) * ih_s + kj * iw_s + kk;
                                let up_row = y * ow * ot;
                                for x in 0..ow {
                                    let src = src_row + x * iw_s;
                                    let up = &dpre_block[up_row + x * ot..up_row + (x + 1) * ot];
                                    let inp = &in_ch[src..src + ot];
                                    let din = &mut din_ch[src..src + ot];
                                    for t in 0..ot {
                                        wsum += up[t] * inp[t];
                                        din[t] += w * up[t];
                                    }
                                }
                            }
                            dw_data[w_off] += wsum;
                        }
                    }
                }
            }
        }
        Ok((dinput, dweights, dbias))
    }
}

/// Non-overlapping max pooling; extents equal stride, trailing remainders
/// are dropped (floor semantics).
#[derive(Debug, Clone, Copy)]
pub struct MaxPool3d {
    pub extents: [usize; 3],
}

impl MaxPool3d {
    fn out_shape(&self, input_shape: &[usize]) -> Result<[usize; 4]> {
        if input_shape.len() != 4 {
            return Err(Error::Shape(format!(
                "maxpool3d wants (C,H,W,T), got {input_shape:?}"
            )));
        }
        let [e0, e1, e2] = self.extents;
        if e0 == 0 || e1 == 0 || e2 == 0 {
            return Err(Error::Shape("pool extents must be >= 1".into()));
        }
        for (axis, (&ext, &e)) in input_shape[1..].iter().zip(self.extents.iter()).enumerate() {
            if ext < e {
                return Err(Error::Shape(format!(
                    "pool extent {e} exceeds input extent {ext} on axis {}",
                    axis + 1
                )));
            }
        }
        Ok([
            input_shape[0],
            input_shape[1] / e0,
            input_shape[2] / e1,
            input_shape[3] / e2,
        ])
    }

    /// Per-block maximum per channel; records the flat input offset of each
    /// maximum for the backward pass.
    pub fn forward<T: Real>(&self, input: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>)> {
        let [c_n, oh, ow, ot] = self.out_shape(input.shape())?;
        let [e0, e1, e2] = self.extents;
        let s = input.shape();
        let (ih_s, iw_s) = (s[2] * s[3], s[3]);
        let ch_s = s[1] * ih_s;
        let mut out = Tensor::zeros(&[c_n, oh, ow, ot]);
        let mut argmax = vec![0usize; out.len()];
        let in_data = input.data();
        let out_data = out.data_mut();
        let mut oi = 0;
        for c in 0..c_n {
            for y in 0..oh {
                for x in 0..ow {
                    for t in 0..ot {
                        let base = c * ch_s + y * e0 * ih_s + x * e1 * iw_s + t * e2;
                        let mut best = in_data[base];
                        let mut best_off = base;
                        for dy in 0..e0 {
                            for dx in 0..e1 {
                                for dt in 0..e2 {
                                    let off = base + dy * ih_s + dx * iw_s + dt;
                                    let v = in_data[off];
                                    if v > best {
                                        best = v;
                                        best_off = off;
                                    }
                                }
                            }
                        }
                        out_data[oi] = best;
                        argmax[oi] = best_off;
                        oi += 1;
                    }
                }
            }
        }
        Ok((out, argmax))
    }

    /// Routes each upstream value to its argmax position; everything else
    /// receives zero.
    pub fn backward<T: Real>(
        &self,
        input_shape: &[usize],
        argmax: &[usize],
        upstream: &Tensor<T>,
    ) -> Result<Tensor<T>> {
        let out_shape = self.out_shape(input_shape)?;
        if upstream.shape() != out_shape {
            return Err(Error::Shape(format!(
                "maxpool3d upstream shape {:?} vs output shape {out_shape:?}",
                upstream.shape()
            )));
        }
        let mut dinput = Tensor::zeros(input_shape);
        let din = dinput.data_mut();
        for (&off, &g) in argmax.iter().zip(upstream.data()) {
            din[off] += g;
        }
        Ok(dinput)
    }
}

/// Fully connected layer; weights are (out_dim, in_dim).
#[derive(Debug, Clone)]
pub struct Dense<T> {
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
    pub activation: Activation,
}

impl<T: Real> Dense<T> {
    pub fn zeroed(out_dim: usize, in_dim: usize, activation: Activation) -> Self {
        Dense {
            weights: Tensor::zeros(&[out_dim, in_dim]),
            bias: Tensor::zeros(&[out_dim]),
            activation,
        }
    }

    pub fn out_dim(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn in_dim(&self) -> usize {
        self.weights.shape()[1]
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<()> {
        if input.shape() != [self.in_dim()] {
            return Err(Error::Shape(format!(
                "dense expects input ({}), got {:?}",
                self.in_dim(),
                input.shape()
            )));
        }
        Ok(())
    }

    /// y = W x + b, then activation. Returns (activated, pre-activation).
    pub fn forward(&self, input: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        self.check_input(input)?;
        let (m, n) = (self.out_dim(), self.in_dim());
        let mut pre = Tensor::zeros(&[m]);
        let x = input.data();
        let w = self.weights.data();
        for i in 0..m {
            let row = &w[i * n..(i + 1) * n];
            let mut acc = T::ZERO;
            for (a, b) in row.iter().zip(x) {
                acc += *a * *b;
            }
            pre.data_mut()[i] = acc + self.bias.data()[i];
        }
        let mut post = pre.clone();
        for v in post.data_mut() {
            *v = self.activation.apply(*v);
        }
        Ok((post, pre))
    }

    pub fn backward(
        &self,
        input: &Tensor<T>,
        preact: &Tensor<T>,
        upstream: &Tensor<T>,
    ) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
        self.check_input(input)?;
        let (m, n) = (self.out_dim(), self.in_dim());
        if upstream.shape() != [m] {
            return Err(Error::Shape(format!(
                "dense upstream shape {:?} vs output ({m})",
                upstream.shape()
            )));
        }
        let mut dpre = upstream.clone();
        for (d, &p) in dpre.data_mut().iter_mut().zip(preact.data()) {
            *d *= self.activation.grad(p);
        }
        let mut dinput = Tensor::zeros(&[n]);
        let mut dweights = Tensor::zeros(&[m, n]);
        let x = input.data();
        let w = self.weights.data();
        let dx = dinput.data_mut();
        let dw = dweights.data_mut();
        for i in 0..m {
            let g = dpre.data()[i];
            let w_row = &w[i * n..(i + 1) * n];
            let dw_row = &mut dw[i * n..(i + 1) * n];
            for j in 0..n {
                dw_row[j] = g * x[j];
                dx[j] += g * w_row[j];
            }
        }
        Ok((dinput, dweights, dpre))
    }
}

/// Inverted dropout: kept units are scaled by 1/(1-rate) at train time so
/// inference is a pure pass-through.
#[derive(Debug, Clone, Copy)]
pub struct DropoutLayer {
    pub rate: f64,
}

impl DropoutLayer {
    /// Train-mode mask: one uniform draw per element in index order; an
    /// element is dropped when the draw falls below `rate`. Returns the
    /// masked output and the mask (0 or the keep scale) for the backward
    /// pass.
    pub fn forward_train<T: Real>(
        &self,
        input: &Tensor<T>,
        rng: &mut SplitMix64,
    ) -> (Tensor<T>, Vec<T>) {
        let scale = T::from_f64(1.0 / (1.0 - self.rate));
        let mask: Vec<T> = (0..input.len())
            .map(|_| {
                if rng.next_f64() < self.rate {
                    T::ZERO
                } else {
                    scale
                }
            })
            .collect();
        let mut out = input.clone();
        for (v, &m) in out.data_mut().iter_mut().zip(&mask) {
            *v *= m;
        }
        (out, mask)
    }

    pub fn backward<T: Real>(&self, mask: &[T], upstream: &Tensor<T>) -> Tensor<T> {
        let mut dinput = upstream.clone();
        for (v, &m) in dinput.data_mut().iter_mut().zip(mask) {
            *v *= m;
        }
        dinput
    }
}

/// Stabilized softmax: subtracts the max logit before exponentiating.
pub fn softmax<T: Real>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    if logits.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!(
            "softmax over non-finite logits {:?}",
            logits.data().iter().map(|v| v.to_f64()).collect::<Vec<_>>()
        )));
    }
    let mut max = logits.data()[0];
    for &v in logits.data() {
        max = max.maximum(v);
    }
    let mut out = logits.clone();
    let mut sum = T::ZERO;
    for v in out.data_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in out.data_mut() {
        *v = *v / sum;
    }
    Ok(out)
}
