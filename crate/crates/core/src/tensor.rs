//! Dense row-major N-dimensional arrays of reals.
//!
//! Cuboids use the fixed axis order (channel, height, width, time) with time
//! fastest. There is no broadcasting and no view machinery: arithmetic
//! demands exact shape agreement and slicing copies, which keeps the kernels
//! in `nn` simple and makes shape bugs loud.

use crate::error::{Error, Result};
use std::fmt::Debug;

/// Scalar element of a [`Tensor`]: `f32` for training and inference, `f64`
/// for finite-difference gradient checks.
pub trait Real:
    Copy
    + PartialOrd
    + Debug
    + Send
    + Sync
    + 'static
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
    + std::ops::Neg<Output = Self>
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
{
    const ZERO: Self;
    const ONE: Self;
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn is_finite(self) -> bool;
    fn maximum(self, other: Self) -> Self {
        if self > other {
            self
        } else {
            other
        }
    }
}

impl Real for f32 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn exp(self) -> Self {
        f32::exp(self)
    }
    fn ln(self) -> Self {
        f32::ln(self)
    }
    fn sqrt(self) -> Self {
        f32::sqrt(self)
    }
    fn is_finite(self) -> bool {
        f32::is_finite(self)
    }
}

impl Real for f64 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
}

/// Dense N-dimensional array, row-major with the last axis fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    /// Build from a shape and flat data. Fails unless every extent is at
    /// least 1 and the data length equals the shape product.
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if shape.iter().any(|&e| e == 0) {
            return Err(Error::Shape(format!("zero extent in shape {shape:?}")));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} wants {expected} elements, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    /// All-zero tensor. Panics on a zero extent; internal call sites always
    /// hold the invariant.
    pub fn zeros(shape: &[usize]) -> Self {
        assert!(
            shape.iter().all(|&e| e >= 1),
            "zero extent in shape {shape:?}"
        );
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![T::ZERO; n],
        }
    }

    pub fn filled(shape: &[usize], value: T) -> Self {
        let mut t = Self::zeros(shape);
        t.data.fill(value);
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// Row-major strides: last axis has stride 1.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.shape.len()];
        for i in (0..self.shape.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.shape[i + 1];
        }
        strides
    }

    /// Flat offset of a multi-index. Fails on rank or bounds violations.
    pub fn offset_of(&self, idx: &[usize]) -> Result<usize> {
        if idx.len() != self.shape.len() {
            return Err(Error::Shape(format!(
                "index rank {} vs tensor rank {}",
                idx.len(),
                self.shape.len()
            )));
        }
        let mut off = 0;
        let mut stride = 1;
        for axis in (0..self.shape.len()).rev() {
            if idx[axis] >= self.shape[axis] {
                return Err(Error::Bounds(format!(
                    "index {idx:?} out of bounds for shape {:?}",
                    self.shape
                )));
            }
            off += idx[axis] * stride;
            stride *= self.shape[axis];
        }
        Ok(off)
    }

    pub fn get(&self, idx: &[usize]) -> Result<T> {
        Ok(self.data[self.offset_of(idx)?])
    }

    pub fn set(&mut self, idx: &[usize], value: T) -> Result<()> {
        let off = self.offset_of(idx)?;
        self.data[off] = value;
        Ok(())
    }

    /// Same data under a new shape; element order is preserved.
    pub fn reshape(&self, new_shape: &[usize]) -> Result<Tensor<T>> {
        if new_shape.iter().any(|&e| e == 0) {
            return Err(Error::Shape(format!("zero extent in shape {new_shape:?}")));
        }
        let n: usize = new_shape.iter().product();
        if n != self.data.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} ({} elements) to {new_shape:?} ({n} elements)",
                self.shape,
                self.data.len()
            )));
        }
        Ok(Tensor {
            shape: new_shape.to_vec(),
            data: self.data.clone(),
        })
    }

    /// Reverse the width axis (axis 2 of a (C,H,W,...) tensor).
    pub fn flip_width(&self) -> Result<Tensor<T>> {
        if self.rank() < 3 {
            return Err(Error::Shape(format!(
                "flip_width wants rank >= 3, got {:?}",
                self.shape
            )));
        }
        let w = self.shape[2];
        // Inner block: everything after the width axis is contiguous.
        let inner: usize = self.shape[3..].iter().product();
        let row = w * inner;
        let mut out = self.data.clone();
        for chunk_start in (0..self.data.len()).step_by(row) {
            for wi in 0..w {
                let src = chunk_start + wi * inner;
                let dst = chunk_start + (w - 1 - wi) * inner;
                out[dst..dst + inner].copy_from_slice(&self.data[src..src + inner]);
            }
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: out,
        })
    }

    /// Independent copy of the sub-block at `origin` with the given extents.
    pub fn window(&self, origin: &[usize], extents: &[usize]) -> Result<Tensor<T>> {
        if origin.len() != self.rank() || extents.len() != self.rank() {
            return Err(Error::Shape(format!(
                "window rank {}/{} vs tensor rank {}",
                origin.len(),
                extents.len(),
                self.rank()
            )));
        }
        for axis in 0..self.rank() {
            if extents[axis] == 0 {
                return Err(Error::Shape(format!("zero extent in window {extents:?}")));
            }
            if origin[axis] + extents[axis] > self.shape[axis] {
                return Err(Error::Bounds(format!(
                    "window origin {origin:?} extents {extents:?} out of bounds for {:?}",
                    self.shape
                )));
            }
        }
        let mut out = Tensor::zeros(extents);
        let strides = self.strides();
        // Copy runs of the innermost axis.
        let inner = extents[self.rank() - 1];
        let outer: usize = extents[..self.rank() - 1].iter().product();
        let mut idx = vec![0usize; self.rank() - 1];
        for run in 0..outer {
            let mut src = origin[self.rank() - 1];
            for axis in 0..self.rank() - 1 {
                src += (origin[axis] + idx[axis]) * strides[axis];
            }
            let dst = run * inner;
            out.data[dst..dst + inner].copy_from_slice(&self.data[src..src + inner]);
            for axis in (0..idx.len()).rev() {
                idx[axis] += 1;
                if idx[axis] < extents[axis] {
                    break;
                }
                idx[axis] = 0;
            }
        }
        Ok(out)
    }

    /// Element-wise cast between precisions.
    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| U::from_f64(x.to_f64())).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn tensor_from_f64(shape: &[usize], values: &[f64]) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), values.to_vec()).unwrap()
    }

    fn random_tensor(rng: &mut SplitMix64, shape: &[usize]) -> Tensor<f64> {
        let n: usize = shape.iter().product();
        let data: Vec<f64> = (0..n).map(|_| rng.next_f64()).collect();
        Tensor::new(shape.to_vec(), data).unwrap()
    }

    #[test]
    fn reshape_keeps_order() {
        let t = tensor_from_f64(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let r = t.reshape(&[6]).unwrap();
        assert_eq!(r.shape(), &[6]);
        assert_eq!(r.data(), t.data());
    }

    #[test]
    fn reshape_flatten_size() {
        // 8 * 44 * 44 * 9 elements flatten to one axis of the same product.
        let n: usize = [8usize, 44, 44, 9].iter().product();
        assert_eq!(n, 139_392);
        let t = Tensor::<f32>::zeros(&[8, 44, 44, 9]);
        let r = t.reshape(&[139_392]).unwrap();
        assert_eq!(r.len(), n);
    }

    #[test]
    fn reshape_mismatch_fails() {
        let t = tensor_from_f64(&[2, 3], &[0.0; 6]);
        assert!(matches!(t.reshape(&[4]), Err(Error::Shape(_))));
    }

    #[test]
    fn row_major_offsets() {
        // Random shapes: offset computed by the standard stride formula must
        // round-trip through get/set.
        let mut rng = SplitMix64::new(99);
        for _ in 0..20 {
            let rank = 1 + rng.next_range(4) as usize;
            let shape: Vec<usize> = (0..rank).map(|_| 1 + rng.next_range(5) as usize).collect();
            let mut t = Tensor::<f64>::zeros(&shape);
            let idx: Vec<usize> = shape
                .iter()
                .map(|&e| rng.next_range(e as u64) as usize)
                .collect();
            t.set(&idx, 42.0).unwrap();
            let strides = t.strides();
            let off: usize = idx.iter().zip(&strides).map(|(i, s)| i * s).sum();
            assert_eq!(t.data()[off], 42.0);
            assert_eq!(t.get(&idx).unwrap(), 42.0);
        }
    }

    #[test]
    fn flip_width_pair() {
        let t = tensor_from_f64(&[1, 1, 2, 1], &[1.0, 2.0]);
        let f = t.flip_width().unwrap();
        assert_eq!(f.data(), &[2.0, 1.0]);
    }

    #[test]
    fn flip_width_involution() {
        let mut rng = SplitMix64::new(5);
        for _ in 0..10 {
            let t = random_tensor(&mut rng, &[2, 3, 4, 5]);
            assert_eq!(t.flip_width().unwrap().flip_width().unwrap(), t);
        }
    }

    #[test]
    fn flip_width_symmetric_fixed_point() {
        let t = tensor_from_f64(&[1, 1, 3, 1], &[1.0, 7.0, 1.0]);
        assert_eq!(t.flip_width().unwrap(), t);
    }

    #[test]
    fn flip_width_rank_too_low() {
        let t = tensor_from_f64(&[2, 2], &[0.0; 4]);
        assert!(matches!(t.flip_width(), Err(Error::Shape(_))));
    }

    #[test]
    fn window_full_extent_identity() {
        let mut rng = SplitMix64::new(8);
        let t = random_tensor(&mut rng, &[2, 3, 4]);
        let w = t.window(&[0, 0, 0], &[2, 3, 4]).unwrap();
        assert_eq!(w, t);
    }

    #[test]
    fn window_central_block() {
        let data: Vec<f64> = (0..16).map(|x| x as f64).collect();
        let t = tensor_from_f64(&[1, 4, 4, 1], &data);
        let w = t.window(&[0, 1, 1, 0], &[1, 2, 2, 1]).unwrap();
        assert_eq!(w.data(), &[5.0, 6.0, 9.0, 10.0]);
    }

    #[test]
    fn window_out_of_bounds() {
        let t = Tensor::<f64>::zeros(&[1, 4, 4, 1]);
        assert!(matches!(
            t.window(&[0, 3, 3, 0], &[1, 2, 2, 1]),
            Err(Error::Bounds(_))
        ));
    }

    #[test]
    fn window_write_back_reconstructs() {
        let mut rng = SplitMix64::new(21);
        for _ in 0..10 {
            let t = random_tensor(&mut rng, &[2, 5, 6, 3]);
            let origin = [
                rng.next_range(2) as usize,
                rng.next_range(3) as usize,
                rng.next_range(4) as usize,
                rng.next_range(2) as usize,
            ];
            let extents = [1, 2, 2, 1];
            let w = t.window(&origin, &extents).unwrap();
            let mut rebuilt = t.clone();
            for c in 0..extents[0] {
                for h in 0..extents[1] {
                    for x in 0..extents[2] {
                        for s in 0..extents[3] {
                            let v = w.get(&[c, h, x, s]).unwrap();
                            rebuilt
                                .set(&[origin[0] + c, origin[1] + h, origin[2] + x, origin[3] + s], v)
                                .unwrap();
                        }
                    }
                }
            }
            assert_eq!(rebuilt, t);
        }
    }

    #[test]
    fn new_rejects_zero_extent_and_bad_product() {
        assert!(Tensor::<f32>::new(vec![0, 2], vec![]).is_err());
        assert!(Tensor::<f32>::new(vec![2, 2], vec![0.0; 3]).is_err());
    }
}
