//! Minimal dense-tensor engine with reverse-mode differentiation.
//!
//! Values are stored row-major in a flat buffer. A fresh [`Tape`] is
//! created per forward pass; operations push nodes onto it and
//! [`Tape::backward`] replays them in reverse. The engine is generic
//! over [`Scalar`]: training runs in `f32`, gradient checking in `f64`
//! (finite-difference tolerances are unreachable at 32-bit).

mod gradcheck;
mod kernels;
mod tape;

pub use gradcheck::grad_check;
pub use tape::{Gradients, Tape, Var};

use crate::{Error, Result};

/// Element type of the engine. `f32` for training, `f64` for checking.
pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + std::fmt::Debug
    + std::fmt::Display
    + std::iter::Sum
    + Default
    + Send
    + Sync
    + 'static
{
    const BYTE_WIDTH: usize;
}

impl Scalar for f32 {
    const BYTE_WIDTH: usize = 4;
}
impl Scalar for f64 {
    const BYTE_WIDTH: usize = 8;
}

/// Convert a literal into the active scalar type.
pub fn s<S: Scalar>(x: f64) -> S {
    S::from_f64(x).expect("scalar conversion")
}

/// Dense multi-dimensional array with an optional gradient slot.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<S> {
    shape: Vec<usize>,
    data: Vec<S>,
    pub grad: Option<Vec<S>>,
    pub requires_grad: bool,
}

impl<S: Scalar> Tensor<S> {
    pub fn from_vec(shape: &[usize], data: Vec<S>) -> Result<Self> {
        if shape.iter().any(|&e| e == 0) {
            return Err(Error::Contract(format!(
                "tensor extents must be >= 1, got {shape:?}"
            )));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::dim("from_vec", shape, &[data.len()]));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
            grad: None,
            requires_grad: false,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![S::zero(); numel],
            grad: None,
            requires_grad: false,
        }
    }

    pub fn filled(shape: &[usize], v: S) -> Self {
        let numel: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![v; numel],
            grad: None,
            requires_grad: false,
        }
    }

    pub fn scalar(v: S) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![v],
            grad: None,
            requires_grad: false,
        }
    }

    /// Mark as a differentiable leaf (builder style).
    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Row-major offset of a multi-index.
    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        let mut off = 0;
        for (i, &ix) in idx.iter().enumerate() {
            debug_assert!(ix < self.shape[i]);
            off = off * self.shape[i] + ix;
        }
        off
    }

    pub fn at(&self, idx: &[usize]) -> S {
        self.data[self.offset(idx)]
    }

    /// Convert element type (used to lift f32 weights into f64 checks).
    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|v| T::from_f64(v.to_f64().unwrap()).unwrap())
                .collect(),
            grad: None,
            requires_grad: self.requires_grad,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_extent_product() {
        let t = Tensor::<f32>::from_vec(&[2, 3], vec![0.0; 6]).unwrap();
        assert_eq!(t.numel(), 6);
        assert!(Tensor::<f32>::from_vec(&[2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::<f32>::from_vec(&[2, 0], vec![]).is_err());
    }

    #[test]
    fn row_major_offsets() {
        let t = Tensor::<f64>::from_vec(&[2, 3], (0..6).map(|v| v as f64).collect()).unwrap();
        assert_eq!(t.at(&[0, 0]), 0.0);
        assert_eq!(t.at(&[0, 2]), 2.0);
        assert_eq!(t.at(&[1, 0]), 3.0);
        assert_eq!(t.at(&[1, 2]), 5.0);
    }
}
