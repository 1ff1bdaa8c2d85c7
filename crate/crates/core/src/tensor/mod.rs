//! A small double-precision tensor engine with reverse-mode differentiation.
//!
//! Sequence tensors use the `[batch, channels, length]` layout, row-major.

mod conv;
mod optim;
mod tape;

pub use conv::{conv1d, conv1d_transpose, ConvGeometry, Padding};
pub use optim::{AdamState, Parameter};
pub use tape::{DropoutMode, Gradients, Tape, Var};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.len() > 3 {
            return Err(Error::invalid(format!("tensor rank must be 1..=3, got {}", shape.len())));
        }
        if shape.contains(&0) {
            return Err(Error::invalid(format!("tensor dimensions must be positive, got {shape:?}")));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::invalid(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![value; n] }
    }

    pub fn scalar(value: f64) -> Self {
        Self { shape: vec![1], data: vec![value] }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Self { shape: vec![data.len()], data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        self.shape == other.shape
    }

    /// Dimensions of a rank-3 tensor.
    pub fn dims3(&self, what: &str) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [a, b, c] => Ok((a, b, c)),
            _ => Err(Error::invalid(format!("{what} must be rank 3, got shape {:?}", self.shape))),
        }
    }

    pub fn dot(&self, other: &Tensor) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Stacks equal-shaped tensors along a new leading batch axis.
    pub fn stack(items: &[Tensor]) -> Result<Tensor> {
        let first = items.first().ok_or_else(|| Error::invalid("cannot stack zero tensors"))?;
        let mut shape = vec![items.len()];
        shape.extend_from_slice(&first.shape);
        if shape.len() > 3 {
            return Err(Error::invalid("stacked tensor would exceed rank 3"));
        }
        let mut data = Vec::with_capacity(items.len() * first.len());
        for t in items {
            if t.shape != first.shape {
                return Err(Error::invalid(format!(
                    "cannot stack shapes {:?} and {:?}",
                    first.shape, t.shape
                )));
            }
            data.extend_from_slice(&t.data);
        }
        Tensor::new(shape, data)
    }

    /// Splits a tensor along its leading axis.
    pub fn unstack(&self) -> Vec<Tensor> {
        let inner: Vec<usize> = if self.shape.len() > 1 { self.shape[1..].to_vec() } else { vec![1] };
        let n: usize = inner.iter().product();
        self.data
            .chunks_exact(n)
            .map(|c| Tensor { shape: inner.clone(), data: c.to_vec() })
            .collect()
    }
}

/// Mean absolute elementwise difference between `x` and `y`.
pub fn mae(x: &Tensor, y: &Tensor) -> Result<f64> {
    if !x.same_shape(y) {
        return Err(Error::invalid(format!(
            "mae shape mismatch {:?} vs {:?}",
            x.shape(),
            y.shape()
        )));
    }
    let sum: f64 = x.data.iter().zip(&y.data).map(|(a, b)| (a - b).abs()).sum();
    Ok(sum / x.len() as f64)
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| if v > 0.0 { v } else { 0.0 })
}

/// Dropout outside a tape; see [`Tape::dropout`].
pub fn dropout(x: &Tensor, rate: f64, mode: DropoutMode) -> Result<Tensor> {
    let mut tape = Tape::new();
    let v = tape.leaf(x.clone());
    let out = tape.dropout(v, rate, mode)?;
    Ok(tape.value(out).clone())
}
