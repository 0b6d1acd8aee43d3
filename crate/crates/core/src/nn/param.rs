//! Parameter storage: a value array with a gradient array of the same shape.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// A trainable tensor: row-major values plus an accumulated gradient of
/// identical shape. Gradients are zeroed by the optimizer after each step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamTensor<R> {
    values: Vec<R>,
    grad: Vec<R>,
    rows: usize,
    cols: usize,
}

impl<R: Real> ParamTensor<R> {
    pub fn new(values: Vec<R>, rows: usize, cols: usize) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::dim(format!(
                "parameter of shape {rows}x{cols} needs {} values, got {}",
                rows * cols,
                values.len()
            )));
        }
        let grad = vec![R::zero(); values.len()];
        Ok(Self { values, grad, rows, cols })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            values: vec![R::zero(); rows * cols],
            grad: vec![R::zero(); rows * cols],
            rows,
            cols,
        }
    }

    /// A 1x1 tensor holding a single scalar (used for the temperature).
    pub fn scalar(value: R) -> Self {
        Self { values: vec![value], grad: vec![R::zero()], rows: 1, cols: 1 }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn values(&self) -> &[R] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [R] {
        &mut self.values
    }

    pub fn grad(&self) -> &[R] {
        &self.grad
    }

    pub fn grad_mut(&mut self) -> &mut [R] {
        &mut self.grad
    }

    /// Simultaneous read access to values and write access to gradients.
    pub fn values_and_grad_mut(&mut self) -> (&[R], &mut [R]) {
        (&self.values, &mut self.grad)
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(R::zero());
    }

    /// Checks the value/gradient shape invariant after deserialization.
    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.rows * self.cols {
            return Err(Error::dim("parameter values do not match declared shape"));
        }
        if self.grad.len() != self.values.len() {
            return Err(Error::dim("parameter gradient does not match value shape"));
        }
        Ok(())
    }
}
