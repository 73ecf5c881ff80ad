//! Dense row-major float64 tensors.
//!
//! The architecture only needs vectors and matrices, so no broadcasting or
//! strided views; shape arithmetic stays explicit at call sites.

use serde::{Deserialize, Serialize};

use super::NumericError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, checking that the shape matches the payload.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, NumericError> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(NumericError::ShapeMismatch {
                context: "Tensor::new".into(),
                expected: format!("{numel} elements for shape {shape:?}"),
                got: format!("{}", data.len()),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; numel],
        }
    }

    pub fn scalar(x: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![x],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NumericError> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// Scalar payload; panics if the tensor is not a single element.
    pub fn item(&self) -> f64 {
        assert!(self.is_scalar(), "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    /// Number of rows for a 2-d tensor.
    pub fn rows(&self) -> usize {
        assert_eq!(self.shape.len(), 2, "rows() on shape {:?}", self.shape);
        self.shape[0]
    }

    /// Number of columns for a 2-d tensor.
    pub fn cols(&self) -> usize {
        assert_eq!(self.shape.len(), 2, "cols() on shape {:?}", self.shape);
        self.shape[1]
    }

    /// Row `r` of a 2-d tensor as a slice.
    pub fn row(&self, r: usize) -> &[f64] {
        let cols = self.cols();
        &self.data[r * cols..(r + 1) * cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let cols = self.cols();
        &mut self.data[r * cols..(r + 1) * cols]
    }

    /// NaN/Inf detection; error paths per contract rather than silent poison.
    pub fn check_finite(&self, context: &str) -> Result<(), NumericError> {
        if self.data.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(NumericError::NonFinite {
                context: context.into(),
            })
        }
    }

    /// Fills from a seeded generator, uniform in [lo, hi).
    pub fn fill_uniform(&mut self, rng: &mut super::rng::SplitMix64, lo: f64, hi: f64) {
        for x in &mut self.data {
            *x = rng.uniform(lo, hi);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_payload_must_agree() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
    }

    #[test]
    fn finite_check_flags_nan_and_inf() {
        let t = Tensor::vector(vec![1.0, f64::NAN]);
        assert!(t.check_finite("t").is_err());
        let t = Tensor::vector(vec![1.0, f64::INFINITY]);
        assert!(t.check_finite("t").is_err());
        let t = Tensor::vector(vec![1.0, -2.0]);
        assert!(t.check_finite("t").is_ok());
    }

    #[test]
    fn row_access() {
        let m = Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(m.row(1), &[4.0, 5.0, 6.0]);
    }
}
