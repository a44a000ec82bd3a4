use ndarray::Array2;

use crate::error::{Error, Result};

/// A finite rank-≤2 array of `f64`. Vectors are stored as `1 × n` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor(Array2<f64>);

impl Tensor {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("Tensor::new"));
        }
        Ok(Tensor(values))
    }

    pub fn from_vec(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        let a = Array2::from_shape_vec((rows, cols), values)
            .map_err(|e| Error::shape("Tensor::from_vec", e.to_string()))?;
        Tensor::new(a)
    }

    pub fn row(values: &[f64]) -> Result<Self> {
        Tensor::from_vec(1, values.len(), values.to_vec())
    }

    pub fn scalar(x: f64) -> Result<Self> {
        Tensor::from_vec(1, 1, vec![x])
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor(Array2::zeros((rows, cols)))
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.dim()
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }
}

impl AsRef<Array2<f64>> for Tensor {
    fn as_ref(&self) -> &Array2<f64> {
        &self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite() {
        assert!(Tensor::row(&[1.0, f64::NAN]).is_err());
        assert!(Tensor::scalar(f64::INFINITY).is_err());
        assert!(Tensor::from_vec(2, 2, vec![0.0; 3]).is_err());
        assert_eq!(Tensor::row(&[1.0, 2.0]).unwrap().shape(), (1, 2));
    }
}
