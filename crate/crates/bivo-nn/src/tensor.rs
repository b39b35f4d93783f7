//! Row-major dense tensor. The models only need rank 1 and 2.

use crate::NnError;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Tensor, NnError> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(NnError::Shape(format!(
                "shape {shape:?} wants {numel} elements, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Tensor {
        let numel = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; numel],
        }
    }

    pub fn vector(data: Vec<f64>) -> Tensor {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Interpret as a batch of rows: rank 1 is one row, rank 2 is
    /// `[batch, width]`.
    pub fn as_batch(&self) -> Result<(usize, usize, &[f64]), NnError> {
        match self.shape.len() {
            1 => Ok((1, self.shape[0], &self.data)),
            2 => Ok((self.shape[0], self.shape[1], &self.data)),
            _ => Err(NnError::Shape(format!("rank {} tensor is not a batch", self.shape.len()))),
        }
    }
}
