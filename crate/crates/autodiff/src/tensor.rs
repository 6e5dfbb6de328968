use crate::{AutodiffError, Element};

/// Row-major dense array.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Element> Tensor<T> {
    pub fn new(shape: &[usize], data: Vec<T>) -> Result<Self, AutodiffError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(AutodiffError::InvalidArgument {
                op: "tensor",
                detail: format!("shape {shape:?} needs {expected} elements, got {}", data.len()),
            });
        }
        Ok(Self { shape: shape.to_vec(), data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        Self { shape: shape.to_vec(), data: vec![value; shape.iter().product()] }
    }

    pub fn scalar(value: T) -> Self {
        Self { shape: Vec::new(), data: vec![value] }
    }

    pub fn from_f64(shape: &[usize], data: &[f64]) -> Result<Self, AutodiffError> {
        Self::new(shape, data.iter().map(|&x| T::from_f64(x)).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> T {
        assert_eq!(self.data.len(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    pub fn last_dim(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }

    pub fn reshaped(mut self, shape: &[usize]) -> Result<Self, AutodiffError> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(AutodiffError::ShapeMismatch { op: "reshape", left: self.shape, right: shape.to_vec() });
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn cast<U: Element>(&self) -> Tensor<U> {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|x| U::from_f64(x.as_f64())).collect() }
    }
}
