//! Dense row-major tensors.
//!
//! Element precision is fixed when a tensor is built. Values are held as
//! `f64` internally; an `F32` tensor rounds every stored element to the
//! nearest `f32`, so its payload is exactly representable in single
//! precision and serializes without loss.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DType {
    F32,
    F64,
}

impl DType {
    /// On-disk code used by the PZT format.
    pub fn code(self) -> u8 {
        match self {
            DType::F32 => 1,
            DType::F64 => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(DType::F32),
            2 => Some(DType::F64),
            _ => None,
        }
    }

    pub fn size_of(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }

    #[inline]
    pub fn round(self, v: f64) -> f64 {
        match self {
            DType::F32 => v as f32 as f64,
            DType::F64 => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    dtype: DType,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, mut data: Vec<f64>, dtype: DType) -> Result<Self> {
        validate_shape(&shape)?;
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::arg(format!(
                "shape {shape:?} needs {n} elements, got {}",
                data.len()
            )));
        }
        if dtype == DType::F32 {
            data.iter_mut().for_each(|v| *v = dtype.round(*v));
        }
        Ok(Self { shape, data, dtype })
    }

    pub fn from_f32(shape: Vec<usize>, data: &[f32]) -> Result<Self> {
        Self::new(
            shape,
            data.iter().map(|&v| v as f64).collect(),
            DType::F32,
        )
    }

    pub fn from_f64(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        Self::new(shape, data, DType::F64)
    }

    pub fn zeros(shape: &[usize], dtype: DType) -> Result<Self> {
        Self::full(shape, 0.0, dtype)
    }

    pub fn full(shape: &[usize], value: f64, dtype: DType) -> Result<Self> {
        validate_shape(shape)?;
        let n = shape.iter().product();
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![dtype.round(value); n],
            dtype,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// The last two axes as `(H, W)`; leading axes are flattened into a
    /// slice count.
    pub fn grid_dims(&self) -> Result<(usize, usize, usize)> {
        if self.ndim() < 2 {
            return Err(Error::arg(format!(
                "expected at least 2 axes, got shape {:?}",
                self.shape
            )));
        }
        let h = self.shape[self.ndim() - 2];
        let w = self.shape[self.ndim() - 1];
        Ok((self.len() / (h * w), h, w))
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data, self.dtype)
    }

    pub fn cast(&self, dtype: DType) -> Self {
        let mut out = self.clone();
        out.dtype = dtype;
        if dtype == DType::F32 {
            out.data.iter_mut().for_each(|v| *v = dtype.round(*v));
        }
        out
    }

    /// Builds a tensor with the same shape and dtype as `self`.
    pub fn with_data(&self, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), self.data.len(), "with_data: length mismatch");
        let mut t = Self {
            shape: self.shape.clone(),
            data,
            dtype: self.dtype,
        };
        if t.dtype == DType::F32 {
            t.data.iter_mut().for_each(|v| *v = DType::F32.round(*v));
        }
        t
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        self.with_data(self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_with(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.expect_shape(other.shape())?;
        Ok(self.with_data(
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn add(&self, other: &Tensor) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    pub fn sum_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.sum_sq().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f64> {
        self.expect_shape(other.shape())?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn expect_shape(&self, shape: &[usize]) -> Result<()> {
        if self.shape != shape {
            return Err(Error::arg(format!(
                "shape mismatch: {:?} vs {:?}",
                self.shape, shape
            )));
        }
        Ok(())
    }

    /// Contiguous sub-tensor along axis 0.
    pub fn index_axis0(&self, i: usize) -> Result<Self> {
        if self.ndim() < 2 || i >= self.shape[0] {
            return Err(Error::arg(format!(
                "index {i} out of range for shape {:?}",
                self.shape
            )));
        }
        let stride = self.len() / self.shape[0];
        Ok(Self {
            shape: self.shape[1..].to_vec(),
            data: self.data[i * stride..(i + 1) * stride].to_vec(),
            dtype: self.dtype,
        })
    }

    /// Stacks equally shaped tensors along a new leading axis.
    pub fn stack(items: &[Tensor]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::arg("cannot stack zero tensors"))?;
        let mut shape = vec![items.len()];
        shape.extend_from_slice(first.shape());
        let mut data = Vec::with_capacity(first.len() * items.len());
        for t in items {
            t.expect_shape(first.shape())?;
            data.extend_from_slice(&t.data);
        }
        Self::new(shape, data, first.dtype)
    }
}

fn validate_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() {
        return Err(Error::arg("tensor needs at least one axis"));
    }
    if shape.contains(&0) {
        return Err(Error::arg(format!(
            "all dimension sizes must be >= 1, got {shape:?}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(Tensor::from_f64(vec![2, 0], vec![]).is_err());
        assert!(Tensor::from_f64(vec![], vec![]).is_err());
        assert!(Tensor::from_f64(vec![2, 2], vec![1.0; 3]).is_err());
    }

    #[test]
    fn f32_tensors_round_on_construction() {
        let t = Tensor::new(vec![1], vec![0.1], DType::F32).unwrap();
        assert_eq!(t.data()[0], 0.1f32 as f64);
        let s = t.scale(3.0);
        assert_eq!(s.data()[0], (0.1f32 as f64 * 3.0) as f32 as f64);
    }

    #[test]
    fn grid_dims_flatten_leading_axes() {
        let t = Tensor::zeros(&[2, 3, 4, 5], DType::F64).unwrap();
        assert_eq!(t.grid_dims().unwrap(), (6, 4, 5));
        let v = Tensor::zeros(&[5], DType::F64).unwrap();
        assert!(v.grid_dims().is_err());
    }

    #[test]
    fn stack_and_index_roundtrip() {
        let a = Tensor::from_f64(vec![2], vec![1.0, 2.0]).unwrap();
        let b = Tensor::from_f64(vec![2], vec![3.0, 4.0]).unwrap();
        let s = Tensor::stack(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(s.shape(), &[2, 2]);
        assert_eq!(s.index_axis0(1).unwrap(), b);
    }
}
