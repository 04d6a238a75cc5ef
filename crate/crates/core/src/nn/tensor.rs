use crate::error::{Error, Result};

use super::scalar::Scalar;

/// Dense row-major N-dimensional array. Activations are laid out NCHW.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
}

/// Single-precision tensor used for training and inference.
pub type TensorF = Tensor<f32>;

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<T>) -> Result<Self> {
        let shape = shape.into();
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::config(format!(
                "shape {shape:?} needs {numel} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: T) -> Self {
        let shape = shape.into();
        let numel = shape.iter().product();
        Self {
            shape,
            data: vec![value; numel],
        }
    }

    pub fn scalar(value: T) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn from_fn(shape: impl Into<Vec<usize>>, mut f: impl FnMut(usize) -> T) -> Self {
        let shape = shape.into();
        let numel: usize = shape.iter().product();
        Self {
            shape,
            data: (0..numel).map(&mut f).collect(),
        }
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

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Interprets the tensor as (batch, channels, height, width).
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        match self.shape[..] {
            [b, c, h, w] => Ok((b, c, h, w)),
            _ => Err(Error::config(format!(
                "expected a 4-D tensor, got shape {:?}",
                self.shape
            ))),
        }
    }

    pub fn reshape(mut self, shape: impl Into<Vec<usize>>) -> Result<Self> {
        let shape = shape.into();
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(Error::config(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn ensure_finite(&self, what: &str) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(i) => Err(Error::NonFinite(format!(
                "{what}: element {i} is {}",
                self.data[i]
            ))),
        }
    }

    /// Element-wise `self += other`.
    pub fn add_assign(&mut self, other: &Tensor<T>) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Converts the element type, e.g. an `f32` model to `f64` for a gradient check.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::from_f64(v.as_f64())).collect(),
        }
    }

    /// One (batch, channel) plane of a 4-D tensor.
    pub fn plane(&self, b: usize, c: usize) -> &[T] {
        let (_, cs, h, w) = self.dims4().expect("plane() on a non-4-D tensor");
        let start = (b * cs + c) * h * w;
        &self.data[start..start + h * w]
    }

    /// Copies batch item `b` of a 4-D tensor into a new 1×C×H×W tensor.
    pub fn batch_item(&self, b: usize) -> Result<Self> {
        let (bs, c, h, w) = self.dims4()?;
        if b >= bs {
            return Err(Error::config(format!("batch index {b} out of range {bs}")));
        }
        let n = c * h * w;
        Tensor::new(vec![1, c, h, w], self.data[b * n..(b + 1) * n].to_vec())
    }

    /// Stacks equally shaped C×H×W (or 1×C×H×W) tensors into a batch.
    pub fn stack(items: &[&Tensor<T>]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::config("cannot stack an empty list"))?;
        let inner: Vec<usize> = match first.shape.len() {
            3 => first.shape.clone(),
            4 if first.shape[0] == 1 => first.shape[1..].to_vec(),
            _ => {
                return Err(Error::config(format!(
                    "stack expects C×H×W items, got {:?}",
                    first.shape
                )))
            }
        };
        let mut data = Vec::with_capacity(first.numel() * items.len());
        for t in items {
            if t.numel() != first.numel() {
                return Err(Error::config("stack items differ in size"));
            }
            data.extend_from_slice(&t.data);
        }
        let mut shape = vec![items.len()];
        shape.extend(inner);
        Tensor::new(shape, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_must_match_data() {
        assert!(Tensor::<f32>::new(vec![2, 3], vec![0.0; 5]).is_err());
        let t = Tensor::<f32>::new(vec![2, 3], vec![0.0; 6]).unwrap();
        assert_eq!(t.numel(), 6);
        assert!(t.clone().reshape(vec![3, 2]).is_ok());
        assert!(t.reshape(vec![4, 2]).is_err());
    }

    #[test]
    fn stack_and_split_batches() {
        let a = Tensor::<f32>::from_fn(vec![2, 2, 2], |i| i as f32);
        let b = Tensor::<f32>::from_fn(vec![2, 2, 2], |i| -(i as f32));
        let s = Tensor::stack(&[&a, &b]).unwrap();
        assert_eq!(s.shape(), &[2, 2, 2, 2]);
        assert_eq!(s.batch_item(1).unwrap().data(), b.data());
        assert_eq!(s.plane(0, 1), &[4.0, 5.0, 6.0, 7.0]);
    }

    #[test]
    fn finiteness_is_reported() {
        let t = Tensor::<f64>::new(vec![3], vec![1.0, f64::NAN, 0.0]).unwrap();
        assert!(!t.all_finite());
        assert!(matches!(t.ensure_finite("t"), Err(Error::NonFinite(_))));
    }
}
