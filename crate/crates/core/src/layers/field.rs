use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::spatial::PointSet;

/// One displacement vector per source point, aligned by index.
#[derive(Clone, Debug, PartialEq)]
pub struct DisplacementField<T> {
    dim: usize,
    vectors: Vec<T>,
}

impl<T: Real> DisplacementField<T> {
    pub fn new(dim: usize, vectors: Vec<T>) -> Result<Self> {
        if dim == 0 || vectors.len() % dim != 0 {
            return Err(Error::Dimension(format!(
                "{} values do not form {dim}-d vectors",
                vectors.len()
            )));
        }
        if vectors.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite displacement".into()));
        }
        Ok(Self { dim, vectors })
    }

    pub fn zeros(dim: usize, n: usize) -> Self {
        Self {
            dim,
            vectors: vec![T::zero(); n * dim],
        }
    }

    pub fn from_tensor(t: &Tensor<T>) -> Result<Self> {
        match t.shape() {
            [_, d] => Self::new(*d, t.data().to_vec()),
            s => Err(Error::Dimension(format!("displacements of shape {s:?}"))),
        }
    }

    pub fn to_tensor(&self) -> Tensor<T> {
        Tensor::new(vec![self.len(), self.dim], self.vectors.clone()).expect("consistent field")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vector(&self, i: usize) -> &[T] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn vectors(&self) -> &[T] {
        &self.vectors
    }

    pub fn negated(&self) -> Self {
        Self {
            dim: self.dim,
            vectors: self.vectors.iter().map(|&v| -v).collect(),
        }
    }
}

/// `x + d`, point by point.
pub fn apply_displacements<T: Real>(
    x: &PointSet<T>,
    d: &DisplacementField<T>,
) -> Result<PointSet<T>> {
    if x.len() != d.len() || x.dim() != d.dim() {
        return Err(Error::Contract(format!(
            "{} displacements of dim {} for {} points of dim {}",
            d.len(),
            d.dim(),
            x.len(),
            x.dim()
        )));
    }
    let coords = x
        .coords()
        .iter()
        .zip(d.vectors())
        .map(|(&p, &v)| p + v)
        .collect();
    PointSet::new(x.dim(), coords)
}
