use crate::error::{Error, Result};
use crate::scalar::Real;

/// Ordered list of points with optional per-point feature channels.
///
/// Shapes are 2D or 3D; higher dimensions appear only for the lifted
/// displacement endpoints used by the cross regularizer.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSet<T> {
    dim: usize,
    coords: Vec<T>,
    features: Option<Features<T>>,
}

/// `n × channels` feature block aligned with a [`PointSet`].
#[derive(Clone, Debug, PartialEq)]
pub struct Features<T> {
    pub channels: usize,
    pub values: Vec<T>,
}

impl<T: Real> PointSet<T> {
    /// Wraps a flat `n × dim` coordinate array.
    pub fn new(dim: usize, coords: Vec<T>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Dimension("zero-dimensional points".into()));
        }
        if coords.len() % dim != 0 {
            return Err(Error::Dimension(format!(
                "{} coordinates do not split into {dim}-d points",
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::Numeric("non-finite coordinate".into()));
        }
        Ok(Self {
            dim,
            coords,
            features: None,
        })
    }

    pub fn from_points(dim: usize, points: &[Vec<T>]) -> Result<Self> {
        if let Some(p) = points.iter().find(|p| p.len() != dim) {
            return Err(Error::Dimension(format!(
                "point of length {} in a {dim}-d set",
                p.len()
            )));
        }
        Self::new(dim, points.iter().flatten().copied().collect())
    }

    pub fn empty(dim: usize) -> Result<Self> {
        Self::new(dim, Vec::new())
    }

    pub fn with_features(mut self, channels: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != self.len() * channels {
            return Err(Error::Dimension(format!(
                "{} feature values for {} points × {channels} channels",
                values.len(),
                self.len()
            )));
        }
        self.features = Some(Features { channels, values });
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[T] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn coords(&self) -> &[T] {
        &self.coords
    }

    pub fn coords_mut(&mut self) -> &mut [T] {
        &mut self.coords
    }

    pub fn features(&self) -> Option<&Features<T>> {
        self.features.as_ref()
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[T]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    /// Points at the given indices, in order. Features are carried along.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let n = self.len();
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::Index { index: bad, len: n });
        }
        let coords = indices.iter().flat_map(|&i| self.point(i)).copied().collect();
        let features = self.features.as_ref().map(|f| Features {
            channels: f.channels,
            values: indices
                .iter()
                .flat_map(|&i| &f.values[i * f.channels..(i + 1) * f.channels])
                .copied()
                .collect(),
        });
        Ok(Self {
            dim: self.dim,
            coords,
            features,
        })
    }

    /// Concatenation of two sets of the same dimension; features are dropped.
    pub fn union(&self, other: &Self) -> Result<Self> {
        self.check_same_dim(other)?;
        let mut coords = self.coords.clone();
        coords.extend_from_slice(&other.coords);
        Self::new(self.dim, coords)
    }

    pub fn check_same_dim(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::Dimension(format!(
                "{}-d set against {}-d set",
                self.dim, other.dim
            )));
        }
        Ok(())
    }

    /// Axis-aligned bounds as `(min, max)` per coordinate.
    pub fn bounds(&self) -> Option<(Vec<T>, Vec<T>)> {
        let mut it = self.iter();
        let first = it.next()?;
        let (mut lo, mut hi) = (first.to_vec(), first.to_vec());
        for p in it {
            for k in 0..self.dim {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        Some((lo, hi))
    }

    /// Length of the bounding-box diagonal (0 for an empty set).
    pub fn diagonal(&self) -> T {
        self.bounds().map_or(T::zero(), |(lo, hi)| {
            lo.iter()
                .zip(&hi)
                .map(|(&a, &b)| (b - a) * (b - a))
                .sum::<T>()
                .sqrt()
        })
    }

    /// Arithmetic mean of the points.
    pub fn centroid(&self) -> Vec<T> {
        let mut c = vec![T::zero(); self.dim];
        for p in self.iter() {
            c.iter_mut().zip(p).for_each(|(a, &b)| *a += b);
        }
        let n = T::from_usize(self.len().max(1)).unwrap();
        c.iter_mut().for_each(|a| *a /= n);
        c
    }

    /// Converts the coordinates into another scalar type.
    pub fn cast<U: Real>(&self) -> PointSet<U> {
        PointSet {
            dim: self.dim,
            coords: self
                .coords
                .iter()
                .map(|&v| U::from_f64(v.to_f64().unwrap()).unwrap())
                .collect(),
            features: self.features.as_ref().map(|f| Features {
                channels: f.channels,
                values: f
                    .values
                    .iter()
                    .map(|&v| U::from_f64(v.to_f64().unwrap()).unwrap())
                    .collect(),
            }),
        }
    }
}

/// Squared Euclidean distance, accumulated coordinate by coordinate.
#[inline]
pub fn dist2<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .fold(T::zero(), |acc, v| acc + v)
}

#[inline]
pub fn dist<T: Real>(a: &[T], b: &[T]) -> T {
    dist2(a, b).sqrt()
}
