use crate::datasynth::Normalization;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::spatial::PointSet;

/// One training example: a source set, a target set and the transform that
/// normalized them.
#[derive(Clone, Debug, PartialEq)]
pub struct Pair<T> {
    pub x: PointSet<T>,
    pub y: PointSet<T>,
    pub norm: Normalization,
}

/// Paired point sets of two domains; members of a pair may differ in size.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedDataset<T> {
    pub x_domain: String,
    pub y_domain: String,
    pub pairs: Vec<Pair<T>>,
}

impl<T: Real> PairedDataset<T> {
    pub fn new(x_domain: &str, y_domain: &str, pairs: Vec<Pair<T>>) -> Result<Self> {
        let ds = Self {
            x_domain: x_domain.into(),
            y_domain: y_domain.into(),
            pairs,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.pairs.first().map(|p| p.x.dim())
    }

    pub fn validate(&self) -> Result<()> {
        let Some(dim) = self.dim() else {
            return Ok(());
        };
        for (i, p) in self.pairs.iter().enumerate() {
            if p.x.is_empty() || p.y.is_empty() {
                return Err(Error::Contract(format!("pair {i} has an empty member")));
            }
            if p.x.dim() != dim || p.y.dim() != dim {
                return Err(Error::Dimension(format!(
                    "pair {i} is {}-d/{}-d in a {dim}-d dataset",
                    p.x.dim(),
                    p.y.dim()
                )));
            }
            if p.norm.center.len() != dim {
                return Err(Error::Dimension(format!(
                    "pair {i} normalization center has {} coordinates",
                    p.norm.center.len()
                )));
            }
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> PairedDataset<U> {
        PairedDataset {
            x_domain: self.x_domain.clone(),
            y_domain: self.y_domain.clone(),
            pairs: self
                .pairs
                .iter()
                .map(|p| Pair {
                    x: p.x.cast(),
                    y: p.y.cast(),
                    norm: p.norm.clone(),
                })
                .collect(),
        }
    }
}
