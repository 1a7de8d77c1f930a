//! Evaluation metrics for predicted point sets.
//!
//! All metrics expect sets normalized to a unit bounding-box diagonal and
//! average over the points of both sets.

use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::losses::shape_loss;
use crate::scalar::{to_f64, Real};
use crate::spatial::{PointSet, SpatialIndex};

pub const SEPARATION_THRESHOLD: f64 = 0.02;
pub const PATCH_FRACTION: f64 = 0.003;
/// Slack on the unit-diagonal precondition.
const NORMALIZED_TOL: f64 = 1e-6;

fn check_normalized<T: Real>(truth: &PointSet<T>) -> Result<()> {
    let d = to_f64(truth.diagonal());
    if d > 1.0 + NORMALIZED_TOL {
        return Err(Error::Precondition(format!(
            "reference set has bounding-box diagonal {d}; normalize it to 1 first"
        )));
    }
    Ok(())
}

fn check_pair<T: Real>(pred: &PointSet<T>, truth: &PointSet<T>) -> Result<()> {
    pred.check_same_dim(truth)?;
    if pred.is_empty() || truth.is_empty() {
        return Err(Error::Precondition("metrics need non-empty sets".into()));
    }
    check_normalized(truth)
}

/// Share of points in either set whose closest point in the other set is
/// farther than `threshold`.
pub fn separation_rate<T: Real>(pred: &PointSet<T>, truth: &PointSet<T>, threshold: f64) -> Result<f64> {
    check_pair(pred, truth)?;
    let ip = SpatialIndex::new(pred)?;
    let it = SpatialIndex::new(truth)?;
    let far = |ps: &PointSet<T>, other: &SpatialIndex<T>| -> Result<usize> {
        let mut n = 0;
        for p in ps.iter() {
            if to_f64(other.nearest(p)?.distance) > threshold {
                n += 1;
            }
        }
        Ok(n)
    };
    let separated = far(pred, &it)? + far(truth, &ip)?;
    Ok(separated as f64 / (pred.len() + truth.len()) as f64)
}

/// Number of points in a local patch: `max(3, round(fraction · n))`, at most `n`.
pub fn patch_size(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64).round() as usize).max(3).min(n)
}

/// Eigen-analysis of one patch covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchShape {
    /// `λ_min / Σλ`; 0 for a degenerate patch.
    pub indicator: f64,
    /// Unit eigenvector of the smallest eigenvalue.
    pub normal: Vec<f64>,
    /// All patch points coincide.
    pub degenerate: bool,
}

fn patch_shape<T: Real>(ps: &PointSet<T>, index: &SpatialIndex<T>, p: &[T], k: usize) -> Result<PatchShape> {
    let dim = ps.dim();
    let nbrs = index.knn(p, k, false)?;
    let mut mean = vec![0.0; dim];
    for n in &nbrs {
        for (m, &v) in mean.iter_mut().zip(ps.point(n.index)) {
            *m += to_f64(v);
        }
    }
    mean.iter_mut().for_each(|m| *m /= nbrs.len() as f64);
    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    for n in &nbrs {
        let q = ps.point(n.index);
        for r in 0..dim {
            for c in 0..dim {
                cov[(r, c)] += (to_f64(q[r]) - mean[r]) * (to_f64(q[c]) - mean[c]);
            }
        }
    }
    cov /= nbrs.len() as f64;
    let eig = SymmetricEigen::new(cov);
    let (imin, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty spectrum");
    let lambda: Vec<f64> = eig.eigenvalues.iter().map(|l| l.max(0.0)).collect();
    let total: f64 = lambda.iter().sum();
    let normal = eig.eigenvectors.column(imin).iter().copied().collect();
    let first = ps.point(nbrs[0].index);
    if total <= 0.0 || nbrs.iter().all(|n| ps.point(n.index) == first) {
        return Ok(PatchShape {
            indicator: 0.0,
            normal,
            degenerate: true,
        });
    }
    Ok(PatchShape {
        indicator: lambda[imin] / total,
        normal,
        degenerate: false,
    })
}

/// Curvature indicator `λ0 / (λ0 + … )` of the patch around `p` in `ps`;
/// at most `1/dim`.
pub fn curvature_indicator<T: Real>(p: &[T], ps: &PointSet<T>, patch_fraction: f64) -> Result<PatchShape> {
    if ps.is_empty() {
        return Err(Error::Precondition("curvature of an empty set".into()));
    }
    let index = SpatialIndex::new(ps)?;
    patch_shape(ps, &index, p, patch_size(ps.len(), patch_fraction))
}

fn shapes<T: Real>(ps: &PointSet<T>, fraction: f64) -> Result<Vec<PatchShape>> {
    let index = SpatialIndex::new(ps)?;
    let k = patch_size(ps.len(), fraction);
    ps.iter().map(|p| patch_shape(ps, &index, p, k)).collect()
}

/// Mean over both sets of `f(own patch, patch of the closest opposite point)`.
fn matched_mean<T: Real>(
    pred: &PointSet<T>,
    truth: &PointSet<T>,
    fraction: f64,
    f: impl Fn(&PatchShape, &PatchShape) -> f64,
) -> Result<f64> {
    let sp = shapes(pred, fraction)?;
    let st = shapes(truth, fraction)?;
    let ip = SpatialIndex::new(pred)?;
    let it = SpatialIndex::new(truth)?;
    let mut sum = 0.0;
    for (p, s) in pred.iter().zip(&sp) {
        sum += f(s, &st[it.nearest(p)?.index]);
    }
    for (q, s) in truth.iter().zip(&st) {
        sum += f(s, &sp[ip.nearest(q)?.index]);
    }
    Ok(sum / (pred.len() + truth.len()) as f64)
}

/// Mean absolute curvature-indicator gap between matched closest points.
pub fn curvature_difference<T: Real>(pred: &PointSet<T>, truth: &PointSet<T>, patch_fraction: f64) -> Result<f64> {
    check_pair(pred, truth)?;
    matched_mean(pred, truth, patch_fraction, |a, b| (a.indicator - b.indicator).abs())
}

/// Mean angle in `[0, π/2]` between unoriented PCA normals of matched
/// closest points; 3D only.
pub fn normal_difference<T: Real>(pred: &PointSet<T>, truth: &PointSet<T>, patch_fraction: f64) -> Result<f64> {
    check_pair(pred, truth)?;
    if pred.dim() != 3 {
        return Err(Error::Unsupported(format!(
            "normal difference is defined for 3-d sets, not {}-d",
            pred.dim()
        )));
    }
    matched_mean(pred, truth, patch_fraction, |a, b| {
        // atan2 of cross and dot stays exact near 0, where acos(dot) does not
        let (u, v) = (&a.normal, &b.normal);
        let dot: f64 = u.iter().zip(v.iter()).map(|(x, y)| x * y).sum();
        let cross = [
            u[1] * v[2] - u[2] * v[1],
            u[2] * v[0] - u[0] * v[2],
            u[0] * v[1] - u[1] * v[0],
        ];
        let sin = cross.iter().map(|c| c * c).sum::<f64>().sqrt();
        sin.atan2(dot.abs())
    })
}

/// Corpus entry with the smallest shape distance to `query`; ties go to the
/// lower index.
pub fn retrieve_closest<T: Real>(query: &PointSet<T>, corpus: &[PointSet<T>]) -> Result<(usize, T)> {
    let mut best: Option<(usize, T)> = None;
    for (i, c) in corpus.iter().enumerate() {
        let d = shape_loss(query, c)?;
        if best.map_or(true, |(_, b)| d < b) {
            best = Some((i, d));
        }
    }
    best.ok_or_else(|| Error::Precondition("retrieval corpus is empty".into()))
}

/// Metrics of one prediction.
#[derive(Clone, Debug, PartialEq)]
pub struct ExampleMetrics {
    pub name: String,
    pub separation_rate: f64,
    pub curvature_diff: f64,
    /// `None` where normals do not apply.
    pub normal_diff: Option<f64>,
}

/// Per-example metrics and their means.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsReport {
    pub separation_rate: f64,
    pub mean_curvature_diff: f64,
    pub mean_normal_diff: Option<f64>,
    pub examples: Vec<ExampleMetrics>,
}

impl ExampleMetrics {
    /// All metrics for one prediction; normals are skipped for 2D sets and
    /// when `normals` is false.
    pub fn compute<T: Real>(name: &str, pred: &PointSet<T>, truth: &PointSet<T>, normals: bool) -> Result<Self> {
        Ok(Self {
            name: name.into(),
            separation_rate: separation_rate(pred, truth, SEPARATION_THRESHOLD)?,
            curvature_diff: curvature_difference(pred, truth, PATCH_FRACTION)?,
            normal_diff: if normals && pred.dim() == 3 {
                Some(normal_difference(pred, truth, PATCH_FRACTION)?)
            } else {
                None
            },
        })
    }
}

impl MetricsReport {
    pub fn from_examples(examples: Vec<ExampleMetrics>) -> Self {
        let n = examples.len().max(1) as f64;
        let normals: Vec<f64> = examples.iter().filter_map(|e| e.normal_diff).collect();
        Self {
            separation_rate: examples.iter().map(|e| e.separation_rate).sum::<f64>() / n,
            mean_curvature_diff: examples.iter().map(|e| e.curvature_diff).sum::<f64>() / n,
            mean_normal_diff: (!normals.is_empty())
                .then(|| normals.iter().sum::<f64>() / normals.len() as f64),
            examples,
        }
    }

    /// Aligned plain-text table, one row per example plus the mean row.
    pub fn table(&self) -> String {
        let na = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.6}"));
        let width = self
            .examples
            .iter()
            .map(|e| e.name.len())
            .chain([7])
            .max()
            .unwrap();
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:>15}  {:>15}  {:>15}",
            "example", "separation rate", "curvature diff.", "normal diff."
        );
        let row = |out: &mut String, name: &str, s: f64, c: f64, n: Option<f64>| {
            let _ = writeln!(
                out,
                "{:<width$}  {:>15}  {:>15.6}  {:>15}",
                name,
                format!("{:.4}%", 100.0 * s),
                c,
                na(n)
            );
        };
        for e in &self.examples {
            row(&mut out, &e.name, e.separation_rate, e.curvature_diff, e.normal_diff);
        }
        row(
            &mut out,
            "mean",
            self.separation_rate,
            self.mean_curvature_diff,
            self.mean_normal_diff,
        );
        out
    }

    /// `key=value` records: one line per example, then the means.
    pub fn records(&self) -> String {
        let na = |v: Option<f64>| v.map_or_else(|| "na".to_string(), |x| x.to_string());
        let mut out = String::new();
        for e in &self.examples {
            let _ = writeln!(
                out,
                "example={} separation_rate={} curvature_diff={} normal_diff={}",
                e.name,
                e.separation_rate,
                e.curvature_diff,
                na(e.normal_diff)
            );
        }
        let _ = writeln!(
            out,
            "mean separation_rate={} curvature_diff={} normal_diff={}",
            self.separation_rate,
            self.mean_curvature_diff,
            na(self.mean_normal_diff)
        );
        out
    }
}
