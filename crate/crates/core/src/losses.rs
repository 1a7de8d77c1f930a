//! Correspondence-free training losses.
//!
//! Each loss is recorded on an autodiff [`Graph`] so its gradient with
//! respect to the predicted displacements comes from the same code path as
//! its value. Nearest-neighbor assignments are recomputed from the current
//! values on every call and treated as constants during the backward sweep.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::layers::DisplacementField;
use crate::scalar::{lit, Real};
use crate::spatial::{dist2, PointSet, SpatialIndex};

/// Weights of the combined objective.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub lambda_density: f64,
    pub mu_reg: f64,
    pub k_density: usize,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_density: 1.0,
            mu_reg: 0.1,
            k_density: 8,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_density >= 0.0 && self.mu_reg >= 0.0) || self.k_density == 0 {
            return Err(Error::Config(format!(
                "loss weights must be non-negative with k_density ≥ 1: {self:?}"
            )));
        }
        Ok(())
    }
}

/// All five loss terms of one bidirectional evaluation plus their total.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown<T> {
    pub shape_xy: T,
    pub density_xy: T,
    pub shape_yx: T,
    pub density_yx: T,
    pub cross_reg: T,
    pub total: T,
}

impl<T: Real> LossBreakdown<T> {
    /// `shape_xy + λ·density_xy + shape_yx + λ·density_yx (+ μ·cross_reg)`.
    pub fn recompose(&self, w: &LossWeights, include_reg: bool) -> T {
        let lambda: T = lit(w.lambda_density);
        let mut t = self.shape_xy + lambda * self.density_xy + self.shape_yx
            + lambda * self.density_yx;
        if include_reg {
            t += lit::<T>(w.mu_reg) * self.cross_reg;
        }
        t
    }

    pub fn add_assign(&mut self, o: &Self) {
        self.shape_xy += o.shape_xy;
        self.density_xy += o.density_xy;
        self.shape_yx += o.shape_yx;
        self.density_yx += o.density_yx;
        self.cross_reg += o.cross_reg;
        self.total += o.total;
    }

    pub fn scaled(&self, s: T) -> Self {
        Self {
            shape_xy: self.shape_xy * s,
            density_xy: self.density_xy * s,
            shape_yx: self.shape_yx * s,
            density_yx: self.density_yx * s,
            cross_reg: self.cross_reg * s,
            total: self.total * s,
        }
    }

    pub fn is_finite(&self) -> bool {
        [
            self.shape_xy,
            self.density_xy,
            self.shape_yx,
            self.density_yx,
            self.cross_reg,
            self.total,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Graph nodes of a recorded combined loss.
#[derive(Clone, Copy, Debug)]
pub struct LossNodes {
    pub shape_xy: Var,
    pub density_xy: Var,
    pub shape_yx: Var,
    pub density_yx: Var,
    pub cross_reg: Var,
    pub total: Var,
}

impl LossNodes {
    pub fn values<T: Real>(&self, g: &Graph<T>) -> LossBreakdown<T> {
        let v = |n: Var| g.value(n).data()[0];
        LossBreakdown {
            shape_xy: v(self.shape_xy),
            density_xy: v(self.density_xy),
            shape_yx: v(self.shape_yx),
            density_yx: v(self.density_yx),
            cross_reg: v(self.cross_reg),
            total: v(self.total),
        }
    }
}

fn as_point_set<T: Real>(g: &Graph<T>, v: Var) -> Result<PointSet<T>> {
    match g.shape(v) {
        [_, d] => PointSet::new(*d, g.value(v).data().to_vec()),
        s => Err(Error::Dimension(format!("expected an n×dim matrix, got {s:?}"))),
    }
}

fn set_tensor<T: Real>(ps: &PointSet<T>) -> Tensor<T> {
    Tensor::new(vec![ps.len(), ps.dim()], ps.coords().to_vec()).expect("consistent point set")
}

/// Symmetric sum of closest-point distances between two recorded point
/// matrices; gradients reach whichever side is tracked.
pub fn chamfer_node<T: Real>(g: &mut Graph<T>, a: Var, b: Var) -> Result<Var> {
    let pa = as_point_set(g, a)?;
    let pb = as_point_set(g, b)?;
    pa.check_same_dim(&pb)?;
    if pa.is_empty() || pb.is_empty() {
        return Err(Error::Contract("closest-point sum over an empty set".into()));
    }
    let ia = SpatialIndex::new(&pa)?;
    let ib = SpatialIndex::new(&pb)?;
    let a_to_b: Vec<usize> = pa
        .iter()
        .map(|p| ib.nearest(p).map(|n| n.index))
        .collect::<Result<_>>()?;
    let b_to_a: Vec<usize> = pb
        .iter()
        .map(|p| ia.nearest(p).map(|n| n.index))
        .collect::<Result<_>>()?;

    let matched_b = g.gather_points(b, &a_to_b)?;
    let d_ab = g.sub(a, matched_b)?;
    let n_ab = g.row_norm(d_ab)?;
    let s_ab = g.sum(n_ab);

    let matched_a = g.gather_points(a, &b_to_a)?;
    let d_ba = g.sub(b, matched_a)?;
    let n_ba = g.row_norm(d_ba)?;
    let s_ba = g.sum(n_ba);

    g.add(s_ba, s_ab)
}

/// Records the shape term for a tracked prediction against a fixed target.
pub fn shape_loss_node<T: Real>(g: &mut Graph<T>, pred: Var, target: &PointSet<T>) -> Result<Var> {
    let t = g.constant(set_tensor(target));
    chamfer_node(g, pred, t)
}

/// Ascending distances from `p` to its `k` nearest members of `ps`.
///
/// `k` is clamped to the available candidates; with `exclude_coincident`,
/// members at distance zero are skipped.
pub fn density_vector<T: Real>(
    p: &[T],
    ps: &PointSet<T>,
    k: usize,
    exclude_coincident: bool,
) -> Result<Vec<T>> {
    let index = SpatialIndex::new(ps)?;
    Ok(index
        .knn(p, k, exclude_coincident)?
        .into_iter()
        .map(|n| n.distance)
        .collect())
}

fn non_coincident<T: Real>(set: &PointSet<T>, index: &SpatialIndex<'_, T>, p: &[T]) -> usize {
    let touching = index.nearest(p).is_ok_and(|n| n.distance == T::zero());
    if touching {
        set.iter().filter(|q| dist2(p, q) != T::zero()).count()
    } else {
        set.len()
    }
}

/// Neighbor count shared by both density vectors of every target point.
fn effective_k<T: Real>(pred: &PointSet<T>, target: &PointSet<T>, k: usize) -> Result<usize> {
    let pred_idx = SpatialIndex::new(pred)?;
    let target_idx = SpatialIndex::new(target)?;
    Ok(target
        .iter()
        .map(|p| {
            non_coincident(pred, &pred_idx, p).min(non_coincident(target, &target_idx, p))
        })
        .fold(k, usize::min))
}

/// Records the density term for a tracked prediction against a fixed target.
pub fn density_loss_node<T: Real>(
    g: &mut Graph<T>,
    pred: Var,
    target: &PointSet<T>,
    k: usize,
) -> Result<Var> {
    let pp = as_point_set(g, pred)?;
    pp.check_same_dim(target)?;
    if pp.is_empty() || target.is_empty() {
        return Err(Error::Contract("density loss over an empty set".into()));
    }
    if k == 0 {
        return Err(Error::Contract("density loss with k = 0".into()));
    }
    let k_eff = effective_k(&pp, target, k)?;
    if k_eff == 0 {
        return Err(Error::Contract(
            "density loss has no neighbor candidates after exclusion".into(),
        ));
    }
    let t_idx = SpatialIndex::new(target)?;
    let p_idx = SpatialIndex::new(&pp)?;
    let dim = target.dim();
    let mut nbr = Vec::with_capacity(target.len() * k_eff);
    let mut anchors = Vec::with_capacity(target.len() * k_eff * dim);
    let mut target_d = Vec::with_capacity(target.len() * k_eff);
    for p in target.iter() {
        let own = t_idx.knn(p, k_eff, true)?;
        let other = p_idx.knn(p, k_eff, true)?;
        for (o, t) in other.iter().zip(&own).take(k_eff) {
            nbr.push(o.index);
            anchors.extend_from_slice(p);
            target_d.push(t.distance);
        }
    }
    let m = nbr.len();
    let picked = g.gather_points(pred, &nbr)?;
    let anchor = g.constant(Tensor::new(vec![m, dim], anchors)?);
    let offs = g.sub(picked, anchor)?;
    let pred_d = g.row_norm(offs)?;
    let own_d = g.constant(Tensor::vector(target_d));
    let gap = g.sub(own_d, pred_d)?;
    let gap = g.abs(gap);
    let total = g.sum(gap);
    Ok(g.scale(total, T::one() / T::from_usize(k_eff).unwrap()))
}

fn check_field<T: Real>(ps: &PointSet<T>, field: &[usize], what: &str) -> Result<()> {
    if field != [ps.len(), ps.dim()] {
        return Err(Error::Contract(format!(
            "{what} displacement shape {field:?} does not match {} points of dim {}",
            ps.len(),
            ps.dim()
        )));
    }
    Ok(())
}

/// Records the cross regularizer between two displacement fields: the
/// closest-point sum between lifted endpoints `[p, p + ix(p)]` and
/// `[q + iy(q), q]` in `2·dim` space.
pub fn cross_reg_node<T: Real>(
    g: &mut Graph<T>,
    x: &PointSet<T>,
    ix: Var,
    y: &PointSet<T>,
    iy: Var,
) -> Result<Var> {
    x.check_same_dim(y)?;
    check_field(x, g.shape(ix), "source")?;
    check_field(y, g.shape(iy), "target")?;
    let xc = g.constant(set_tensor(x));
    let yc = g.constant(set_tensor(y));
    let x_end = g.add(xc, ix)?;
    let y_end = g.add(yc, iy)?;
    let lifted_x = g.concat(xc, x_end)?;
    let lifted_y = g.concat(y_end, yc)?;
    chamfer_node(g, lifted_x, lifted_y)
}

/// Records every term of the bidirectional objective.
///
/// With `include_reg = false` the regularizer is still recorded and reported
/// but left out of the total.
pub fn combined_loss_node<T: Real>(
    g: &mut Graph<T>,
    x: &PointSet<T>,
    y: &PointSet<T>,
    ix: Var,
    iy: Var,
    w: &LossWeights,
    include_reg: bool,
) -> Result<LossNodes> {
    let xc = g.constant(set_tensor(x));
    let yc = g.constant(set_tensor(y));
    check_field(x, g.shape(ix), "source")?;
    check_field(y, g.shape(iy), "target")?;
    let y_hat = g.add(xc, ix)?;
    let x_hat = g.add(yc, iy)?;

    let shape_xy = shape_loss_node(g, y_hat, y)?;
    let density_xy = density_loss_node(g, y_hat, y, w.k_density)?;
    let shape_yx = shape_loss_node(g, x_hat, x)?;
    let density_yx = density_loss_node(g, x_hat, x, w.k_density)?;
    let cross_reg = cross_reg_node(g, x, ix, y, iy)?;

    let lambda: T = lit(w.lambda_density);
    let dxy = g.scale(density_xy, lambda);
    let dyx = g.scale(density_yx, lambda);
    let mut total = g.add(shape_xy, dxy)?;
    total = g.add(total, shape_yx)?;
    total = g.add(total, dyx)?;
    if include_reg {
        let reg = g.scale(cross_reg, lit(w.mu_reg));
        total = g.add(total, reg)?;
    }
    Ok(LossNodes {
        shape_xy,
        density_xy,
        shape_yx,
        density_yx,
        cross_reg,
        total,
    })
}

fn eval<T: Real>(f: impl FnOnce(&mut Graph<T>) -> Result<Var>) -> Result<T> {
    let mut g = Graph::new();
    let out = f(&mut g)?;
    Ok(g.value(out).data()[0])
}

/// `Σ_{p∈target} min_q d(p,q) + Σ_{q∈pred} min_p d(p,q)` with unsquared L2.
pub fn shape_loss<T: Real>(pred: &PointSet<T>, target: &PointSet<T>) -> Result<T> {
    pred.check_same_dim(target)?;
    eval(|g| {
        let p = g.constant(set_tensor(pred));
        shape_loss_node(g, p, target)
    })
}

/// Mean absolute gap between the target's own k-nearest distances and its
/// distances into the prediction, summed over target points.
pub fn density_loss<T: Real>(pred: &PointSet<T>, target: &PointSet<T>, k: usize) -> Result<T> {
    pred.check_same_dim(target)?;
    eval(|g| {
        let p = g.constant(set_tensor(pred));
        density_loss_node(g, p, target, k)
    })
}

pub fn cross_reg_loss<T: Real>(
    x: &PointSet<T>,
    ix: &DisplacementField<T>,
    y: &PointSet<T>,
    iy: &DisplacementField<T>,
) -> Result<T> {
    eval(|g| {
        let a = g.constant(ix.to_tensor());
        let b = g.constant(iy.to_tensor());
        cross_reg_node(g, x, a, y, b)
    })
}

/// Evaluates every term for `ŷ = x + ix` and `x̂ = y + iy`.
pub fn combined_loss<T: Real>(
    x: &PointSet<T>,
    y: &PointSet<T>,
    ix: &DisplacementField<T>,
    iy: &DisplacementField<T>,
    w: &LossWeights,
) -> Result<LossBreakdown<T>> {
    let mut g = Graph::new();
    let a = g.constant(ix.to_tensor());
    let b = g.constant(iy.to_tensor());
    Ok(combined_loss_node(&mut g, x, y, a, b, w, true)?.values(&g))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ps(dim: usize, pts: &[&[f64]]) -> PointSet<f64> {
        PointSet::from_points(dim, &pts.iter().map(|p| p.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn field(dim: usize, v: &[&[f64]]) -> DisplacementField<f64> {
        DisplacementField::new(dim, v.iter().flat_map(|r| r.iter().copied()).collect()).unwrap()
    }

    #[test]
    fn shape_loss_examples() {
        let a = ps(2, &[&[0.0, 0.0], &[2.0, 0.0]]);
        assert_eq!(shape_loss(&a, &a).unwrap(), 0.0);
        let p = ps(3, &[&[0.0, 0.0, 0.0]]);
        let t = ps(3, &[&[3.0, 4.0, 0.0]]);
        assert_eq!(shape_loss(&p, &t).unwrap(), 10.0);
        let t1 = ps(2, &[&[1.0, 0.0]]);
        assert_eq!(shape_loss(&a, &t1).unwrap(), 3.0);
        assert!(matches!(shape_loss(&a, &p), Err(Error::Dimension(_))));
    }

    #[test]
    fn density_vector_examples() {
        let s = ps(2, &[&[0.0, 0.0], &[1.0, 0.0], &[3.0, 0.0]]);
        assert_eq!(density_vector(&[0.0, 0.0], &s, 2, true).unwrap(), vec![1.0, 3.0]);
        let grid: Vec<Vec<f64>> = (0..3)
            .flat_map(|i| (0..3).map(move |j| vec![i as f64, j as f64]))
            .collect();
        let grid = PointSet::from_points(2, &grid).unwrap();
        assert_eq!(density_vector(&[1.0, 1.0], &grid, 4, true).unwrap(), vec![1.0; 4]);
        let lone = ps(2, &[&[0.0, 0.0]]);
        assert!(matches!(
            density_vector(&[0.0, 0.0], &lone, 1, true),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn density_loss_examples() {
        let t = ps(2, &[&[0.0, 0.0], &[1.0, 0.0]]);
        let p = ps(2, &[&[0.0, 0.0], &[1.5, 0.0]]);
        assert!((density_loss(&p, &t, 8).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(density_loss(&t, &t, 8).unwrap(), 0.0);
        let lone = ps(2, &[&[0.0, 0.0]]);
        assert!(matches!(density_loss(&lone, &lone, 8), Err(Error::Contract(_))));
    }

    #[test]
    fn cross_reg_examples() {
        let x = ps(3, &[&[0.0, 0.0, 0.0]]);
        let y = ps(3, &[&[1.0, 0.0, 0.0]]);
        let ix = field(3, &[&[1.0, 0.0, 0.0]]);
        let iy = field(3, &[&[-1.0, 0.0, 0.0]]);
        assert_eq!(cross_reg_loss(&x, &ix, &y, &iy).unwrap(), 0.0);
        let iy0 = field(3, &[&[0.0, 0.0, 0.0]]);
        assert_eq!(cross_reg_loss(&x, &ix, &y, &iy0).unwrap(), 2.0);
        let wrong = field(3, &[&[0.0; 3], &[0.0; 3]]);
        assert!(matches!(
            cross_reg_loss(&x, &wrong, &y, &iy0),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn combined_total_and_ablation() {
        let x = ps(2, &[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]]);
        let y = ps(2, &[&[0.5, 0.5], &[2.0, 0.0], &[0.0, 3.0], &[1.0, 1.0]]);
        let ix = field(2, &[&[0.1, 0.2], &[0.5, -0.1], &[0.3, 0.9]]);
        let iy = field(2, &[&[-0.3, 0.0], &[-1.0, 0.2], &[0.0, -1.5], &[0.1, 0.1]]);
        let w = LossWeights::default();
        let b = combined_loss(&x, &y, &ix, &iy, &w).unwrap();
        assert!((b.total - b.recompose(&w, true)).abs() < 1e-12);

        let mut g = Graph::new();
        let a = g.constant(ix.to_tensor());
        let c = g.constant(iy.to_tensor());
        let nodes = combined_loss_node(&mut g, &x, &y, a, c, &w, false).unwrap();
        let nb = nodes.values(&g);
        assert_eq!(nb.cross_reg, b.cross_reg);
        assert!((nb.total - (b.total - 0.1 * b.cross_reg)).abs() < 1e-12);
    }

    #[test]
    fn inverse_fields_on_identical_shapes_vanish() {
        let x = ps(2, &[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]]);
        let zero = field(2, &[&[0.0, 0.0][..]; 3]);
        let b = combined_loss(&x, &x, &zero, &zero, &LossWeights::default()).unwrap();
        assert_eq!(b, LossBreakdown::default());
    }
}
