use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

use super::pointset::{dist2, PointSet};

const LEAF_SIZE: usize = 8;

/// A query result: point index and its Euclidean distance to the query.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor<T> {
    pub index: usize,
    pub distance: T,
}

#[derive(Debug)]
enum KdNode<T> {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: T,
        left: usize,
        right: usize,
    },
}

/// Exact k-d tree over an immutable [`PointSet`].
///
/// Every query orders candidates by `(squared distance, index)` and only
/// prunes subtrees that provably hold no better candidate, so results are
/// identical to a linear scan.
#[derive(Debug)]
pub struct SpatialIndex<'a, T> {
    set: &'a PointSet<T>,
    perm: Vec<usize>,
    nodes: Vec<KdNode<T>>,
}

// (squared distance, index) with a total order for the knn heap
#[derive(Clone, Copy, PartialEq)]
struct Cand<T>(T, usize);

impl<T: Real> Eq for Cand<T> {}

impl<T: Real> PartialOrd for Cand<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Real> Ord for Cand<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .partial_cmp(&other.0)
            .unwrap_or(Ordering::Equal)
            .then(self.1.cmp(&other.1))
    }
}

impl<'a, T: Real> SpatialIndex<'a, T> {
    pub fn new(set: &'a PointSet<T>) -> Result<Self> {
        if set.is_empty() {
            return Err(Error::Contract("cannot index an empty point set".into()));
        }
        let mut index = Self {
            set,
            perm: (0..set.len()).collect(),
            nodes: Vec::new(),
        };
        index.build(0, set.len());
        Ok(index)
    }

    pub fn set(&self) -> &'a PointSet<T> {
        self.set
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(KdNode::Leaf { start, end });
            return id;
        }
        let dim = self.set.dim();
        let mut lo = vec![T::infinity(); dim];
        let mut hi = vec![T::neg_infinity(); dim];
        for &i in &self.perm[start..end] {
            let p = self.set.point(i);
            for k in 0..dim {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let axis = (0..dim)
            .max_by(|&a, &b| {
                (hi[a] - lo[a])
                    .partial_cmp(&(hi[b] - lo[b]))
                    .unwrap_or(Ordering::Equal)
            })
            .unwrap_or(0);
        if hi[axis] <= lo[axis] {
            // all points coincide
            self.nodes.push(KdNode::Leaf { start, end });
            return id;
        }
        let mid = start + (end - start) / 2;
        let set = self.set;
        self.perm[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            set.point(a)[axis]
                .partial_cmp(&set.point(b)[axis])
                .unwrap_or(Ordering::Equal)
        });
        let value = set.point(self.perm[mid])[axis];
        self.nodes.push(KdNode::Leaf { start, end });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = KdNode::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    fn check_query(&self, q: &[T]) -> Result<()> {
        if q.len() != self.set.dim() {
            return Err(Error::Dimension(format!(
                "{}-d query against {}-d set",
                q.len(),
                self.set.dim()
            )));
        }
        Ok(())
    }

    /// Closest point to `q`; ties go to the lowest index.
    pub fn nearest(&self, q: &[T]) -> Result<Neighbor<T>> {
        self.check_query(q)?;
        let mut best = Cand(T::infinity(), usize::MAX);
        self.nearest_rec(0, q, &mut best);
        Ok(Neighbor {
            index: best.1,
            distance: best.0.sqrt(),
        })
    }

    fn nearest_rec(&self, node: usize, q: &[T], best: &mut Cand<T>) {
        match self.nodes[node] {
            KdNode::Leaf { start, end } => {
                for &i in &self.perm[start..end] {
                    let c = Cand(dist2(q, self.set.point(i)), i);
                    if c < *best {
                        *best = c;
                    }
                }
            }
            KdNode::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < T::zero() {
                    (left, right)
                } else {
                    (right, left)
                };
                self.nearest_rec(near, q, best);
                // points on the far side are at least |diff| away along `axis`
                if diff * diff <= best.0 {
                    self.nearest_rec(far, q, best);
                }
            }
        }
    }

    /// The `k` closest points sorted by `(distance, index)`.
    ///
    /// With `exclude_self`, candidates at distance exactly zero from `q` are
    /// skipped. `k` is clamped to the number of remaining candidates.
    pub fn knn(&self, q: &[T], k: usize, exclude_self: bool) -> Result<Vec<Neighbor<T>>> {
        self.check_query(q)?;
        if k == 0 {
            return Err(Error::Contract("knn with k = 0".into()));
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.knn_rec(0, q, k, exclude_self, &mut heap);
        if heap.is_empty() {
            return Err(Error::Contract(
                "no neighbor candidates remain after excluding coincident points".into(),
            ));
        }
        Ok(heap
            .into_sorted_vec()
            .into_iter()
            .map(|Cand(d2, index)| Neighbor {
                index,
                distance: d2.sqrt(),
            })
            .collect())
    }

    fn knn_rec(
        &self,
        node: usize,
        q: &[T],
        k: usize,
        exclude_self: bool,
        heap: &mut BinaryHeap<Cand<T>>,
    ) {
        match self.nodes[node] {
            KdNode::Leaf { start, end } => {
                for &i in &self.perm[start..end] {
                    let d2 = dist2(q, self.set.point(i));
                    if exclude_self && d2 == T::zero() {
                        continue;
                    }
                    let c = Cand(d2, i);
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().unwrap() {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            KdNode::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < T::zero() {
                    (left, right)
                } else {
                    (right, left)
                };
                self.knn_rec(near, q, k, exclude_self, heap);
                if heap.len() < k || diff * diff <= heap.peek().unwrap().0 {
                    self.knn_rec(far, q, k, exclude_self, heap);
                }
            }
        }
    }

    /// Up to `cap` indices within distance `r` of `center`, nearest first,
    /// always padded to exactly `cap` entries.
    ///
    /// Short patches repeat their nearest member; an empty ball falls back to
    /// the globally nearest point repeated `cap` times.
    pub fn ball_query(&self, center: &[T], r: T, cap: usize) -> Result<Vec<usize>> {
        self.check_query(center)?;
        if !(r > T::zero()) || cap == 0 {
            return Err(Error::Contract(format!(
                "ball query needs r > 0 and cap ≥ 1 (r = {r}, cap = {cap})"
            )));
        }
        let mut found = Vec::new();
        // slightly widened bound so pruning never drops a point the exact
        // `sqrt(d2) <= r` test would accept
        let prune = r * r * lit(1.0 + 1e-9);
        self.ball_rec(0, center, r, prune, &mut found);
        found.sort_unstable();
        let mut out: Vec<usize> = found.iter().take(cap).map(|c| c.1).collect();
        let fill = match out.first() {
            Some(&i) => i,
            None => self.nearest(center)?.index,
        };
        out.resize(cap, fill);
        Ok(out)
    }

    fn ball_rec(&self, node: usize, q: &[T], r: T, prune: T, found: &mut Vec<Cand<T>>) {
        match self.nodes[node] {
            KdNode::Leaf { start, end } => {
                for &i in &self.perm[start..end] {
                    let d2 = dist2(q, self.set.point(i));
                    if d2.sqrt() <= r {
                        found.push(Cand(d2, i));
                    }
                }
            }
            KdNode::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < T::zero() {
                    (left, right)
                } else {
                    (right, left)
                };
                self.ball_rec(near, q, r, prune, found);
                if diff * diff <= prune {
                    self.ball_rec(far, q, r, prune, found);
                }
            }
        }
    }
}

/// Greedy max-min subsampling starting from `seed_index`.
///
/// Each step adds the unselected point farthest from the selected set; ties
/// go to the lowest index.
pub fn farthest_point_sample<T: Real>(
    ps: &PointSet<T>,
    m: usize,
    seed_index: usize,
) -> Result<Vec<usize>> {
    let n = ps.len();
    if m == 0 || m > n {
        return Err(Error::Contract(format!(
            "cannot sample {m} of {n} points"
        )));
    }
    if seed_index >= n {
        return Err(Error::Index {
            index: seed_index,
            len: n,
        });
    }
    let mut chosen = vec![false; n];
    let mut min_d2 = vec![T::infinity(); n];
    let mut out = Vec::with_capacity(m);
    let mut current = seed_index;
    loop {
        chosen[current] = true;
        out.push(current);
        if out.len() == m {
            break;
        }
        let c = ps.point(current);
        let mut best: Option<usize> = None;
        for i in 0..n {
            let d = dist2(c, ps.point(i));
            if d < min_d2[i] {
                min_d2[i] = d;
            }
            if !chosen[i] && best.is_none_or(|b| min_d2[i] > min_d2[b]) {
                best = Some(i);
            }
        }
        current = best.expect("unselected point remains");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set2(points: &[[f64; 2]]) -> PointSet<f64> {
        PointSet::from_points(2, &points.iter().map(|p| p.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn nearest_examples() {
        let ps = set2(&[[0.0, 0.0], [2.0, 0.0]]);
        let idx = SpatialIndex::new(&ps).unwrap();
        let nb = idx.nearest(&[0.4, 0.0]).unwrap();
        assert_eq!(nb.index, 0);
        assert!((nb.distance - 0.4).abs() < 1e-15);
        assert_eq!(idx.nearest(&[2.0, 0.0]).unwrap().distance, 0.0);
        assert!(matches!(idx.nearest(&[0.0, 0.0, 0.0]), Err(Error::Dimension(_))));
        // equidistant: lowest index wins
        assert_eq!(idx.nearest(&[1.0, 0.0]).unwrap().index, 0);
    }

    #[test]
    fn knn_examples() {
        let ps = set2(&[[0.0, 0.0], [1.0, 0.0], [3.0, 0.0]]);
        let idx = SpatialIndex::new(&ps).unwrap();
        let got = idx.knn(&[0.0, 0.0], 2, true).unwrap();
        assert_eq!(got, vec![
            Neighbor { index: 1, distance: 1.0 },
            Neighbor { index: 2, distance: 3.0 }
        ]);
        assert_eq!(idx.knn(&[0.0, 0.0], 10, false).unwrap().len(), 3);

        let single = set2(&[[1.0, 1.0]]);
        let idx = SpatialIndex::new(&single).unwrap();
        assert!(matches!(idx.knn(&[1.0, 1.0], 1, true), Err(Error::Contract(_))));
    }

    #[test]
    fn ball_query_examples() {
        let ps = set2(&[[0.0, 0.0], [0.05, 0.0], [5.0, 5.0]]);
        let idx = SpatialIndex::new(&ps).unwrap();
        assert_eq!(idx.ball_query(&[0.0, 0.0], 0.1, 4).unwrap(), vec![0, 1, 0, 0]);
        assert_eq!(idx.ball_query(&[4.9, 5.0], 20.0, 3).unwrap(), vec![2, 1, 0]);
        assert_eq!(idx.ball_query(&[4.0, 4.0], 0.1, 3).unwrap(), vec![2, 2, 2]);
        assert!(idx.ball_query(&[0.0, 0.0], 0.0, 3).is_err());
    }

    #[test]
    fn fps_examples() {
        let ps = set2(&[[0.0, 0.0], [10.0, 0.0], [0.0, 10.0], [1.0, 1.0]]);
        assert_eq!(farthest_point_sample(&ps, 3, 0).unwrap(), vec![0, 1, 2]);
        assert_eq!(farthest_point_sample(&ps, 1, 2).unwrap(), vec![2]);
        let mut all = farthest_point_sample(&ps, 4, 3).unwrap();
        all.sort();
        assert_eq!(all, vec![0, 1, 2, 3]);
        assert!(matches!(farthest_point_sample(&ps, 5, 0), Err(Error::Contract(_))));
    }

    #[test]
    fn fps_on_duplicates_is_still_a_permutation() {
        let ps = set2(&[[1.0, 1.0]; 5]);
        let mut got = farthest_point_sample(&ps, 5, 2).unwrap();
        got.sort();
        assert_eq!(got, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn coincident_points_build_a_leaf() {
        let ps = set2(&[[0.5, 0.5]; 40]);
        let idx = SpatialIndex::new(&ps).unwrap();
        assert_eq!(idx.nearest(&[0.0, 0.0]).unwrap().index, 0);
        assert_eq!(idx.ball_query(&[0.5, 0.5], 0.1, 2).unwrap(), vec![0, 1]);
    }
}
