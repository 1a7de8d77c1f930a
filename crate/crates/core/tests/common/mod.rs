//! Brute-force references for the neighbor queries and losses, written
//! without the k-d tree or the autodiff graph.

#![allow(dead_code)]

use p2pnet::spatial::PointSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn d2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Every index sorted by `(squared distance, index)`.
pub fn ranked(q: &[f64], ps: &PointSet<f64>) -> Vec<(f64, usize)> {
    let mut all: Vec<(f64, usize)> = ps.iter().enumerate().map(|(i, p)| (d2(q, p), i)).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    all
}

pub fn nearest(q: &[f64], ps: &PointSet<f64>) -> (usize, f64) {
    let (dd, i) = ranked(q, ps)[0];
    (i, dd.sqrt())
}

pub fn knn(q: &[f64], ps: &PointSet<f64>, k: usize, exclude_self: bool) -> Vec<(usize, f64)> {
    ranked(q, ps)
        .into_iter()
        .filter(|e| !(exclude_self && e.0 == 0.0))
        .take(k)
        .map(|(dd, i)| (i, dd.sqrt()))
        .collect()
}

pub fn ball(q: &[f64], ps: &PointSet<f64>, r: f64, cap: usize) -> Vec<usize> {
    let mut inside: Vec<usize> = ranked(q, ps)
        .into_iter()
        .filter(|e| e.0.sqrt() <= r)
        .map(|e| e.1)
        .take(cap)
        .collect();
    let fill = inside.first().copied().unwrap_or_else(|| nearest(q, ps).0);
    inside.resize(cap, fill);
    inside
}

/// Recomputes every min-distance from scratch at each step.
pub fn fps(ps: &PointSet<f64>, m: usize, seed: usize) -> Vec<usize> {
    let mut out = vec![seed];
    while out.len() < m {
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for i in 0..ps.len() {
            if out.contains(&i) {
                continue;
            }
            let md = out
                .iter()
                .map(|&j| d2(ps.point(i), ps.point(j)))
                .fold(f64::INFINITY, f64::min);
            if md > best.0 {
                best = (md, i);
            }
        }
        out.push(best.1);
    }
    out
}

fn one_way(a: &PointSet<f64>, b: &PointSet<f64>) -> f64 {
    let mut s = 0.0;
    for p in a.iter() {
        s += nearest(p, b).1;
    }
    s
}

pub fn chamfer(a: &PointSet<f64>, b: &PointSet<f64>) -> f64 {
    one_way(b, a) + one_way(a, b)
}

pub fn shape_loss(pred: &PointSet<f64>, target: &PointSet<f64>) -> f64 {
    chamfer(pred, target)
}

fn non_coincident(p: &[f64], ps: &PointSet<f64>) -> usize {
    let touching = ps.iter().any(|q| d2(p, q) == 0.0);
    if touching {
        ps.iter().filter(|q| d2(p, q) != 0.0).count()
    } else {
        ps.len()
    }
}

pub fn density_loss(pred: &PointSet<f64>, target: &PointSet<f64>, k: usize) -> f64 {
    let k_eff = target
        .iter()
        .map(|p| non_coincident(p, pred).min(non_coincident(p, target)))
        .fold(k, usize::min);
    let mut s = 0.0;
    for p in target.iter() {
        let own = knn(p, target, k_eff, true);
        let other = knn(p, pred, k_eff, true);
        for (o, t) in other.iter().zip(&own) {
            s += (t.1 - o.1).abs();
        }
    }
    s * (1.0 / k_eff as f64)
}

pub fn lift(base: &PointSet<f64>, d: &[f64], moved_first: bool) -> PointSet<f64> {
    let dim = base.dim();
    let mut coords = Vec::new();
    for (i, p) in base.iter().enumerate() {
        let end: Vec<f64> = (0..dim).map(|j| p[j] + d[i * dim + j]).collect();
        if moved_first {
            coords.extend(&end);
            coords.extend(p);
        } else {
            coords.extend(p);
            coords.extend(&end);
        }
    }
    PointSet::new(2 * dim, coords).unwrap()
}

pub fn cross_reg(x: &PointSet<f64>, ix: &[f64], y: &PointSet<f64>, iy: &[f64]) -> f64 {
    chamfer(&lift(x, ix, false), &lift(y, iy, true))
}

/// Random set of `n` points; a coarse grid produces exact ties and
/// duplicates when `snap` is set.
pub fn random_set(rng: &mut ChaCha8Rng, n: usize, dim: usize, snap: bool) -> PointSet<f64> {
    let coords = (0..n * dim)
        .map(|_| {
            let v: f64 = rng.gen_range(-1.0..1.0);
            if snap {
                (v * 8.0).round() / 8.0
            } else {
                v
            }
        })
        .collect();
    PointSet::new(dim, coords).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Compares every exact query and loss against the references on `sets`
/// random sets of up to 256 points. Returns the first disagreement.
pub fn oracle_suite(sets: usize, seed: u64) -> Result<(), String> {
    use p2pnet::losses;
    use p2pnet::layers::DisplacementField;
    use p2pnet::spatial::{farthest_point_sample, SpatialIndex};

    let mut r = rng(seed);
    for case in 0..sets {
        let dim = 2 + case % 2;
        let snap = case % 3 == 0;
        let n = r.gen_range(1..=256);
        let m = r.gen_range(1..=256);
        let a = random_set(&mut r, n, dim, snap);
        let b = random_set(&mut r, m, dim, snap);
        let fail = |what: &str| Err(format!("case {case} (n={n}, m={m}, dim={dim}): {what}"));
        let index = SpatialIndex::new(&a).map_err(|e| e.to_string())?;

        for q in b.iter().take(32) {
            let got = index.nearest(q).unwrap();
            if (got.index, got.distance) != nearest(q, &a) {
                return fail("nearest");
            }
            let k = r.gen_range(1..=12);
            for excl in [false, true] {
                let want = knn(q, &a, k, excl);
                match index.knn(q, k, excl) {
                    Ok(got) => {
                        let got: Vec<_> = got.iter().map(|nb| (nb.index, nb.distance)).collect();
                        if got != want {
                            return fail("knn");
                        }
                        let dv = losses::density_vector(q, &a, k, excl).unwrap();
                        if dv != want.iter().map(|w| w.1).collect::<Vec<_>>() {
                            return fail("density vector");
                        }
                    }
                    Err(_) if want.is_empty() => {}
                    Err(_) => return fail("knn errored"),
                }
            }
            let radius = r.gen_range(0.05..0.8);
            let cap = r.gen_range(1..=16);
            if index.ball_query(q, radius, cap).unwrap() != ball(q, &a, radius, cap) {
                return fail("ball query");
            }
        }

        let k = r.gen_range(1..=n);
        let s = r.gen_range(0..n);
        if farthest_point_sample(&a, k, s).unwrap() != fps(&a, k, s) {
            return fail("farthest point sampling");
        }

        if losses::shape_loss(&a, &b).unwrap() != shape_loss(&a, &b) {
            return fail("shape loss");
        }
        let kd = 8;
        let own_ok = b.iter().all(|p| non_coincident(p, &b) > 0 && non_coincident(p, &a) > 0);
        if own_ok && losses::density_loss(&a, &b, kd).unwrap() != density_loss(&a, &b, kd) {
            return fail("density loss");
        }
        let ix: Vec<f64> = (0..n * dim).map(|_| r.gen_range(-0.2..0.2)).collect();
        let iy: Vec<f64> = (0..m * dim).map(|_| r.gen_range(-0.2..0.2)).collect();
        let got = losses::cross_reg_loss(
            &a,
            &DisplacementField::new(dim, ix.clone()).unwrap(),
            &b,
            &DisplacementField::new(dim, iy.clone()).unwrap(),
        )
        .unwrap();
        if got != cross_reg(&a, &ix, &b, &iy) {
            return fail("cross regularizer");
        }
    }
    Ok(())
}
