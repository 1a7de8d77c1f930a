//! Finite-difference checks of the loss terms and of a full branch plus
//! objective, on small random instances.
//!
//! An instance is skipped when perturbing any coordinate by `±eps` changes
//! which points are matched as neighbors (or flips the sign of a density
//! gap), since the central difference then straddles a kink.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{analytic_gradient, max_relative_error, numeric_gradient, Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::layers::{branch_forward, Branch, CentroidSeed, NetworkConfig};
use crate::losses::{
    combined_loss_node, cross_reg_node, density_loss_node, shape_loss_node, LossWeights,
};
use crate::spatial::{dist, PointSet};

pub const EPS: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
/// Attempts allowed per requested instance before giving up.
const ATTEMPTS_PER_INSTANCE: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    Shape,
    Density,
    CrossReg,
    /// Branch forward pass followed by the combined objective, differentiated
    /// with respect to one parameter tensor per instance.
    Composition,
}

impl Target {
    pub const ALL: [Target; 4] = [
        Target::Shape,
        Target::Density,
        Target::CrossReg,
        Target::Composition,
    ];
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Target::Shape => "shape",
            Target::Density => "density",
            Target::CrossReg => "cross_reg",
            Target::Composition => "branch+objective",
        })
    }
}

#[derive(Clone, Debug)]
pub struct TargetReport {
    pub target: Target,
    pub checked: usize,
    pub skipped: usize,
    pub max_error: f64,
}

impl TargetReport {
    pub fn passed(&self, instances: usize) -> bool {
        self.checked >= instances && self.max_error < TOLERANCE
    }
}

#[derive(Clone, Debug)]
pub struct SuiteReport {
    pub instances: usize,
    pub targets: Vec<TargetReport>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.targets.iter().all(|t| t.passed(self.instances))
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for t in &self.targets {
            writeln!(
                f,
                "{:<18} checked={:<3} skipped={:<3} max_rel_err={:.3e} {}",
                t.target.to_string(),
                t.checked,
                t.skipped,
                t.max_error,
                if t.passed(self.instances) { "ok" } else { "FAIL" }
            )?;
        }
        Ok(())
    }
}

/// Checks every target on `instances` random `points`-point instances.
pub fn run_suite(instances: usize, points: usize, seed: u64) -> Result<SuiteReport> {
    let targets = Target::ALL
        .iter()
        .map(|&t| run_target(t, instances, points, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(SuiteReport { instances, targets })
}

pub fn run_target(target: Target, instances: usize, points: usize, seed: u64) -> Result<TargetReport> {
    let mut report = TargetReport {
        target,
        checked: 0,
        skipped: 0,
        max_error: 0.0,
    };
    let mut attempt = 0;
    while report.checked < instances {
        if attempt >= instances * ATTEMPTS_PER_INSTANCE {
            return Err(Error::Numeric(format!(
                "{target}: only {} of {instances} instances free of neighbor flips",
                report.checked
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(attempt as u64 * 4 + target as u64);
        match check_instance(target, points, attempt, &mut rng)? {
            Some(err) => {
                report.checked += 1;
                report.max_error = report.max_error.max(err);
            }
            None => report.skipped += 1,
        }
        attempt += 1;
    }
    Ok(report)
}

fn cloud(n: usize, dim: usize, rng: &mut ChaCha8Rng) -> PointSet<f64> {
    PointSet::new(dim, (0..n * dim).map(|_| rng.gen_range(-0.5..0.5)).collect()).expect("shape")
}

fn tensor_of(ps: &PointSet<f64>) -> Tensor<f64> {
    Tensor::new(vec![ps.len(), ps.dim()], ps.coords().to_vec()).expect("shape")
}

fn set_of(t: &Tensor<f64>) -> PointSet<f64> {
    PointSet::new(t.shape()[1], t.data().to_vec()).expect("shape")
}

/// Relative gradient error, or `None` when a neighbor assignment flips.
fn check_instance(
    target: Target,
    n: usize,
    attempt: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Option<f64>> {
    let dim = 2;
    let k = LossWeights::default().k_density;
    let x = cloud(n, dim, rng);
    let y = cloud(n, dim, rng);
    match target {
        Target::Shape | Target::Density => {
            let f = |g: &mut Graph<f64>, p: Var| match target {
                Target::Shape => shape_loss_node(g, p, &y),
                _ => density_loss_node(g, p, &y, k),
            };
            let sig = |t: &Tensor<f64>| {
                let p = set_of(t);
                match target {
                    Target::Shape => chamfer_signature(&p, &y),
                    _ => density_signature(&p, &y, k),
                }
            };
            compare(&f, &sig, &tensor_of(&x))
        }
        Target::CrossReg => {
            let iy = Tensor::new(vec![n, dim], (0..n * dim).map(|_| rng.gen_range(-0.3..0.3)).collect())?;
            let ix = Tensor::new(vec![n, dim], (0..n * dim).map(|_| rng.gen_range(-0.3..0.3)).collect())?;
            let f = |g: &mut Graph<f64>, v: Var| {
                let iyv = g.constant(iy.clone());
                cross_reg_node(g, &x, v, &y, iyv)
            };
            let sig = |t: &Tensor<f64>| cross_signature(&x, t, &y, &iy);
            compare(&f, &sig, &ix)
        }
        Target::Composition => {
            let cfg = NetworkConfig::tiny(dim);
            // nonzero biases keep the centroid's zero local offset off the ReLU kink
            let mut bx = Branch::<f64>::init(cfg.clone(), rng)?;
            let mut by = Branch::<f64>::init(cfg, rng)?;
            for l in bx.params.layers.iter_mut().chain(by.params.layers.iter_mut()) {
                l.bias.data_mut().iter_mut().for_each(|b| *b = rng.gen_range(-0.1..0.1));
            }
            let which = attempt % (2 * bx.params.layers.len());
            let (layer, is_bias) = (which / 2, which % 2 == 1);
            let w = LossWeights::default();
            let noise_seed: u64 = rng.gen();
            let displacement = |g: &mut Graph<f64>, v: Var| -> Result<(Var, Var)> {
                let mut vars = bx.params.record(g, false);
                if is_bias {
                    vars[layer].bias = v;
                } else {
                    vars[layer].weight = v;
                }
                let mut noise = ChaCha8Rng::seed_from_u64(noise_seed);
                let ix = branch_forward(
                    g,
                    &x,
                    &bx.config,
                    &vars,
                    &bx.params.layout,
                    CentroidSeed::Index(0),
                    &mut noise,
                )?;
                let (iy, _) = by.record(g, &y, CentroidSeed::Index(0), false, &mut noise)?;
                Ok((ix, iy))
            };
            let f = |g: &mut Graph<f64>, v: Var| {
                let (ix, iy) = displacement(g, v)?;
                Ok(combined_loss_node(g, &x, &y, ix, iy, &w, true)?.total)
            };
            let sig = |t: &Tensor<f64>| {
                let mut g = Graph::new();
                let v = g.constant(t.clone());
                let (ix, iy) = displacement(&mut g, v).expect("forward pass succeeded once");
                let ix = g.value(ix).clone();
                let iy = g.value(iy).clone();
                let yhat = shifted(&x, &ix);
                let xhat = shifted(&y, &iy);
                let mut s = chamfer_signature(&yhat, &y);
                s.extend(density_signature(&yhat, &y, k));
                s.extend(chamfer_signature(&xhat, &x));
                s.extend(density_signature(&xhat, &x, k));
                s.extend(cross_signature(&x, &ix, &y, &iy));
                s
            };
            let param = &bx.params.layers[layer];
            compare(&f, &sig, if is_bias { &param.bias } else { &param.weight })
        }
    }
}

fn compare<F, S>(f: &F, sig: &S, at: &Tensor<f64>) -> Result<Option<f64>>
where
    F: Fn(&mut Graph<f64>, Var) -> Result<Var>,
    S: Fn(&Tensor<f64>) -> Vec<usize>,
{
    let base = sig(at);
    for i in 0..at.len() {
        for s in [EPS, -EPS] {
            let mut probe = at.clone();
            probe.data_mut()[i] += s;
            if sig(&probe) != base {
                return Ok(None);
            }
        }
    }
    let analytic = analytic_gradient(f, at)?;
    let numeric = numeric_gradient(f, at, EPS)?;
    Ok(Some(max_relative_error(&analytic, &numeric)))
}

fn shifted(ps: &PointSet<f64>, d: &Tensor<f64>) -> PointSet<f64> {
    let coords = ps.coords().iter().zip(d.data()).map(|(a, b)| a + b).collect();
    PointSet::new(ps.dim(), coords).expect("shape")
}

/// Brute-force neighbor order of `q` in `ps`, closest first.
fn ranked(q: &[f64], ps: &PointSet<f64>) -> Vec<(f64, usize)> {
    let mut d: Vec<(f64, usize)> = ps.iter().enumerate().map(|(i, p)| (dist(q, p), i)).collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d
}

fn nn(q: &[f64], ps: &PointSet<f64>) -> usize {
    ranked(q, ps)[0].1
}

fn chamfer_signature(a: &PointSet<f64>, b: &PointSet<f64>) -> Vec<usize> {
    a.iter()
        .map(|p| nn(p, b))
        .chain(b.iter().map(|q| nn(q, a)))
        .collect()
}

/// Ordered neighbors of each target point in both sets, plus gap signs.
fn density_signature(pred: &PointSet<f64>, target: &PointSet<f64>, k: usize) -> Vec<usize> {
    let mut s = Vec::new();
    for t in target.iter() {
        let own: Vec<_> = ranked(t, target).into_iter().filter(|e| e.0 > 0.0).take(k).collect();
        let other: Vec<_> = ranked(t, pred).into_iter().filter(|e| e.0 > 0.0).take(k).collect();
        for (o, w) in other.iter().zip(&own) {
            s.push(o.1);
            s.push(usize::from(w.0 >= o.0));
        }
    }
    s
}

fn cross_signature(x: &PointSet<f64>, ix: &Tensor<f64>, y: &PointSet<f64>, iy: &Tensor<f64>) -> Vec<usize> {
    let lift = |base: &PointSet<f64>, d: &Tensor<f64>, moved_first: bool| {
        let dim = base.dim();
        let coords = base
            .iter()
            .enumerate()
            .flat_map(|(i, p)| {
                let end: Vec<f64> = (0..dim).map(|j| p[j] + d.data()[i * dim + j]).collect();
                if moved_first {
                    [end, p.to_vec()].concat()
                } else {
                    [p.to_vec(), end].concat()
                }
            })
            .collect();
        PointSet::new(2 * dim, coords).expect("shape")
    };
    chamfer_signature(&lift(x, ix, false), &lift(y, iy, true))
}
