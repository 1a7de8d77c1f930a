use std::cmp::Ordering;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::scalar::{lit, Real};
use crate::spatial::{farthest_point_sample, PointSet, SpatialIndex};

use super::config::{FpSpec, NetworkConfig, SaSpec};
use super::field::DisplacementField;
use super::params::{BranchParams, DenseVars};

/// Distance floor for inverse-distance interpolation weights.
const INTERP_EPS: f64 = 1e-8;
const INTERP_NEIGHBORS: usize = 3;

/// How the first centroid of each farthest-point sampling pass is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CentroidSeed {
    /// Fixed index at the input level, index 0 below it.
    Index(usize),
    /// Lexicographically smallest point at every level.
    LexMin,
    /// Uniformly random at every level, drawn from the forward rng.
    Random,
}

/// Positions of one hierarchy level and the features recorded for them.
#[derive(Clone, Debug)]
pub struct Level<T> {
    pub positions: PointSet<T>,
    pub features: Option<Var>,
}

fn dense<T: Real>(g: &mut Graph<T>, x: Var, l: &DenseVars) -> Result<Var> {
    let h = g.matmul(x, l.weight)?;
    g.add_bias(h, l.bias)
}

/// Shared per-point MLP; `relu_last` also activates the final layer.
fn mlp<T: Real>(g: &mut Graph<T>, mut x: Var, layers: &[DenseVars], relu_last: bool) -> Result<Var> {
    for (i, l) in layers.iter().enumerate() {
        x = dense(g, x, l)?;
        if relu_last || i + 1 < layers.len() {
            x = g.relu(x);
        }
    }
    Ok(x)
}

fn lex_min<T: Real>(ps: &PointSet<T>) -> usize {
    (0..ps.len())
        .min_by(|&a, &b| {
            ps.point(a)
                .iter()
                .zip(ps.point(b))
                .map(|(x, y)| x.partial_cmp(y).unwrap_or(Ordering::Equal))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
                .then(a.cmp(&b))
        })
        .unwrap_or(0)
}

fn resolve_seed<T: Real, R: Rng>(
    seed: CentroidSeed,
    ps: &PointSet<T>,
    top_level: bool,
    rng: &mut R,
) -> usize {
    match seed {
        CentroidSeed::Index(i) if top_level => i,
        CentroidSeed::Index(_) => 0,
        CentroidSeed::LexMin => lex_min(ps),
        CentroidSeed::Random => rng.gen_range(0..ps.len()),
    }
}

/// Subsamples `spec.patches` centroids, groups each one's ball, and max-pools
/// the shared MLP over every group.
///
/// With a single patch the whole set is grouped around its mean.
pub fn set_abstraction<T: Real>(
    g: &mut Graph<T>,
    input: &Level<T>,
    spec: &SaSpec,
    params: &[DenseVars],
    seed: usize,
) -> Result<Level<T>> {
    let pos = &input.positions;
    let n = pos.len();
    let dim = pos.dim();
    if n == 0 {
        return Err(Error::Contract("set abstraction of an empty level".into()));
    }
    if params.len() != spec.widths.len() {
        return Err(Error::Dimension(format!(
            "{} parameter layers for {} MLP widths",
            params.len(),
            spec.widths.len()
        )));
    }
    let (centers, groups, cap) = if spec.patches == 1 {
        let c = PointSet::new(dim, pos.centroid())?;
        (c, (0..n).collect::<Vec<_>>(), n)
    } else {
        if spec.patches > n {
            return Err(Error::Contract(format!(
                "cannot draw {} patches from {n} points",
                spec.patches
            )));
        }
        let picks = farthest_point_sample(pos, spec.patches, seed)?;
        let centers = pos.select(&picks)?;
        let index = SpatialIndex::new(pos)?;
        let radius: T = lit(spec.radius);
        let mut groups = Vec::with_capacity(spec.patches * spec.group_size);
        for c in centers.iter() {
            groups.extend(index.ball_query(c, radius, spec.group_size)?);
        }
        (centers, groups, spec.group_size)
    };

    let k = centers.len();
    let mut local = Vec::with_capacity(k * cap * dim);
    for (ci, c) in centers.iter().enumerate() {
        for &i in &groups[ci * cap..(ci + 1) * cap] {
            local.extend(pos.point(i).iter().zip(c).map(|(&p, &q)| p - q));
        }
    }
    let local = g.constant(Tensor::new(vec![k * cap, dim], local)?);
    let grouped = match input.features {
        Some(f) => {
            let picked = g.gather_points(f, &groups)?;
            g.concat(local, picked)?
        }
        None => local,
    };
    let h = mlp(g, grouped, params, true)?;
    let width = *spec.widths.last().unwrap();
    let h = g.reshape(h, vec![k, cap, width])?;
    let pooled = g.reduce_max_over_group(h)?;
    Ok(Level {
        positions: centers,
        features: Some(pooled),
    })
}

/// Interpolation neighbors and normalized `1/d²` weights from `fine` onto
/// `coarse`; a single coarse point is copied verbatim.
pub fn interpolation_weights<T: Real>(
    coarse: &PointSet<T>,
    fine: &PointSet<T>,
) -> Result<(Vec<usize>, Vec<T>, usize)> {
    if coarse.len() == 1 {
        return Ok((vec![0; fine.len()], vec![T::one(); fine.len()], 1));
    }
    let k = INTERP_NEIGHBORS.min(coarse.len());
    let index = SpatialIndex::new(coarse)?;
    let floor: T = lit(INTERP_EPS);
    let mut idx = Vec::with_capacity(fine.len() * k);
    let mut weights = Vec::with_capacity(fine.len() * k);
    for p in fine.iter() {
        let nbrs = index.knn(p, k, false)?;
        let raw: Vec<T> = nbrs
            .iter()
            .map(|n| {
                let d = n.distance.max(floor);
                T::one() / (d * d)
            })
            .collect();
        let total: T = raw.iter().copied().sum();
        idx.extend(nbrs.iter().map(|n| n.index));
        weights.extend(raw.into_iter().map(|w| w / total));
    }
    Ok((idx, weights, k))
}

/// Interpolates coarse features onto the fine level, appends the fine level's
/// own features, and applies the MLP. Returns the new fine features.
pub fn feature_propagation<T: Real>(
    g: &mut Graph<T>,
    coarse: &Level<T>,
    fine: &Level<T>,
    spec: &FpSpec,
    params: &[DenseVars],
) -> Result<Var> {
    let coarse_features = coarse
        .features
        .ok_or_else(|| Error::Contract("feature propagation from a level without features".into()))?;
    if params.len() != spec.widths.len() {
        return Err(Error::Dimension(format!(
            "{} parameter layers for {} MLP widths",
            params.len(),
            spec.widths.len()
        )));
    }
    let (idx, w, k) = interpolation_weights(&coarse.positions, &fine.positions)?;
    let interp = g.interpolate(coarse_features, idx, w, k)?;
    let input = match fine.features {
        Some(skip) => g.concat(interp, skip)?,
        None => interp,
    };
    mlp(g, input, params, true)
}

/// Appends `noise_len` independent N(0, noise_std²) channels to every row.
pub fn noise_augment<T: Real, R: Rng>(
    g: &mut Graph<T>,
    features: Var,
    noise_len: usize,
    noise_std: f64,
    rng: &mut R,
) -> Result<Var> {
    if noise_len == 0 {
        return Ok(features);
    }
    let n = g.shape(features)[0];
    let normal = Normal::new(0.0, noise_std)
        .map_err(|e| Error::Config(format!("noise distribution: {e}")))?;
    let noise = (0..n * noise_len)
        .map(|_| lit::<T>(normal.sample(rng)))
        .collect();
    let noise = g.constant(Tensor::new(vec![n, noise_len], noise)?);
    g.concat(features, noise)
}

/// Records one directional branch on `g` and returns its `n × dim`
/// displacement node.
pub fn branch_forward<T: Real, R: Rng>(
    g: &mut Graph<T>,
    x: &PointSet<T>,
    cfg: &NetworkConfig,
    params: &[DenseVars],
    layout: &super::params::Layout,
    seed: CentroidSeed,
    rng: &mut R,
) -> Result<Var> {
    if x.dim() != cfg.dim {
        return Err(Error::Dimension(format!(
            "{}-d input for a {}-d network",
            x.dim(),
            cfg.dim
        )));
    }
    let features = match (x.features(), cfg.input_channels) {
        (_, 0) => None,
        (Some(f), c) if f.channels == c => Some(g.constant(Tensor::new(
            vec![x.len(), c],
            f.values.clone(),
        )?)),
        _ => {
            return Err(Error::Dimension(format!(
                "network expects {} input feature channels",
                cfg.input_channels
            )))
        }
    };
    let sas = cfg.sa_specs()?;
    let fps = cfg.fp_specs()?;
    let positions = PointSet::new(x.dim(), x.coords().to_vec())?;
    let mut levels = vec![Level {
        positions,
        features,
    }];
    for (i, spec) in sas.iter().enumerate() {
        let seed_index = resolve_seed(seed, &levels[i].positions, i == 0, rng);
        let next = set_abstraction(
            g,
            &levels[i],
            spec,
            &params[layout.sa[i].clone()],
            seed_index,
        )?;
        levels.push(next);
    }
    let depth = sas.len();
    let mut current = levels[depth].features;
    for (j, spec) in fps.iter().enumerate() {
        let coarse = Level {
            positions: levels[depth - j].positions.clone(),
            features: current,
        };
        let fine = &levels[depth - 1 - j];
        current = Some(feature_propagation(
            g,
            &coarse,
            fine,
            spec,
            &params[layout.fp[j].clone()],
        )?);
    }
    let features = current.expect("propagation yields features");
    let augmented = noise_augment(g, features, cfg.noise_len, cfg.noise_std, rng)?;
    mlp(g, augmented, &params[layout.head.clone()], false)
}

/// Network configuration paired with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Branch<T> {
    pub config: NetworkConfig,
    pub params: BranchParams<T>,
}

impl<T: Real> Branch<T> {
    pub fn new(config: NetworkConfig, params: BranchParams<T>) -> Result<Self> {
        if params.layout != super::params::Layout::of(&config)? {
            return Err(Error::Dimension(
                "parameters do not match the network configuration".into(),
            ));
        }
        Ok(Self { config, params })
    }

    pub fn init<R: Rng>(config: NetworkConfig, rng: &mut R) -> Result<Self> {
        let params = BranchParams::init(&config, rng)?;
        Ok(Self { config, params })
    }

    /// Records the branch with trainable parameters and returns the
    /// displacement node together with the parameter handles.
    pub fn record<R: Rng>(
        &self,
        g: &mut Graph<T>,
        x: &PointSet<T>,
        seed: CentroidSeed,
        trainable: bool,
        rng: &mut R,
    ) -> Result<(Var, Vec<DenseVars>)> {
        let vars = self.params.record(g, trainable);
        let out = branch_forward(g, x, &self.config, &vars, &self.params.layout, seed, rng)?;
        Ok((out, vars))
    }

    /// Displacements for `x` without recording gradients.
    pub fn predict<R: Rng>(
        &self,
        x: &PointSet<T>,
        seed: CentroidSeed,
        rng: &mut R,
    ) -> Result<DisplacementField<T>> {
        let mut g = Graph::new();
        let (out, _) = self.record(&mut g, x, seed, false, rng)?;
        DisplacementField::from_tensor(g.value(out))
    }
}
