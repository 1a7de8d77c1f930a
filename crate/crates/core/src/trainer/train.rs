use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::layers::{apply_displacements, branch_forward, Branch, CentroidSeed, NetworkConfig};
use crate::losses::{combined_loss_node, LossBreakdown};
use crate::scalar::{lit, Real};
use crate::spatial::PointSet;

use super::adam::AdamState;
use super::config::TrainConfig;
use super::dataset::PairedDataset;

/// Both trained branches plus what is needed to resume or reproduce them.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    /// Maps source sets onto the target domain.
    pub xy: Branch<T>,
    /// Maps target sets back onto the source domain.
    pub yx: Branch<T>,
    pub optimizer: Option<AdamState<T>>,
    pub seed: u64,
    /// Completed epochs.
    pub epoch: usize,
}

impl<T: Real> Checkpoint<T> {
    pub fn branch(&self, direction: Direction) -> &Branch<T> {
        match direction {
            Direction::Xy => &self.xy,
            Direction::Yx => &self.yx,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Xy,
    Yx,
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "xy" => Ok(Self::Xy),
            "yx" => Ok(Self::Yx),
            _ => Err(Error::Config(format!("direction `{s}` (expected xy or yx)"))),
        }
    }
}

/// Mean loss terms of one epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord<T> {
    pub epoch: usize,
    pub lr: f64,
    pub losses: LossBreakdown<T>,
}

impl<T: Real> fmt::Display for EpochRecord<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let l = &self.losses;
        write!(
            f,
            "epoch={} lr={} shape_xy={} density_xy={} shape_yx={} density_yx={} reg={} total={}",
            self.epoch, self.lr, l.shape_xy, l.density_xy, l.shape_yx, l.density_yx, l.cross_reg, l.total
        )
    }
}

fn tensor_names<T: Real>(xy: &Branch<T>, yx: &Branch<T>) -> Vec<String> {
    let tag = |p: &str, b: &Branch<T>| {
        b.params
            .tensor_names()
            .into_iter()
            .map(|n| format!("{p}.{n}"))
            .collect::<Vec<_>>()
    };
    let mut names = tag("xy", xy);
    names.extend(tag("yx", yx));
    names
}

/// Applies the ablation switches to a branch architecture.
pub fn ablated(net: &NetworkConfig, cfg: &TrainConfig) -> NetworkConfig {
    if cfg.ablation.noise {
        net.clone()
    } else {
        net.clone().with_noise_len(0)
    }
}

/// Trains both branches jointly on the bidirectional objective.
///
/// Each batch records every pair on one graph and takes a single optimizer
/// step over the parameters of both branches. `sink` receives the mean loss
/// terms after every epoch.
pub fn train<T: Real>(
    dataset: &PairedDataset<T>,
    net_xy: &NetworkConfig,
    net_yx: &NetworkConfig,
    cfg: &TrainConfig,
    sink: &mut dyn FnMut(&EpochRecord<T>),
) -> Result<Checkpoint<T>> {
    cfg.validate()?;
    dataset.validate()?;
    let dim = dataset
        .dim()
        .ok_or_else(|| Error::Precondition("training on an empty dataset".into()))?;
    if net_xy.dim != dim || net_yx.dim != dim {
        return Err(Error::Dimension(format!(
            "branches are {}-d and {}-d for a {dim}-d dataset",
            net_xy.dim, net_yx.dim
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut xy = Branch::init(ablated(net_xy, cfg), &mut rng)?;
    let mut yx = Branch::init(ablated(net_yx, cfg), &mut rng)?;
    let mut adam = AdamState::new(xy.params.tensors().chain(yx.params.tensors()));
    let names = tensor_names(&xy, &yx);
    let mut order: Vec<usize> = (0..dataset.len()).collect();

    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        order.shuffle(&mut rng);
        let mut sum = LossBreakdown::<T>::default();
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut g = Graph::new();
            let vx = xy.params.record(&mut g, true);
            let vy = yx.params.record(&mut g, true);
            let mut total: Option<Var> = None;
            for &i in batch {
                let pair = &dataset.pairs[i];
                let seed_x = centroid_seed(&xy.config);
                let ix = branch_forward(&mut g, &pair.x, &xy.config, &vx, &xy.params.layout, seed_x, &mut rng)?;
                let seed_y = centroid_seed(&yx.config);
                let iy = branch_forward(&mut g, &pair.y, &yx.config, &vy, &yx.params.layout, seed_y, &mut rng)?;
                let nodes = combined_loss_node(
                    &mut g,
                    &pair.x,
                    &pair.y,
                    ix,
                    iy,
                    &cfg.weights,
                    cfg.ablation.crossreg,
                )?;
                let values = nodes.values(&g);
                if !values.is_finite() {
                    return Err(Error::Numeric(format!(
                        "non-finite loss at epoch {epoch}, batch {b}, pair {i}"
                    )));
                }
                sum.add_assign(&values);
                total = Some(match total {
                    Some(t) => g.add(t, nodes.total)?,
                    None => nodes.total,
                });
            }
            let total = total.expect("batches are non-empty");
            let mean = g.scale(total, T::one() / lit::<T>(batch.len() as f64));
            g.backward(mean)?;
            let grads: Vec<Vec<T>> = vx
                .iter()
                .chain(&vy)
                .flat_map(|l| [l.weight, l.bias])
                .map(|v| {
                    g.grad(v)
                        .map(<[T]>::to_vec)
                        .unwrap_or_else(|| vec![T::zero(); g.value(v).len()])
                })
                .collect();
            drop(g);
            let mut params: Vec<_> = xy
                .params
                .tensors_mut()
                .chain(yx.params.tensors_mut())
                .collect();
            adam.step(&mut params, &grads, &names, lr).map_err(|e| match e {
                Error::Numeric(m) => Error::Numeric(format!("epoch {epoch}, batch {b}: {m}")),
                other => other,
            })?;
        }
        let record = EpochRecord {
            epoch,
            lr,
            losses: sum.scaled(T::one() / lit::<T>(dataset.len() as f64)),
        };
        sink(&record);
    }

    Ok(Checkpoint {
        xy,
        yx,
        optimizer: Some(adam),
        seed: cfg.seed,
        epoch: cfg.epochs,
    })
}

fn centroid_seed(net: &NetworkConfig) -> CentroidSeed {
    if net.random_fps_in_training {
        CentroidSeed::Random
    } else {
        CentroidSeed::Index(0)
    }
}

/// Union of `passes` predictions for `x`, each with fresh noise.
pub fn infer_multipass<T: Real, R: Rng>(
    x: &PointSet<T>,
    branch: &Branch<T>,
    passes: usize,
    rng: &mut R,
) -> Result<PointSet<T>> {
    if passes == 0 {
        return Err(Error::Contract("at least one inference pass is required".into()));
    }
    let mut out = PointSet::empty(x.dim())?;
    for _ in 0..passes {
        let d = branch.predict(x, CentroidSeed::Index(0), rng)?;
        out = out.union(&apply_displacements(x, &d)?)?;
    }
    Ok(out)
}
