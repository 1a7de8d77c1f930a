use rand::Rng;

use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

use super::config::NetworkConfig;

/// Weight matrix (`in × out`) and bias (`out`) of one fully connected layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

/// A [`Dense`] layer recorded on a graph.
#[derive(Clone, Copy, Debug)]
pub struct DenseVars {
    pub weight: Var,
    pub bias: Var,
}

/// Parameter shapes of a branch, in the fixed order SA MLPs, FP MLPs, head.
#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    pub names: Vec<String>,
    pub shapes: Vec<(usize, usize)>,
    pub sa: Vec<std::ops::Range<usize>>,
    pub fp: Vec<std::ops::Range<usize>>,
    pub head: std::ops::Range<usize>,
}

impl Layout {
    pub fn of(cfg: &NetworkConfig) -> Result<Self> {
        cfg.validate()?;
        let sas = cfg.sa_specs()?;
        let fps = cfg.fp_specs()?;
        let mut names = Vec::new();
        let mut shapes = Vec::new();
        let mut push_mlp = |prefix: String, mut fan_in: usize, widths: &[usize]| {
            let start = shapes.len();
            for (j, &w) in widths.iter().enumerate() {
                names.push(format!("{prefix}.fc{j}"));
                shapes.push((fan_in, w));
                fan_in = w;
            }
            start..shapes.len()
        };

        // channels available at each level of the hierarchy
        let mut level_channels = vec![cfg.input_channels];
        let mut sa = Vec::new();
        for (i, s) in sas.iter().enumerate() {
            let fan_in = cfg.dim + level_channels[i];
            sa.push(push_mlp(format!("sa{i}"), fan_in, &s.widths));
            level_channels.push(*s.widths.last().unwrap());
        }
        let depth = sas.len();
        let mut current = level_channels[depth];
        let mut fp = Vec::new();
        for (j, f) in fps.iter().enumerate() {
            let skip = level_channels[depth - 1 - j];
            fp.push(push_mlp(format!("fp{j}"), current + skip, &f.widths));
            current = *f.widths.last().unwrap();
        }
        let head = push_mlp("head".into(), current + cfg.noise_len, &cfg.fc_head);
        Ok(Self {
            names,
            shapes,
            sa,
            fp,
            head,
        })
    }

    pub fn parameter_count(&self) -> usize {
        self.shapes.iter().map(|(i, o)| i * o + o).sum()
    }
}

/// All weights and biases of one directional branch.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchParams<T> {
    pub layout: Layout,
    pub layers: Vec<Dense<T>>,
}

impl<T: Real> BranchParams<T> {
    /// Uniform weights in `±sqrt(6 / fan_in)` (He) on every ReLU layer and
    /// `±sqrt(6 / (fan_in + fan_out))` on the linear output layer; zero
    /// biases. Symmetric bounds on the deep stack shrink activations by about
    /// half per layer, and the desk preset's X->Y branch never leaves its
    /// starting loss.
    pub fn init<R: Rng>(cfg: &NetworkConfig, rng: &mut R) -> Result<Self> {
        let layout = Layout::of(cfg)?;
        let last = layout.shapes.len() - 1;
        let layers = layout
            .shapes
            .iter()
            .enumerate()
            .map(|(i, &(fan_in, fan_out))| {
                let bound = if i == last {
                    (6.0 / (fan_in + fan_out) as f64).sqrt()
                } else {
                    (6.0 / fan_in as f64).sqrt()
                };
                let w = (0..fan_in * fan_out)
                    .map(|_| lit::<T>(rng.gen_range(-bound..=bound)))
                    .collect();
                Dense {
                    weight: Tensor::new(vec![fan_in, fan_out], w).expect("shape"),
                    bias: Tensor::zeros(vec![fan_out]),
                }
            })
            .collect();
        Ok(Self { layout, layers })
    }

    pub fn zeros(cfg: &NetworkConfig) -> Result<Self> {
        let layout = Layout::of(cfg)?;
        let layers = layout
            .shapes
            .iter()
            .map(|&(i, o)| Dense {
                weight: Tensor::zeros(vec![i, o]),
                bias: Tensor::zeros(vec![o]),
            })
            .collect();
        Ok(Self { layout, layers })
    }

    /// Rebuilds parameters from a flat vector in [`BranchParams::flatten`]
    /// order.
    pub fn from_flat(cfg: &NetworkConfig, flat: &[T]) -> Result<Self> {
        let layout = Layout::of(cfg)?;
        if flat.len() != layout.parameter_count() {
            return Err(Error::Dimension(format!(
                "{} parameter values for a branch with {}",
                flat.len(),
                layout.parameter_count()
            )));
        }
        let mut at = 0;
        let mut take = |n: usize| {
            let s = flat[at..at + n].to_vec();
            at += n;
            s
        };
        let layers = layout
            .shapes
            .iter()
            .map(|&(i, o)| Dense {
                weight: Tensor::new(vec![i, o], take(i * o)).expect("shape"),
                bias: Tensor::new(vec![o], take(o)).expect("shape"),
            })
            .collect();
        Ok(Self { layout, layers })
    }

    /// Weights then bias of each layer, layer by layer.
    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.layout.parameter_count());
        for l in &self.layers {
            out.extend_from_slice(l.weight.data());
            out.extend_from_slice(l.bias.data());
        }
        out
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
    }

    /// Names matching [`BranchParams::tensors`] order.
    pub fn tensor_names(&self) -> Vec<String> {
        self.layout
            .names
            .iter()
            .flat_map(|n| [format!("{n}.weight"), format!("{n}.bias")])
            .collect()
    }

    pub fn cast<U: Real>(&self) -> BranchParams<U> {
        BranchParams {
            layout: self.layout.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    weight: l.weight.cast(),
                    bias: l.bias.cast(),
                })
                .collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().all(Tensor::all_finite)
    }

    /// Records every tensor on `g`, as trainable leaves or constants.
    pub fn record(&self, g: &mut Graph<T>, trainable: bool) -> Vec<DenseVars> {
        self.layers
            .iter()
            .map(|l| {
                let (w, b) = (l.weight.clone(), l.bias.clone());
                if trainable {
                    DenseVars {
                        weight: g.param(w),
                        bias: g.param(b),
                    }
                } else {
                    DenseVars {
                        weight: g.constant(w),
                        bias: g.constant(b),
                    }
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn full_layout_matches_published_widths() {
        let layout = Layout::of(&NetworkConfig::full(3)).unwrap();
        // SA stack input widths: 3, 3+128, 3+256, 3+512
        assert_eq!(layout.shapes[layout.sa[0].start], (3, 64));
        assert_eq!(layout.shapes[layout.sa[1].start], (131, 128));
        assert_eq!(layout.shapes[layout.sa[3].start], (515, 512));
        // FP: 1024 + 512 skip, then 512 + 256, 256 + 128, 128 + 0
        assert_eq!(layout.shapes[layout.fp[0].start], (1536, 512));
        assert_eq!(layout.shapes[layout.fp[1].start], (768, 512));
        assert_eq!(layout.shapes[layout.fp[2].start], (384, 256));
        assert_eq!(layout.shapes[layout.fp[3].start], (128, 128));
        // head sees 128 features + 32 noise channels
        assert_eq!(layout.shapes[layout.head.start], (160, 128));
        assert_eq!(layout.shapes[layout.head.end - 1], (64, 3));
    }

    #[test]
    fn init_bounds_and_flat_roundtrip() {
        let cfg = NetworkConfig::tiny(2);
        let p = BranchParams::<f64>::init(&cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let last = p.layers.len() - 1;
        for (n, (l, &(i, o))) in p.layers.iter().zip(&p.layout.shapes).enumerate() {
            let bound = if n == last { (6.0 / (i + o) as f64).sqrt() } else { (6.0 / i as f64).sqrt() };
            let widest = l.weight.data().iter().fold(0.0f64, |m, w| m.max(w.abs()));
            assert!(widest <= bound && widest > 0.8 * bound, "layer {n}: {widest} vs {bound}");
            assert!(l.bias.data().iter().all(|&b| b == 0.0));
        }
        let back = BranchParams::from_flat(&cfg, &p.flatten()).unwrap();
        assert_eq!(back, p);
        assert!(BranchParams::<f64>::from_flat(&cfg, &[0.0]).is_err());
        assert_eq!(p.tensor_names().len(), p.tensors().count());
    }
}
