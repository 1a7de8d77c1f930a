use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Set abstraction layer: `K` centroids, ball radius `r`, per-point MLP
/// widths, and the number of points gathered per ball.
#[derive(Clone, Debug, PartialEq)]
pub struct SaSpec {
    pub patches: usize,
    pub radius: f64,
    pub widths: Vec<usize>,
    pub group_size: usize,
}

/// Feature propagation layer: MLP widths applied after interpolation.
#[derive(Clone, Debug, PartialEq)]
pub struct FpSpec {
    pub widths: Vec<usize>,
}

/// One layer of a branch, written as `SA(K, r, [l1, ..], group)`,
/// `FP([l1, ..])` or `FC(l)`.
#[derive(Clone, Debug, PartialEq)]
pub enum LayerSpec {
    Sa(SaSpec),
    Fp(FpSpec),
    Fc(usize),
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |w: &[usize]| {
            w.iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(", ")
        };
        match self {
            LayerSpec::Sa(s) => write!(
                f,
                "SA({}, {:?}, [{}], {})",
                s.patches,
                s.radius,
                list(&s.widths),
                s.group_size
            ),
            LayerSpec::Fp(s) => write!(f, "FP([{}])", list(&s.widths)),
            LayerSpec::Fc(w) => write!(f, "FC({w})"),
        }
    }
}

impl FromStr for LayerSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("malformed layer spec `{s}`"));
        let s = s.trim();
        let open = s.find('(').ok_or_else(bad)?;
        if !s.ends_with(')') {
            return Err(bad());
        }
        let kind = s[..open].trim();
        let body = &s[open + 1..s.len() - 1];
        let (list, rest) = match (body.find('['), body.find(']')) {
            (Some(a), Some(b)) if a < b => {
                let widths = body[a + 1..b]
                    .split(',')
                    .map(|w| w.trim().parse::<usize>().map_err(|_| bad()))
                    .collect::<Result<Vec<_>>>()?;
                (Some(widths), (&body[..a], &body[b + 1..]))
            }
            _ => (None, (body, "")),
        };
        match kind {
            "SA" => {
                let head: Vec<&str> = rest.0.split(',').map(str::trim).collect();
                let tail: Vec<&str> = rest
                    .1
                    .split(',')
                    .map(str::trim)
                    .filter(|t| !t.is_empty())
                    .collect();
                if head.len() != 3 || !head[2].is_empty() || tail.len() > 1 {
                    return Err(bad());
                }
                let patches = head[0].parse().map_err(|_| bad())?;
                let group_size = match tail.first() {
                    Some(t) => t.parse().map_err(|_| bad())?,
                    None => DEFAULT_GROUP_SIZE,
                };
                Ok(LayerSpec::Sa(SaSpec {
                    patches,
                    radius: head[1].parse().map_err(|_| bad())?,
                    widths: list.ok_or_else(bad)?,
                    group_size,
                }))
            }
            "FP" if rest.0.trim().is_empty() && rest.1.trim().is_empty() => {
                Ok(LayerSpec::Fp(FpSpec {
                    widths: list.ok_or_else(bad)?,
                }))
            }
            "FC" if list.is_none() => Ok(LayerSpec::Fc(body.trim().parse().map_err(|_| bad())?)),
            _ => Err(bad()),
        }
    }
}

impl Serialize for LayerSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LayerSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Ball size used when an `SA(...)` spec omits it.
pub const DEFAULT_GROUP_SIZE: usize = 32;

/// Architecture of one directional branch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub dim: usize,
    /// Per-point feature channels carried by input sets (usually 0).
    #[serde(default)]
    pub input_channels: usize,
    pub sa_layers: Vec<LayerSpec>,
    pub fp_layers: Vec<LayerSpec>,
    /// FC widths after the noise concatenation; the last one equals `dim`.
    pub fc_head: Vec<usize>,
    pub noise_len: usize,
    pub noise_std: f64,
    /// Draw a random first centroid at every training step.
    #[serde(default = "yes")]
    pub random_fps_in_training: bool,
}

fn yes() -> bool {
    true
}

fn sa(patches: usize, radius: f64, widths: &[usize], group_size: usize) -> LayerSpec {
    LayerSpec::Sa(SaSpec {
        patches,
        radius,
        widths: widths.to_vec(),
        group_size,
    })
}

fn fp(widths: &[usize]) -> LayerSpec {
    LayerSpec::Fp(FpSpec {
        widths: widths.to_vec(),
    })
}

impl NetworkConfig {
    /// The published architecture for 2,048-point inputs.
    pub fn full(dim: usize) -> Self {
        Self {
            dim,
            input_channels: 0,
            sa_layers: vec![
                sa(1024, 0.1, &[64, 64, 128], 32),
                sa(384, 0.2, &[128, 128, 256], 32),
                sa(128, 0.4, &[256, 256, 512], 32),
                sa(1, 1.0, &[512, 512, 1024], 128),
            ],
            fp_layers: vec![
                fp(&[512, 512]),
                fp(&[512, 256]),
                fp(&[256, 128]),
                fp(&[128, 128, 128]),
            ],
            fc_head: vec![128, 64, dim],
            noise_len: 32,
            noise_std: 1.0,
            random_fps_in_training: true,
        }
    }

    /// Proportionally shrunk architecture for 256-point inputs.
    pub fn desk(dim: usize) -> Self {
        Self {
            dim,
            input_channels: 0,
            sa_layers: vec![
                sa(128, 0.1, &[16, 16, 32], 16),
                sa(48, 0.2, &[32, 32, 64], 16),
                sa(16, 0.4, &[64, 64, 128], 16),
                sa(1, 1.0, &[128, 128, 256], 16),
            ],
            fp_layers: vec![
                fp(&[128, 128]),
                fp(&[128, 64]),
                fp(&[64, 32]),
                fp(&[32, 32, 32]),
            ],
            fc_head: vec![32, 16, dim],
            noise_len: 32,
            noise_std: 1.0,
            random_fps_in_training: true,
        }
    }

    /// Two-level network for inputs of at least 8 points; used by gradient
    /// checks and quick tests.
    pub fn tiny(dim: usize) -> Self {
        Self {
            dim,
            input_channels: 0,
            sa_layers: vec![sa(8, 0.3, &[8, 8], 4), sa(1, 1.0, &[16], 8)],
            fp_layers: vec![fp(&[16]), fp(&[8])],
            fc_head: vec![8, dim],
            noise_len: 4,
            noise_std: 1.0,
            random_fps_in_training: true,
        }
    }

    pub fn preset(name: &str, dim: usize) -> Result<Self> {
        match name {
            "full" => Ok(Self::full(dim)),
            "desk" => Ok(Self::desk(dim)),
            "tiny" => Ok(Self::tiny(dim)),
            other => Err(Error::Config(format!(
                "unknown network preset `{other}` (expected full, desk or tiny)"
            ))),
        }
    }

    pub fn with_noise_len(mut self, noise_len: usize) -> Self {
        self.noise_len = noise_len;
        self
    }

    pub fn sa_specs(&self) -> Result<Vec<&SaSpec>> {
        self.sa_layers
            .iter()
            .map(|l| match l {
                LayerSpec::Sa(s) => Ok(s),
                other => Err(Error::Config(format!("{other} listed among SA layers"))),
            })
            .collect()
    }

    pub fn fp_specs(&self) -> Result<Vec<&FpSpec>> {
        self.fp_layers
            .iter()
            .map(|l| match l {
                LayerSpec::Fp(s) => Ok(s),
                other => Err(Error::Config(format!("{other} listed among FP layers"))),
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.dim == 2 || self.dim == 3) {
            return fail(format!("network dimension {} (expected 2 or 3)", self.dim));
        }
        let sas = self.sa_specs()?;
        let fps = self.fp_specs()?;
        if sas.is_empty() {
            return fail("at least one SA layer is required".into());
        }
        if sas.len() != fps.len() {
            return fail(format!(
                "{} SA layers but {} FP layers; the hierarchy must mirror",
                sas.len(),
                fps.len()
            ));
        }
        for s in &sas {
            if s.patches == 0 || s.group_size == 0 || !(s.radius > 0.0) {
                return fail(format!("invalid {}", LayerSpec::Sa((*s).clone())));
            }
            if s.widths.is_empty() || s.widths.contains(&0) {
                return fail(format!("invalid widths in {}", LayerSpec::Sa((*s).clone())));
            }
        }
        for f in &fps {
            if f.widths.is_empty() || f.widths.contains(&0) {
                return fail(format!("invalid widths in {}", LayerSpec::Fp((*f).clone())));
            }
        }
        if self.fc_head.contains(&0) || self.fc_head.last() != Some(&self.dim) {
            return fail(format!(
                "FC head {:?} must end with the point dimension {}",
                self.fc_head, self.dim
            ));
        }
        if !(self.noise_std >= 0.0) {
            return fail(format!("noise_std {} must be non-negative", self.noise_std));
        }
        Ok(())
    }

    /// Smallest input size every SA layer can subsample.
    pub fn min_points(&self) -> usize {
        self.sa_specs()
            .map(|s| s.iter().map(|l| l.patches).filter(|&k| k > 1).max().unwrap_or(1))
            .unwrap_or(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layer_notation_roundtrips() {
        for text in ["SA(128, 0.1, [16, 16, 32], 16)", "FP([512, 256])", "FC(3)"] {
            let spec: LayerSpec = text.parse().unwrap();
            assert_eq!(spec.to_string(), text);
        }
        let short: LayerSpec = "SA(1, 1.0, [64])".parse().unwrap();
        assert_eq!(
            short,
            LayerSpec::Sa(SaSpec {
                patches: 1,
                radius: 1.0,
                widths: vec![64],
                group_size: DEFAULT_GROUP_SIZE
            })
        );
        for bad in ["SA(1, [3])", "FP(3)", "FC([3])", "XX([1])", "SA(1, 0.1, [a])"] {
            assert!(bad.parse::<LayerSpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn presets_validate() {
        for dim in [2, 3] {
            NetworkConfig::full(dim).validate().unwrap();
            NetworkConfig::desk(dim).validate().unwrap();
            NetworkConfig::tiny(dim).validate().unwrap();
        }
        assert_eq!(NetworkConfig::desk(2).min_points(), 128);
    }

    #[test]
    fn desk_radii_increase_down_the_hierarchy() {
        for cfg in [NetworkConfig::desk(3), NetworkConfig::full(3)] {
            let radii: Vec<f64> = cfg.sa_specs().unwrap().iter().map(|s| s.radius).collect();
            assert!(radii.windows(2).all(|w| w[0] < w[1]), "{radii:?}");
        }
    }

    #[test]
    fn rejects_unmirrored_or_bad_head() {
        let mut c = NetworkConfig::desk(3);
        c.fp_layers.pop();
        assert!(c.validate().is_err());
        let mut c = NetworkConfig::desk(3);
        c.fc_head = vec![32, 2];
        assert!(c.validate().is_err());
        let mut c = NetworkConfig::desk(3);
        c.fp_layers[0] = LayerSpec::Fc(4);
        assert!(c.validate().is_err());
    }
}
