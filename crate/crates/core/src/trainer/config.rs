use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::LossWeights;

/// Which optional components are active, written `ns±rg±`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Ablation {
    /// Noise channels before the head.
    pub noise: bool,
    /// Cross regularizer in the optimized total.
    pub crossreg: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Self {
            noise: true,
            crossreg: true,
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = |on: bool| if on { '+' } else { '-' };
        write!(f, "ns{}rg{}", s(self.noise), s(self.crossreg))
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("ablation `{s}` is not of the form ns±rg±"));
        let sign = |c: Option<char>| match c {
            Some('+') => Ok(true),
            Some('-') => Ok(false),
            _ => Err(bad()),
        };
        let rest = s.strip_prefix("ns").ok_or_else(bad)?;
        let mut chars = rest.chars();
        let noise = sign(chars.next())?;
        let tail: String = chars.collect();
        let reg = tail.strip_prefix("rg").ok_or_else(bad)?;
        if reg.chars().count() != 1 {
            return Err(bad());
        }
        Ok(Self {
            noise,
            crossreg: sign(reg.chars().next())?,
        })
    }
}

impl TryFrom<String> for Ablation {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Ablation> for String {
    fn from(a: Ablation) -> String {
        a.to_string()
    }
}

/// Optimization settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr_init: f64,
    pub lr_floor: f64,
    /// Epoch fractions at which the rate halves.
    pub decay_points: Vec<f64>,
    /// Drop straight to `lr_floor` after the last decay point.
    pub terminal_decay: bool,
    pub batch_size: usize,
    /// Configured in its own `[loss]` section.
    #[serde(skip)]
    pub weights: LossWeights,
    pub ablation: Ablation,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            lr_init: 1e-3,
            lr_floor: 1e-4,
            decay_points: vec![0.25, 0.5, 0.75],
            terminal_decay: true,
            batch_size: 8,
            weights: LossWeights::default(),
            ablation: Ablation::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.epochs == 0 || self.batch_size == 0 {
            return fail("epochs and batch_size must be positive".into());
        }
        if !(self.lr_floor > 0.0 && self.lr_floor <= self.lr_init && self.lr_init.is_finite()) {
            return fail(format!(
                "need 0 < lr_floor ≤ lr_init, got {} and {}",
                self.lr_floor, self.lr_init
            ));
        }
        let increasing = self.decay_points.windows(2).all(|w| w[0] < w[1]);
        let inside = self.decay_points.iter().all(|&d| d > 0.0 && d < 1.0);
        if !(increasing && inside) {
            return fail(format!(
                "decay points {:?} must increase strictly inside (0, 1)",
                self.decay_points
            ));
        }
        self.weights.validate()
    }

    /// Learning rate used throughout `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let progress = epoch as f64 / self.epochs as f64;
        let passed = self.decay_points.iter().filter(|&&d| progress >= d).count();
        if self.terminal_decay && passed > 0 && passed == self.decay_points.len() {
            return self.lr_floor;
        }
        (self.lr_init * 0.5f64.powi(passed as i32)).max(self.lr_floor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_trace() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.lr_at(0), 1e-3);
        assert_eq!(cfg.lr_at(49), 1e-3);
        assert_eq!(cfg.lr_at(50), 5e-4);
        assert_eq!(cfg.lr_at(100), 2.5e-4);
        assert_eq!(cfg.lr_at(149), 2.5e-4);
        assert_eq!(cfg.lr_at(150), 1e-4);
        assert_eq!(cfg.lr_at(199), 1e-4);
        let plain = TrainConfig {
            terminal_decay: false,
            ..cfg
        };
        assert_eq!(plain.lr_at(199), 1.25e-4);
    }

    #[test]
    fn ablation_notation() {
        for s in ["ns+rg+", "ns-rg+", "ns+rg-", "ns-rg-"] {
            assert_eq!(s.parse::<Ablation>().unwrap().to_string(), s);
        }
        let a: Ablation = "ns-rg+".parse().unwrap();
        assert!(!a.noise && a.crossreg);
        for bad in ["", "ns+", "ns*rg+", "rg+ns+", "ns+rg+x"] {
            assert!(bad.parse::<Ablation>().is_err(), "{bad}");
        }
    }

    #[test]
    fn validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            decay_points: vec![0.5, 0.25],
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            lr_floor: 1e-2,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
