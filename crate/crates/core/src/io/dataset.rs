//! Dataset directory: `manifest.cfg` plus `pairs/NNNN_x.xyz`, `pairs/NNNN_y.xyz`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datasynth::Normalization;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::trainer::{Pair, PairedDataset};

use super::pointset::{read_xyz, write_xyz};

pub const MANIFEST: &str = "manifest.cfg";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    x_domain: String,
    y_domain: String,
    count: usize,
    /// One entry per pair, in file order.
    #[serde(default)]
    pair: Vec<Normalization>,
}

fn pair_paths(dir: &Path, i: usize) -> (PathBuf, PathBuf) {
    let pairs = dir.join("pairs");
    (
        pairs.join(format!("{i:04}_x.xyz")),
        pairs.join(format!("{i:04}_y.xyz")),
    )
}

pub fn write_dataset<T: Real>(dir: &Path, ds: &PairedDataset<T>) -> Result<()> {
    let pairs = dir.join("pairs");
    fs::create_dir_all(&pairs).map_err(|e| Error::io(&pairs, e))?;
    for (i, p) in ds.pairs.iter().enumerate() {
        let (xp, yp) = pair_paths(dir, i);
        write_xyz(&xp, &p.x)?;
        write_xyz(&yp, &p.y)?;
    }
    let manifest = Manifest {
        x_domain: ds.x_domain.clone(),
        y_domain: ds.y_domain.clone(),
        count: ds.len(),
        pair: ds.pairs.iter().map(|p| p.norm.clone()).collect(),
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::Config(e.to_string()))?;
    let path = dir.join(MANIFEST);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

pub fn read_dataset(dir: &Path) -> Result<PairedDataset<f64>> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = toml::from_str(&text).map_err(|e| Error::Format {
        path: path.clone(),
        msg: e.to_string(),
    })?;
    if manifest.pair.len() != manifest.count {
        return Err(Error::Format {
            path,
            msg: format!(
                "count = {} but {} normalization entries",
                manifest.count,
                manifest.pair.len()
            ),
        });
    }
    let pairs = manifest
        .pair
        .into_iter()
        .enumerate()
        .map(|(i, norm)| {
            let (xp, yp) = pair_paths(dir, i);
            Ok(Pair {
                x: read_xyz(&xp)?,
                y: read_xyz(&yp)?,
                norm,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    PairedDataset::new(&manifest.x_domain, &manifest.y_domain, pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasynth::{generate, GeneratorKind, GeneratorSpec};

    #[test]
    fn directory_roundtrip() {
        let spec = GeneratorSpec {
            kind: GeneratorKind::CatDog,
            count: 3,
            points_per_set: 64,
            ..GeneratorSpec::default()
        };
        let ds = generate(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &ds).unwrap();
        assert!(dir.path().join("pairs/0002_y.xyz").exists());
        let back = read_dataset(dir.path()).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!((back.x_domain.as_str(), back.y_domain.as_str()), (ds.x_domain.as_str(), ds.y_domain.as_str()));
        for (a, b) in ds.pairs.iter().zip(&back.pairs) {
            assert_eq!(a.norm, b.norm);
            for (u, v) in a.x.coords().iter().zip(b.x.coords()) {
                assert!((u - v).abs() <= 1e-8 * u.abs().max(1e-30));
            }
        }
    }

    #[test]
    fn missing_pair_file_names_path() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join(MANIFEST),
            "x_domain = \"a\"\ny_domain = \"b\"\ncount = 1\n[[pair]]\ncenter = [0.0, 0.0]\ndiagonal = 1.0\n",
        )
        .unwrap();
        let err = read_dataset(dir.path()).unwrap_err();
        assert!(err.to_string().contains("0000_x.xyz"), "{err}");
    }
}
