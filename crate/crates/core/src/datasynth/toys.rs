use std::f64::consts::{PI, TAU};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::spatial::PointSet;
use crate::trainer::PairedDataset;

use super::{finish_pair, GeneratorSpec};

/// Horizontal distance between neighboring bars; the source line spans
/// `[-1, 1]` and the bars stand at `-BAR_SPACING`, `0` and `BAR_SPACING`.
pub const BAR_SPACING: f64 = 2.0 / 3.0;

/// Radius of the bump under the middle of the line→bars source.
const BUMP_RADIUS: f64 = 0.1;

const DOG: &str = include_str!("../../assets/dog.txt");
const CAT: &str = include_str!("../../assets/cat.txt");

/// Jittered stratified samples of `[0, 1)`, shuffled.
fn stratified<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut t: Vec<f64> = (0..n)
        .map(|i| (i as f64 + rng.gen::<f64>()) / n as f64)
        .collect();
    t.shuffle(rng);
    t
}

/// Area-uniform sample of the ellipse with semi-axes `a` (x) and `b` (y).
pub fn sample_disk<R: Rng>(rng: &mut R, a: f64, b: f64) -> [f64; 2] {
    let r = rng.gen::<f64>().sqrt();
    let th = rng.gen_range(0.0..TAU);
    [a * r * th.cos(), b * r * th.sin()]
}

fn segment<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    stratified(n, rng)
        .into_iter()
        .flat_map(|t| [2.0 * t - 1.0, 0.0])
        .collect()
}

/// Line `[-1, 1] × {0}` to the area-uniform ellipse sharing its major axis.
pub fn gen_line_disk(spec: &GeneratorSpec) -> Result<PairedDataset<f64>> {
    let n = spec.points_per_set;
    let pairs = (0..spec.count)
        .map(|i| {
            let mut rng = spec.pair_rng(i);
            let x = PointSet::new(2, segment(n, &mut rng))?;
            let y = PointSet::new(
                2,
                (0..n)
                    .flat_map(|_| sample_disk(&mut rng, 1.0, spec.disk_aspect))
                    .collect(),
            )?;
            finish_pair(spec, x, y, &mut rng)
        })
        .collect::<Result<_>>()?;
    PairedDataset::new("line", "disk", pairs)
}

/// Line `[-1, 1] × {0}`, optionally with a half-circle bump below its middle,
/// to three vertical bars of equal expected occupancy.
pub fn gen_line_bars(spec: &GeneratorSpec, protrusion: bool) -> Result<PairedDataset<f64>> {
    let n = spec.points_per_set;
    let bump = if protrusion {
        (spec.protrusion_fraction * n as f64).round() as usize
    } else {
        0
    };
    let half = spec.bar_height;
    let pairs = (0..spec.count)
        .map(|i| {
            let mut rng = spec.pair_rng(i);
            let mut xs = segment(n - bump, &mut rng);
            for t in stratified(bump, &mut rng) {
                let a = PI + PI * t;
                xs.extend([BUMP_RADIUS * a.cos(), BUMP_RADIUS * a.sin()]);
            }
            let x = PointSet::new(2, xs)?;
            let y = PointSet::new(
                2,
                (0..n)
                    .flat_map(|_| {
                        let bar = rng.gen_range(0..3) as f64 - 1.0;
                        [bar * BAR_SPACING, rng.gen_range(-half..half)]
                    })
                    .collect(),
            )?;
            finish_pair(spec, x, y, &mut rng)
        })
        .collect::<Result<_>>()?;
    let source = if protrusion { "line+bump" } else { "line" };
    PairedDataset::new(source, "bars", pairs)
}

/// Closed 2D contour.
#[derive(Clone, Debug, PartialEq)]
pub struct Template {
    pub vertices: Vec<[f64; 2]>,
}

impl Template {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut vertices = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse {
                    path: origin.into(),
                    line: i + 1,
                    msg: format!("{e}"),
                })?;
            match vals[..] {
                [x, y] if x.is_finite() && y.is_finite() => vertices.push([x, y]),
                _ => {
                    return Err(Error::Parse {
                        path: origin.into(),
                        line: i + 1,
                        msg: "expected two finite coordinates".into(),
                    })
                }
            }
        }
        if vertices.len() < 3 {
            return Err(Error::Config(format!(
                "template {origin} needs at least 3 vertices"
            )));
        }
        Ok(Self { vertices })
    }

    /// The shipped `dog` or `cat` contour.
    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "dog" => Self::parse(DOG, "dog.txt"),
            "cat" => Self::parse(CAT, "cat.txt"),
            _ => Err(Error::Config(format!("no shipped template named `{name}`"))),
        }
    }

    /// Reads `<dir>/<name>.txt`.
    pub fn load(dir: &Path, name: &str) -> Result<Self> {
        let path = dir.join(format!("{name}.txt"));
        let text = std::fs::read_to_string(&path).map_err(|e| {
            Error::Config(format!("template asset {}: {e}", path.display()))
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    fn edges(&self) -> impl Iterator<Item = ([f64; 2], [f64; 2])> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn perimeter(&self) -> f64 {
        self.edges().map(|(a, b)| (b[0] - a[0]).hypot(b[1] - a[1])).sum()
    }

    /// Point at arc length `s ∈ [0, perimeter)`.
    pub fn at(&self, mut s: f64) -> [f64; 2] {
        let mut last = self.vertices[0];
        for (a, b) in self.edges() {
            let len = (b[0] - a[0]).hypot(b[1] - a[1]);
            if s <= len && len > 0.0 {
                let t = s / len;
                return [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
            }
            s -= len;
            last = b;
        }
        last
    }
}

fn polyline_params<R: Rng>(t: &Template, n: usize, rng: &mut R) -> Vec<f64> {
    let p = t.perimeter();
    stratified(n, rng).into_iter().map(|u| u * p).collect()
}

/// `n` arc-length stratified samples of the contour.
pub fn sample_polyline<R: Rng>(t: &Template, n: usize, rng: &mut R) -> Result<PointSet<f64>> {
    let coords = polyline_params(t, n, rng)
        .into_iter()
        .flat_map(|s| t.at(s))
        .collect();
    PointSet::new(2, coords)
}

/// Dog contour samples to cat contour samples.
pub fn gen_cat_dog(spec: &GeneratorSpec) -> Result<PairedDataset<f64>> {
    let (dog, cat) = match &spec.template_dir {
        Some(dir) => (Template::load(dir, "dog")?, Template::load(dir, "cat")?),
        None => (Template::builtin("dog")?, Template::builtin("cat")?),
    };
    let n = spec.points_per_set;
    let pairs = (0..spec.count)
        .map(|i| {
            let mut rng = spec.pair_rng(i);
            let x = sample_polyline(&dog, n, &mut rng)?;
            let y = sample_polyline(&cat, n, &mut rng)?;
            finish_pair(spec, x, y, &mut rng)
        })
        .collect::<Result<_>>()?;
    PairedDataset::new("dog", "cat", pairs)
}
