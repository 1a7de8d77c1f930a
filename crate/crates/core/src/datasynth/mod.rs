//! Seeded generators for paired training and evaluation sets.
//!
//! Every pair is drawn in a canonical frame, rotated and scaled by one random
//! similarity shared by both members, then normalized so the joint bounding
//! box has diagonal 1 and is centered at the origin. Pair `i` draws from its
//! own ChaCha stream, so datasets are reproducible and pairs independent.

mod solids;
mod toys;

use std::path::PathBuf;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spatial::PointSet;
use crate::trainer::{Pair, PairedDataset};

pub use solids::{
    cross_section_planes, dart_throw, gen_cross_section, gen_parametric3d, gen_single_view,
    simulate_single_view, slice_cross_sections, Plane, PlanePreset, ShapeFamily, Solid,
};
pub use toys::{
    gen_cat_dog, gen_line_bars, gen_line_disk, sample_disk, sample_polyline, Template,
    BAR_SPACING,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    LineDisk,
    CatDog,
    LineBars,
    Parametric3d,
    CrossSection,
    SingleView,
}

impl std::str::FromStr for GeneratorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "line_disk" => Self::LineDisk,
            "cat_dog" => Self::CatDog,
            "line_bars" => Self::LineBars,
            "parametric3d" => Self::Parametric3d,
            "cross_section" => Self::CrossSection,
            "single_view" => Self::SingleView,
            _ => return Err(Error::Config(format!("unknown generator kind `{s}`"))),
        })
    }
}

/// Everything that determines a generated dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub count: usize,
    pub points_per_set: usize,
    pub seed: u64,
    /// Random orientation per pair.
    pub rotate: bool,
    pub scale_min: f64,
    pub scale_max: f64,
    /// Minor over major semi-axis of the line→disk target.
    pub disk_aspect: f64,
    /// Bump under the middle of the line→bars source.
    pub protrusion: bool,
    /// Share of source points placed on the bump.
    pub protrusion_fraction: f64,
    /// Bar height relative to the source line length.
    pub bar_height: f64,
    pub family: ShapeFamily,
    pub planes: PlanePreset,
    /// Slab half-width for cross sections taken from sampled surfaces.
    pub slab_half_width: f64,
    /// Direction the simulated scanner looks along, before the pair rotation.
    pub view_dir: [f64; 3],
    /// Cell size of the simulated scan relative to the blue-noise spacing.
    pub cell: f64,
    /// Blue-noise spacing relative to `sqrt(area / points_per_set)`.
    pub min_dist_factor: f64,
    /// Directory with `dog.txt` and `cat.txt`; the shipped contours otherwise.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub template_dir: Option<PathBuf>,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            kind: GeneratorKind::LineDisk,
            count: 1000,
            points_per_set: 256,
            seed: 0,
            rotate: true,
            scale_min: 0.5,
            scale_max: 1.5,
            disk_aspect: 0.5,
            protrusion: false,
            protrusion_fraction: 0.1,
            bar_height: 0.5,
            family: ShapeFamily::Capsule,
            planes: PlanePreset::FourParallel,
            slab_half_width: 0.01,
            view_dir: [0.0, 0.0, 1.0],
            cell: 0.7,
            min_dist_factor: 0.5,
            template_dir: None,
        }
    }
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.points_per_set < 16 || self.count == 0 {
            return fail(format!(
                "need count ≥ 1 and points_per_set ≥ 16, got {} and {}",
                self.count, self.points_per_set
            ));
        }
        if !(self.scale_min > 0.0 && self.scale_min <= self.scale_max) {
            return fail(format!(
                "scale range [{}, {}] must be positive and ordered",
                self.scale_min, self.scale_max
            ));
        }
        if !(self.disk_aspect > 0.0 && self.disk_aspect <= 1.0) {
            return fail(format!("disk_aspect {} must lie in (0, 1]", self.disk_aspect));
        }
        if !(0.0..0.5).contains(&self.protrusion_fraction) {
            return fail(format!(
                "protrusion_fraction {} must lie in [0, 0.5)",
                self.protrusion_fraction
            ));
        }
        if !(self.bar_height > 0.0 && self.cell > 0.0 && self.slab_half_width > 0.0) {
            return fail("bar_height, cell and slab_half_width must be positive".into());
        }
        if !(self.min_dist_factor > 0.0 && self.min_dist_factor < 1.0) {
            return fail(format!(
                "min_dist_factor {} must lie in (0, 1)",
                self.min_dist_factor
            ));
        }
        let norm = self.view_dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return fail("view_dir must be a non-zero vector".into());
        }
        Ok(())
    }

    /// Rng stream of pair `i`.
    pub fn pair_rng(&self, i: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(i as u64);
        rng
    }
}

/// Generates the dataset described by `spec`.
pub fn generate(spec: &GeneratorSpec) -> Result<PairedDataset<f64>> {
    spec.validate()?;
    match spec.kind {
        GeneratorKind::LineDisk => gen_line_disk(spec),
        GeneratorKind::LineBars => gen_line_bars(spec, spec.protrusion),
        GeneratorKind::CatDog => gen_cat_dog(spec),
        GeneratorKind::Parametric3d => gen_parametric3d(spec),
        GeneratorKind::CrossSection => gen_cross_section(spec),
        GeneratorKind::SingleView => gen_single_view(spec),
    }
}

/// Inverse of the normalizing similarity: `original = normalized · diagonal + center`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Normalization {
    pub center: Vec<f64>,
    pub diagonal: f64,
}

impl Normalization {
    pub fn identity(dim: usize) -> Self {
        Self {
            center: vec![0.0; dim],
            diagonal: 1.0,
        }
    }

    pub fn normalize(&self, ps: &PointSet<f64>) -> Result<PointSet<f64>> {
        self.map(ps, |v, c| (v - c) / self.diagonal)
    }

    pub fn denormalize(&self, ps: &PointSet<f64>) -> Result<PointSet<f64>> {
        self.map(ps, |v, c| v * self.diagonal + c)
    }

    fn map(&self, ps: &PointSet<f64>, f: impl Fn(f64, f64) -> f64) -> Result<PointSet<f64>> {
        if ps.dim() != self.center.len() {
            return Err(Error::Dimension(format!(
                "{}-d points for a {}-d normalization",
                ps.dim(),
                self.center.len()
            )));
        }
        let coords = ps
            .iter()
            .flat_map(|p| p.iter().zip(&self.center).map(|(&v, &c)| f(v, c)))
            .collect();
        PointSet::new(ps.dim(), coords)
    }
}

/// Maps the joint bounding box of `x ∪ y` to diagonal 1 centered at the origin.
pub fn normalize_pair(
    x: &PointSet<f64>,
    y: &PointSet<f64>,
) -> Result<(PointSet<f64>, PointSet<f64>, Normalization)> {
    let joint = x.union(y)?;
    let (lo, hi) = joint
        .bounds()
        .ok_or_else(|| Error::Degenerate("cannot normalize an empty pair".into()))?;
    let diagonal = joint.diagonal();
    if !(diagonal > 0.0) {
        return Err(Error::Degenerate(
            "pair bounding box has zero diagonal".into(),
        ));
    }
    let center = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
    let norm = Normalization { center, diagonal };
    Ok((norm.normalize(x)?, norm.normalize(y)?, norm))
}

/// Random similarity applied identically to both members of a pair.
#[derive(Clone, Debug)]
pub(crate) struct Similarity {
    rotation: Vec<f64>,
    scale: f64,
}

impl Similarity {
    pub(crate) fn draw<R: Rng>(spec: &GeneratorSpec, dim: usize, rng: &mut R) -> Self {
        let rotation = match (dim, spec.rotate) {
            (_, false) => identity(dim),
            (2, true) => {
                let a = rng.gen_range(0.0..std::f64::consts::TAU);
                let (s, c) = a.sin_cos();
                vec![c, -s, s, c]
            }
            (_, true) => {
                let q: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
                let q = UnitQuaternion::from_quaternion(Quaternion::new(q[0], q[1], q[2], q[3]));
                let m = q.to_rotation_matrix();
                (0..3)
                    .flat_map(|r| (0..3).map(move |c| (r, c)))
                    .map(|(r, c)| m[(r, c)])
                    .collect()
            }
        };
        let scale = if spec.scale_min < spec.scale_max {
            rng.gen_range(spec.scale_min..spec.scale_max)
        } else {
            spec.scale_min
        };
        Self { rotation, scale }
    }

    pub(crate) fn apply(&self, ps: &PointSet<f64>) -> Result<PointSet<f64>> {
        let d = ps.dim();
        let coords = ps
            .iter()
            .flat_map(|p| {
                (0..d).map(move |r| {
                    self.scale * (0..d).map(|c| self.rotation[r * d + c] * p[c]).sum::<f64>()
                })
            })
            .collect();
        PointSet::new(d, coords)
    }
}

fn identity(dim: usize) -> Vec<f64> {
    (0..dim * dim)
        .map(|i| if i % (dim + 1) == 0 { 1.0 } else { 0.0 })
        .collect()
}

/// Transforms a canonical pair and packages it with its normalization.
pub(crate) fn finish_pair<R: Rng>(
    spec: &GeneratorSpec,
    x: PointSet<f64>,
    y: PointSet<f64>,
    rng: &mut R,
) -> Result<Pair<f64>> {
    let sim = Similarity::draw(spec, x.dim(), rng);
    let (x, y, norm) = normalize_pair(&sim.apply(&x)?, &sim.apply(&y)?)?;
    Ok(Pair { x, y, norm })
}

/// Unit vector along `v`.
pub(crate) fn unit3(v: [f64; 3]) -> Vector3<f64> {
    Vector3::from(v).normalize()
}
