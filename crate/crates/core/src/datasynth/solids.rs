use std::collections::{BTreeMap, HashMap};
use std::f64::consts::{PI, TAU};

use nalgebra::Vector3;
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, UnitSphere};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spatial::PointSet;
use crate::trainer::PairedDataset;

use super::{finish_pair, unit3, GeneratorSpec};

/// Dart attempts allowed per requested sample.
const DART_BUDGET: usize = 400;
/// Uniform surface samples per requested point when cutting slabs or
/// simulating scans.
const DENSE_FACTOR: usize = 64;
/// Parameter steps of the arc-length table used for elliptical sections.
const ELLIPSE_STEPS: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeFamily {
    Capsule,
    Ellipsoid,
    BoxWithLegs,
}

impl std::str::FromStr for ShapeFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "capsule" => Ok(Self::Capsule),
            "ellipsoid" => Ok(Self::Ellipsoid),
            "box_with_legs" => Ok(Self::BoxWithLegs),
            _ => Err(Error::Config(format!("unknown shape family `{s}`"))),
        }
    }
}

/// Axis-aligned rectangle `corner + s·u + t·v`, `s, t ∈ [0, 1]`.
#[derive(Clone, Copy, Debug)]
struct Rect {
    corner: [f64; 3],
    u: [f64; 3],
    v: [f64; 3],
}

impl Rect {
    fn area(&self) -> f64 {
        Vector3::from(self.u).cross(&Vector3::from(self.v)).norm()
    }

    fn at(&self, s: f64, t: f64) -> [f64; 3] {
        std::array::from_fn(|k| self.corner[k] + s * self.u[k] + t * self.v[k])
    }
}

/// The six faces of the box `[lo, hi]`, optionally without the top face.
fn box_faces(lo: [f64; 3], hi: [f64; 3], top: bool) -> Vec<Rect> {
    let e = |k: usize| {
        let mut v = [0.0; 3];
        v[k] = hi[k] - lo[k];
        v
    };
    let mut faces = Vec::new();
    for k in 0..3 {
        let (i, j) = ((k + 1) % 3, (k + 2) % 3);
        for side in [lo[k], hi[k]] {
            if k == 2 && side == hi[k] && !top {
                continue;
            }
            let mut corner = lo;
            corner[k] = side;
            faces.push(Rect {
                corner,
                u: e(i),
                v: e(j),
            });
        }
    }
    faces
}

/// Canonical parametric solid with an analytic skeleton.
#[derive(Clone, Debug)]
pub struct Solid {
    pub family: ShapeFamily,
}

// capsule: axis along z
const CAPSULE_HALF: f64 = 0.6;
const CAPSULE_RADIUS: f64 = 0.3;
// ellipsoid semi-axes
const ELLIPSOID: [f64; 3] = [0.8, 0.55, 0.4];
// table: top slab and four square legs at (±LEG_X, ±LEG_Y)
const TOP_LO: [f64; 3] = [-0.6, -0.4, 0.3];
const TOP_HI: [f64; 3] = [0.6, 0.4, 0.4];
const LEG_X: f64 = 0.5;
const LEG_Y: f64 = 0.3;
const LEG_HALF_WIDTH: f64 = 0.04;
const LEG_BOTTOM: f64 = -0.4;

fn legs() -> impl Iterator<Item = (f64, f64)> {
    [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)]
        .into_iter()
        .map(|(sx, sy)| (sx * LEG_X, sy * LEG_Y))
}

impl Solid {
    pub fn new(family: ShapeFamily) -> Self {
        Self { family }
    }

    fn table_faces() -> Vec<Rect> {
        let mut faces = box_faces(TOP_LO, TOP_HI, true);
        for (x, y) in legs() {
            let w = LEG_HALF_WIDTH;
            faces.extend(box_faces(
                [x - w, y - w, LEG_BOTTOM],
                [x + w, y + w, TOP_LO[2]],
                false,
            ));
        }
        faces
    }

    /// Surface area; for the ellipsoid the Knud Thomsen approximation.
    pub fn area(&self) -> f64 {
        match self.family {
            ShapeFamily::Capsule => {
                TAU * CAPSULE_RADIUS * 2.0 * CAPSULE_HALF + 4.0 * PI * CAPSULE_RADIUS.powi(2)
            }
            ShapeFamily::Ellipsoid => {
                let [a, b, c] = ELLIPSOID;
                let p = 1.6075;
                let m = ((a * b).powf(p) + (a * c).powf(p) + (b * c).powf(p)) / 3.0;
                4.0 * PI * m.powf(1.0 / p)
            }
            ShapeFamily::BoxWithLegs => Self::table_faces().iter().map(Rect::area).sum(),
        }
    }

    /// Axis-aligned bounds.
    pub fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        match self.family {
            ShapeFamily::Capsule => {
                let r = CAPSULE_RADIUS;
                let h = CAPSULE_HALF + r;
                ([-r, -r, -h], [r, r, h])
            }
            ShapeFamily::Ellipsoid => {
                let [a, b, c] = ELLIPSOID;
                ([-a, -b, -c], [a, b, c])
            }
            ShapeFamily::BoxWithLegs => ([TOP_LO[0], TOP_LO[1], LEG_BOTTOM], TOP_HI),
        }
    }

    /// Area-uniform surface sample.
    pub fn sample_surface<R: Rng>(&self, rng: &mut R) -> [f64; 3] {
        match self.family {
            ShapeFamily::Capsule => {
                let (r, h) = (CAPSULE_RADIUS, CAPSULE_HALF);
                let side = TAU * r * 2.0 * h;
                let caps = 4.0 * PI * r * r;
                if rng.gen::<f64>() * (side + caps) < side {
                    let th = rng.gen_range(0.0..TAU);
                    [r * th.cos(), r * th.sin(), rng.gen_range(-h..h)]
                } else {
                    let [x, y, z]: [f64; 3] = UnitSphere.sample(rng);
                    let shift = if z >= 0.0 { h } else { -h };
                    [r * x, r * y, r * z + shift]
                }
            }
            ShapeFamily::Ellipsoid => {
                let [a, b, c] = ELLIPSOID;
                // area element of the stretched sphere, bounded by its largest value
                let bound = (a * b).max(a * c).max(b * c);
                loop {
                    let [u, v, w]: [f64; 3] = UnitSphere.sample(rng);
                    let g = ((b * c * u).powi(2) + (a * c * v).powi(2) + (a * b * w).powi(2)).sqrt();
                    if rng.gen::<f64>() * bound <= g {
                        return [a * u, b * v, c * w];
                    }
                }
            }
            ShapeFamily::BoxWithLegs => {
                let faces = Self::table_faces();
                let total: f64 = faces.iter().map(Rect::area).sum();
                let mut pick = rng.gen::<f64>() * total;
                let mut face = faces[faces.len() - 1];
                for f in &faces {
                    if pick < f.area() {
                        face = *f;
                        break;
                    }
                    pick -= f.area();
                }
                face.at(rng.gen(), rng.gen())
            }
        }
    }

    /// Uniform sample of the analytic skeleton.
    ///
    /// Capsule: its axis. Ellipsoid: the major-axis segment of its medial
    /// sheet. Table: the mid-plane sheet of the top (half the samples) and
    /// the four leg axes.
    pub fn sample_skeleton<R: Rng>(&self, rng: &mut R) -> [f64; 3] {
        match self.family {
            ShapeFamily::Capsule => [0.0, 0.0, rng.gen_range(-CAPSULE_HALF..CAPSULE_HALF)],
            ShapeFamily::Ellipsoid => {
                let [a, _, c] = ELLIPSOID;
                let e = a - c * c / a;
                [rng.gen_range(-e..e), 0.0, 0.0]
            }
            ShapeFamily::BoxWithLegs => {
                let t = 0.5 * (TOP_HI[2] - TOP_LO[2]);
                if rng.gen::<bool>() {
                    [
                        rng.gen_range(TOP_LO[0] + t..TOP_HI[0] - t),
                        rng.gen_range(TOP_LO[1] + t..TOP_HI[1] - t),
                        TOP_LO[2] + t,
                    ]
                } else {
                    let (x, y) = legs().nth(rng.gen_range(0..4)).unwrap();
                    [x, y, rng.gen_range(LEG_BOTTOM + LEG_HALF_WIDTH..TOP_LO[2])]
                }
            }
        }
    }

    /// Default blue-noise spacing for `n` samples.
    pub fn spacing(&self, n: usize, factor: f64) -> f64 {
        factor * (self.area() / n as f64).sqrt()
    }
}

type Cell = [i64; 3];

fn cell_of(p: &[f64; 3], size: f64) -> Cell {
    std::array::from_fn(|k| (p[k] / size).floor() as i64)
}

/// Dart throwing: accepts surface samples no closer than `min_dist` to any
/// earlier one until `n` are placed.
pub fn dart_throw<R: Rng>(solid: &Solid, n: usize, min_dist: f64, rng: &mut R) -> Result<PointSet<f64>> {
    let mut grid: HashMap<Cell, Vec<usize>> = HashMap::new();
    let mut pts: Vec<[f64; 3]> = Vec::with_capacity(n);
    let budget = DART_BUDGET * n;
    let d2 = min_dist * min_dist;
    let mut attempts = 0;
    while pts.len() < n {
        if attempts == budget {
            return Err(Error::Generation(format!(
                "dart throwing placed {} of {n} points on {:?} with min distance {min_dist} after {budget} attempts",
                pts.len(),
                solid.family
            )));
        }
        attempts += 1;
        let p = solid.sample_surface(rng);
        let c = cell_of(&p, min_dist);
        let mut clear = true;
        'scan: for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(ids) = grid.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                        for &i in ids {
                            let q = pts[i];
                            let dd: f64 = (0..3).map(|k| (p[k] - q[k]).powi(2)).sum();
                            if dd < d2 {
                                clear = false;
                                break 'scan;
                            }
                        }
                    }
                }
            }
        }
        if clear {
            grid.entry(c).or_default().push(pts.len());
            pts.push(p);
        }
    }
    PointSet::new(3, pts.into_iter().flatten().collect())
}

fn skeleton<R: Rng>(solid: &Solid, n: usize, rng: &mut R) -> Result<PointSet<f64>> {
    PointSet::new(3, (0..n).flat_map(|_| solid.sample_skeleton(rng)).collect())
}

fn dense_surface<R: Rng>(solid: &Solid, n: usize, rng: &mut R) -> Result<PointSet<f64>> {
    PointSet::new(
        3,
        (0..n * DENSE_FACTOR)
            .flat_map(|_| solid.sample_surface(rng))
            .collect(),
    )
}

/// Skeleton samples paired with blue-noise surface samples.
pub fn gen_parametric3d(spec: &GeneratorSpec) -> Result<PairedDataset<f64>> {
    let solid = Solid::new(spec.family);
    let n = spec.points_per_set;
    let min_dist = solid.spacing(n, spec.min_dist_factor);
    let pairs = (0..spec.count)
        .map(|i| {
            let mut rng = spec.pair_rng(i);
            let x = skeleton(&solid, n, &mut rng)?;
            let y = dart_throw(&solid, n, min_dist, &mut rng)?;
            finish_pair(spec, x, y, &mut rng)
        })
        .collect::<Result<_>>()?;
    PairedDataset::new("skeleton", "surface", pairs)
}

/// The plane `normal · p = offset`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Plane {
    pub normal: [f64; 3],
    pub offset: f64,
}

impl Plane {
    pub fn distance(&self, p: &[f64]) -> f64 {
        (0..3).map(|k| self.normal[k] * p[k]).sum::<f64>() - self.offset
    }

    fn axis(&self) -> Option<usize> {
        let nz: Vec<usize> = (0..3).filter(|&k| self.normal[k] != 0.0).collect();
        match nz[..] {
            [k] if self.normal[k].abs() == 1.0 => Some(k),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanePreset {
    /// Four horizontal cuts spread over the height.
    FourParallel,
    /// One cut per axis through the center.
    ThreeOrthogonal,
}

impl std::str::FromStr for PlanePreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "four_parallel" => Ok(Self::FourParallel),
            "three_orthogonal" => Ok(Self::ThreeOrthogonal),
            _ => Err(Error::Config(format!("unknown plane preset `{s}`"))),
        }
    }
}

pub fn cross_section_planes(preset: PlanePreset, solid: &Solid) -> Vec<Plane> {
    let (lo, hi) = solid.bounds();
    let mid: [f64; 3] = std::array::from_fn(|k| 0.5 * (lo[k] + hi[k]));
    let e = |k: usize| {
        let mut n = [0.0; 3];
        n[k] = 1.0;
        n
    };
    match preset {
        PlanePreset::FourParallel => [-0.6, -0.2, 0.2, 0.6]
            .iter()
            .map(|f| Plane {
                normal: e(2),
                offset: mid[2] + f * 0.5 * (hi[2] - lo[2]),
            })
            .collect(),
        PlanePreset::ThreeOrthogonal => (0..3)
            .map(|k| Plane {
                normal: e(k),
                offset: mid[k],
            })
            .collect(),
    }
}

/// Arc-length table of the ellipse `(a cos θ, b sin θ)`.
struct EllipseCurve {
    axes: (usize, usize),
    semi: (f64, f64),
    fixed: (usize, f64),
    cumulative: Vec<f64>,
}

impl EllipseCurve {
    fn new(axes: (usize, usize), semi: (f64, f64), fixed: (usize, f64)) -> Self {
        let mut cumulative = Vec::with_capacity(ELLIPSE_STEPS + 1);
        cumulative.push(0.0);
        let pt = |th: f64| (semi.0 * th.cos(), semi.1 * th.sin());
        let mut prev = pt(0.0);
        for i in 1..=ELLIPSE_STEPS {
            let cur = pt(TAU * i as f64 / ELLIPSE_STEPS as f64);
            let last = *cumulative.last().unwrap();
            cumulative.push(last + (cur.0 - prev.0).hypot(cur.1 - prev.1));
            prev = cur;
        }
        Self {
            axes,
            semi,
            fixed,
            cumulative,
        }
    }

    fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    /// Point at arc length `s`, placed exactly on the ellipse.
    fn at(&self, s: f64) -> [f64; 3] {
        let i = self.cumulative.partition_point(|&c| c <= s).clamp(1, ELLIPSE_STEPS);
        let (c0, c1) = (self.cumulative[i - 1], self.cumulative[i]);
        let frac = if c1 > c0 { (s - c0) / (c1 - c0) } else { 0.0 };
        let th = TAU * ((i - 1) as f64 + frac) / ELLIPSE_STEPS as f64;
        let mut p = [0.0; 3];
        p[self.axes.0] = self.semi.0 * th.cos();
        p[self.axes.1] = self.semi.1 * th.sin();
        p[self.fixed.0] = self.fixed.1;
        p
    }
}

/// Cross-section samples of `solid`, resampled to `n` points in total.
///
/// Axis-aligned cuts of the ellipsoid are exact ellipses sampled by arc
/// length. Every other cut keeps dense surface samples within `half_width`
/// of the plane.
pub fn slice_cross_sections<R: Rng>(
    solid: &Solid,
    planes: &[Plane],
    n: usize,
    half_width: f64,
    rng: &mut R,
) -> Result<PointSet<f64>> {
    if planes.is_empty() {
        return Err(Error::Generation("no cutting planes given".into()));
    }
    let analytic = solid.family == ShapeFamily::Ellipsoid && planes.iter().all(|p| p.axis().is_some());
    let coords: Vec<f64> = if analytic {
        let curves: Vec<EllipseCurve> = planes
            .iter()
            .filter_map(|p| {
                let k = p.axis().unwrap();
                let o = p.offset * p.normal[k];
                let s = 1.0 - (o / ELLIPSOID[k]).powi(2);
                (s > 0.0).then(|| {
                    let (i, j) = ((k + 1) % 3, (k + 2) % 3);
                    EllipseCurve::new(
                        (i, j),
                        (ELLIPSOID[i] * s.sqrt(), ELLIPSOID[j] * s.sqrt()),
                        (k, o),
                    )
                })
            })
            .collect();
        let total: f64 = curves.iter().map(EllipseCurve::length).sum();
        if curves.is_empty() || total <= 0.0 {
            return Err(Error::Generation(format!(
                "none of the {} planes meets the {:?}",
                planes.len(),
                solid.family
            )));
        }
        (0..n)
            .flat_map(|i| {
                let mut s = (i as f64 + rng.gen::<f64>()) / n as f64 * total;
                let mut out = curves[curves.len() - 1].at(curves[curves.len() - 1].length());
                for c in &curves {
                    if s < c.length() {
                        out = c.at(s);
                        break;
                    }
                    s -= c.length();
                }
                out
            })
            .collect()
    } else {
        let dense = dense_surface(solid, n, rng)?;
        let pool: Vec<&[f64]> = dense
            .iter()
            .filter(|p| planes.iter().any(|pl| pl.distance(p).abs() <= half_width))
            .collect();
        if pool.is_empty() {
            return Err(Error::Generation(format!(
                "none of the {} planes meets the {:?} within half-width {half_width}",
                planes.len(),
                solid.family
            )));
        }
        if pool.len() >= n {
            index::sample(rng, pool.len(), n)
                .into_iter()
                .flat_map(|i| pool[i].to_vec())
                .collect()
        } else {
            (0..n)
                .flat_map(|_| pool[rng.gen_range(0..pool.len())].to_vec())
                .collect()
        }
    };
    PointSet::new(3, coords)
}

/// Cross sections paired with blue-noise surface samples.
pub fn gen_cross_section(spec: &GeneratorSpec) -> Result<PairedDataset<f64>> {
    let solid = Solid::new(spec.family);
    let n = spec.points_per_set;
    let planes = cross_section_planes(spec.planes, &solid);
    let min_dist = solid.spacing(n, spec.min_dist_factor);
    let pairs = (0..spec.count)
        .map(|i| {
            let mut rng = spec.pair_rng(i);
            let x = slice_cross_sections(&solid, &planes, n, spec.slab_half_width, &mut rng)?;
            let y = dart_throw(&solid, n, min_dist, &mut rng)?;
            finish_pair(spec, x, y, &mut rng)
        })
        .collect::<Result<_>>()?;
    PairedDataset::new("cross_section", "surface", pairs)
}

/// Orthographic hidden-point removal: keeps, per `cell`-sized square of the
/// image plane, the point nearest to a viewer looking along `view_dir`.
/// Kept points retain their input order.
pub fn simulate_single_view(
    surface: &PointSet<f64>,
    view_dir: [f64; 3],
    cell: f64,
) -> Result<PointSet<f64>> {
    if surface.dim() != 3 {
        return Err(Error::Dimension("single-view scans need 3-d points".into()));
    }
    if surface.is_empty() || !(cell > 0.0) {
        return Err(Error::Precondition(
            "single-view scan needs points and a positive cell size".into(),
        ));
    }
    let d = unit3(view_dir);
    let helper = if d.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let u = d.cross(&helper).normalize();
    let v = d.cross(&u);
    let mut nearest: BTreeMap<(i64, i64), (f64, usize)> = BTreeMap::new();
    for (i, p) in surface.iter().enumerate() {
        let p = Vector3::new(p[0], p[1], p[2]);
        let key = ((p.dot(&u) / cell).floor() as i64, (p.dot(&v) / cell).floor() as i64);
        let depth = p.dot(&d);
        let e = nearest.entry(key).or_insert((depth, i));
        if depth < e.0 {
            *e = (depth, i);
        }
    }
    let mut keep: Vec<usize> = nearest.values().map(|&(_, i)| i).collect();
    keep.sort_unstable();
    surface.select(&keep)
}

/// Simulated single-view scans paired with blue-noise surface samples.
pub fn gen_single_view(spec: &GeneratorSpec) -> Result<PairedDataset<f64>> {
    let solid = Solid::new(spec.family);
    let n = spec.points_per_set;
    let min_dist = solid.spacing(n, spec.min_dist_factor);
    let cell = solid.spacing(n, 1.0) * spec.cell;
    let pairs = (0..spec.count)
        .map(|i| {
            let mut rng = spec.pair_rng(i);
            let dense = dense_surface(&solid, n, &mut rng)?;
            let x = simulate_single_view(&dense, spec.view_dir, cell)?;
            let y = dart_throw(&solid, n, min_dist, &mut rng)?;
            finish_pair(spec, x, y, &mut rng)
        })
        .collect::<Result<_>>()?;
    PairedDataset::new("single_view", "surface", pairs)
}
