use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::spatial::PointSet;

const CANVAS: f64 = 512.0;
const MARGIN: f64 = 16.0;

#[derive(Clone, Debug, PartialEq)]
pub struct Style {
    /// Any SVG color.
    pub color: String,
    /// Dot radius in pixels.
    pub radius: f64,
}

impl Style {
    pub fn new(color: &str, radius: f64) -> Self {
        Self {
            color: color.into(),
            radius,
        }
    }
}

/// Lines from `from[i]` to `to[i]` for a seeded subset of the points.
#[derive(Clone, Debug)]
pub struct Overlay<'a> {
    pub from: &'a PointSet<f64>,
    pub to: &'a PointSet<f64>,
    /// Share of the lines drawn; exactly `floor(fraction · n)` appear.
    pub fraction: f64,
    pub seed: u64,
}

/// Renders 2D sets directly; 3D sets are projected orthographically by
/// dropping `drop_axis`.
pub fn render_svg(
    sets: &[(&PointSet<f64>, Style)],
    overlay: Option<&Overlay<'_>>,
    drop_axis: usize,
) -> Result<String> {
    let project = |p: &[f64]| -> Result<[f64; 2]> {
        match p.len() {
            2 => Ok([p[0], p[1]]),
            3 if drop_axis < 3 => {
                let keep: Vec<f64> = (0..3).filter(|&a| a != drop_axis).map(|a| p[a]).collect();
                Ok([keep[0], keep[1]])
            }
            3 => Err(Error::Contract(format!("projection axis {drop_axis} out of range"))),
            d => Err(Error::Unsupported(format!("cannot plot {d}-d points"))),
        }
    };
    let mut projected = Vec::with_capacity(sets.len());
    for (ps, _) in sets {
        projected.push(ps.iter().map(project).collect::<Result<Vec<_>>>()?);
    }
    let lines = match overlay {
        Some(o) => {
            if o.from.len() != o.to.len() {
                return Err(Error::Dimension(format!(
                    "overlay endpoints: {} sources, {} targets",
                    o.from.len(),
                    o.to.len()
                )));
            }
            if !(0.0..=1.0).contains(&o.fraction) {
                return Err(Error::Contract(format!("overlay fraction {}", o.fraction)));
            }
            let n = o.from.len();
            let k = (o.fraction * n as f64).floor() as usize;
            let mut picked = sample(&mut ChaCha8Rng::seed_from_u64(o.seed), n, k).into_vec();
            picked.sort_unstable();
            picked
                .into_iter()
                .map(|i| Ok((project(o.from.point(i))?, project(o.to.point(i))?)))
                .collect::<Result<Vec<_>>>()?
        }
        None => Vec::new(),
    };

    let all = projected
        .iter()
        .flatten()
        .chain(lines.iter().flat_map(|(a, b)| [a, b]));
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in all {
        for a in 0..2 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    if lo[0] > hi[0] {
        lo = [0.0; 2];
        hi = [1.0; 2];
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-12);
    let scale = (CANVAS - 2.0 * MARGIN) / span;
    let to_px = |p: &[f64; 2]| {
        (
            MARGIN + (p[0] - lo[0]) * scale,
            CANVAS - MARGIN - (p[1] - lo[1]) * scale,
        )
    };

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{CANVAS}" height="{CANVAS}" viewBox="0 0 {CANVAS} {CANVAS}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (points, (_, style)) in projected.iter().zip(sets) {
        let _ = writeln!(out, r#"<g fill="{}">"#, escape(&style.color));
        for p in points {
            let (x, y) = to_px(p);
            let _ = writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="{}"/>"#, style.radius);
        }
        out.push_str("</g>\n");
    }
    if overlay.is_some() {
        out.push_str("<g stroke=\"black\" stroke-width=\"0.5\">\n");
        for (a, b) in &lines {
            let (x1, y1) = to_px(a);
            let (x2, y2) = to_px(b);
            let _ = writeln!(
                out,
                r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}"/>"#
            );
        }
        out.push_str("</g>\n");
    }
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn write_svg(
    path: &Path,
    sets: &[(&PointSet<f64>, Style)],
    overlay: Option<&Overlay<'_>>,
    drop_axis: usize,
) -> Result<()> {
    let text = render_svg(sets, overlay, drop_axis)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('"', "&quot;")
        .replace('<', "&lt;")
}
