use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::{to_f64, Real};
use crate::spatial::PointSet;

/// Reads `.xyz` or `.ply` depending on the extension.
pub fn read_points(path: &Path) -> Result<PointSet<f64>> {
    match extension(path)? {
        Ext::Xyz => read_xyz(path),
        Ext::Ply => Ok(read_ply(path)?.cast()),
    }
}

/// Writes `.xyz` or `.ply` depending on the extension.
pub fn write_points<T: Real>(path: &Path, ps: &PointSet<T>) -> Result<()> {
    match extension(path)? {
        Ext::Xyz => write_xyz(path, ps),
        Ext::Ply => write_ply(path, &ps.cast::<f32>()),
    }
}

enum Ext {
    Xyz,
    Ply,
}

fn extension(path: &Path) -> Result<Ext> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("xyz") => Ok(Ext::Xyz),
        Some(e) if e.eq_ignore_ascii_case("ply") => Ok(Ext::Ply),
        _ => Err(Error::Format {
            path: path.into(),
            msg: "expected a .xyz or .ply extension".into(),
        }),
    }
}

/// Plain text, one point per line. Blank lines and `#` comments are skipped.
pub fn read_xyz(path: &Path) -> Result<PointSet<f64>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_xyz(BufReader::new(file), path)
}

pub(crate) fn parse_xyz(reader: impl BufRead, path: &Path) -> Result<PointSet<f64>> {
    let mut dim = None;
    let mut coords = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let lineno = i + 1;
        let row = body
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>().map_err(|_| Error::Parse {
                    path: path.into(),
                    line: lineno,
                    msg: format!("`{tok}` is not a number"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if !(2..=3).contains(&row.len()) {
            return Err(Error::Parse {
                path: path.into(),
                line: lineno,
                msg: format!("{} columns, expected 2 or 3", row.len()),
            });
        }
        match dim {
            None => dim = Some(row.len()),
            Some(d) if d != row.len() => {
                return Err(Error::Format {
                    path: path.into(),
                    msg: format!(
                        "line {lineno} has {} columns after earlier lines with {d}",
                        row.len()
                    ),
                })
            }
            Some(_) => {}
        }
        coords.extend(row);
    }
    let dim = dim.ok_or_else(|| Error::Format {
        path: path.into(),
        msg: "no points".into(),
    })?;
    PointSet::new(dim, coords)
}

/// Nine significant digits, enough to round-trip any `f32`.
pub fn write_xyz<T: Real>(path: &Path, ps: &PointSet<T>) -> Result<()> {
    let mut out = String::with_capacity(ps.len() * ps.dim() * 16);
    for p in ps.iter() {
        let row: Vec<String> = p.iter().map(|&v| format!("{:.8e}", to_f64(v))).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Binary little-endian PLY with `float` vertex properties `x y [z]`.
pub fn write_ply(path: &Path, ps: &PointSet<f32>) -> Result<()> {
    let mut buf = Vec::with_capacity(128 + ps.coords().len() * 4);
    let mut header = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\n",
        ps.len()
    );
    for axis in &AXES[..ps.dim()] {
        header.push_str(&format!("property float {axis}\n"));
    }
    header.push_str("end_header\n");
    buf.extend_from_slice(header.as_bytes());
    for &v in ps.coords() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

const AXES: [&str; 3] = ["x", "y", "z"];

/// Accepts exactly what [`write_ply`] produces: a single vertex element of
/// `float` properties named `x`, `y` and optionally `z`.
pub fn read_ply(path: &Path) -> Result<PointSet<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |msg: String| Error::Format {
        path: path.into(),
        msg,
    };
    let mut cursor = &bytes[..];
    let mut lines = Vec::new();
    loop {
        let nl = cursor
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| bad("unterminated header".into()))?;
        let line = std::str::from_utf8(&cursor[..nl])
            .map_err(|_| bad("header is not UTF-8".into()))?
            .trim_end_matches('\r')
            .to_string();
        cursor = &cursor[nl + 1..];
        if line == "end_header" {
            break;
        }
        lines.push(line);
    }
    if lines.first().map(String::as_str) != Some("ply") {
        return Err(bad("missing `ply` magic".into()));
    }
    let mut count = None;
    let mut props = Vec::new();
    for line in &lines[1..] {
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["format", "binary_little_endian", "1.0"] => {}
            ["format", other, ..] => return Err(bad(format!("unsupported format `{other}`"))),
            ["comment", ..] | ["obj_info", ..] => {}
            ["element", "vertex", n] => {
                count = Some(n.parse::<usize>().map_err(|_| bad(format!("bad count `{n}`")))?)
            }
            ["element", other, ..] => return Err(bad(format!("unsupported element `{other}`"))),
            ["property", "float", name] => props.push(name.to_string()),
            ["property", ..] => return Err(bad(format!("unsupported property `{line}`"))),
            [] => {}
            _ => return Err(bad(format!("unexpected header line `{line}`"))),
        }
    }
    let count = count.ok_or_else(|| bad("no vertex element".into()))?;
    let dim = props.len();
    if !(2..=3).contains(&dim) || props.iter().zip(AXES).any(|(p, a)| p != a) {
        return Err(bad(format!("vertex properties {props:?}, expected x y [z]")));
    }
    let mut coords = vec![0f32; count * dim];
    let mut word = [0u8; 4];
    for c in coords.iter_mut() {
        cursor
            .read_exact(&mut word)
            .map_err(|_| bad(format!("truncated body, expected {count} vertices")))?;
        *c = f32::from_le_bytes(word);
    }
    if !cursor.is_empty() {
        return Err(bad(format!("{} trailing bytes", cursor.len())));
    }
    PointSet::new(dim, coords)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ply_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.ply");
        let ps = PointSet::new(3, vec![0.1f32, -2.5e-7, 3.0e8, 1.0, 0.0, -0.0, 7.25, 1e-30, 42.0])
            .unwrap();
        write_ply(&path, &ps).unwrap();
        let back = read_ply(&path).unwrap();
        let bits = |p: &PointSet<f32>| p.coords().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&ps));
    }

    #[test]
    fn xyz_roundtrips_f32_through_nine_digits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.xyz");
        let ps = PointSet::new(2, vec![0.1f32, 1.0 / 3.0, -123.456, 7e-12]).unwrap();
        write_xyz(&path, &ps).unwrap();
        let back = read_xyz(&path).unwrap().cast::<f32>();
        assert_eq!(back, ps);
        assert_eq!(back.dim(), 2);
    }

    #[test]
    fn parse_error_cites_line() {
        let text = "0 0\n1 1\n# note\n\n0.5 x\n";
        let err = parse_xyz(text.as_bytes(), Path::new("t.xyz")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 5, .. }), "{err}");
    }

    #[test]
    fn mixed_columns_are_a_format_error() {
        let err = parse_xyz("0 0\n1 1 1\n".as_bytes(), Path::new("t.xyz")).unwrap_err();
        assert!(matches!(err, Error::Format { .. }), "{err}");
    }

    #[test]
    fn unknown_extension_is_rejected() {
        let ps = PointSet::new(2, vec![0.0f64, 0.0]).unwrap();
        assert!(write_points(Path::new("a.csv"), &ps).is_err());
    }

    #[test]
    fn truncated_ply_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.ply");
        write_ply(&path, &PointSet::new(2, vec![1f32, 2.0, 3.0, 4.0]).unwrap()).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 2);
        fs::write(&path, bytes).unwrap();
        assert!(matches!(read_ply(&path), Err(Error::Format { .. })));
    }
}
