//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "P2PD" | u16 version | u16 dim | u32 len, TOML echo of both configs
//! u64 seed | u64 epoch
//! per branch (xy, yx): u64 count, count × f32
//! u8 has_optimizer [u64 step, u64 tensors, per tensor: u64 len, len × f32 m, len × f32 v]
//! u32 CRC32 of every preceding byte
//! ```
//!
//! Parameters are stored as `f32` whatever the working precision.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{Branch, BranchParams, NetworkConfig};
use crate::scalar::{lit, to_f64, Real};
use crate::trainer::{AdamState, Checkpoint};

pub const MAGIC: &[u8; 4] = b"P2PD";
pub const VERSION: u16 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Echo {
    xy: NetworkConfig,
    yx: NetworkConfig,
}

pub fn encode_checkpoint<T: Real>(ck: &Checkpoint<T>) -> Result<Vec<u8>> {
    let echo = toml::to_string(&Echo {
        xy: ck.xy.config.clone(),
        yx: ck.yx.config.clone(),
    })
    .map_err(|e| Error::Config(format!("cannot serialize network config: {e}")))?;
    let mut w = Vec::new();
    w.extend_from_slice(MAGIC);
    w.extend_from_slice(&VERSION.to_le_bytes());
    let dim = u16::try_from(ck.xy.config.dim)
        .map_err(|_| Error::Contract("dimension does not fit a checkpoint".into()))?;
    w.extend_from_slice(&dim.to_le_bytes());
    w.extend_from_slice(&(echo.len() as u32).to_le_bytes());
    w.extend_from_slice(echo.as_bytes());
    w.extend_from_slice(&ck.seed.to_le_bytes());
    w.extend_from_slice(&(ck.epoch as u64).to_le_bytes());
    for branch in [&ck.xy, &ck.yx] {
        put_floats(&mut w, &branch.params.flatten());
    }
    match &ck.optimizer {
        None => w.push(0),
        Some(opt) => {
            w.push(1);
            w.extend_from_slice(&opt.step.to_le_bytes());
            w.extend_from_slice(&(opt.m.len() as u64).to_le_bytes());
            for (m, v) in opt.m.iter().zip(&opt.v) {
                put_floats(&mut w, m);
                put_raw(&mut w, v);
            }
        }
    }
    let crc = crc32fast::hash(&w);
    w.extend_from_slice(&crc.to_le_bytes());
    Ok(w)
}

fn put_floats<T: Real>(w: &mut Vec<u8>, xs: &[T]) {
    w.extend_from_slice(&(xs.len() as u64).to_le_bytes());
    put_raw(w, xs);
}

fn put_raw<T: Real>(w: &mut Vec<u8>, xs: &[T]) {
    for &x in xs {
        w.extend_from_slice(&(to_f64(x) as f32).to_le_bytes());
    }
}

/// The checksum is verified before anything else, then the version.
pub fn decode_checkpoint<T: Real>(bytes: &[u8]) -> Result<Checkpoint<T>> {
    if bytes.len() < MAGIC.len() + 2 + 4 || &bytes[..4] != MAGIC {
        return Err(Error::Contract("not a checkpoint (bad magic)".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    let mut r = Reader { buf: &body[4..] };
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::Version {
            found: version,
            expected: VERSION,
        });
    }
    let dim = r.u16()? as usize;
    let echo_len = r.u32()? as usize;
    let echo = std::str::from_utf8(r.take(echo_len)?)
        .map_err(|_| Error::Contract("config echo is not UTF-8".into()))?;
    let echo: Echo =
        toml::from_str(echo).map_err(|e| Error::Config(format!("config echo: {e}")))?;
    if echo.xy.dim != dim || echo.yx.dim != dim {
        return Err(Error::Dimension(format!(
            "header says {dim}-d, configs say {} and {}",
            echo.xy.dim, echo.yx.dim
        )));
    }
    let seed = r.u64()?;
    let epoch = r.u64()? as usize;
    let mut branch = |cfg: NetworkConfig| -> Result<Branch<T>> {
        let n = r.u64()? as usize;
        let flat = r.floats(n)?;
        let params = BranchParams::from_flat(&cfg, &flat)?;
        Branch::new(cfg, params)
    };
    let xy = branch(echo.xy)?;
    let yx = branch(echo.yx)?;
    let optimizer = match r.take(1)?[0] {
        0 => None,
        1 => {
            let step = r.u64()?;
            let tensors = r.u64()? as usize;
            let expected: Vec<usize> = xy
                .params
                .tensors()
                .chain(yx.params.tensors())
                .map(|t| t.len())
                .collect();
            if tensors != expected.len() {
                return Err(Error::Dimension(format!(
                    "optimizer holds {tensors} tensors, network has {}",
                    expected.len()
                )));
            }
            let mut m = Vec::with_capacity(tensors);
            let mut v = Vec::with_capacity(tensors);
            for &len in &expected {
                let n = r.u64()? as usize;
                if n != len {
                    return Err(Error::Dimension(format!(
                        "optimizer tensor of length {n}, parameter has {len}"
                    )));
                }
                m.push(r.floats(n)?);
                v.push(r.floats(n)?);
            }
            Some(AdamState { m, v, step })
        }
        b => return Err(Error::Contract(format!("bad optimizer flag {b}"))),
    };
    if !r.buf.is_empty() {
        return Err(Error::Contract(format!(
            "{} unexpected bytes before the checksum",
            r.buf.len()
        )));
    }
    Ok(Checkpoint {
        xy,
        yx,
        optimizer,
        seed,
        epoch,
    })
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if n > self.buf.len() {
            return Err(Error::Contract("checkpoint is truncated".into()));
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn floats<T: Real>(&mut self, n: usize) -> Result<Vec<T>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| {
            Error::Contract("checkpoint length field overflows".into())
        })?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| lit(f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64))
            .collect())
    }
}

pub fn save_checkpoint<T: Real>(path: &Path, ck: &Checkpoint<T>) -> Result<()> {
    let bytes = encode_checkpoint(ck)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Real>(path: &Path) -> Result<Checkpoint<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes).map_err(|e| match e {
        Error::Contract(msg) => Error::Format {
            path: path.into(),
            msg,
        },
        other => other,
    })
}
