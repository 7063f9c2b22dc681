//! Framed binary dataset of (instance, warm start, oracle solution) records.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "MISODATA" | u32 version | u8 env | u32 H | u32 n | u32 m | u64 count
//! count × record:
//!   u64 instance_id | u64 seed | x0[n] | goal[n] or reference[H·n]
//!   warm_start[H·m] | oracle_controls[H·m] | oracle_states[(H+1)·n]
//!   oracle_cost | online_cost | u8 flags
//! ```
//!
//! Floats are raw `f64` bits so a read reproduces a write exactly. A TOML
//! manifest with the same header fields is written next to the data file.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::envs::{Env, EnvId};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::problem::{ControlSequence, ProblemInstance, Target};

pub const DATA_MAGIC: &[u8; 8] = b"MISODATA";
pub const DATA_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 1 + 4 * 3 + 8;
const FLAG_ORACLE_WORSE: u8 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetRecord {
    pub instance: ProblemInstance,
    pub warm_start: ControlSequence,
    pub oracle_controls: ControlSequence,
    pub oracle_states: Mat,
    pub oracle_cost: f64,
    /// Cost reached by the online optimizer from the warm start.
    pub online_cost: f64,
    /// Set when the oracle did not match or beat the online solution.
    pub oracle_worse: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub env: EnvId,
    #[serde(rename = "H")]
    pub horizon: usize,
    pub n: usize,
    pub m: usize,
    pub count: u64,
    pub record_bytes: usize,
}

#[derive(Clone, Copy)]
struct Shape {
    env: EnvId,
    h: usize,
    n: usize,
    m: usize,
}

impl Shape {
    fn of(env: &Env) -> Self {
        Shape {
            env: env.id,
            h: env.horizon,
            n: env.n,
            m: env.m,
        }
    }

    fn target_len(&self) -> usize {
        if self.env == EnvId::Driving {
            self.h * self.n
        } else {
            self.n
        }
    }

    fn record_bytes(&self) -> usize {
        let floats = self.n + self.target_len() + 2 * self.h * self.m + (self.h + 1) * self.n + 2;
        16 + 8 * floats + 1
    }
}

pub fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.toml");
    PathBuf::from(s)
}

/// Writes `records`, which must all belong to `env`.
/// Creates the parent directory of `path` if it has one.
pub(crate) fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent().filter(|d| !d.as_os_str().is_empty()) {
        Some(dir) => fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        None => Ok(()),
    }
}

pub fn dataset_write(path: impl AsRef<Path>, env: &Env, records: &[DatasetRecord]) -> Result<()> {
    let path = path.as_ref();
    ensure_parent(path)?;
    let shape = Shape::of(env);
    let mut buf = Vec::with_capacity(HEADER_LEN + records.len() * shape.record_bytes());
    buf.extend_from_slice(DATA_MAGIC);
    buf.extend_from_slice(&DATA_VERSION.to_le_bytes());
    buf.push(env.id.to_byte());
    for d in [shape.h, shape.n, shape.m] {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    buf.extend_from_slice(&(records.len() as u64).to_le_bytes());
    for r in records {
        encode_record(&mut buf, env, shape, r)?;
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&buf)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))?;

    let manifest = Manifest {
        format_version: DATA_VERSION,
        env: env.id,
        horizon: shape.h,
        n: shape.n,
        m: shape.m,
        count: records.len() as u64,
        record_bytes: shape.record_bytes(),
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::Config(e.to_string()))?;
    let mpath = manifest_path(path);
    fs::write(&mpath, text).map_err(|e| Error::io(mpath, e))?;
    Ok(())
}

fn encode_record(buf: &mut Vec<u8>, env: &Env, shape: Shape, r: &DatasetRecord) -> Result<()> {
    env.check_instance(&r.instance)?;
    for c in [&r.warm_start, &r.oracle_controls] {
        if c.horizon() != shape.h || c.dim() != shape.m {
            return Err(Error::Dimension {
                context: "record controls",
                expected: shape.h * shape.m,
                got: c.horizon() * c.dim(),
            });
        }
    }
    if r.oracle_states.rows() != shape.h + 1 || r.oracle_states.cols() != shape.n {
        return Err(Error::Dimension {
            context: "record oracle states",
            expected: (shape.h + 1) * shape.n,
            got: r.oracle_states.rows() * r.oracle_states.cols(),
        });
    }
    let put = |buf: &mut Vec<u8>, xs: &[f64]| {
        for x in xs {
            buf.extend_from_slice(&x.to_bits().to_le_bytes());
        }
    };
    buf.extend_from_slice(&r.instance.instance_id.to_le_bytes());
    buf.extend_from_slice(&r.instance.seed.to_le_bytes());
    put(buf, &r.instance.x0);
    match &r.instance.target {
        Target::Goal(g) => put(buf, g),
        Target::Reference(m) => put(buf, m.as_slice()),
    }
    put(buf, r.warm_start.as_slice());
    put(buf, r.oracle_controls.as_slice());
    put(buf, r.oracle_states.as_slice());
    put(buf, &[r.oracle_cost, r.online_cost]);
    buf.push(if r.oracle_worse { FLAG_ORACLE_WORSE } else { 0 });
    Ok(())
}

/// Reads a dataset. With `expect = Some(env)`, a file for another environment
/// is an error.
pub fn dataset_read(path: impl AsRef<Path>, expect: Option<EnvId>) -> Result<(EnvId, Vec<DatasetRecord>)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, expect)
}

fn decode(bytes: &[u8], expect: Option<EnvId>) -> Result<(EnvId, Vec<DatasetRecord>)> {
    if bytes.len() < 8 || &bytes[..8] != DATA_MAGIC {
        return Err(Error::Magic("dataset"));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated("dataset header".into()));
    }
    let mut cur = Cursor { bytes, pos: 8 };
    let version = cur.u32();
    if version != DATA_VERSION {
        return Err(Error::Version {
            expected: DATA_VERSION,
            found: version,
        });
    }
    let env_byte = cur.u8();
    let id = EnvId::from_byte(env_byte).ok_or_else(|| Error::Config(format!("unknown environment byte {env_byte}")))?;
    if let Some(want) = expect {
        if want != id {
            return Err(Error::EnvMismatch {
                expected: want,
                found: id,
            });
        }
    }
    let (h, n, m) = (cur.u32() as usize, cur.u32() as usize, cur.u32() as usize);
    let count = cur.u64() as usize;
    let shape = Shape { env: id, h, n, m };
    let need = HEADER_LEN + count.saturating_mul(shape.record_bytes());
    if bytes.len() < need {
        return Err(Error::Truncated(format!(
            "expected {count} records ({need} bytes), file has {} bytes",
            bytes.len()
        )));
    }

    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let instance_id = cur.u64();
        let seed = cur.u64();
        let x0 = cur.f64s(n);
        let target = if id == EnvId::Driving {
            Target::Reference(Mat::from_vec(h, n, cur.f64s(h * n)))
        } else {
            Target::Goal(cur.f64s(n))
        };
        let warm_start = ControlSequence::from_flat(h, m, cur.f64s(h * m))?;
        let oracle_controls = ControlSequence::from_flat(h, m, cur.f64s(h * m))?;
        let oracle_states = Mat::from_vec(h + 1, n, cur.f64s((h + 1) * n));
        let oracle_cost = cur.f64();
        let online_cost = cur.f64();
        let flags = cur.u8();
        out.push(DatasetRecord {
            instance: ProblemInstance {
                env_id: id,
                x0,
                target,
                instance_id,
                seed,
            },
            warm_start,
            oracle_controls,
            oracle_states,
            oracle_cost,
            online_cost,
            oracle_worse: flags & FLAG_ORACLE_WORSE != 0,
        });
    }
    Ok((id, out))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> [u8; N] {
        let out = self.bytes[self.pos..self.pos + N].try_into().unwrap();
        self.pos += N;
        out
    }

    fn u8(&mut self) -> u8 {
        self.take::<1>()[0]
    }

    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take())
    }

    fn u64(&mut self) -> u64 {
        u64::from_le_bytes(self.take())
    }

    fn f64(&mut self) -> f64 {
        f64::from_bits(self.u64())
    }

    fn f64s(&mut self, k: usize) -> Vec<f64> {
        (0..k).map(|_| self.f64()).collect()
    }
}
