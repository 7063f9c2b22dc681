//! Binary checkpoints.
//!
//! ```text
//! "MISONET\0" | u32 version | u8 env | u8 loss_kind
//! u32 feature_dim | u32 K | u32 H | u32 m | u32 trunk_layers
//! per trunk layer: u32 inputs | u32 outputs | u8 activation
//! u32 head_inputs
//! f64 tensors: in_mean in_std out_mean out_std out_scale u_min u_max
//!              trunk (weight, bias)… heads (weight, bias)…
//! ```

use std::fs;
use std::path::Path;

use super::{Activation, Dense, ModelParams};
use crate::envs::EnvId;
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::losses::LossKind;

pub const CKPT_MAGIC: &[u8; 8] = b"MISONET\0";
pub const CKPT_VERSION: u32 = 1;

pub fn checkpoint_save(params: &ModelParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    params.validate()?;
    crate::dataset::ensure_parent(path)?;
    fs::write(path, encode(params)).map_err(|e| Error::io(path, e))
}

pub(crate) fn encode(p: &ModelParams) -> Vec<u8> {
    let mut b = Vec::new();
    b.extend_from_slice(CKPT_MAGIC);
    b.extend_from_slice(&CKPT_VERSION.to_le_bytes());
    b.push(p.env_id.to_byte());
    b.push(p.loss_kind.to_byte());
    for v in [p.feature_dim, p.k(), p.horizon, p.control_dim, p.trunk.len()] {
        b.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for l in &p.trunk {
        b.extend_from_slice(&(l.inputs() as u32).to_le_bytes());
        b.extend_from_slice(&(l.outputs() as u32).to_le_bytes());
        b.push(l.activation.to_byte());
    }
    b.extend_from_slice(&(p.embed_dim() as u32).to_le_bytes());
    let stats = [
        &p.in_mean,
        &p.in_std,
        &p.out_mean,
        &p.out_std,
        &p.out_scale,
        &p.u_min,
        &p.u_max,
    ];
    for t in stats.iter().map(|v| v.as_slice()).chain(p.tensors()) {
        for x in t {
            b.extend_from_slice(&x.to_bits().to_le_bytes());
        }
    }
    b
}

/// Loads a checkpoint; with `expect = Some(env)` a model for another
/// environment is rejected.
pub fn checkpoint_load(path: impl AsRef<Path>, expect: Option<EnvId>) -> Result<ModelParams> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, expect)
}

pub(crate) fn decode(bytes: &[u8], expect: Option<EnvId>) -> Result<ModelParams> {
    if bytes.len() < 8 || &bytes[..8] != CKPT_MAGIC {
        return Err(Error::Magic("checkpoint"));
    }
    let mut r = Reader { bytes, pos: 8 };
    let version = r.u32()?;
    if version != CKPT_VERSION {
        return Err(Error::Version {
            expected: CKPT_VERSION,
            found: version,
        });
    }
    let env_byte = r.u8()?;
    let env_id =
        EnvId::from_byte(env_byte).ok_or_else(|| Error::Config(format!("unknown environment byte {env_byte}")))?;
    if let Some(want) = expect {
        if want != env_id {
            return Err(Error::EnvMismatch {
                expected: want,
                found: env_id,
            });
        }
    }
    let lk = r.u8()?;
    let loss_kind = LossKind::from_byte(lk).ok_or_else(|| Error::Config(format!("unknown loss kind byte {lk}")))?;
    let feature_dim = r.u32()? as usize;
    let k = r.u32()? as usize;
    let horizon = r.u32()? as usize;
    let control_dim = r.u32()? as usize;
    let n_trunk = r.u32()? as usize;
    let mut shapes = Vec::with_capacity(n_trunk);
    for _ in 0..n_trunk {
        let i = r.u32()? as usize;
        let o = r.u32()? as usize;
        let a = r.u8()?;
        let act = Activation::from_byte(a).ok_or_else(|| Error::Config(format!("unknown activation byte {a}")))?;
        shapes.push((i, o, act));
    }
    let head_in = r.u32()? as usize;
    let out = horizon * control_dim;
    let in_mean = r.f64s(feature_dim)?;
    let in_std = r.f64s(feature_dim)?;
    let out_mean = r.f64s(out)?;
    let out_std = r.f64s(out)?;
    let out_scale = r.f64s(out)?;
    let u_min = r.f64s(control_dim)?;
    let u_max = r.f64s(control_dim)?;
    let mut layer = |i: usize, o: usize, act| -> Result<Dense> {
        Ok(Dense {
            weight: Mat::from_vec(o, i, r.f64s(i * o)?),
            bias: r.f64s(o)?,
            activation: act,
        })
    };
    let mut trunk = Vec::with_capacity(n_trunk);
    for &(i, o, act) in &shapes {
        trunk.push(layer(i, o, act)?);
    }
    let mut heads = Vec::with_capacity(k);
    for _ in 0..k {
        heads.push(layer(head_in, out, Activation::Identity)?);
    }
    if r.pos != bytes.len() {
        return Err(Error::Config("trailing bytes after checkpoint tensors".into()));
    }
    let params = ModelParams {
        env_id,
        loss_kind,
        feature_dim,
        horizon,
        control_dim,
        trunk,
        heads,
        in_mean,
        in_std,
        out_mean,
        out_std,
        out_scale,
        u_min,
        u_max,
    };
    params.validate()?;
    Ok(params)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Truncated(format!(
                "checkpoint ends at byte {}",
                self.bytes.len()
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_bits(u64::from_le_bytes(c.try_into().unwrap())))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::Env;
    use crate::net::Architecture;
    use rand::{Rng, SeedableRng};

    fn model(env: EnvId, k: usize) -> ModelParams {
        let arch = Architecture {
            hidden: vec![16, 8],
            embed_dim: 6,
        };
        let mut p = ModelParams::new(&Env::new(env), &arch, k, LossKind::Mix, 21).unwrap();
        p.in_mean.iter_mut().enumerate().for_each(|(i, v)| *v = 0.01 * i as f64);
        p.out_std.iter_mut().for_each(|v| *v = 0.7);
        p
    }

    #[test]
    fn round_trip_preserves_outputs_bit_for_bit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        let p = model(EnvId::Cartpole, 5);
        checkpoint_save(&p, &path).unwrap();
        let q = checkpoint_load(&path, Some(EnvId::Cartpole)).unwrap();
        assert_eq!(p, q);
        assert_eq!(q.k(), 5);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let x: Vec<f64> = (0..p.feature_dim).map(|_| rng.random_range(-3.0..3.0)).collect();
            assert_eq!(p.forward(&x).unwrap(), q.forward(&x).unwrap());
        }
    }

    #[test]
    fn wrong_env_and_damage_are_typed_errors() {
        let bytes = encode(&model(EnvId::Reacher, 2));
        assert!(matches!(
            decode(&bytes, Some(EnvId::Driving)),
            Err(Error::EnvMismatch { .. })
        ));
        assert!(matches!(
            decode(&bytes[..bytes.len() - 1], None),
            Err(Error::Truncated(_))
        ));
        let mut v = bytes.clone();
        v[8] = 9;
        assert!(matches!(decode(&v, None), Err(Error::Version { .. })));
        assert!(matches!(decode(b"NOPE", None), Err(Error::Magic(_))));
    }
}
