//! `IMDN` checkpoints: magic, version, layer table, raw little-endian `f32`
//! parameters in declaration order, then optional optimizer state.

use std::path::Path;

use super::{AdamState, Architecture, LayerKind, LayerSpec, NetworkWeights};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"IMDN";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Optimizer state needed to resume training exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainerSnapshot {
    pub adam: AdamState<f32>,
    pub epochs_done: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub weights: NetworkWeights<f32>,
    pub snapshot: Option<TrainerSnapshot>,
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f32s(out: &mut Vec<u8>, v: &[f32]) {
    out.reserve(v.len() * 4);
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    put_u32(&mut out, CHECKPOINT_VERSION);
    let specs = ck.weights.arch().layer_specs();
    put_u32(&mut out, specs.len() as u32);
    for s in &specs {
        put_u32(&mut out, s.kind as u32);
        put_u32(&mut out, s.kernel as u32);
        put_u32(&mut out, s.in_channels as u32);
        put_u32(&mut out, s.out_channels as u32);
        out.extend_from_slice(&(s.elu_alpha as f32).to_le_bytes());
        out.extend_from_slice(&(s.dropout_rate as f32).to_le_bytes());
    }
    let params = ck.weights.params();
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    put_f32s(&mut out, params);
    match &ck.snapshot {
        None => put_u32(&mut out, 0),
        Some(s) => {
            put_u32(&mut out, 1);
            out.extend_from_slice(&s.adam.t.to_le_bytes());
            for v in [s.adam.lr, s.adam.beta1, s.adam.beta2, s.adam.eps] {
                out.extend_from_slice(&v.to_le_bytes());
            }
            put_u32(&mut out, s.epochs_done);
            put_f32s(&mut out, &s.adam.m);
            put_f32s(&mut out, &s.adam.v);
        }
    }
    out
}

struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::format(self.path, "truncated checkpoint"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let len = n
            .checked_mul(4)
            .ok_or_else(|| Error::format(self.path, "parameter count overflow"))?;
        Ok(self
            .take(len)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn decode_checkpoint(path: &Path, bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { path, bytes, pos: 0 };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::format(path, "bad magic, expected IMDN"));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(path, format!("unsupported checkpoint version {version}")));
    }
    let n_layers = r.u32()? as usize;
    if n_layers > 4096 {
        return Err(Error::format(path, "implausible layer count"));
    }
    let mut specs = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let code = r.u32()?;
        let kind = LayerKind::from_code(code)
            .ok_or_else(|| Error::format(path, format!("unknown layer kind {code}")))?;
        specs.push(LayerSpec {
            kind,
            kernel: r.u32()? as usize,
            in_channels: r.u32()? as usize,
            out_channels: r.u32()? as usize,
            elu_alpha: r.f32()? as f64,
            dropout_rate: r.f32()? as f64,
        });
    }
    let arch = Architecture::from_layer_specs(&specs)
        .map_err(|e| Error::format(path, e.to_string()))?;
    let n = r.u64()? as usize;
    if n != arch.param_count() {
        return Err(Error::format(
            path,
            format!("layer table needs {} parameters, file has {n}", arch.param_count()),
        ));
    }
    let params = r.f32s(n)?;
    let weights =
        NetworkWeights::from_params(arch, params).map_err(|e| Error::format(path, e.to_string()))?;
    let snapshot = match r.u32()? {
        0 => None,
        1 => {
            let t = r.u64()?;
            let (lr, beta1, beta2, eps) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?);
            let epochs_done = r.u32()?;
            let m = r.f32s(n)?;
            let v = r.f32s(n)?;
            Some(TrainerSnapshot {
                adam: AdamState { t, lr, beta1, beta2, eps, m, v },
                epochs_done,
            })
        }
        other => return Err(Error::format(path, format!("bad state flag {other}"))),
    };
    if r.pos != bytes.len() {
        return Err(Error::format(path, "trailing bytes after checkpoint"));
    }
    Ok(Checkpoint { weights, snapshot })
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    std::fs::write(path, encode_checkpoint(ck)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(path, &bytes)
}
