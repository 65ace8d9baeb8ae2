use std::fs;
use std::path::Path;

use super::params::{Hyper, ModelParams};
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MNST";
const CHECKPOINT_VERSION: u32 = 1;

/// Layout: magic, version, `e`, `l`, `s` (u32), `lambda` (f64), `l + 1` widths
/// (u32), then per layer `w1`, `b1`, `w2`, `b2` as row-major little-endian f64.
pub fn encode_checkpoint(params: &ModelParams) -> Result<Vec<u8>> {
    params.validate_shapes()?;
    let h = &params.hyper;
    let mut out = Vec::with_capacity(32 + 8 * params.param_count());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for x in [h.history, h.layers(), h.stacks] {
        out.extend_from_slice(&(x as u32).to_le_bytes());
    }
    out.extend_from_slice(&h.lambda.to_le_bytes());
    for &d in &h.dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for x in params.to_flat() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let chunk = self
            .bytes
            .get(self.pos..self.pos + len)
            .ok_or_else(|| Error::Format("truncated checkpoint".into()))?;
        self.pos += len;
        Ok(chunk)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ModelParams> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a model checkpoint".into()));
    }
    let version = cur.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let history = cur.u32()? as usize;
    let layers = cur.u32()? as usize;
    let stacks = cur.u32()? as usize;
    let lambda = cur.f64()?;
    if layers == 0 || layers > 1024 {
        return Err(Error::Format(format!("implausible layer count {layers}")));
    }
    let dims = (0..=layers)
        .map(|_| cur.u32().map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let hyper = Hyper {
        history,
        stacks,
        lambda,
        dims,
    };
    hyper.validate().map_err(|e| Error::Format(format!("bad hyperparameters: {e}")))?;
    let mut params = ModelParams::zeros(hyper)?;
    let flat = (0..params.param_count())
        .map(|_| cur.f64())
        .collect::<Result<Vec<f64>>>()?;
    if cur.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes in checkpoint", bytes.len() - cur.pos)));
    }
    params.set_flat(&flat)?;
    Ok(params)
}

pub fn save_checkpoint(params: &ModelParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(params)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelParams> {
    let path = path.as_ref();
    decode_checkpoint(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
