//! Versioned binary model file.
//!
//! ```text
//! magic      8 bytes   "MLPM0001"
//! version    u16
//! layers     u32       number of weight layers L
//! dims       u32 × (L + 1)
//! activation u8        hidden activation, 0 = ReLU
//! head       u8        0 = linear, 1 = softmax
//! params     f64 × P   per layer: weights (row-major out × in), then biases
//! ```
//!
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use super::mlp::{Layer, MlpModel, OutputHead};
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 8] = b"MLPM0001";
pub const MODEL_VERSION: u16 = 1;
const ACTIVATION_RELU: u8 = 0;

pub fn encode_model(model: &MlpModel) -> Vec<u8> {
    let sizes = model.layer_sizes();
    let mut out = Vec::with_capacity(32 + 8 * model.param_count());
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.extend_from_slice(&(model.layers().len() as u32).to_le_bytes());
    for s in sizes {
        out.extend_from_slice(&(s as u32).to_le_bytes());
    }
    out.push(ACTIVATION_RELU);
    out.push(match model.head() {
        OutputHead::Linear => 0,
        OutputHead::Softmax => 1,
    });
    for p in model.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Parse(format!("model file truncated while reading {what} at byte {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<MlpModel> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8, "magic")? != MODEL_MAGIC {
        return Err(Error::Parse("bad model magic".into()));
    }
    let version = r.u16("version")?;
    if version != MODEL_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            expected: MODEL_VERSION,
        });
    }
    let count = r.u32("layer count")? as usize;
    if count == 0 || count > 64 {
        return Err(Error::Parse(format!("implausible layer count {count}")));
    }
    let dims = (0..=count)
        .map(|_| r.u32("layer dims").map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    if dims.contains(&0) {
        return Err(Error::Parse("zero layer dimension".into()));
    }
    if r.u8("activation")? != ACTIVATION_RELU {
        return Err(Error::Parse("unknown activation id".into()));
    }
    let head = match r.u8("head")? {
        0 => OutputHead::Linear,
        1 => OutputHead::Softmax,
        h => return Err(Error::Parse(format!("unknown head id {h}"))),
    };
    let mut layers = Vec::with_capacity(count);
    for w in dims.windows(2) {
        let (i, o) = (w[0], w[1]);
        let n = i.checked_mul(o).ok_or_else(|| Error::Parse("layer too large".into()))?;
        // Check the remaining length before allocating.
        if bytes.len() - r.pos < 8 * (n + o) {
            return Err(Error::Parse("model file truncated in parameters".into()));
        }
        let weights = (0..n).map(|_| r.f64("weights")).collect::<Result<Vec<_>>>()?;
        let biases = (0..o).map(|_| r.f64("biases")).collect::<Result<Vec<_>>>()?;
        layers.push(Layer {
            in_dim: i,
            out_dim: o,
            weights,
            biases,
        });
    }
    if r.pos != bytes.len() {
        return Err(Error::Parse(format!("{} trailing bytes after model", bytes.len() - r.pos)));
    }
    MlpModel::from_layers(layers, head)
}

pub fn save_model(path: &Path, model: &MlpModel) -> Result<()> {
    fs::write(path, encode_model(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<MlpModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}
