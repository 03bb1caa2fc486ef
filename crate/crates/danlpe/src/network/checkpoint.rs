//! Binary checkpoint format for [`NetworkParameters`].
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic   4 bytes  "DLPE"
//! version u32      currently 1
//! dropout f64
//! branches u32     always 3: feature, classifier, domain, in that order
//! per branch:
//!   layers u32
//!   per layer:
//!     out u32, in u32
//!     weights f64 * (out * in), row-major
//!     bias    f64 * out
//! ```
//!
//! Decoding validates sizes against the remaining buffer before any
//! allocation and re-checks the structural invariants of the decoded
//! parameters, so arbitrary bytes either round-trip or fail cleanly.

use std::path::Path;

use crate::error::{Error, Result};
use crate::network::{DenseLayer, NetworkParameters};
use ndarray::{Array1, Array2};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"DLPE";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Hard caps a checkpoint may not exceed, far above anything this crate
/// trains but low enough to refuse absurd allocation requests.
const MAX_LAYER_DIM: u32 = 1 << 20;
const MAX_LAYERS: u32 = 64;

pub fn encode_checkpoint(params: &NetworkParameters) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&params.dropout.to_le_bytes());
    out.extend_from_slice(&3u32.to_le_bytes());
    for branch in [&params.feature, &params.classifier, &params.domain] {
        out.extend_from_slice(&(branch.len() as u32).to_le_bytes());
        for layer in branch {
            out.extend_from_slice(&(layer.output_dim() as u32).to_le_bytes());
            out.extend_from_slice(&(layer.input_dim() as u32).to_le_bytes());
            for w in layer.weights.iter() {
                out.extend_from_slice(&w.to_le_bytes());
            }
            for b in layer.bias.iter() {
                out.extend_from_slice(&b.to_le_bytes());
            }
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or_else(|| {
            Error::MalformedCheckpoint("length overflow".into())
        })?;
        if end > self.bytes.len() {
            return Err(Error::MalformedCheckpoint(format!(
                "truncated: wanted {n} bytes at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            )));
        }
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        let b = self.take(8)?;
        Ok(f64::from_le_bytes(b.try_into().unwrap()))
    }

    fn f64_block(&mut self, count: usize) -> Result<Vec<f64>> {
        // Validate the byte span before allocating for it.
        let bytes = count.checked_mul(8).ok_or_else(|| {
            Error::MalformedCheckpoint("tensor size overflow".into())
        })?;
        let raw = self.take(bytes)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<NetworkParameters> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4)?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::MalformedCheckpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::MalformedCheckpoint(format!(
            "unsupported version {version}"
        )));
    }
    let dropout = r.f64()?;
    let branches = r.u32()?;
    if branches != 3 {
        return Err(Error::MalformedCheckpoint(format!(
            "expected 3 branches, found {branches}"
        )));
    }

    let mut decoded: Vec<Vec<DenseLayer>> = Vec::with_capacity(3);
    for _ in 0..3 {
        let layers = r.u32()?;
        if layers == 0 || layers > MAX_LAYERS {
            return Err(Error::MalformedCheckpoint(format!(
                "layer count {layers} out of range"
            )));
        }
        let mut branch = Vec::with_capacity(layers as usize);
        for _ in 0..layers {
            let out_dim = r.u32()?;
            let in_dim = r.u32()?;
            if out_dim == 0 || out_dim > MAX_LAYER_DIM || in_dim == 0 || in_dim > MAX_LAYER_DIM
            {
                return Err(Error::MalformedCheckpoint(format!(
                    "layer dims {out_dim}x{in_dim} out of range"
                )));
            }
            let weight_count = (out_dim as usize)
                .checked_mul(in_dim as usize)
                .ok_or_else(|| Error::MalformedCheckpoint("tensor size overflow".into()))?;
            let weights = r.f64_block(weight_count)?;
            let bias = r.f64_block(out_dim as usize)?;
            let weights =
                Array2::from_shape_vec((out_dim as usize, in_dim as usize), weights)
                    .expect("shape matches element count");
            branch.push(DenseLayer { weights, bias: Array1::from_vec(bias) });
        }
        decoded.push(branch);
    }
    if r.pos != bytes.len() {
        return Err(Error::MalformedCheckpoint(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }

    let domain = decoded.pop().unwrap();
    let classifier = decoded.pop().unwrap();
    let feature = decoded.pop().unwrap();
    let params = NetworkParameters { feature, classifier, domain, dropout };
    params.validate().map_err(|e| {
        Error::MalformedCheckpoint(format!("decoded parameters are invalid: {e}"))
    })?;
    Ok(params)
}

pub fn save_checkpoint(params: &NetworkParameters, path: &Path) -> Result<()> {
    Ok(std::fs::write(path, encode_checkpoint(params))?)
}

pub fn load_checkpoint(path: &Path) -> Result<NetworkParameters> {
    let bytes = std::fs::read(path)?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> NetworkParameters {
        NetworkParameters::init(7, 5, 3, 0.4, 123).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let p = params();
        let bytes = encode_checkpoint(&p);
        let q = decode_checkpoint(&bytes).unwrap();
        assert_eq!(p, q);
        // Re-encoding the decoded parameters reproduces the bytes.
        assert_eq!(encode_checkpoint(&q), bytes);
    }

    #[test]
    fn file_round_trip() {
        let dir = std::env::temp_dir().join(format!("danlpe-ckpt-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("net.bin");
        let p = params();
        save_checkpoint(&p, &path).unwrap();
        let q = load_checkpoint(&path).unwrap();
        assert_eq!(p, q);
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn rejects_bad_magic_and_version() {
        let p = params();
        let mut bytes = encode_checkpoint(&p);
        bytes[0] = b'X';
        assert!(decode_checkpoint(&bytes).is_err());

        let mut bytes = encode_checkpoint(&p);
        bytes[4] = 9;
        assert!(matches!(decode_checkpoint(&bytes), Err(Error::MalformedCheckpoint(_))));
    }

    #[test]
    fn rejects_truncation_and_trailing_bytes() {
        let p = params();
        let bytes = encode_checkpoint(&p);
        for cut in [0, 3, 11, bytes.len() / 2, bytes.len() - 1] {
            assert!(decode_checkpoint(&bytes[..cut]).is_err(), "cut at {cut} accepted");
        }
        let mut extended = bytes.clone();
        extended.push(0);
        assert!(decode_checkpoint(&extended).is_err());
    }

    #[test]
    fn rejects_absurd_dims_without_allocating() {
        // Header claiming a gigantic first layer with no data behind it.
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&CHECKPOINT_MAGIC);
        bytes.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        bytes.extend_from_slice(&0.0f64.to_le_bytes());
        bytes.extend_from_slice(&3u32.to_le_bytes());
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        assert!(decode_checkpoint(&bytes).is_err());
    }

    #[test]
    fn rejects_non_finite_weights() {
        let mut p = params();
        p.classifier[0].weights[[0, 0]] = f64::INFINITY;
        let bytes = encode_checkpoint(&p);
        assert!(decode_checkpoint(&bytes).is_err());
    }

    #[test]
    fn rejects_inconsistent_chain() {
        // Classifier reading a width the trunk does not produce.
        let p = params();
        let mut q = p.clone();
        q.classifier[0].weights = Array2::zeros((5, 6));
        let bytes = encode_checkpoint(&q);
        assert!(decode_checkpoint(&bytes).is_err());
    }
}
