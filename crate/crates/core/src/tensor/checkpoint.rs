//! Binary network checkpoints.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "LFCK" | version u32 | layer count u32
//! per layer: rows u32 | cols u32 | rows*cols f32 weights (row-major) | cols f32 biases
//! activation tag u8 (low nibble hidden, high nibble output) | leaky slope f32
//! crc32 u32 over every preceding byte
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::{Activation, DenseNet, Layer, Matrix};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"LFCK";
pub const VERSION: u32 = 1;

pub fn encode<T: Scalar>(net: &DenseNet<T>) -> Vec<u8> {
    let mut buf = Vec::with_capacity(16 + 4 * net.param_count() + 8 * net.layers().len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(net.layers().len() as u32).to_le_bytes());
    for layer in net.layers() {
        buf.extend_from_slice(&(layer.fan_in() as u32).to_le_bytes());
        buf.extend_from_slice(&(layer.fan_out() as u32).to_le_bytes());
        for v in layer.weights.as_slice().iter().chain(&layer.bias) {
            buf.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
        }
    }
    let tag = net.hidden_activation().tag() | (net.output_activation().tag() << 4);
    buf.push(tag);
    buf.extend_from_slice(&net.leaky_slope().to_le_bytes());
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Parse {
                offset: self.pos,
                reason: format!("truncated checkpoint, wanted {n} more bytes"),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<DenseNet<T>> {
    if bytes.len() < 4 + 4 + 4 + 1 + 4 + 4 {
        return Err(Error::Parse {
            offset: bytes.len(),
            reason: "checkpoint too short".into(),
        });
    }
    let body_len = bytes.len() - 4;
    let stored = u32::from_le_bytes(bytes[body_len..].try_into().unwrap());
    if crc32fast::hash(&bytes[..body_len]) != stored {
        return Err(Error::Parse {
            offset: body_len,
            reason: "crc32 mismatch".into(),
        });
    }
    let mut cur = Cursor {
        bytes: &bytes[..body_len],
        pos: 0,
    };
    if cur.take(4)? != MAGIC {
        return Err(Error::Parse {
            offset: 0,
            reason: "bad magic, expected LFCK".into(),
        });
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(Error::Parse {
            offset: 4,
            reason: format!("unsupported checkpoint version {version}"),
        });
    }
    let n_layers = cur.u32()? as usize;
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let rows = cur.u32()? as usize;
        let cols = cur.u32()? as usize;
        let mut w = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            w.push(T::lit(cur.f32()? as f64));
        }
        let mut b = Vec::with_capacity(cols);
        for _ in 0..cols {
            b.push(T::lit(cur.f32()? as f64));
        }
        layers.push(Layer {
            weights: Matrix::from_vec(rows, cols, w)?,
            bias: b,
        });
    }
    let tag_offset = cur.pos;
    let tag = cur.take(1)?[0];
    let slope = cur.f32()?;
    if cur.pos != body_len {
        return Err(Error::Parse {
            offset: cur.pos,
            reason: "trailing bytes before crc".into(),
        });
    }
    let bad_tag = || Error::Parse {
        offset: tag_offset,
        reason: format!("unknown activation tag {tag:#04x}"),
    };
    let hidden = Activation::from_tag(tag & 0x0f, slope).ok_or_else(bad_tag)?;
    let output = Activation::from_tag(tag >> 4, slope).ok_or_else(bad_tag)?;
    DenseNet::from_layers(layers, hidden, output)
}

pub fn save<T: Scalar>(net: &DenseNet<T>, path: impl AsRef<Path>) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode(net))?;
    Ok(())
}

pub fn load<T: Scalar>(path: impl AsRef<Path>) -> Result<DenseNet<T>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Seed;

    fn net() -> DenseNet<f32> {
        DenseNet::new(&[3, 5, 2], Activation::LEAKY_RELU_02, Activation::Sigmoid, Seed(11)).unwrap()
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let n = net();
        let bytes = encode(&n);
        assert_eq!(&bytes[..4], b"LFCK");
        let back: DenseNet<f32> = decode(&bytes).unwrap();
        assert_eq!(back, n);
        assert_eq!(encode(&back), bytes);
    }

    #[test]
    fn corruption_detected() {
        let mut bytes = encode(&net());
        bytes[20] ^= 0x01;
        assert!(matches!(decode::<f32>(&bytes), Err(Error::Parse { .. })));
    }

    #[test]
    fn truncation_detected() {
        let bytes = encode(&net());
        assert!(decode::<f32>(&bytes[..10]).is_err());
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("n.lfck");
        save(&net(), &p).unwrap();
        assert_eq!(load::<f32>(&p).unwrap(), net());
    }
}
