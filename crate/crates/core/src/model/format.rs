//! NNBM model files.
//!
//! ```text
//! "NNBM" | version u16 = 1 | layer_count u16
//! per layer: kind u8 (0 = dense) | activation u8 | in_dim u32 | out_dim u32
//!            | in_dim*out_dim f32 weights (row-major) | out_dim f32 biases
//! ```
//!
//! Everything is little-endian. Floats are copied as raw bit patterns so NaN
//! payloads in encrypted weights survive a round trip.

use std::path::Path;

use super::{Activation, DenseLayer, Model};
use crate::error::{read_file, write_file, Error, Result};

pub const MODEL_MAGIC: [u8; 4] = *b"NNBM";
pub const MODEL_VERSION: u16 = 1;

const FORMAT: &str = "NNBM model";
const KIND_DENSE: u8 = 0;

pub fn write_model(model: &Model) -> Result<Vec<u8>> {
    let layer_count = u16::try_from(model.layers().len())
        .map_err(|_| Error::InvalidArgument("NNBM holds at most 65535 layers".into()))?;
    let mut out = Vec::new();
    out.extend_from_slice(&MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.extend_from_slice(&layer_count.to_le_bytes());
    for layer in model.layers() {
        let dims = [layer.in_dim(), layer.out_dim()]
            .map(|d| u32::try_from(d).map_err(|_| Error::InvalidArgument(format!("dimension {d} exceeds u32"))));
        out.push(KIND_DENSE);
        out.push(layer.activation().code());
        for d in dims {
            out.extend_from_slice(&d?.to_le_bytes());
        }
        for v in layer.weights().iter().chain(layer.bias()) {
            out.extend_from_slice(&v.to_bits().to_le_bytes());
        }
    }
    Ok(out)
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), write_model(model)?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    read_model(&read_file(path.as_ref())?)
}

pub fn read_model(buf: &[u8]) -> Result<Model> {
    let mut r = Reader { buf, pos: 0 };
    let magic = r.take(4, "header")?;
    if magic != MODEL_MAGIC {
        return Err(Error::BadMagic {
            format: FORMAT,
            expected: u32::from_be_bytes(MODEL_MAGIC),
            actual: u32::from_be_bytes([magic[0], magic[1], magic[2], magic[3]]),
        });
    }
    let version = r.u16("header")?;
    if version != MODEL_VERSION {
        return Err(Error::UnsupportedVersion {
            format: FORMAT,
            version,
        });
    }
    let layer_count = r.u16("header")?;
    let mut layers = Vec::with_capacity(layer_count as usize);
    for i in 0..layer_count {
        let ctx = format!("layer {i}");
        let start = r.pos;
        let kind = r.u8(&ctx)?;
        if kind != KIND_DENSE {
            return Err(r.malformed(start, format!("layer {i} has unknown kind {kind}")));
        }
        let act_code = r.u8(&ctx)?;
        let activation = Activation::from_code(act_code)
            .ok_or_else(|| r.malformed(start + 1, format!("layer {i} has unknown activation {act_code}")))?;
        let in_dim = r.u32(&ctx)? as usize;
        let out_dim = r.u32(&ctx)? as usize;
        if in_dim == 0 || out_dim == 0 {
            return Err(r.malformed(start + 2, format!("layer {i} has an empty dimension")));
        }
        let n = in_dim
            .checked_mul(out_dim)
            .ok_or_else(|| r.malformed(start + 2, format!("layer {i} is too large")))?;
        let weights = r.f32s(n, &format!("layer {i} weights"))?;
        let bias = r.f32s(out_dim, &format!("layer {i} bias"))?;
        layers.push(DenseLayer::new(in_dim, out_dim, weights, bias, activation)?);
    }
    if r.pos != buf.len() {
        return Err(r.malformed(r.pos, format!("{} trailing bytes", buf.len() - r.pos)));
    }
    Model::new(layers).map_err(|e| Error::Malformed {
        format: FORMAT,
        offset: 8,
        reason: e.to_string(),
    })
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, ctx: &str) -> Result<&'a [u8]> {
        match self.pos.checked_add(n).filter(|&e| e <= self.buf.len()) {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Truncated {
                format: FORMAT,
                offset: self.buf.len() as u64,
                context: format!("{ctx}: needed {n} bytes at offset {}", self.pos),
            }),
        }
    }

    fn u8(&mut self, ctx: &str) -> Result<u8> {
        Ok(self.take(1, ctx)?[0])
    }

    fn u16(&mut self, ctx: &str) -> Result<u16> {
        let b = self.take(2, ctx)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, ctx: &str) -> Result<u32> {
        let b = self.take(4, ctx)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f32s(&mut self, n: usize, ctx: &str) -> Result<Vec<f32>> {
        let bytes = n
            .checked_mul(4)
            .ok_or_else(|| self.malformed(self.pos, format!("{ctx}: length overflow")))?;
        let raw = self.take(bytes, ctx)?;
        Ok(raw
            .chunks_exact(4)
            .map(|b| f32::from_bits(u32::from_le_bytes([b[0], b[1], b[2], b[3]])))
            .collect())
    }

    fn malformed(&self, offset: usize, reason: String) -> Error {
        Error::Malformed {
            format: FORMAT,
            offset: offset as u64,
            reason,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Model {
        let a = DenseLayer::new(
            3,
            2,
            vec![1.0, f32::from_bits(0x7FC0_1234), -0.0, f32::INFINITY, 2.5, -7.0],
            vec![0.5, f32::from_bits(0xFFFF_FFFF)],
            Activation::Relu,
        )
        .unwrap();
        let b = DenseLayer::new(2, 2, vec![0.1, 0.2, 0.3, 0.4], vec![0.0, 1.0], Activation::None).unwrap();
        Model::new(vec![a, b]).unwrap()
    }

    #[test]
    fn header_layout() {
        let bytes = write_model(&sample()).unwrap();
        assert_eq!(&bytes[..4], b"NNBM");
        assert_eq!(&bytes[4..8], &[1, 0, 2, 0]);
        assert_eq!(bytes[8], 0);
        assert_eq!(bytes[9], 1);
        assert_eq!(&bytes[10..18], &[3, 0, 0, 0, 2, 0, 0, 0]);
        assert_eq!(bytes.len(), 8 + (10 + 4 * 8) + (10 + 4 * 6));
    }

    #[test]
    fn nan_payloads_survive() {
        let m = sample();
        let back = read_model(&write_model(&m).unwrap()).unwrap();
        assert!(back.bit_eq(&m));
        assert_eq!(back.layers()[0].weights()[1].to_bits(), 0x7FC0_1234);
    }

    #[test]
    fn truncation_names_the_layer() {
        let bytes = write_model(&sample()).unwrap();
        let cut = &bytes[..bytes.len() - 6];
        let err = read_model(cut).unwrap_err();
        assert!(err.to_string().contains("layer 1"), "{err}");
        assert!(matches!(err, Error::Truncated { .. }));
    }

    #[test]
    fn rejects_bad_magic_and_version() {
        let mut bytes = write_model(&sample()).unwrap();
        bytes[4] = 2;
        assert!(matches!(
            read_model(&bytes),
            Err(Error::UnsupportedVersion { version: 2, .. })
        ));
        bytes[0] = b'X';
        assert!(matches!(read_model(&bytes), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn rejects_incompatible_layer_chain() {
        let mut bytes = write_model(&sample()).unwrap();
        // second layer in_dim: header 8 + layer0 (10 + 32) + kind/act 2
        bytes[8 + 42 + 2] = 5;
        assert!(read_model(&bytes).is_err());
    }
}
