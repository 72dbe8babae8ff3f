//! IDX dataset files (the MNIST container format). All header fields are
//! big-endian.
//!
//! Two image encodings are accepted: unsigned-byte images (`0x00000803`,
//! `N x rows x cols`, scaled to `[0, 1]`) and float32 matrices (`0x00000D02`,
//! `N x d`, read verbatim) which is what `gen-data` writes.

use std::path::Path;

use super::Dataset;
use crate::error::{read_file, write_file, Error, Result};

pub const IDX_U8_IMAGES: u32 = 0x0000_0803;
pub const IDX_F32_MATRIX: u32 = 0x0000_0D02;
pub const IDX_U8_LABELS: u32 = 0x0000_0801;

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
    format: &'static str,
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8], format: &'static str) -> Self {
        Cursor { buf, pos: 0, format }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Truncated {
                format: self.format,
                offset: self.buf.len() as u64,
                context: format!("{what} needs {n} bytes from offset {}", self.pos),
            }),
        }
    }

    fn u32_be(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Malformed {
                format: self.format,
                offset: self.pos as u64,
                reason: format!("{} trailing bytes", self.buf.len() - self.pos),
            });
        }
        Ok(())
    }
}

pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let images = read_file(images_path.as_ref())?;
    let labels = read_file(labels_path.as_ref())?;
    read_idx(&images, &labels)
}

pub fn read_idx(images: &[u8], labels: &[u8]) -> Result<Dataset> {
    let (n_images, dim, features) = parse_images(images)?;
    let labels = parse_labels(labels)?;
    if labels.len() != n_images {
        return Err(Error::Malformed {
            format: "IDX labels",
            offset: 4,
            reason: format!("label count {} does not match image count {n_images}", labels.len()),
        });
    }
    Dataset::from_labels(features, labels, dim)
}

fn count(v: u32) -> usize {
    v as usize
}

fn parse_images(buf: &[u8]) -> Result<(usize, usize, Vec<f32>)> {
    let mut cur = Cursor::new(buf, "IDX images");
    let magic = cur.u32_be("magic")?;
    match magic {
        IDX_U8_IMAGES => {
            let n = count(cur.u32_be("image count")?);
            let rows = count(cur.u32_be("row count")?);
            let cols = count(cur.u32_be("column count")?);
            let dim = rows * cols;
            if dim == 0 {
                return Err(Error::Malformed {
                    format: "IDX images",
                    offset: 8,
                    reason: format!("image size {rows}x{cols} is empty"),
                });
            }
            let pixels = cur.take(n * dim, "pixel data")?;
            cur.finish()?;
            Ok((n, dim, pixels.iter().map(|&p| f32::from(p) / 255.0).collect()))
        }
        IDX_F32_MATRIX => {
            let n = count(cur.u32_be("row count")?);
            let dim = count(cur.u32_be("column count")?);
            if dim == 0 {
                return Err(Error::Malformed {
                    format: "IDX images",
                    offset: 8,
                    reason: "feature dimension is zero".into(),
                });
            }
            let raw = cur.take(n * dim * 4, "float data")?;
            cur.finish()?;
            let features = raw
                .chunks_exact(4)
                .map(|b| f32::from_be_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            Ok((n, dim, features))
        }
        other => Err(Error::BadMagic {
            format: "IDX images",
            expected: IDX_U8_IMAGES,
            actual: other,
        }),
    }
}

fn parse_labels(buf: &[u8]) -> Result<Vec<u32>> {
    let mut cur = Cursor::new(buf, "IDX labels");
    let magic = cur.u32_be("magic")?;
    if magic != IDX_U8_LABELS {
        return Err(Error::BadMagic {
            format: "IDX labels",
            expected: IDX_U8_LABELS,
            actual: magic,
        });
    }
    let n = count(cur.u32_be("label count")?);
    let labels = cur.take(n, "label data")?;
    cur.finish()?;
    Ok(labels.iter().map(|&l| u32::from(l)).collect())
}

/// Writes features as a float32 IDX matrix.
pub fn write_idx_f32(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let mut out = Vec::with_capacity(12 + data.features().len() * 4);
    out.extend_from_slice(&IDX_F32_MATRIX.to_be_bytes());
    out.extend_from_slice(&(data.len() as u32).to_be_bytes());
    out.extend_from_slice(&(data.dim() as u32).to_be_bytes());
    for v in data.features() {
        out.extend_from_slice(&v.to_be_bytes());
    }
    write_file(path.as_ref(), out)?;
    Ok(())
}

pub fn write_idx_labels(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    if data.num_classes() > 256 {
        return Err(Error::InvalidArgument("IDX labels hold at most 256 classes".into()));
    }
    let mut out = Vec::with_capacity(8 + data.len());
    out.extend_from_slice(&IDX_U8_LABELS.to_be_bytes());
    out.extend_from_slice(&(data.len() as u32).to_be_bytes());
    out.extend(data.labels().iter().map(|&l| l as u8));
    write_file(path.as_ref(), out)?;
    Ok(())
}
