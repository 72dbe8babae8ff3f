//! NNHD helper files.
//!
//! ```text
//! "NNHD" | version u16 = 1 | layer_id u16 | entry_count u32 | reserved u32 = 0
//! entry_count x { flat_index u32 | challenge_seed u64 }
//! ```
//!
//! Little-endian, entries sorted by strictly increasing `flat_index`. A file
//! is always exactly `16 + 12 * entry_count` bytes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{read_file, write_file, Error, Result};
use crate::puf::Challenge;

pub const HELPER_MAGIC: [u8; 4] = *b"NNHD";
pub const HELPER_VERSION: u16 = 1;
pub const HELPER_HEADER_LEN: usize = 16;
pub const HELPER_ENTRY_LEN: usize = 12;

const FORMAT: &str = "NNHD helper";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HelperEntry {
    pub flat_index: u32,
    pub challenge: Challenge,
}

/// Public bookkeeping for one encrypted layer: which weights were encrypted
/// and which challenge keyed each of them. Holds no response bits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HelperData {
    layer_id: u16,
    entries: Vec<HelperEntry>,
}

impl HelperData {
    /// Entries must be sorted by strictly increasing `flat_index`.
    pub fn new(layer_id: u16, entries: Vec<HelperEntry>) -> Result<Self> {
        if let Some(w) = entries.windows(2).find(|w| w[0].flat_index >= w[1].flat_index) {
            return Err(Error::InvalidArgument(format!(
                "helper indices must be strictly increasing ({} then {})",
                w[0].flat_index, w[1].flat_index
            )));
        }
        Ok(HelperData { layer_id, entries })
    }

    pub fn layer_id(&self) -> u16 {
        self.layer_id
    }

    pub fn entries(&self) -> &[HelperEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn indices(&self) -> Vec<u32> {
        self.entries.iter().map(|e| e.flat_index).collect()
    }

    pub fn encoded_len(&self) -> usize {
        HELPER_HEADER_LEN + HELPER_ENTRY_LEN * self.entries.len()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let count =
            u32::try_from(self.entries.len()).map_err(|_| Error::InvalidArgument("too many helper entries".into()))?;
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&HELPER_MAGIC);
        out.extend_from_slice(&HELPER_VERSION.to_le_bytes());
        out.extend_from_slice(&self.layer_id.to_le_bytes());
        out.extend_from_slice(&count.to_le_bytes());
        out.extend_from_slice(&0u32.to_le_bytes());
        for e in &self.entries {
            out.extend_from_slice(&e.flat_index.to_le_bytes());
            out.extend_from_slice(&e.challenge.0.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        if buf.len() < HELPER_HEADER_LEN {
            return Err(Error::Truncated {
                format: FORMAT,
                offset: buf.len() as u64,
                context: format!("header needs {HELPER_HEADER_LEN} bytes"),
            });
        }
        if buf[..4] != HELPER_MAGIC {
            return Err(Error::BadMagic {
                format: FORMAT,
                expected: u32::from_be_bytes(HELPER_MAGIC),
                actual: u32::from_be_bytes([buf[0], buf[1], buf[2], buf[3]]),
            });
        }
        let version = u16::from_le_bytes([buf[4], buf[5]]);
        if version != HELPER_VERSION {
            return Err(Error::UnsupportedVersion {
                format: FORMAT,
                version,
            });
        }
        let layer_id = u16::from_le_bytes([buf[6], buf[7]]);
        let count = u32::from_le_bytes([buf[8], buf[9], buf[10], buf[11]]) as usize;
        let reserved = u32::from_le_bytes([buf[12], buf[13], buf[14], buf[15]]);
        if reserved != 0 {
            return Err(Error::Malformed {
                format: FORMAT,
                offset: 12,
                reason: format!("reserved field is {reserved:#x}, expected 0"),
            });
        }
        let expected = HELPER_HEADER_LEN as u64 + HELPER_ENTRY_LEN as u64 * count as u64;
        if (buf.len() as u64) < expected {
            return Err(Error::Truncated {
                format: FORMAT,
                offset: buf.len() as u64,
                context: format!("{count} entries need {expected} bytes"),
            });
        }
        if buf.len() as u64 > expected {
            return Err(Error::Malformed {
                format: FORMAT,
                offset: expected,
                reason: format!("{} trailing bytes", buf.len() as u64 - expected),
            });
        }
        let mut entries = Vec::with_capacity(count);
        for (i, rec) in buf[HELPER_HEADER_LEN..].chunks_exact(HELPER_ENTRY_LEN).enumerate() {
            let flat_index = u32::from_le_bytes([rec[0], rec[1], rec[2], rec[3]]);
            let mut seed = [0u8; 8];
            seed.copy_from_slice(&rec[4..12]);
            if let Some(prev) = entries.last().map(|e: &HelperEntry| e.flat_index) {
                if flat_index <= prev {
                    return Err(Error::Malformed {
                        format: FORMAT,
                        offset: (HELPER_HEADER_LEN + i * HELPER_ENTRY_LEN) as u64,
                        reason: format!("entry {i} index {flat_index} is not above {prev}"),
                    });
                }
            }
            entries.push(HelperEntry {
                flat_index,
                challenge: Challenge(u64::from_le_bytes(seed)),
            });
        }
        Ok(HelperData { layer_id, entries })
    }
}

pub fn save_helper(helper: &HelperData, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), helper.to_bytes()?)?;
    Ok(())
}

pub fn load_helper(path: impl AsRef<Path>) -> Result<HelperData> {
    HelperData::from_bytes(&read_file(path.as_ref())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn helper(n: u32) -> HelperData {
        let entries = (0..n)
            .map(|i| HelperEntry {
                flat_index: i * 3,
                challenge: Challenge(u64::from(i).wrapping_mul(0x1234_5678_9ABC_DEF1)),
            })
            .collect();
        HelperData::new(7, entries).unwrap()
    }

    #[test]
    fn empty_helper_is_sixteen_bytes() {
        let bytes = helper(0).to_bytes().unwrap();
        assert_eq!(bytes.len(), 16);
        assert_eq!(&bytes[..4], b"NNHD");
        assert_eq!(&bytes[4..16], &[1, 0, 7, 0, 0, 0, 0, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn entry_layout_is_index_then_seed() {
        let h = HelperData::new(
            1,
            vec![HelperEntry {
                flat_index: 0x0102_0304,
                challenge: Challenge(0x1122_3344_5566_7788),
            }],
        )
        .unwrap();
        let bytes = h.to_bytes().unwrap();
        assert_eq!(
            &bytes[16..],
            &[4, 3, 2, 1, 0x88, 0x77, 0x66, 0x55, 0x44, 0x33, 0x22, 0x11]
        );
    }

    #[test]
    fn rejects_unsorted_entries() {
        let e = |i| HelperEntry {
            flat_index: i,
            challenge: Challenge(0),
        };
        assert!(HelperData::new(0, vec![e(2), e(1)]).is_err());
        assert!(HelperData::new(0, vec![e(2), e(2)]).is_err());

        let mut bytes = helper(3).to_bytes().unwrap();
        bytes[16 + 12] = 0; // second index becomes 0
        assert!(matches!(
            HelperData::from_bytes(&bytes),
            Err(Error::Malformed { offset: 28, .. })
        ));
    }

    #[test]
    fn rejects_damaged_headers() {
        let good = helper(2).to_bytes().unwrap();
        let mut b = good.clone();
        b[0] = b'X';
        assert!(matches!(HelperData::from_bytes(&b), Err(Error::BadMagic { .. })));
        let mut b = good.clone();
        b[4] = 9;
        assert!(matches!(
            HelperData::from_bytes(&b),
            Err(Error::UnsupportedVersion { .. })
        ));
        let mut b = good.clone();
        b[12] = 1;
        assert!(matches!(HelperData::from_bytes(&b), Err(Error::Malformed { .. })));
        assert!(matches!(
            HelperData::from_bytes(&good[..good.len() - 1]),
            Err(Error::Truncated { .. })
        ));
        assert!(matches!(
            HelperData::from_bytes(&good[..10]),
            Err(Error::Truncated { .. })
        ));
        let mut b = good;
        b.push(0);
        assert!(matches!(HelperData::from_bytes(&b), Err(Error::Malformed { .. })));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.nnhd");
        let h = helper(1000);
        save_helper(&h, &p).unwrap();
        assert_eq!(std::fs::metadata(&p).unwrap().len(), 16 + 12 * 1000);
        assert_eq!(load_helper(&p).unwrap(), h);
    }
}
