//! `.satr` trace set files.
//!
//! Layout, all little-endian:
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 4    | magic `SATR`                            |
//! | 4      | 2    | version (1)                             |
//! | 6      | 4    | trace count N                           |
//! | 10     | 4    | samples per trace S                     |
//! | 14     | 1    | sample kind: 0 = u32 counts, 1 = f64    |
//! | 15     | 1    | flags: bit 0 = key present              |
//! | 16     | 16   | key, only if flagged                    |
//! |        | 16·N | plaintexts                              |
//! |        | 4·N·S or 8·N·S | samples, row-major            |

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::aes::{AesKey128, Block128};
use crate::traces::{Samples, TraceMatrix};

pub const MAGIC: [u8; 4] = *b"SATR";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: u64 = 16;
const FLAG_KEY: u8 = 1;
const KIND_COUNTS: u8 = 0;
const KIND_REAL: u8 = 1;

#[derive(Debug, Error)]
#[non_exhaustive]
pub enum StoreError {
    #[error("I/O error")]
    Io(#[from] io::Error),
    #[error("not a trace set file (magic {0:02x?})")]
    BadMagic([u8; 4]),
    #[error("unsupported trace set version {0}")]
    UnsupportedVersion(u16),
    #[error("unknown sample kind {0}")]
    UnknownSampleKind(u8),
    #[error("unknown flag bits {0:#04x}")]
    UnknownFlags(u8),
    #[error("file truncated: expected {expected} bytes, found {actual}")]
    Truncated { expected: u64, actual: u64 },
    #[error("trailing data: expected {expected} bytes, found {actual}")]
    TrailingBytes { expected: u64, actual: u64 },
    #[error("{traces} traces but {plaintexts} plaintexts")]
    CountMismatch { traces: usize, plaintexts: usize },
    #[error("dimension {0} does not fit the file format")]
    TooLarge(usize),
}

pub type Result<T> = std::result::Result<T, StoreError>;

/// Traces together with the plaintexts that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSet {
    traces: TraceMatrix,
    plaintexts: Vec<Block128>,
    key: Option<AesKey128>,
}

struct Header {
    n_traces: u32,
    n_samples: u32,
    kind: u8,
    flags: u8,
}

impl Header {
    fn parse(b: &[u8; HEADER_LEN as usize]) -> Result<Self> {
        let magic: [u8; 4] = b[0..4].try_into().unwrap();
        if magic != MAGIC {
            return Err(StoreError::BadMagic(magic));
        }
        let version = u16::from_le_bytes([b[4], b[5]]);
        if version != VERSION {
            return Err(StoreError::UnsupportedVersion(version));
        }
        let kind = b[14];
        if kind != KIND_COUNTS && kind != KIND_REAL {
            return Err(StoreError::UnknownSampleKind(kind));
        }
        let flags = b[15];
        if flags & !FLAG_KEY != 0 {
            return Err(StoreError::UnknownFlags(flags));
        }
        Ok(Self {
            n_traces: u32::from_le_bytes(b[6..10].try_into().unwrap()),
            n_samples: u32::from_le_bytes(b[10..14].try_into().unwrap()),
            kind,
            flags,
        })
    }

    fn total_len(&self) -> u64 {
        let n = self.n_traces as u64;
        let width = if self.kind == KIND_COUNTS { 4 } else { 8 };
        let key = if self.flags & FLAG_KEY != 0 { 16 } else { 0 };
        HEADER_LEN + key + 16 * n + width * n * self.n_samples as u64
    }
}

impl TraceSet {
    pub fn new(
        traces: TraceMatrix,
        plaintexts: Vec<Block128>,
        key: Option<AesKey128>,
    ) -> Result<Self> {
        if traces.n_traces() != plaintexts.len() {
            return Err(StoreError::CountMismatch {
                traces: traces.n_traces(),
                plaintexts: plaintexts.len(),
            });
        }
        for d in [traces.n_traces(), traces.n_samples()] {
            if u32::try_from(d).is_err() {
                return Err(StoreError::TooLarge(d));
            }
        }
        Ok(Self {
            traces,
            plaintexts,
            key,
        })
    }

    pub fn traces(&self) -> &TraceMatrix {
        &self.traces
    }

    pub fn plaintexts(&self) -> &[Block128] {
        &self.plaintexts
    }

    pub fn key(&self) -> Option<&AesKey128> {
        self.key.as_ref()
    }

    pub fn into_parts(self) -> (TraceMatrix, Vec<Block128>, Option<AesKey128>) {
        (self.traces, self.plaintexts, self.key)
    }

    fn header(&self) -> Header {
        Header {
            n_traces: self.traces.n_traces() as u32,
            n_samples: self.traces.n_samples() as u32,
            kind: if self.traces.is_counts() {
                KIND_COUNTS
            } else {
                KIND_REAL
            },
            flags: if self.key.is_some() { FLAG_KEY } else { 0 },
        }
    }

    /// Size of the serialized form.
    pub fn encoded_len(&self) -> u64 {
        self.header().total_len()
    }

    pub fn write_to<W: Write>(&self, out: W) -> Result<()> {
        let mut w = BufWriter::new(out);
        let h = self.header();
        w.write_all(&MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&h.n_traces.to_le_bytes())?;
        w.write_all(&h.n_samples.to_le_bytes())?;
        w.write_all(&[h.kind, h.flags])?;
        if let Some(k) = &self.key {
            w.write_all(&k.0)?;
        }
        for p in &self.plaintexts {
            w.write_all(&p.0)?;
        }
        match self.traces.samples() {
            Samples::Counts(v) => {
                for x in v {
                    w.write_all(&x.to_le_bytes())?;
                }
            }
            Samples::Real(v) => {
                for x in v {
                    w.write_all(&x.to_le_bytes())?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(self.encoded_len() as usize);
        self.write_to(&mut buf).expect("writing to memory");
        buf
    }

    /// Reads a complete set; anything after the declared length is an error.
    pub fn read_from<R: Read>(input: R) -> Result<Self> {
        let mut r = BufReader::new(input);
        let mut hb = [0u8; HEADER_LEN as usize];
        let got = read_up_to(&mut r, &mut hb)?;
        if got < hb.len() {
            // enough to judge the magic even when short
            if got >= 4 && hb[..4] != MAGIC {
                return Err(StoreError::BadMagic(hb[..4].try_into().unwrap()));
            }
            return Err(StoreError::Truncated {
                expected: HEADER_LEN,
                actual: got as u64,
            });
        }
        let h = Header::parse(&hb)?;
        let expected = h.total_len();
        let body_len = expected - HEADER_LEN;
        let mut body = Vec::new();
        r.by_ref().take(body_len).read_to_end(&mut body)?;
        if (body.len() as u64) < body_len {
            return Err(StoreError::Truncated {
                expected,
                actual: HEADER_LEN + body.len() as u64,
            });
        }
        let extra = io::copy(&mut r, &mut io::sink())?;
        if extra > 0 {
            return Err(StoreError::TrailingBytes {
                expected,
                actual: expected + extra,
            });
        }
        Self::decode_body(&h, &body)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::read_from(bytes)
    }

    fn decode_body(h: &Header, body: &[u8]) -> Result<Self> {
        let mut rest = body;
        let key = if h.flags & FLAG_KEY != 0 {
            let (k, r) = rest.split_at(16);
            rest = r;
            Some(AesKey128(k.try_into().unwrap()))
        } else {
            None
        };
        let n = h.n_traces as usize;
        let s = h.n_samples as usize;
        let (pts, samples) = rest.split_at(16 * n);
        let plaintexts = pts
            .chunks_exact(16)
            .map(|c| Block128(c.try_into().unwrap()))
            .collect();
        let traces = if h.kind == KIND_COUNTS {
            let v = samples
                .chunks_exact(4)
                .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            TraceMatrix::from_counts(n, s, v)
        } else {
            let v = samples
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            TraceMatrix::from_real(n, s, v)
        }
        .expect("lengths checked against the header");
        Ok(Self {
            traces,
            plaintexts,
            key,
        })
    }

    /// Writes to a temporary file next to `path` and renames it into place.
    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let dir = match path.parent() {
            Some(d) if !d.as_os_str().is_empty() => d,
            _ => Path::new("."),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        self.write_to(tmp.as_file_mut())?;
        tmp.as_file().sync_all()?;
        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            tmp.as_file()
                .set_permissions(std::fs::Permissions::from_mode(0o644))?;
        }
        tmp.persist(path).map_err(|e| e.error)?;
        Ok(())
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(File::open(path)?)
    }
}

fn read_up_to<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(k) => filled += k,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> TraceSet {
        let tm = TraceMatrix::from_counts(3, 5, (0..15).map(|x| x * 1000 + 7).collect()).unwrap();
        let pts = (0..3).map(|i| Block128([i as u8; 16])).collect();
        TraceSet::new(tm, pts, Some(AesKey128([0xab; 16]))).unwrap()
    }

    #[test]
    fn empty_sets() {
        let empty = TraceSet::new(
            TraceMatrix::from_counts(0, 0, vec![]).unwrap(),
            vec![],
            None,
        )
        .unwrap();
        let bytes = empty.to_bytes();
        assert_eq!(bytes.len(), 16);
        assert_eq!(TraceSet::from_bytes(&bytes).unwrap(), empty);
        let keyed = TraceSet::new(
            TraceMatrix::from_counts(0, 10, vec![]).unwrap(),
            vec![],
            Some(AesKey128([1; 16])),
        )
        .unwrap();
        assert_eq!(keyed.to_bytes().len(), 32);
        assert_eq!(TraceSet::from_bytes(&keyed.to_bytes()).unwrap(), keyed);
    }

    #[test]
    fn layout_is_fixed() {
        let b = small().to_bytes();
        assert_eq!(&b[..4], b"SATR");
        assert_eq!(&b[4..6], &[1, 0]);
        assert_eq!(&b[6..10], &[3, 0, 0, 0]);
        assert_eq!(&b[10..14], &[5, 0, 0, 0]);
        assert_eq!(&b[14..16], &[0, 1]);
        assert_eq!(b.len(), 16 + 16 + 48 + 60);
        assert_eq!(&b[80..84], &7u32.to_le_bytes());
    }

    #[test]
    fn distinct_errors() {
        let b = small().to_bytes();
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(matches!(
            TraceSet::from_bytes(&bad),
            Err(StoreError::BadMagic(_))
        ));
        let mut bad = b.clone();
        bad[4] = 2;
        assert!(matches!(
            TraceSet::from_bytes(&bad),
            Err(StoreError::UnsupportedVersion(2))
        ));
        let mut bad = b.clone();
        bad[14] = 9;
        assert!(matches!(
            TraceSet::from_bytes(&bad),
            Err(StoreError::UnknownSampleKind(9))
        ));
        let mut bad = b.clone();
        bad[15] = 3;
        assert!(matches!(
            TraceSet::from_bytes(&bad),
            Err(StoreError::UnknownFlags(3))
        ));
        assert!(matches!(
            TraceSet::from_bytes(&b[..b.len() - 10]),
            Err(StoreError::Truncated {
                expected: 140,
                actual: 130
            })
        ));
        assert!(matches!(
            TraceSet::from_bytes(&b[..9]),
            Err(StoreError::Truncated {
                expected: 16,
                actual: 9
            })
        ));
        let mut long = b.clone();
        long.push(0);
        assert!(matches!(
            TraceSet::from_bytes(&long),
            Err(StoreError::TrailingBytes {
                expected: 140,
                actual: 141
            })
        ));
        let tm = TraceMatrix::from_counts(2, 1, vec![1, 2]).unwrap();
        assert!(matches!(
            TraceSet::new(tm, vec![Block128([0; 16])], None),
            Err(StoreError::CountMismatch {
                traces: 2,
                plaintexts: 1
            })
        ));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("set.satr");
        let set = small();
        set.write_file(&path).unwrap();
        assert_eq!(TraceSet::read_file(&path).unwrap(), set);
        assert_eq!(std::fs::read(&path).unwrap(), set.to_bytes());
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
