//! Frame layout, all integers little-endian:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "TBNK" (data) or "TBNE" (error)
//! 4       2     version (1)
//! 6       2     z_dim
//! 8       1     dtype (0 = f32, 1 = f64)
//! 9       4     sequence id
//! 13      z·w   payload
//! 13+z·w  4     CRC32 of everything before it
//! ```

use std::io::{self, Read};

use crate::error::{ErrorCode, WireError};

pub const MAGIC: [u8; 4] = *b"TBNK";
pub const ERROR_MAGIC: [u8; 4] = *b"TBNE";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 13;
pub const CHECKSUM_LEN: usize = 4;
pub const MAX_Z_DIM: usize = u16::MAX as usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dtype {
    F32 = 0,
    F64 = 1,
}

impl Dtype {
    pub fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self, WireError> {
        match tag {
            0 => Ok(Dtype::F32),
            1 => Ok(Dtype::F64),
            other => Err(WireError::BadDtype(other)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameKind {
    Data,
    Error,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub kind: FrameKind,
    pub seq: u32,
    pub dtype: Dtype,
    pub values: Vec<f64>,
}

impl Frame {
    pub fn z_dim(&self) -> usize {
        self.values.len()
    }

    /// The reason code of an error frame.
    pub fn error_code(&self) -> Option<ErrorCode> {
        match self.kind {
            FrameKind::Error => self.values.first().and_then(|&v| ErrorCode::from_value(v)),
            FrameKind::Data => None,
        }
    }
}

/// Total bytes of a frame carrying `z_dim` values.
pub fn frame_size(z_dim: usize, dtype: Dtype) -> usize {
    HEADER_LEN + z_dim * dtype.width() + CHECKSUM_LEN
}

fn encode_with_magic(magic: [u8; 4], z: &[f64], seq: u32, dtype: Dtype) -> Result<Vec<u8>, WireError> {
    if z.is_empty() {
        return Err(WireError::Empty);
    }
    if z.len() > MAX_Z_DIM {
        return Err(WireError::TooLarge(z.len()));
    }
    let mut out = Vec::with_capacity(frame_size(z.len(), dtype));
    out.extend_from_slice(&magic);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(z.len() as u16).to_le_bytes());
    out.push(dtype as u8);
    out.extend_from_slice(&seq.to_le_bytes());
    for (index, &v) in z.iter().enumerate() {
        match dtype {
            Dtype::F64 => {
                if !v.is_finite() {
                    return Err(WireError::NonFinitePayload { index });
                }
                out.extend_from_slice(&v.to_le_bytes());
            }
            Dtype::F32 => {
                // `as` rounds to nearest; values beyond f32 range become infinite.
                let q = v as f32;
                if !q.is_finite() {
                    return Err(WireError::NonFinitePayload { index });
                }
                out.extend_from_slice(&q.to_le_bytes());
            }
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

pub fn encode_frame(z: &[f64], seq: u32, dtype: Dtype) -> Result<Vec<u8>, WireError> {
    encode_with_magic(MAGIC, z, seq, dtype)
}

/// Error reply: one f64 holding the reason code.
pub fn encode_error_frame(seq: u32, code: ErrorCode) -> Vec<u8> {
    encode_with_magic(ERROR_MAGIC, &[code as u8 as f64], seq, Dtype::F64).expect("error payload is valid")
}

struct Header {
    kind: FrameKind,
    z_dim: usize,
    dtype: Dtype,
    seq: u32,
}

fn parse_header(bytes: &[u8]) -> Result<Header, WireError> {
    if bytes.len() < HEADER_LEN {
        return Err(WireError::Truncated {
            needed: HEADER_LEN,
            got: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().expect("4 bytes");
    let kind = match magic {
        MAGIC => FrameKind::Data,
        ERROR_MAGIC => FrameKind::Error,
        other => return Err(WireError::BadMagic(other)),
    };
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(WireError::BadVersion(version));
    }
    let z_dim = u16::from_le_bytes([bytes[6], bytes[7]]) as usize;
    let dtype = Dtype::from_tag(bytes[8])?;
    if z_dim == 0 {
        return Err(WireError::Empty);
    }
    let seq = u32::from_le_bytes(bytes[9..13].try_into().expect("4 bytes"));
    Ok(Header {
        kind,
        z_dim,
        dtype,
        seq,
    })
}

/// Parses and validates exactly one frame.
pub fn decode_frame(bytes: &[u8]) -> Result<Frame, WireError> {
    let h = parse_header(bytes)?;
    let total = frame_size(h.z_dim, h.dtype);
    if bytes.len() < total {
        return Err(WireError::Truncated {
            needed: total,
            got: bytes.len(),
        });
    }
    if bytes.len() > total {
        return Err(WireError::TrailingBytes(bytes.len() - total));
    }
    let body_end = total - CHECKSUM_LEN;
    let expected = u32::from_le_bytes(bytes[body_end..].try_into().expect("4 bytes"));
    let computed = crc32fast::hash(&bytes[..body_end]);
    if expected != computed {
        return Err(WireError::ChecksumMismatch { expected, computed });
    }
    let payload = &bytes[HEADER_LEN..body_end];
    let values: Vec<f64> = match h.dtype {
        Dtype::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect(),
        Dtype::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect(),
    };
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(WireError::NonFinitePayload { index });
    }
    Ok(Frame {
        kind: h.kind,
        seq: h.seq,
        dtype: h.dtype,
        values,
    })
}

/// Reads one frame's bytes from a stream, using the header to find its
/// length. `Ok(None)` on a clean end of stream before the first byte.
///
/// A header that fails validation is returned as an error after only the
/// 13 header bytes have been consumed.
pub fn read_frame(reader: &mut impl Read) -> Result<Option<Vec<u8>>, WireError> {
    let mut header = [0u8; HEADER_LEN];
    let mut filled = 0;
    while filled < HEADER_LEN {
        match reader.read(&mut header[filled..]) {
            Ok(0) if filled == 0 => return Ok(None),
            Ok(0) => {
                return Err(WireError::Truncated {
                    needed: HEADER_LEN,
                    got: filled,
                })
            }
            Ok(k) => filled += k,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let h = parse_header(&header)?;
    let total = frame_size(h.z_dim, h.dtype);
    let mut bytes = header.to_vec();
    bytes.resize(total, 0);
    let mut got = HEADER_LEN;
    while got < total {
        match reader.read(&mut bytes[got..]) {
            Ok(0) => return Err(WireError::Truncated { needed: total, got }),
            Ok(k) => got += k,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(Some(bytes))
}
