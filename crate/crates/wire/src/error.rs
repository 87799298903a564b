use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WireError {
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported frame version {0}")]
    BadVersion(u16),
    #[error("unknown dtype tag {0}")]
    BadDtype(u8),
    #[error("checksum mismatch: frame says {expected:08x}, computed {computed:08x}")]
    ChecksumMismatch { expected: u32, computed: u32 },
    #[error("truncated frame: need {needed} bytes, have {got}")]
    Truncated { needed: usize, got: usize },
    #[error("{0} bytes after the end of the frame")]
    TrailingBytes(usize),
    #[error("code of length {0} does not fit a frame")]
    TooLarge(usize),
    #[error("empty code")]
    Empty,
    #[error("non-finite value at payload index {index}")]
    NonFinitePayload { index: usize },
    #[error("frame carries z_dim {found}, session expects {expected}")]
    ZDimMismatch { expected: usize, found: usize },
    #[error("response sequence {found} does not answer request {expected}")]
    SequenceMismatch { expected: u32, found: u32 },
    #[error("server rejected frame {seq}: {code:?}")]
    Remote { code: ErrorCode, seq: u32 },
    #[error("model error: {0}")]
    Model(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for WireError {
    fn from(e: std::io::Error) -> Self {
        WireError::Io(e.to_string())
    }
}

impl From<codesign_core::Error> for WireError {
    fn from(e: codesign_core::Error) -> Self {
        WireError::Model(e.to_string())
    }
}

/// Reason carried in an error frame's payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCode {
    BadMagic = 1,
    BadVersion = 2,
    BadDtype = 3,
    ChecksumMismatch = 4,
    Truncated = 5,
    TrailingBytes = 6,
    TooLarge = 7,
    Empty = 8,
    NonFinitePayload = 9,
    ZDimMismatch = 10,
    Internal = 11,
}

impl ErrorCode {
    pub const ALL: [ErrorCode; 11] = [
        ErrorCode::BadMagic,
        ErrorCode::BadVersion,
        ErrorCode::BadDtype,
        ErrorCode::ChecksumMismatch,
        ErrorCode::Truncated,
        ErrorCode::TrailingBytes,
        ErrorCode::TooLarge,
        ErrorCode::Empty,
        ErrorCode::NonFinitePayload,
        ErrorCode::ZDimMismatch,
        ErrorCode::Internal,
    ];

    pub fn from_value(v: f64) -> Option<Self> {
        Self::ALL.into_iter().find(|c| *c as u8 as f64 == v)
    }

    pub fn for_error(e: &WireError) -> Self {
        match e {
            WireError::BadMagic(_) => ErrorCode::BadMagic,
            WireError::BadVersion(_) => ErrorCode::BadVersion,
            WireError::BadDtype(_) => ErrorCode::BadDtype,
            WireError::ChecksumMismatch { .. } => ErrorCode::ChecksumMismatch,
            WireError::Truncated { .. } => ErrorCode::Truncated,
            WireError::TrailingBytes(_) => ErrorCode::TrailingBytes,
            WireError::TooLarge(_) => ErrorCode::TooLarge,
            WireError::Empty => ErrorCode::Empty,
            WireError::NonFinitePayload { .. } => ErrorCode::NonFinitePayload,
            WireError::ZDimMismatch { .. } => ErrorCode::ZDimMismatch,
            _ => ErrorCode::Internal,
        }
    }
}
