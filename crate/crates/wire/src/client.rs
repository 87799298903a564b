use std::io::Write;
use std::net::{TcpStream, ToSocketAddrs};

use codesign_core::codesign::RobotSide;
use codesign_core::DenseMatrix;

use crate::error::WireError;
use crate::frame::{decode_frame, encode_frame, frame_size, read_frame, Dtype, FrameKind};

/// Bytes on the wire per sample versus shipping the raw input as f32.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandwidthReport {
    pub raw_bytes_per_sample: usize,
    pub compressed_bytes_per_sample: usize,
    pub ratio: f64,
    pub samples_sent: usize,
}

impl BandwidthReport {
    pub fn new(input_dim: usize, z_dim: usize, dtype: Dtype, samples_sent: usize) -> Self {
        let raw = input_dim * 4;
        let compressed = frame_size(z_dim, dtype);
        Self {
            raw_bytes_per_sample: raw,
            compressed_bytes_per_sample: compressed,
            ratio: raw as f64 / compressed as f64,
            samples_sent,
        }
    }

    pub fn total_compressed_bytes(&self) -> usize {
        self.compressed_bytes_per_sample * self.samples_sent
    }
}

/// One connection to a decoder service. Requests are sequential.
pub struct DecoderClient {
    stream: TcpStream,
    dtype: Dtype,
    z_dim: usize,
    next_seq: u32,
    sent: usize,
}

impl DecoderClient {
    pub fn connect(endpoint: impl ToSocketAddrs, z_dim: usize, dtype: Dtype) -> Result<Self, WireError> {
        let stream = TcpStream::connect(endpoint)?;
        stream.set_nodelay(true)?;
        Ok(Self {
            stream,
            dtype,
            z_dim,
            next_seq: 0,
            sent: 0,
        })
    }

    pub fn samples_sent(&self) -> usize {
        self.sent
    }

    /// Sends already-encoded frame bytes and returns the raw reply.
    pub fn exchange_raw(&mut self, frame: &[u8]) -> Result<Vec<u8>, WireError> {
        self.stream.write_all(frame)?;
        self.stream.flush()?;
        read_frame(&mut self.stream)?.ok_or(WireError::Truncated { needed: 1, got: 0 })
    }

    /// Sends one code and returns the server's prediction.
    pub fn request(&mut self, z: &[f64]) -> Result<Vec<f64>, WireError> {
        if z.len() != self.z_dim {
            return Err(WireError::ZDimMismatch {
                expected: self.z_dim,
                found: z.len(),
            });
        }
        let seq = self.next_seq;
        let frame = encode_frame(z, seq, self.dtype)?;
        let reply = decode_frame(&self.exchange_raw(&frame)?)?;
        self.next_seq = self.next_seq.wrapping_add(1);
        if reply.kind == FrameKind::Error {
            return Err(WireError::Remote {
                code: reply.error_code().unwrap_or(crate::error::ErrorCode::Internal),
                seq: reply.seq,
            });
        }
        if reply.seq != seq {
            return Err(WireError::SequenceMismatch {
                expected: seq,
                found: reply.seq,
            });
        }
        self.sent += 1;
        Ok(reply.values)
    }
}

/// Encodes every row of `inputs` on the robot side, ships the codes one
/// frame at a time and collects the server's predictions.
pub fn send_dataset(
    robot: &RobotSide,
    endpoint: impl ToSocketAddrs,
    inputs: &DenseMatrix,
    dtype: Dtype,
) -> Result<(DenseMatrix, BandwidthReport), WireError> {
    let codes = robot.encode(inputs)?;
    let mut client = DecoderClient::connect(endpoint, robot.z_dim, dtype)?;
    let mut rows = Vec::with_capacity(codes.rows());
    for r in 0..codes.rows() {
        rows.push(client.request(codes.row(r))?);
    }
    let predictions = if rows.is_empty() {
        DenseMatrix::zeros(0, 0)
    } else {
        DenseMatrix::from_rows(&rows)?
    };
    let report = BandwidthReport::new(robot.input_dim(), robot.z_dim, dtype, client.samples_sent());
    Ok((predictions, report))
}
