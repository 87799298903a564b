//! Byte-exact frames for bottleneck codes and a loopback decoder service.

mod client;
mod error;
mod frame;
mod server;

pub use client::{send_dataset, BandwidthReport, DecoderClient};
pub use error::{ErrorCode, WireError};
pub use frame::{
    decode_frame, encode_error_frame, encode_frame, frame_size, read_frame, Dtype, Frame, FrameKind, CHECKSUM_LEN,
    ERROR_MAGIC, HEADER_LEN, MAGIC, MAX_Z_DIM, VERSION,
};
pub use server::{serve_decoder, serve_decoder_limited, ServerHandle};
