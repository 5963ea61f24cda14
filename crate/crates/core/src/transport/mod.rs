//! Moving [`FedMessage`]s between the state machines.
//!
//! Every message travels as a frame: a little-endian `u32` payload length, a
//! one-byte type tag and the payload. Three drivers share the codec: a
//! deterministic single-threaded loop, threads joined by channels, and TCP.

mod codec;
mod inproc;
mod tcp;

pub use codec::{decode_frame, decode_payload, encode_frame, read_frame, write_frame, MAX_FRAME_LEN};
pub use inproc::{run_sequential, run_threaded, Federation};
pub use tcp::{connect, serve, BIND_ENV, SERVER_ENV};

use thiserror::Error;

use crate::fedcore::{FedError, FedMessage};
use crate::wire::DecodeError;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("malformed frame: {0}")]
    Decode(#[from] DecodeError),
    #[error("frame of {0} bytes exceeds the limit")]
    FrameTooLarge(u64),
    #[error("connection closed {0}")]
    Closed(String),
    #[error("unexpected message {0} from the peer")]
    Unexpected(&'static str),
    #[error(transparent)]
    Fed(#[from] FedError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl TransportError {
    /// True when the underlying failure is numerical rather than a protocol
    /// or network fault.
    pub fn is_numerical(&self) -> bool {
        matches!(self, TransportError::Fed(FedError::Model(crate::model::ModelError::NonFinite { .. })))
    }
}

pub type Result<T, E = TransportError> = std::result::Result<T, E>;

pub(crate) fn kind_tag(msg: &FedMessage) -> u8 {
    match msg {
        FedMessage::Register { .. } => 0x01,
        FedMessage::VocabUpload { .. } => 0x02,
        FedMessage::GlobalInit { .. } => 0x03,
        FedMessage::GradientUpload { .. } => 0x04,
        FedMessage::GlobalUpdate { .. } => 0x05,
        FedMessage::Done { .. } => 0x06,
    }
}
