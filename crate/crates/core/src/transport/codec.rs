use std::io::{ErrorKind, Read, Write};

use super::{kind_tag, Result, TransportError};
use crate::fedcore::FedMessage;
use crate::model::{read_config, write_config};
use crate::wire::{ByteReader, ByteWriter, DecodeError};

/// Largest payload accepted from a peer.
pub const MAX_FRAME_LEN: u64 = 1 << 30;

fn encode_payload(msg: &FedMessage, w: &mut ByteWriter) {
    match msg {
        FedMessage::Register { client_id } => w.u32(*client_id),
        FedMessage::VocabUpload { client_id, vocab } => {
            w.u32(*client_id);
            w.vocabulary(vocab);
        }
        FedMessage::GlobalInit { vocab, config, weights } => {
            w.vocabulary(vocab);
            write_config(w, config);
            w.f64_array(weights);
        }
        FedMessage::GradientUpload {
            client_id,
            round,
            n_samples,
            gradient,
        } => {
            w.u32(*client_id);
            w.u32(*round);
            w.u32(*n_samples);
            w.f64_array(gradient);
        }
        FedMessage::GlobalUpdate { round, proceed, weights } => {
            w.u32(*round);
            w.u8(*proceed as u8);
            w.f64_array(weights);
        }
        FedMessage::Done { round } => w.u32(*round),
    }
}

pub fn encode_frame(msg: &FedMessage) -> Vec<u8> {
    let mut payload = ByteWriter::new();
    encode_payload(msg, &mut payload);
    let payload = payload.into_inner();
    let mut frame = Vec::with_capacity(payload.len() + 5);
    frame.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    frame.push(kind_tag(msg));
    frame.extend_from_slice(&payload);
    frame
}

/// Decodes a message of type `tag`; the whole payload must be consumed.
pub fn decode_payload(tag: u8, payload: &[u8]) -> Result<FedMessage, DecodeError> {
    let mut r = ByteReader::new(payload);
    let msg = match tag {
        0x01 => FedMessage::Register { client_id: r.u32()? },
        0x02 => FedMessage::VocabUpload {
            client_id: r.u32()?,
            vocab: r.vocabulary()?,
        },
        0x03 => FedMessage::GlobalInit {
            vocab: r.vocabulary()?,
            config: read_config(&mut r)?,
            weights: r.f64_array()?,
        },
        0x04 => FedMessage::GradientUpload {
            client_id: r.u32()?,
            round: r.u32()?,
            n_samples: r.u32()?,
            gradient: r.f64_array()?,
        },
        0x05 => FedMessage::GlobalUpdate {
            round: r.u32()?,
            proceed: r.bool()?,
            weights: r.f64_array()?,
        },
        0x06 => FedMessage::Done { round: r.u32()? },
        other => return Err(DecodeError::UnknownType(other)),
    };
    r.finish()?;
    Ok(msg)
}

/// Decodes one complete frame held in `buf`.
pub fn decode_frame(buf: &[u8]) -> Result<FedMessage, DecodeError> {
    let mut r = ByteReader::new(buf);
    let declared = r.u32()? as usize;
    let tag = r.u8()?;
    let actual = r.remaining();
    if declared != actual {
        return Err(DecodeError::LengthMismatch { declared, actual });
    }
    decode_payload(tag, r.take(actual)?)
}

pub fn write_frame(w: &mut impl Write, msg: &FedMessage) -> Result<()> {
    w.write_all(&encode_frame(msg))?;
    w.flush()?;
    Ok(())
}

/// Reads one frame; `Ok(None)` on a clean end of stream before the header.
pub fn read_frame(r: &mut impl Read) -> Result<Option<FedMessage>> {
    let mut header = [0u8; 5];
    let mut filled = 0;
    while filled < header.len() {
        match r.read(&mut header[filled..]) {
            Ok(0) if filled == 0 => return Ok(None),
            Ok(0) => return Err(TransportError::Closed("inside a frame header".into())),
            Ok(n) => filled += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = u32::from_le_bytes(header[..4].try_into().expect("4 bytes")) as u64;
    if len > MAX_FRAME_LEN {
        return Err(TransportError::FrameTooLarge(len));
    }
    let mut payload = vec![0u8; len as usize];
    r.read_exact(&mut payload).map_err(|e| match e.kind() {
        ErrorKind::UnexpectedEof => TransportError::Closed("inside a frame payload".into()),
        _ => e.into(),
    })?;
    Ok(Some(decode_payload(header[4], &payload)?))
}
