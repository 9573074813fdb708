// SPDX-License-Identifier: Apache-2.0

//! Framing: a 4-byte big-endian length followed by the canonical MMM-JSON
//! bytes of one message.

use std::io::{self, Read, Write};

use thiserror::Error;

use super::ProtocolMessage;
use crate::codec::DecodeError;

pub const MAX_FRAME_LEN: u32 = 64 * 1024 * 1024;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("frame of {0} bytes exceeds the limit")]
    TooLarge(u32),
    #[error("truncated frame")]
    Truncated,
    #[error("bad payload: {0}")]
    Payload(#[from] DecodeError),
}

pub fn encode_frame(msg: &ProtocolMessage) -> Vec<u8> {
    let payload = msg.encode();
    let mut out = Vec::with_capacity(payload.len() + 4);
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.extend_from_slice(&payload);
    out
}

/// Decodes all frames in `bytes`.
pub fn decode_frame(bytes: &[u8]) -> Result<Vec<ProtocolMessage>, FrameError> {
    let mut reader = bytes;
    let mut out = Vec::new();
    while let Some(msg) = read_frame(&mut reader)? {
        out.push(msg);
    }
    Ok(out)
}

pub fn write_frame<W: Write>(w: &mut W, msg: &ProtocolMessage) -> Result<(), FrameError> {
    w.write_all(&encode_frame(msg))?;
    Ok(())
}

/// Reads one frame; `None` on a clean end of stream.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<ProtocolMessage>, FrameError> {
    let mut len = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut len[got..])? {
            0 if got == 0 => return Ok(None),
            0 => return Err(FrameError::Truncated),
            n => got += n,
        }
    }
    let len = u32::from_be_bytes(len);
    if len > MAX_FRAME_LEN {
        return Err(FrameError::TooLarge(len));
    }
    let mut payload = vec![0u8; len as usize];
    r.read_exact(&mut payload).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => FrameError::Truncated,
        _ => FrameError::Io(e),
    })?;
    Ok(Some(ProtocolMessage::decode(&payload)?))
}
