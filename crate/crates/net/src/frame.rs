//! Length-prefixed frame layout shared by client and server, bit-exact:
//! 4 magic bytes `PKR1`, 1 message-type byte, a big-endian u32 payload
//! length, then the payload. A frame is 9 bytes of header plus its payload.

use std::io::{self, Read, Write};
use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"PKR1";
pub const HEADER_LEN: usize = 9;

pub const MSG_MANIFEST_REQ: u8 = 0x01;
pub const MSG_MANIFEST_RESP: u8 = 0x02;
pub const MSG_PIR_REQ: u8 = 0x03;
pub const MSG_PIR_RESP: u8 = 0x04;
pub const MSG_KANON_REQ: u8 = 0x05;
pub const MSG_KANON_RESP: u8 = 0x06;
pub const MSG_ERROR: u8 = 0x7F;

// Error frame codes (first payload byte of an error frame).
pub const ERR_N_MISMATCH: u8 = 0x01;
pub const ERR_PAYLOAD_INCONSISTENT: u8 = 0x02;
pub const ERR_INDEX_OUT_OF_RANGE: u8 = 0x03;
pub const ERR_DUPLICATE_INDEX: u8 = 0x04;
pub const ERR_BAD_MAGIC: u8 = 0x05;
pub const ERR_UNKNOWN_MSG_TYPE: u8 = 0x06;

/// Upper bound on accepted payloads; anything larger is treated as a framing
/// error rather than an allocation request.
pub const MAX_PAYLOAD: usize = 1 << 26;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub msg_type: u8,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(msg_type: u8, payload: Vec<u8>) -> Self {
        Frame { msg_type, payload }
    }

    pub fn error(code: u8, message: &str) -> Self {
        let mut payload = vec![code];
        payload.extend_from_slice(message.as_bytes());
        Frame {
            msg_type: MSG_ERROR,
            payload,
        }
    }

    /// Total size on the wire.
    pub fn wire_len(&self) -> usize {
        HEADER_LEN + self.payload.len()
    }
}

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic bytes")]
    BadMagic,
    #[error("payload length {0} exceeds the frame size limit")]
    Oversized(u32),
}

impl FrameError {
    /// True when the stream hit end-of-file before a header started, i.e.
    /// the peer simply closed the connection.
    pub fn is_clean_eof(&self) -> bool {
        matches!(self, FrameError::Io(e) if e.kind() == io::ErrorKind::UnexpectedEof)
    }
}

/// Writes one frame, returning the number of bytes put on the wire.
pub fn write_frame<W: Write>(w: &mut W, frame: &Frame) -> io::Result<usize> {
    w.write_all(&MAGIC)?;
    w.write_all(&[frame.msg_type])?;
    w.write_all(&(frame.payload.len() as u32).to_be_bytes())?;
    w.write_all(&frame.payload)?;
    w.flush()?;
    Ok(frame.wire_len())
}

/// Reads one frame, returning it with the number of bytes consumed. A magic
/// mismatch leaves the stream desynchronized; callers should close it.
pub fn read_frame<R: Read>(r: &mut R) -> Result<(Frame, usize), FrameError> {
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header)?;
    if header[..4] != MAGIC {
        return Err(FrameError::BadMagic);
    }
    let msg_type = header[4];
    let payload_len = u32::from_be_bytes(header[5..9].try_into().unwrap());
    if payload_len as usize > MAX_PAYLOAD {
        return Err(FrameError::Oversized(payload_len));
    }
    let mut payload = vec![0u8; payload_len as usize];
    r.read_exact(&mut payload)?;
    let total = HEADER_LEN + payload.len();
    Ok((Frame { msg_type, payload }, total))
}
