//! Frames: `u32` length of what follows, `u8` frame type, payload.

use std::io::{ErrorKind, Read, Write};

use crate::ckks::{Ciphertext, CkksParams, GaloisKeys};

use super::ProtocolError;

/// Largest accepted frame body, in bytes.
pub const MAX_FRAME: usize = 1 << 28;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum FrameType {
    SessionSetup = 0,
    Query = 1,
    Scores = 2,
    Error = 3,
}

impl FrameType {
    fn from_u8(t: u8) -> Result<Self, ProtocolError> {
        Ok(match t {
            0 => FrameType::SessionSetup,
            1 => FrameType::Query,
            2 => FrameType::Scores,
            3 => FrameType::Error,
            _ => return Err(ProtocolError::UnexpectedFrame(t)),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u16)]
pub enum ErrorCode {
    Malformed = 1,
    NoSession = 2,
    ParamsMismatch = 3,
    EncoderMismatch = 4,
    Evaluation = 5,
    UnexpectedFrame = 6,
    Internal = 7,
}

impl ErrorCode {
    fn from_u16(c: u16) -> Self {
        match c {
            1 => ErrorCode::Malformed,
            2 => ErrorCode::NoSession,
            3 => ErrorCode::ParamsMismatch,
            4 => ErrorCode::EncoderMismatch,
            5 => ErrorCode::Evaluation,
            6 => ErrorCode::UnexpectedFrame,
            _ => ErrorCode::Internal,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub kind: FrameType,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn error(code: ErrorCode, message: &str) -> Self {
        let mut payload = (code as u16).to_le_bytes().to_vec();
        payload.extend_from_slice(message.as_bytes());
        Frame { kind: FrameType::Error, payload }
    }

    pub fn parse_error(&self) -> (ErrorCode, String) {
        if self.payload.len() < 2 {
            return (ErrorCode::Internal, String::new());
        }
        let code = ErrorCode::from_u16(u16::from_le_bytes([self.payload[0], self.payload[1]]));
        (code, String::from_utf8_lossy(&self.payload[2..]).into_owned())
    }

    /// Size on the wire, including the length prefix.
    pub fn wire_len(&self) -> usize {
        4 + 1 + self.payload.len()
    }
}

pub fn write_frame<W: Write>(w: &mut W, frame: &Frame) -> Result<(), ProtocolError> {
    let len = 1 + frame.payload.len();
    if len > MAX_FRAME {
        return Err(ProtocolError::Malformed(format!("frame of {len} bytes exceeds the limit")));
    }
    w.write_all(&(len as u32).to_le_bytes())?;
    w.write_all(&[frame.kind as u8])?;
    w.write_all(&frame.payload)?;
    w.flush()?;
    Ok(())
}

/// Reads one frame; `Ok(None)` on a clean end of stream.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<Frame>, ProtocolError> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let len = u32::from_le_bytes(len) as usize;
    if len == 0 || len > MAX_FRAME {
        return Err(ProtocolError::Malformed(format!("bad frame length {len}")));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body)?;
    let kind = FrameType::from_u8(body[0])?;
    body.remove(0);
    Ok(Some(Frame { kind, payload: body }))
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ProtocolError> {
        if self.buf.len() - self.pos < n {
            return Err(ProtocolError::Malformed("truncated payload".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, ProtocolError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4")))
    }

    fn rest(&mut self) -> &'a [u8] {
        let s = &self.buf[self.pos..];
        self.pos = self.buf.len();
        s
    }
}

fn write_cts(out: &mut Vec<u8>, cts: &[Ciphertext], params: &CkksParams) {
    out.extend_from_slice(&(cts.len() as u32).to_le_bytes());
    for ct in cts {
        let b = ct.to_bytes(params);
        out.extend_from_slice(&(b.len() as u32).to_le_bytes());
        out.extend_from_slice(&b);
    }
}

fn read_cts(bytes: &[u8], params: &CkksParams) -> Result<Vec<Ciphertext>, ProtocolError> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    let count = c.u32()? as usize;
    let mut out = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let len = c.u32()? as usize;
        out.push(Ciphertext::from_bytes(c.take(len)?, params)?);
    }
    if c.pos != bytes.len() {
        return Err(ProtocolError::Malformed("trailing bytes".into()));
    }
    Ok(out)
}

/// Client to server, once per session: the evaluation keys and what the
/// client believes the session parameters are.
#[derive(Clone, Debug, PartialEq)]
pub struct SessionSetup {
    pub log2n: u32,
    pub chain_bits: Vec<u32>,
    pub query_scale_log2: u32,
    pub encoder_id: [u8; 32],
    pub hv_dim: usize,
    pub chunk_count: usize,
    pub gks: GaloisKeys,
}

impl SessionSetup {
    pub fn to_frame(&self) -> Frame {
        let mut p = Vec::new();
        p.push(self.log2n as u8);
        p.push(self.chain_bits.len() as u8);
        p.extend(self.chain_bits.iter().map(|&b| b as u8));
        p.extend_from_slice(&(self.query_scale_log2 as u16).to_le_bytes());
        p.extend_from_slice(&self.encoder_id);
        p.extend_from_slice(&(self.hv_dim as u32).to_le_bytes());
        p.extend_from_slice(&(self.chunk_count as u32).to_le_bytes());
        p.extend_from_slice(&self.gks.to_bytes());
        Frame { kind: FrameType::SessionSetup, payload: p }
    }

    /// Parses a setup against the server's parameters; a client on a
    /// different ring or chain is rejected before its keys are read.
    pub fn from_payload(bytes: &[u8], params: &CkksParams) -> Result<Self, ProtocolError> {
        let mut c = Cursor { buf: bytes, pos: 0 };
        let head = c.take(2)?;
        let (log2n, chain_len) = (head[0] as u32, head[1] as usize);
        let chain_bits: Vec<u32> = c.take(chain_len)?.iter().map(|&b| b as u32).collect();
        if log2n != params.log2n() || chain_bits != params.chain_bits() {
            return Err(ProtocolError::Rejected {
                code: super::ErrorCode::ParamsMismatch,
                message: format!(
                    "client uses N=2^{log2n} chain {chain_bits:?}, server expects N=2^{} chain {:?}",
                    params.log2n(),
                    params.chain_bits()
                ),
            });
        }
        let scale = c.take(2)?;
        let query_scale_log2 = u16::from_le_bytes([scale[0], scale[1]]) as u32;
        let encoder_id: [u8; 32] = c.take(32)?.try_into().expect("32");
        let hv_dim = c.u32()? as usize;
        let chunk_count = c.u32()? as usize;
        let gks = GaloisKeys::from_bytes(c.rest(), params)?;
        Ok(SessionSetup { log2n, chain_bits, query_scale_log2, encoder_id, hv_dim, chunk_count, gks })
    }
}

/// The `k` encrypted chunks of one query hypervector.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryMessage {
    pub chunks: Vec<Ciphertext>,
}

impl QueryMessage {
    pub fn to_frame(&self, params: &CkksParams) -> Frame {
        let mut p = Vec::new();
        write_cts(&mut p, &self.chunks, params);
        Frame { kind: FrameType::Query, payload: p }
    }

    pub fn from_payload(bytes: &[u8], params: &CkksParams) -> Result<Self, ProtocolError> {
        Ok(QueryMessage { chunks: read_cts(bytes, params)? })
    }
}

/// One encrypted score per class, in manifest order.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMessage {
    pub scores: Vec<Ciphertext>,
}

impl ScoreMessage {
    pub fn to_frame(&self, params: &CkksParams) -> Frame {
        let mut p = Vec::new();
        write_cts(&mut p, &self.scores, params);
        Frame { kind: FrameType::Scores, payload: p }
    }

    pub fn from_payload(bytes: &[u8], params: &CkksParams) -> Result<Self, ProtocolError> {
        Ok(ScoreMessage { scores: read_cts(bytes, params)? })
    }
}
