//! Client/server encrypted inference.
//!
//! The client encodes and encrypts its query hypervector, the server
//! multiplies it by its plaintext class hypervectors and sums the slots,
//! and the client decrypts the `L` scores and takes the argmax.

mod client;
mod layout;
mod server;
mod transport;
mod wire;

use serde::{Deserialize, Serialize};

use crate::ckks::{CkksError, CkksParams};
use crate::hdc::{Encoder, HdcError, Preprocess};

pub use client::{client_finalize, client_prepare_query, encrypt_hypervector, Client, ClientSession};
pub use layout::Layout;
pub use server::{
    class_scale_for, score_bound, serve, serve_connection, serve_listener, server_similarity, similarity, spawn_loopback,
    ClassValues, ServerModel,
};
pub use transport::{Endpoint, Listener, Stream};
pub use wire::{read_frame, write_frame, ErrorCode, Frame, FrameType, QueryMessage, ScoreMessage, SessionSetup, MAX_FRAME};

pub const MANIFEST_VERSION: u16 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Ckks(#[from] CkksError),
    #[error(transparent)]
    Hdc(#[from] HdcError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed frame: {0}")]
    Malformed(String),
    #[error("server rejected the request ({code:?}): {message}")]
    Remote { code: ErrorCode, message: String },
    #[error("unexpected frame type {0}")]
    UnexpectedFrame(u8),
    #[error("session rejected ({code:?}): {message}")]
    Rejected { code: ErrorCode, message: String },
    #[error("connection closed")]
    Closed,
}

impl ProtocolError {
    /// The error code reported to a peer for this failure.
    pub fn code(&self) -> ErrorCode {
        match self {
            ProtocolError::Ckks(CkksError::ParameterMismatch) => ErrorCode::ParamsMismatch,
            ProtocolError::Ckks(CkksError::Malformed(_)) | ProtocolError::Malformed(_) => ErrorCode::Malformed,
            ProtocolError::Ckks(_) => ErrorCode::Evaluation,
            ProtocolError::Rejected { code, .. } | ProtocolError::Remote { code, .. } => *code,
            ProtocolError::UnexpectedFrame(_) => ErrorCode::UnexpectedFrame,
            _ => ErrorCode::Internal,
        }
    }
}

/// What the server publishes about its model: everything a client needs to
/// build matching queries, and nothing about the class hypervectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u16,
    pub log2n: u32,
    pub chain_bits: Vec<u32>,
    /// Scale at which queries must be encoded.
    pub query_scale_log2: u32,
    pub class_scale_log2: u32,
    pub input_dim: usize,
    pub hv_dim: usize,
    pub encoder_seed: u64,
    pub preprocess: ManifestPreprocess,
    /// Hex SHA-256 of the encoder.
    pub encoder_id: String,
    /// Class order of the score message.
    pub classes: Vec<String>,
    /// Class bit width, 0 for a float model.
    pub class_bits: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ManifestPreprocess {
    Identity,
    UnitNorm { gain: f64 },
}

impl From<Preprocess> for ManifestPreprocess {
    fn from(p: Preprocess) -> Self {
        match p {
            Preprocess::Identity => ManifestPreprocess::Identity,
            Preprocess::UnitNorm { gain } => ManifestPreprocess::UnitNorm { gain },
        }
    }
}

impl From<ManifestPreprocess> for Preprocess {
    fn from(p: ManifestPreprocess) -> Self {
        match p {
            ManifestPreprocess::Identity => Preprocess::Identity,
            ManifestPreprocess::UnitNorm { gain } => Preprocess::UnitNorm { gain },
        }
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl Manifest {
    /// Ring and chain with the query scale as default scale.
    pub fn params(&self) -> Result<CkksParams, CkksError> {
        CkksParams::new(self.log2n, &self.chain_bits, self.query_scale_log2)
    }

    /// Rebuilds the published encoder and checks it against the advertised hash.
    pub fn encoder(&self) -> Result<Encoder, ProtocolError> {
        let enc = Encoder::with_preprocess(self.input_dim, self.hv_dim, self.encoder_seed, self.preprocess.into());
        if hex(&enc.id()) != self.encoder_id {
            return Err(ProtocolError::Rejected {
                code: ErrorCode::EncoderMismatch,
                message: "regenerated encoder does not match the published hash".into(),
            });
        }
        Ok(enc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, ProtocolError> {
        let m: Manifest = serde_json::from_str(s).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
        if m.version != MANIFEST_VERSION {
            return Err(ProtocolError::Malformed(format!("unsupported manifest version {}", m.version)));
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests;
