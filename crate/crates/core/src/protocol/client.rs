use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::ckks::{CkksError, CkksParams, GaloisKeys, SecretKey};
use crate::hdc::{argmax, Encoder, HdcError};

use super::wire::{read_frame, write_frame, FrameType, QueryMessage, ScoreMessage, SessionSetup};
use super::{ErrorCode, Layout, Manifest, ProtocolError};

/// Encrypts an already-encoded hypervector chunk by chunk at the default
/// scale of `params`.
pub fn encrypt_hypervector<R: Rng + ?Sized>(
    h: &[f64],
    params: &CkksParams,
    sk: &SecretKey,
    rng: &mut R,
) -> Result<QueryMessage, ProtocolError> {
    if sk.params() != params {
        return Err(CkksError::ParameterMismatch.into());
    }
    let layout = Layout::new(h.len(), params);
    let chunks = layout
        .pack_all(h)
        .iter()
        .map(|p| sk.encrypt(&params.encode(p)?, rng))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(QueryMessage { chunks })
}

/// Encodes `x` into a hypervector, splits it into `k = ceil(2D/N)` chunks
/// and encrypts each at the default scale of `params`.
pub fn client_prepare_query<R: Rng + ?Sized>(
    x: &[f32],
    enc: &Encoder,
    params: &CkksParams,
    sk: &SecretKey,
    rng: &mut R,
) -> Result<QueryMessage, ProtocolError> {
    let h = enc.encode(x)?;
    encrypt_hypervector(&h, params, sk, rng)
}

/// Decrypts slot 0 of every score and picks the largest; ties go to the
/// lowest class index. The scores are not divided by `||H||`.
pub fn client_finalize(s: &ScoreMessage, sk: &SecretKey) -> Result<(usize, Vec<f64>), ProtocolError> {
    let scores = s
        .scores
        .iter()
        .map(|ct| sk.decrypt_values(ct).map(|v| v[0]))
        .collect::<Result<Vec<_>, _>>()?;
    let label = argmax(&scores).ok_or(HdcError::EmptyModel)?;
    Ok((label, scores))
}

/// Client-side state for one server: keys, the published encoder and the
/// agreed parameters.
pub struct ClientSession {
    params: CkksParams,
    sk: SecretKey,
    gks: GaloisKeys,
    encoder: Encoder,
    manifest: Manifest,
}

impl ClientSession {
    pub fn new(manifest: &Manifest, sk: SecretKey, gks: GaloisKeys) -> Result<Self, ProtocolError> {
        let params = manifest.params()?;
        if sk.params() != &params || gks.params() != &params {
            return Err(ProtocolError::Rejected {
                code: ErrorCode::ParamsMismatch,
                message: format!("keys were generated for {}, the server uses {}", sk.params().label(), params.label()),
            });
        }
        let encoder = manifest.encoder()?;
        Ok(ClientSession { params, sk, gks, encoder, manifest: manifest.clone() })
    }

    pub fn params(&self) -> &CkksParams {
        &self.params
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self.manifest.hv_dim, &self.params)
    }

    pub fn setup(&self) -> SessionSetup {
        SessionSetup {
            log2n: self.params.log2n(),
            chain_bits: self.params.chain_bits().to_vec(),
            query_scale_log2: self.params.scale_log2(),
            encoder_id: self.encoder.id(),
            hv_dim: self.manifest.hv_dim,
            chunk_count: self.layout().chunks,
            gks: self.gks.clone(),
        }
    }

    pub fn prepare<R: Rng + ?Sized>(&self, x: &[f32], rng: &mut R) -> Result<QueryMessage, ProtocolError> {
        client_prepare_query(x, &self.encoder, &self.params, &self.sk, rng)
    }

    pub fn finalize(&self, s: &ScoreMessage) -> Result<(usize, Vec<f64>), ProtocolError> {
        if s.scores.len() != self.manifest.classes.len() {
            return Err(ProtocolError::Malformed(format!(
                "{} scores for {} classes",
                s.scores.len(),
                self.manifest.classes.len()
            )));
        }
        client_finalize(s, &self.sk)
    }
}

/// A connected client. The session is set up on connect.
pub struct Client<S: Read + Write> {
    stream: S,
    session: ClientSession,
    rng: ChaCha20Rng,
    last_query_bytes: usize,
    last_response_bytes: usize,
}

impl<S: Read + Write> Client<S> {
    pub fn connect(mut stream: S, session: ClientSession, rng_seed: u64) -> Result<Self, ProtocolError> {
        write_frame(&mut stream, &session.setup().to_frame())?;
        Ok(Client { stream, session, rng: ChaCha20Rng::seed_from_u64(rng_seed), last_query_bytes: 0, last_response_bytes: 0 })
    }

    pub fn session(&self) -> &ClientSession {
        &self.session
    }

    pub fn query(&mut self, q: &QueryMessage) -> Result<ScoreMessage, ProtocolError> {
        let frame = q.to_frame(&self.session.params);
        self.last_query_bytes = frame.wire_len();
        if let Err(e) = write_frame(&mut self.stream, &frame) {
            // the server may have rejected the session and closed
            if let Ok(Some(f)) = read_frame(&mut self.stream) {
                if f.kind == FrameType::Error {
                    let (code, message) = f.parse_error();
                    return Err(ProtocolError::Remote { code, message });
                }
            }
            return Err(e);
        }
        let reply = read_frame(&mut self.stream)?.ok_or(ProtocolError::Closed)?;
        self.last_response_bytes = reply.wire_len();
        match reply.kind {
            FrameType::Scores => ScoreMessage::from_payload(&reply.payload, &self.session.params),
            FrameType::Error => {
                let (code, message) = reply.parse_error();
                Err(ProtocolError::Remote { code, message })
            }
            other => Err(ProtocolError::UnexpectedFrame(other as u8)),
        }
    }

    pub fn classify(&mut self, x: &[f32]) -> Result<(usize, Vec<f64>), ProtocolError> {
        let q = self.session.prepare(x, &mut self.rng)?;
        let s = self.query(&q)?;
        self.session.finalize(&s)
    }

    /// Wire sizes of the last query and response frames.
    pub fn last_message_sizes(&self) -> (usize, usize) {
        (self.last_query_bytes, self.last_response_bytes)
    }
}
