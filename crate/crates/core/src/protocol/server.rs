//! Server side. This file only ever handles public material: plaintext
//! class hypervectors, ciphertexts and evaluation keys.

use std::io::{Read, Write};
use std::os::unix::net::UnixStream;
use std::sync::Arc;
use std::thread::JoinHandle;

use crate::ckks::{max_admissible_scale, Ciphertext, CkksError, CkksParams, Evaluator, GaloisKeys, Plaintext};
use crate::hdc::{HdcError, ModelFile, StoredModel};

use super::transport::{Endpoint, Listener};
use super::wire::{read_frame, write_frame, ErrorCode, Frame, FrameType, QueryMessage, ScoreMessage, SessionSetup};
use super::{hex, Layout, Manifest, ProtocolError, MANIFEST_VERSION};

/// Class hypervectors in the units the server encodes them in.
#[derive(Clone, Debug, PartialEq)]
pub enum ClassValues {
    /// Normalized reals.
    Float(Vec<Vec<f64>>),
    /// Signed integers of the given width, carried as reals.
    Quantized { classes: Vec<Vec<f64>>, bits: u32 },
}

impl ClassValues {
    pub fn from_stored(model: &StoredModel) -> Result<Self, HdcError> {
        Ok(match model {
            StoredModel::Float(m) => {
                if !m.normalized {
                    return Err(HdcError::NotNormalized);
                }
                ClassValues::Float(m.classes.clone())
            }
            StoredModel::Quantized(q) => ClassValues::Quantized { classes: q.classes_f64(), bits: q.bits },
        })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        match self {
            ClassValues::Float(c) | ClassValues::Quantized { classes: c, .. } => c,
        }
    }

    pub fn bits(&self) -> u32 {
        match self {
            ClassValues::Float(_) => 0,
            ClassValues::Quantized { bits, .. } => *bits,
        }
    }
}

/// Chooses the query scale and the class scale for a one-multiplication,
/// no-rescale pipeline at the top level.
///
/// With query slots bounded by 1, a score is bounded by
/// `B = max_l Σ_chunks min(Σ|c|, slots·max|c|)`. The class scale is the
/// largest `Δ_c ≤ Δ` with `log2 B + Δ + Δ_c` within capacity; if not even
/// `Δ_c = 0` fits, the query scale is lowered instead.
pub fn class_scale_for(
    params: &CkksParams,
    layout: &Layout,
    classes: &[Vec<f64>],
    query_scale_log2: u32,
) -> Result<(u32, u32), CkksError> {
    let bound = score_bound(layout, classes);
    let level = params.max_level();
    let room = max_admissible_scale(params, level, bound).ok_or(CkksError::OverflowRisk {
        needed_bits: bound.log2(),
        capacity_bits: params.capacity_bits(level),
    })?;
    if room >= query_scale_log2 {
        Ok((query_scale_log2, (room - query_scale_log2).min(query_scale_log2)))
    } else if room >= 1 {
        Ok((room, 0))
    } else {
        Err(CkksError::OverflowRisk { needed_bits: bound.log2() + 1.0, capacity_bits: params.capacity_bits(level) })
    }
}

/// Bound on any score slot for queries with entries in `[-1, 1]`.
pub fn score_bound(layout: &Layout, classes: &[Vec<f64>]) -> f64 {
    let slots = layout.slots as f64;
    classes
        .iter()
        .map(|c| {
            layout
                .pack_all(c)
                .iter()
                .map(|p| {
                    let sum: f64 = p.iter().map(|x| x.abs()).sum();
                    let max = p.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                    sum.min(slots * max)
                })
                .sum::<f64>()
        })
        .fold(0.0f64, f64::max)
}

/// The server's model: class hypervector chunks encoded once, in NTT form.
pub struct ServerModel {
    params: CkksParams,
    layout: Layout,
    class_pts: Vec<Vec<Plaintext>>,
    manifest: Manifest,
    encoder_id: [u8; 32],
}

impl ServerModel {
    /// `params` supplies the ring, chain and the preferred query scale.
    pub fn new(file: &ModelFile, params: &CkksParams) -> Result<Self, ProtocolError> {
        let values = ClassValues::from_stored(&file.model)?;
        let encoder = file.encoder();
        let labels = (0..values.rows().len()).map(|l| l.to_string()).collect();
        Self::from_classes(&values, file.input_dim, file.seed, file.preprocess, encoder.id(), labels, params)
    }

    pub fn from_classes(
        values: &ClassValues,
        input_dim: usize,
        encoder_seed: u64,
        preprocess: crate::hdc::Preprocess,
        encoder_id: [u8; 32],
        labels: Vec<String>,
        params: &CkksParams,
    ) -> Result<Self, ProtocolError> {
        let rows = values.rows();
        if rows.is_empty() {
            return Err(HdcError::EmptyModel.into());
        }
        let hv_dim = rows[0].len();
        let layout = Layout::new(hv_dim, params);
        let (query_scale, class_scale) = class_scale_for(params, &layout, rows, params.scale_log2())?;
        if query_scale != params.scale_log2() {
            log::warn!(
                "scores would overflow at query scale 2^{}; publishing 2^{query_scale} instead",
                params.scale_log2()
            );
        }
        let params = params.with_scale(query_scale)?;
        let level = params.max_level();
        let class_pts = rows
            .iter()
            .map(|c| {
                layout
                    .pack_all(c)
                    .iter()
                    .map(|p| params.encode_at(p, class_scale, level).map(Plaintext::into_ntt))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        log::info!(
            "server model: L={} D={} k={} n={} query 2^{} class 2^{} on {}",
            rows.len(),
            hv_dim,
            layout.chunks,
            layout.chunk_len,
            query_scale,
            class_scale,
            params.label()
        );
        let manifest = Manifest {
            version: MANIFEST_VERSION,
            log2n: params.log2n(),
            chain_bits: params.chain_bits().to_vec(),
            query_scale_log2: query_scale,
            class_scale_log2: class_scale,
            input_dim,
            hv_dim,
            encoder_seed,
            preprocess: preprocess.into(),
            encoder_id: hex(&encoder_id),
            classes: labels,
            class_bits: values.bits(),
        };
        Ok(ServerModel { params, layout, class_pts, manifest, encoder_id })
    }

    pub fn params(&self) -> &CkksParams {
        &self.params
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn num_classes(&self) -> usize {
        self.class_pts.len()
    }

    pub fn class_plaintexts(&self) -> &[Vec<Plaintext>] {
        &self.class_pts
    }

    /// Rotation steps a client must provide keys for.
    pub fn required_steps(&self) -> Vec<usize> {
        (0..).map(|i| 1usize << i).take_while(|&s| s < self.layout.chunk_len).collect()
    }

    fn accept_setup(&self, payload: &[u8]) -> Result<GaloisKeys, ProtocolError> {
        let setup = SessionSetup::from_payload(payload, &self.params)?;
        let reject = |code, message: String| Err(ProtocolError::Rejected { code, message });
        if setup.query_scale_log2 != self.manifest.query_scale_log2 {
            return reject(
                ErrorCode::ParamsMismatch,
                format!("query scale 2^{} but the model expects 2^{}", setup.query_scale_log2, self.manifest.query_scale_log2),
            );
        }
        if setup.encoder_id != self.encoder_id {
            return reject(ErrorCode::EncoderMismatch, "encoder hash differs from the published one".into());
        }
        if setup.hv_dim != self.layout.hv_dim || setup.chunk_count != self.layout.chunks {
            return reject(
                ErrorCode::ParamsMismatch,
                format!("D={} k={} but the model has D={} k={}", setup.hv_dim, setup.chunk_count, self.layout.hv_dim, self.layout.chunks),
            );
        }
        if let Some(s) = self.required_steps().into_iter().find(|&s| setup.gks.get(s).is_none()) {
            return reject(ErrorCode::Malformed, format!("no rotation key for step {s}"));
        }
        Ok(setup.gks)
    }
}

/// Per class: multiply every query chunk by the class chunk, add the
/// products, then sum the slots. Exactly one ct×pt multiplication lies on
/// every path and nothing is rescaled.
pub fn similarity(
    ev: &Evaluator,
    chunks: &[Ciphertext],
    class_pts: &[Vec<Plaintext>],
    chunk_len: usize,
    gks: &GaloisKeys,
) -> Result<Vec<Ciphertext>, CkksError> {
    class_pts
        .iter()
        .map(|pts| {
            let mut acc: Option<Ciphertext> = None;
            for (ct, pt) in chunks.iter().zip(pts) {
                let t = ev.mul_plain(ct, pt)?;
                acc = Some(match acc {
                    None => t,
                    Some(a) => ev.add(&a, &t)?,
                });
            }
            ev.reduce_sum(&acc.expect("at least one chunk"), chunk_len, gks)
        })
        .collect()
}

pub fn server_similarity(
    q: &QueryMessage,
    model: &ServerModel,
    gks: &GaloisKeys,
    ev: &Evaluator,
) -> Result<ScoreMessage, ProtocolError> {
    if q.chunks.len() != model.layout.chunks {
        return Err(ProtocolError::Malformed(format!(
            "query has {} chunks, expected {}",
            q.chunks.len(),
            model.layout.chunks
        )));
    }
    let want = model.manifest.query_scale_log2;
    if let Some(ct) = q.chunks.iter().find(|c| c.scale_log2() != want) {
        return Err(CkksError::ScaleMismatch(want, ct.scale_log2()).into());
    }
    let scores = similarity(ev, &q.chunks, &model.class_pts, model.layout.chunk_len, gks)?;
    Ok(ScoreMessage { scores })
}

fn fail<S: Read + Write>(stream: &mut S, err: ProtocolError) -> Result<(), ProtocolError> {
    log::warn!("closing connection: {err}");
    if write_frame(stream, &Frame::error(err.code(), &err.to_string())).is_ok() {
        // Read what the peer already sent so that closing does not reset the
        // connection before it has seen the error frame.
        for _ in 0..4 {
            if !matches!(read_frame(stream), Ok(Some(_))) {
                break;
            }
        }
    }
    Err(err)
}

/// Runs one connection: a `SessionSetup`, then any number of queries, each
/// answered with a `Scores` frame. Violations are answered with an error
/// frame and end the connection.
pub fn serve_connection<S: Read + Write>(mut stream: S, model: &ServerModel) -> Result<(), ProtocolError> {
    let ev = Evaluator::new(&model.params);
    let mut gks: Option<GaloisKeys> = None;
    loop {
        let frame = match read_frame(&mut stream) {
            Ok(Some(f)) => f,
            Ok(None) => return Ok(()),
            Err(e) => return fail(&mut stream, e),
        };
        match frame.kind {
            FrameType::SessionSetup => match model.accept_setup(&frame.payload) {
                Ok(k) => gks = Some(k),
                Err(e) => return fail(&mut stream, e),
            },
            FrameType::Query => {
                let Some(keys) = gks.as_ref() else {
                    let e = ProtocolError::Rejected { code: ErrorCode::NoSession, message: "query before session setup".into() };
                    return fail(&mut stream, e);
                };
                let reply = QueryMessage::from_payload(&frame.payload, &model.params)
                    .and_then(|q| server_similarity(&q, model, keys, &ev));
                match reply {
                    Ok(scores) => write_frame(&mut stream, &scores.to_frame(&model.params))?,
                    Err(e) => return fail(&mut stream, e),
                }
            }
            other => return fail(&mut stream, ProtocolError::UnexpectedFrame(other as u8)),
        }
    }
}

/// Accepts connections forever (or until `max_connections` have been
/// served), one thread per connection, all sharing the model.
pub fn serve_listener(listener: Listener, model: Arc<ServerModel>, max_connections: Option<usize>) -> Result<(), ProtocolError> {
    let mut handles = Vec::new();
    let mut served = 0usize;
    while max_connections.is_none_or(|m| served < m) {
        let stream = listener.accept()?;
        served += 1;
        let model = Arc::clone(&model);
        handles.push(std::thread::spawn(move || {
            if let Err(e) = serve_connection(stream, &model) {
                log::warn!("connection ended with error: {e}");
            }
        }));
    }
    for h in handles {
        let _ = h.join();
    }
    Ok(())
}

pub fn serve(endpoint: &Endpoint, model: Arc<ServerModel>) -> Result<(), ProtocolError> {
    let listener = Listener::bind(endpoint)?;
    log::info!("serving on {}", listener.endpoint()?);
    serve_listener(listener, model, None)
}

/// In-process transport: a socket pair with the server end running on its own thread.
pub fn spawn_loopback(model: Arc<ServerModel>) -> std::io::Result<(UnixStream, JoinHandle<Result<(), ProtocolError>>)> {
    let (client, server) = UnixStream::pair()?;
    let handle = std::thread::spawn(move || serve_connection(server, &model));
    Ok((client, handle))
}
