//! Variable-name encoders: embedding averaging and a bidirectional LSTM,
//! both with exact analytic gradients for every parameter.

mod checkpoint;
mod embedding;
mod linalg;
mod lstm;

pub use checkpoint::{Checkpoint, CheckpointMeta};
pub use embedding::{export_embeddings, import_embeddings, EmbeddingTable};
pub use lstm::LstmParams;

use rand::Rng;
use thiserror::Error;

use crate::tokenizer::TokenSeq;
use linalg::{matvec, matvec_transpose_acc, norm, outer_acc};
use lstm::{backprop_direction, run_direction, DirectionGrads, StepState};

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("token id {id} out of range for vocabulary of size {vocab}")]
    IdOutOfRange { id: u32, vocab: usize },
    #[error("cannot encode an empty token sequence")]
    EmptySequence,
    #[error("cannot normalize a zero vector")]
    ZeroVector,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("embedding file line {line}: {message}")]
    EmbeddingFormat { line: usize, message: String },
    #[error("forward trace does not match this encoder")]
    TraceMismatch,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which encoder architecture a parameter set belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderKind {
    Avg,
    Lstm,
}

impl EncoderKind {
    pub fn name(&self) -> &'static str {
        match self {
            EncoderKind::Avg => "avg",
            EncoderKind::Lstm => "lstm",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "avg" => Some(EncoderKind::Avg),
            "lstm" => Some(EncoderKind::Lstm),
            _ => None,
        }
    }
}

/// All trainable parameters of one encoder. The LSTM weights are present
/// exactly when `kind` is [`EncoderKind::Lstm`].
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    kind: EncoderKind,
    table: EmbeddingTable,
    lstm: Option<LstmParams>,
}

impl EncoderParams {
    pub fn new_avg<R: Rng>(vocab_size: usize, dim: usize, rng: &mut R) -> Self {
        EncoderParams {
            kind: EncoderKind::Avg,
            table: EmbeddingTable::random(vocab_size, dim, rng),
            lstm: None,
        }
    }

    pub fn new_lstm<R: Rng>(
        vocab_size: usize,
        embed_dim: usize,
        hidden: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Self {
        EncoderParams {
            kind: EncoderKind::Lstm,
            table: EmbeddingTable::random(vocab_size, embed_dim, rng),
            lstm: Some(LstmParams::random(embed_dim, hidden, out_dim, rng)),
        }
    }

    pub(crate) fn from_parts(
        kind: EncoderKind,
        table: EmbeddingTable,
        lstm: Option<LstmParams>,
    ) -> Result<Self, EncoderError> {
        match (kind, &lstm) {
            (EncoderKind::Avg, None) => {}
            (EncoderKind::Lstm, Some(l)) if l.input_dim() == table.dim() => {}
            _ => return Err(EncoderError::TraceMismatch),
        }
        Ok(EncoderParams { kind, table, lstm })
    }

    pub fn kind(&self) -> EncoderKind {
        self.kind
    }

    pub fn table(&self) -> &EmbeddingTable {
        &self.table
    }

    pub fn table_mut(&mut self) -> &mut EmbeddingTable {
        &mut self.table
    }

    pub fn lstm(&self) -> Option<&LstmParams> {
        self.lstm.as_ref()
    }

    /// Dimension of encoded vectors.
    pub fn out_dim(&self) -> usize {
        match (&self.kind, &self.lstm) {
            (EncoderKind::Avg, _) => self.table.dim(),
            (EncoderKind::Lstm, Some(l)) => l.out_dim(),
            (EncoderKind::Lstm, None) => unreachable!("lstm params present by construction"),
        }
    }

    /// A short identifier for reports, e.g. `"avg-d16"` or `"lstm-d16-h8"`.
    pub fn describe(&self) -> String {
        match (&self.kind, &self.lstm) {
            (EncoderKind::Avg, _) => format!("avg-d{}", self.table.dim()),
            (EncoderKind::Lstm, Some(l)) => {
                format!("lstm-d{}-h{}", self.table.dim(), l.hidden())
            }
            (EncoderKind::Lstm, None) => unreachable!(),
        }
    }

    pub fn encode(&self, seq: &TokenSeq) -> Result<Vec<f64>, EncoderError> {
        Ok(self.encode_traced(seq)?.0)
    }

    /// Encode and record the activations needed for [`backward`].
    pub fn encode_traced(&self, seq: &TokenSeq) -> Result<(Vec<f64>, Trace), EncoderError> {
        match self.kind {
            EncoderKind::Avg => {
                let out = encode_avg(seq, &self.table)?;
                Ok((
                    out,
                    Trace(TraceInner::Avg {
                        ids: seq.ids.clone(),
                    }),
                ))
            }
            EncoderKind::Lstm => {
                let lstm = self.lstm.as_ref().expect("lstm params");
                if seq.is_empty() {
                    return Err(EncoderError::EmptySequence);
                }
                let xs: Vec<&[f64]> = seq
                    .ids
                    .iter()
                    .map(|&id| self.table.row(id))
                    .collect::<Result<_, _>>()?;
                let n = xs.len();
                let h = lstm.hidden();

                let fwd = run_direction(&lstm.fwd, h, &xs);
                let xs_rev: Vec<&[f64]> = xs.iter().rev().copied().collect();
                let bwd = run_direction(&lstm.bwd, h, &xs_rev);

                // Mean over per-step concatenated [fwd_t ; bwd_t] states.
                let mut mean = vec![0.0; 2 * h];
                for t in 0..n {
                    for k in 0..h {
                        mean[k] += fwd[t].h[k];
                        mean[h + k] += bwd[n - 1 - t].h[k];
                    }
                }
                for v in mean.iter_mut() {
                    *v /= n as f64;
                }
                let out = matvec(&lstm.proj, lstm.out_dim(), 2 * h, &mean);
                Ok((
                    out,
                    Trace(TraceInner::Lstm {
                        ids: seq.ids.clone(),
                        fwd,
                        bwd,
                        mean,
                    }),
                ))
            }
        }
    }

    /// Fresh zero gradient buffers shaped like these parameters.
    pub fn zero_grads(&self) -> Gradients {
        Gradients {
            table: vec![0.0; self.table.as_slice().len()],
            lstm: self.lstm.as_ref().map(|l| LstmGrads {
                fwd: DirectionGrads::zeros(l.input_dim(), l.hidden()),
                bwd: DirectionGrads::zeros(l.input_dim(), l.hidden()),
                proj: vec![0.0; l.proj.len()],
            }),
        }
    }

    /// All parameters concatenated in a fixed order (table, forward
    /// direction, backward direction, projection).
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for s in self.param_slices() {
            out.extend_from_slice(s);
        }
        out
    }

    /// Overwrite every parameter from a flat vector laid out as
    /// [`EncoderParams::flatten`] produces.
    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<(), EncoderError> {
        if flat.len() != self.param_count() {
            return Err(EncoderError::DimensionMismatch {
                expected: self.param_count(),
                got: flat.len(),
            });
        }
        let mut offset = 0;
        for s in self.param_slices_mut() {
            s.copy_from_slice(&flat[offset..offset + s.len()]);
            offset += s.len();
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    pub(crate) fn param_slices(&self) -> Vec<&[f64]> {
        let mut slices: Vec<&[f64]> = vec![self.table.as_slice()];
        if let Some(l) = &self.lstm {
            slices.push(&l.fwd.w_in);
            slices.push(&l.fwd.w_rec);
            slices.push(&l.fwd.bias);
            slices.push(&l.bwd.w_in);
            slices.push(&l.bwd.w_rec);
            slices.push(&l.bwd.bias);
            slices.push(&l.proj);
        }
        slices
    }

    pub(crate) fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut slices: Vec<&mut [f64]> = vec![self.table.as_mut_slice()];
        if let Some(l) = &mut self.lstm {
            slices.push(&mut l.fwd.w_in);
            slices.push(&mut l.fwd.w_rec);
            slices.push(&mut l.fwd.bias);
            slices.push(&mut l.bwd.w_in);
            slices.push(&mut l.bwd.w_rec);
            slices.push(&mut l.bwd.bias);
            slices.push(&mut l.proj);
        }
        slices
    }
}

/// Mean of the sequence's embedding rows. Order-invariant by construction.
pub fn encode_avg(seq: &TokenSeq, table: &EmbeddingTable) -> Result<Vec<f64>, EncoderError> {
    if seq.is_empty() {
        return Err(EncoderError::EmptySequence);
    }
    let mut out = vec![0.0; table.dim()];
    for &id in &seq.ids {
        for (acc, v) in out.iter_mut().zip(table.row(id)?) {
            *acc += v;
        }
    }
    let n = seq.len() as f64;
    for v in out.iter_mut() {
        *v /= n;
    }
    Ok(out)
}

/// Bidirectional LSTM encoding; requires `params.kind() == Lstm`.
pub fn encode_lstm(seq: &TokenSeq, params: &EncoderParams) -> Result<Vec<f64>, EncoderError> {
    if params.kind() != EncoderKind::Lstm {
        return Err(EncoderError::TraceMismatch);
    }
    params.encode(seq)
}

/// v / ‖v‖₂. Errors on the zero vector.
pub fn l2_normalize(v: &[f64]) -> Result<Vec<f64>, EncoderError> {
    let n = norm(v);
    if n == 0.0 {
        return Err(EncoderError::ZeroVector);
    }
    Ok(v.iter().map(|x| x / n).collect())
}

/// Gradient of `upstream · l2_normalize(raw)` with respect to `raw`:
/// (g − q (q·g)) / ‖raw‖ where q is the normalized vector.
pub fn l2_normalize_backward(raw: &[f64], upstream: &[f64]) -> Result<Vec<f64>, EncoderError> {
    let n = norm(raw);
    if n == 0.0 {
        return Err(EncoderError::ZeroVector);
    }
    let q: Vec<f64> = raw.iter().map(|x| x / n).collect();
    let qg = linalg::dot(&q, upstream);
    Ok(upstream
        .iter()
        .zip(&q)
        .map(|(g, qi)| (g - qi * qg) / n)
        .collect())
}

/// Recorded forward activations, consumed by [`backward`].
#[derive(Debug, Clone)]
pub struct Trace(TraceInner);

#[derive(Debug, Clone)]
enum TraceInner {
    Avg {
        ids: Vec<u32>,
    },
    Lstm {
        ids: Vec<u32>,
        fwd: Vec<StepState>,
        bwd: Vec<StepState>,
        mean: Vec<f64>,
    },
}

/// Gradient buffers shaped like an [`EncoderParams`]. Embedding rows not
/// touched by any traced sequence stay exactly zero.
#[derive(Debug, Clone)]
pub struct Gradients {
    table: Vec<f64>,
    lstm: Option<LstmGrads>,
}

#[derive(Debug, Clone)]
struct LstmGrads {
    fwd: DirectionGrads,
    bwd: DirectionGrads,
    proj: Vec<f64>,
}

impl Gradients {
    pub fn zero(&mut self) {
        for s in self.slices_mut() {
            s.fill(0.0);
        }
    }

    /// Gradient of one embedding row.
    pub fn table_row(&self, id: u32, dim: usize) -> &[f64] {
        &self.table[id as usize * dim..(id as usize + 1) * dim]
    }

    /// ℓ2 norm over every gradient entry.
    pub fn global_norm(&self) -> f64 {
        self.slices()
            .iter()
            .map(|s| s.iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for s in self.slices_mut() {
            for v in s.iter_mut() {
                *v *= factor;
            }
        }
    }

    /// Same fixed order as [`EncoderParams::flatten`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for s in self.slices() {
            out.extend_from_slice(s);
        }
        out
    }

    pub(crate) fn slices(&self) -> Vec<&[f64]> {
        let mut slices: Vec<&[f64]> = vec![&self.table];
        if let Some(l) = &self.lstm {
            slices.push(&l.fwd.w_in);
            slices.push(&l.fwd.w_rec);
            slices.push(&l.fwd.bias);
            slices.push(&l.bwd.w_in);
            slices.push(&l.bwd.w_rec);
            slices.push(&l.bwd.bias);
            slices.push(&l.proj);
        }
        slices
    }

    pub(crate) fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut slices: Vec<&mut [f64]> = vec![&mut self.table];
        if let Some(l) = &mut self.lstm {
            slices.push(&mut l.fwd.w_in);
            slices.push(&mut l.fwd.w_rec);
            slices.push(&mut l.fwd.bias);
            slices.push(&mut l.bwd.w_in);
            slices.push(&mut l.bwd.w_rec);
            slices.push(&mut l.bwd.bias);
            slices.push(&mut l.proj);
        }
        slices
    }
}

/// Accumulate the exact gradient of `upstream · encode(seq)` into `grads`,
/// given the trace recorded by the matching forward call.
pub fn backward(
    params: &EncoderParams,
    trace: &Trace,
    upstream: &[f64],
    grads: &mut Gradients,
) -> Result<(), EncoderError> {
    if upstream.len() != params.out_dim() {
        return Err(EncoderError::DimensionMismatch {
            expected: params.out_dim(),
            got: upstream.len(),
        });
    }
    match (&trace.0, params.kind()) {
        (TraceInner::Avg { ids }, EncoderKind::Avg) => {
            let dim = params.table.dim();
            let n = ids.len() as f64;
            for &id in ids {
                if id as usize >= params.table.vocab_size() {
                    return Err(EncoderError::IdOutOfRange {
                        id,
                        vocab: params.table.vocab_size(),
                    });
                }
                let row = &mut grads.table[id as usize * dim..(id as usize + 1) * dim];
                for (g, u) in row.iter_mut().zip(upstream) {
                    *g += u / n;
                }
            }
            Ok(())
        }
        (
            TraceInner::Lstm {
                ids,
                fwd,
                bwd,
                mean,
            },
            EncoderKind::Lstm,
        ) => {
            let lstm = params.lstm.as_ref().expect("lstm params");
            let lstm_grads = grads.lstm.as_mut().ok_or(EncoderError::TraceMismatch)?;
            let h = lstm.hidden();
            let n = ids.len();
            if fwd.len() != n || bwd.len() != n {
                return Err(EncoderError::TraceMismatch);
            }

            // out = P · mean
            outer_acc(&mut lstm_grads.proj, upstream, mean);
            let mut dmean = vec![0.0; 2 * h];
            matvec_transpose_acc(&lstm.proj, lstm.out_dim(), 2 * h, upstream, &mut dmean);

            // mean = (1/n) Σ [fwd_t ; bwd at position t]
            let inv_n = 1.0 / n as f64;
            let dh_fwd: Vec<Vec<f64>> =
                (0..n).map(|_| dmean[..h].iter().map(|v| v * inv_n).collect()).collect();
            // Backward-direction steps run over the reversed sequence, so
            // step j of that scan sits at position n-1-j.
            let dh_bwd: Vec<Vec<f64>> =
                (0..n).map(|_| dmean[h..].iter().map(|v| v * inv_n).collect()).collect();

            let xs: Vec<&[f64]> = ids
                .iter()
                .map(|&id| params.table.row(id))
                .collect::<Result<_, _>>()?;
            let xs_rev: Vec<&[f64]> = xs.iter().rev().copied().collect();

            let mut dx_fwd: Vec<Vec<f64>> = vec![vec![0.0; lstm.input_dim()]; n];
            let mut dx_bwd: Vec<Vec<f64>> = vec![vec![0.0; lstm.input_dim()]; n];
            backprop_direction(&lstm.fwd, h, &xs, fwd, &dh_fwd, &mut lstm_grads.fwd, &mut dx_fwd);
            backprop_direction(
                &lstm.bwd,
                h,
                &xs_rev,
                bwd,
                &dh_bwd,
                &mut lstm_grads.bwd,
                &mut dx_bwd,
            );

            let dim = params.table.dim();
            for (t, &id) in ids.iter().enumerate() {
                let row = &mut grads.table[id as usize * dim..(id as usize + 1) * dim];
                for (g, d) in row.iter_mut().zip(&dx_fwd[t]) {
                    *g += d;
                }
                // dx_bwd[j] belongs to position n-1-j.
                for (g, d) in row.iter_mut().zip(&dx_bwd[n - 1 - t]) {
                    *g += d;
                }
            }
            Ok(())
        }
        _ => Err(EncoderError::TraceMismatch),
    }
}
