//! Forward evaluation: gated recurrent steps, stage passes, logits, loss,
//! and note-level prediction.

use rand::Rng;
use rand_chacha::ChaCha20Rng;

use crate::corpus::Piece;
use crate::quant::quantize_piece;
use crate::tonal::{KeySignature, Tpc, NUM_KEY_SIGNATURES, NUM_TPC};

use super::{ArchVariant, BiGru, GruCell, ModelParams, NeuralError};

/// Per-step logits for both heads.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutput {
    /// One row of 35 spelling logits per step.
    pub tpc_logits: Vec<Vec<f64>>,
    /// One row of 15 key signature logits per step.
    pub ks_logits: Vec<Vec<f64>>,
}

/// Row-major (steps x width) buffer.
#[derive(Debug, Clone)]
pub(crate) struct Buf2 {
    pub width: usize,
    pub data: Vec<f64>,
}

impl Buf2 {
    pub fn new(steps: usize, width: usize) -> Self {
        Buf2 {
            width,
            data: vec![0.0; steps * width],
        }
    }

    pub fn steps(&self) -> usize {
        self.data.len().checked_div(self.width).unwrap_or(0)
    }

    #[inline]
    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.width..(t + 1) * self.width]
    }

    #[inline]
    pub fn row_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.data[t * self.width..(t + 1) * self.width]
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Intermediate values of one directional pass, saved for backpropagation.
pub(crate) struct DirCache {
    pub h_prev: Buf2,
    pub r: Buf2,
    pub z: Buf2,
    pub n: Buf2,
    /// Hidden-side candidate pre-activation `u_n h + b_hn`.
    pub m: Buf2,
    pub h: Buf2,
}

/// One gated recurrent step; writes the gate values and the new hidden state
/// into the provided slices.
#[allow(clippy::too_many_arguments)]
fn cell_step(
    cell: &GruCell,
    x: &[f64],
    h_prev: &[f64],
    r: &mut [f64],
    z: &mut [f64],
    n: &mut [f64],
    m: &mut [f64],
    h_out: &mut [f64],
) {
    let hidden = cell.hidden();
    r.copy_from_slice(&cell.b_r);
    cell.w_r.addmv(x, r);
    cell.u_r.addmv(h_prev, r);
    z.copy_from_slice(&cell.b_z);
    cell.w_z.addmv(x, z);
    cell.u_z.addmv(h_prev, z);
    m.copy_from_slice(&cell.b_hn);
    cell.u_n.addmv(h_prev, m);
    n.copy_from_slice(&cell.b_in);
    cell.w_n.addmv(x, n);
    for i in 0..hidden {
        r[i] = sigmoid(r[i]);
        z[i] = sigmoid(z[i]);
        n[i] = (n[i] + r[i] * m[i]).tanh();
        h_out[i] = (1.0 - z[i]) * n[i] + z[i] * h_prev[i];
    }
}

/// One gated recurrent unit step (single direction).
///
/// `x` must match the cell's input width and `h_prev` its hidden width.
pub fn gru_cell(cell: &GruCell, x: &[f64], h_prev: &[f64]) -> Result<Vec<f64>, NeuralError> {
    if x.len() != cell.input() {
        return Err(NeuralError::DimensionMismatch {
            what: "gru input",
            expected: cell.input(),
            got: x.len(),
        });
    }
    if h_prev.len() != cell.hidden() {
        return Err(NeuralError::DimensionMismatch {
            what: "gru hidden state",
            expected: cell.hidden(),
            got: h_prev.len(),
        });
    }
    let h = cell.hidden();
    let (mut r, mut z, mut n, mut m, mut out) =
        (vec![0.0; h], vec![0.0; h], vec![0.0; h], vec![0.0; h], vec![0.0; h]);
    cell_step(cell, x, h_prev, &mut r, &mut z, &mut n, &mut m, &mut out);
    Ok(out)
}

/// Run one direction over `inputs`, starting from a zero hidden state.
/// `reverse` processes the steps last-to-first; the output row for step `t`
/// is always stored at index `t`.
pub(crate) fn run_dir(cell: &GruCell, inputs: &Buf2, reverse: bool) -> DirCache {
    let steps = inputs.steps();
    let hidden = cell.hidden();
    let mut cache = DirCache {
        h_prev: Buf2::new(steps, hidden),
        r: Buf2::new(steps, hidden),
        z: Buf2::new(steps, hidden),
        n: Buf2::new(steps, hidden),
        m: Buf2::new(steps, hidden),
        h: Buf2::new(steps, hidden),
    };
    let mut h = vec![0.0; hidden];
    let order: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new((0..steps).rev())
    } else {
        Box::new(0..steps)
    };
    let mut scratch = vec![0.0; hidden];
    for t in order {
        cache.h_prev.row_mut(t).copy_from_slice(&h);
        // Split borrows: compute into scratch then store.
        let (r, z, n, m) = (
            &mut cache.r,
            &mut cache.z,
            &mut cache.n,
            &mut cache.m,
        );
        cell_step(
            cell,
            inputs.row(t),
            &h,
            r.row_mut(t),
            z.row_mut(t),
            n.row_mut(t),
            m.row_mut(t),
            &mut scratch,
        );
        h.copy_from_slice(&scratch);
        cache.h.row_mut(t).copy_from_slice(&h);
    }
    cache
}

pub(crate) struct StageCache {
    pub fwd: DirCache,
    pub bwd: Option<DirCache>,
    /// Concatenated per-step output, `steps x stage width`.
    pub output: Buf2,
    /// Inverted-dropout multipliers (0 or 1/keep), when dropout was active.
    pub mask: Option<Buf2>,
    /// `output` with the mask applied; equals `output` when no mask.
    pub dropped: Buf2,
}

pub(crate) fn stage_forward(
    gru: &BiGru,
    inputs: &Buf2,
    dropout: Option<(f64, &mut ChaCha20Rng)>,
) -> StageCache {
    let steps = inputs.steps();
    let hidden = gru.fwd.hidden();
    let width = gru.output_width();
    let fwd = run_dir(&gru.fwd, inputs, false);
    let bwd = gru.bwd.as_ref().map(|cell| run_dir(cell, inputs, true));
    let mut output = Buf2::new(steps, width);
    for t in 0..steps {
        output.row_mut(t)[..hidden].copy_from_slice(fwd.h.row(t));
        if let Some(b) = &bwd {
            output.row_mut(t)[hidden..].copy_from_slice(b.h.row(t));
        }
    }
    let mask = dropout.and_then(|(rate, rng)| {
        if rate <= 0.0 {
            return None;
        }
        let keep = 1.0 - rate;
        let mut m = Buf2::new(steps, width);
        for v in m.data.iter_mut() {
            *v = if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 };
        }
        Some(m)
    });
    let mut dropped = output.clone();
    if let Some(m) = &mask {
        for (d, f) in dropped.data.iter_mut().zip(&m.data) {
            *d *= f;
        }
    }
    StageCache {
        fwd,
        bwd,
        output,
        mask,
        dropped,
    }
}

/// Per-step concatenation of the forward (and, if present, reverse) hidden
/// states of one recurrent stage, from zero initial states.
pub fn bidirectional_pass(
    inputs: &[Vec<f64>],
    gru: &BiGru,
) -> Result<Vec<Vec<f64>>, NeuralError> {
    let buf = rows_to_buf(inputs, gru.fwd.input(), "stage input")?;
    let cache = stage_forward(gru, &buf, None);
    Ok((0..buf.steps()).map(|t| cache.output.row(t).to_vec()).collect())
}

pub(crate) fn rows_to_buf(
    rows: &[Vec<f64>],
    width: usize,
    what: &'static str,
) -> Result<Buf2, NeuralError> {
    if rows.is_empty() {
        return Err(NeuralError::EmptySequence);
    }
    let mut buf = Buf2::new(rows.len(), width);
    for (t, row) in rows.iter().enumerate() {
        if row.len() != width {
            return Err(NeuralError::DimensionMismatch {
                what,
                expected: width,
                got: row.len(),
            });
        }
        buf.row_mut(t).copy_from_slice(row);
    }
    Ok(buf)
}

pub(crate) struct Cache {
    pub inputs: Buf2,
    pub stage_a: StageCache,
    pub stage_b: Option<StageCache>,
    pub tpc_logits: Buf2,
    pub ks_logits: Buf2,
}

pub(crate) fn forward_cached(
    inputs: &Buf2,
    params: &ModelParams,
    mut dropout_rng: Option<&mut ChaCha20Rng>,
) -> Cache {
    let steps = inputs.steps();
    let rate = params.config.dropout;
    let stage_a = stage_forward(
        &params.stage_a,
        inputs,
        dropout_rng.as_mut().map(|rng| (rate, &mut **rng)),
    );
    let stage_b = params.stage_b.as_ref().map(|gru| {
        let stage_inputs = match params.config.variant {
            ArchVariant::TwoStage => &stage_a.dropped,
            ArchVariant::Separate => inputs,
            ArchVariant::SingleStage => unreachable!("single stage has no stage B"),
        };
        stage_forward(
            gru,
            stage_inputs,
            dropout_rng.as_mut().map(|rng| (rate, &mut **rng)),
        )
    });

    let mut tpc_logits = Buf2::new(steps, NUM_TPC);
    let mut ks_logits = Buf2::new(steps, NUM_KEY_SIGNATURES);
    let ks_source = match params.config.variant {
        ArchVariant::SingleStage => &stage_a.dropped,
        _ => &stage_b.as_ref().expect("stage B present").dropped,
    };
    for t in 0..steps {
        let row = tpc_logits.row_mut(t);
        row.copy_from_slice(&params.head_tpc.b);
        params.head_tpc.w.addmv(stage_a.dropped.row(t), row);
        let row = ks_logits.row_mut(t);
        row.copy_from_slice(&params.head_ks.b);
        params.head_ks.w.addmv(ks_source.row(t), row);
    }
    Cache {
        inputs: inputs.clone(),
        stage_a,
        stage_b,
        tpc_logits,
        ks_logits,
    }
}

/// Evaluate the model on an encoded sequence. Dropout is inactive; repeated
/// calls return identical outputs.
pub fn forward(inputs: &[Vec<f64>], params: &ModelParams) -> Result<ModelOutput, NeuralError> {
    let buf = rows_to_buf(inputs, params.config.input_dim(), "model input")?;
    let cache = forward_cached(&buf, params, None);
    Ok(ModelOutput {
        tpc_logits: (0..buf.steps()).map(|t| cache.tpc_logits.row(t).to_vec()).collect(),
        ks_logits: (0..buf.steps()).map(|t| cache.ks_logits.row(t).to_vec()).collect(),
    })
}

/// Numerically stable log-softmax of one row.
pub(crate) fn log_softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
    row.iter().map(|v| v - lse).collect()
}

/// Softmax of every row; rows sum to 1.
pub fn softmax_rows(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|r| log_softmax(r).iter().map(|v| v.exp()).collect())
        .collect()
}

/// Mean over unmasked steps of the summed spelling and key signature
/// cross-entropies. Masked steps contribute nothing; an all-masked sequence
/// has loss 0.
pub fn loss(
    output: &ModelOutput,
    tpc_labels: &[usize],
    ks_labels: &[usize],
    mask: &[bool],
) -> Result<f64, NeuralError> {
    let steps = output.tpc_logits.len();
    for (what, len) in [
        ("ks logits", output.ks_logits.len()),
        ("tpc labels", tpc_labels.len()),
        ("ks labels", ks_labels.len()),
        ("mask", mask.len()),
    ] {
        if len != steps {
            return Err(NeuralError::DimensionMismatch {
                what,
                expected: steps,
                got: len,
            });
        }
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for t in 0..steps {
        if !mask[t] {
            continue;
        }
        let tpc = tpc_labels[t];
        let ks = ks_labels[t];
        if tpc >= NUM_TPC {
            return Err(NeuralError::DimensionMismatch {
                what: "tpc label",
                expected: NUM_TPC,
                got: tpc,
            });
        }
        if ks >= NUM_KEY_SIGNATURES {
            return Err(NeuralError::DimensionMismatch {
                what: "ks label",
                expected: NUM_KEY_SIGNATURES,
                got: ks,
            });
        }
        total += -log_softmax(&output.tpc_logits[t])[tpc];
        total += -log_softmax(&output.ks_logits[t])[ks];
        count += 1;
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

/// Index of the greatest value; ties resolve to the lowest index.
pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Prediction options.
#[derive(Debug, Clone, Copy, Default)]
pub struct PredictOptions {
    /// Restrict each note's spelling to the enharmonics of its sounding
    /// pitch class. Off by default; the trained model respects the mapping
    /// on its own.
    pub constrain_to_enharmonics: bool,
}

/// Encode a piece as model input rows: a 12-slot pitch-class one-hot,
/// followed by a `duration_classes`-slot duration-class one-hot (omitted
/// when `duration_classes` is 0). Duration classes are computed per piece.
pub fn encode_piece(
    piece: &Piece,
    duration_classes: usize,
) -> Result<Vec<Vec<f64>>, NeuralError> {
    if piece.notes.is_empty() {
        return Err(NeuralError::EmptySequence);
    }
    let width = 12 + duration_classes;
    let classes = if duration_classes > 0 {
        Some(quantize_piece(piece, duration_classes).map_err(|_| NeuralError::EmptySequence)?)
    } else {
        None
    };
    Ok(piece
        .notes
        .iter()
        .enumerate()
        .map(|(i, note)| {
            let mut row = vec![0.0; width];
            row[usize::from(note.pitch_class().value())] = 1.0;
            if let Some(classes) = &classes {
                row[12 + classes[i].index()] = 1.0;
            }
            row
        })
        .collect())
}

/// Spell a piece: quantize durations, run the model, and take each head's
/// argmax per note (ties toward the lower class index).
pub fn predict(
    piece: &Piece,
    params: &ModelParams,
    opts: &PredictOptions,
) -> Result<(Vec<Tpc>, Vec<KeySignature>), NeuralError> {
    let inputs = encode_piece(piece, params.config.duration_classes)?;
    let output = forward(&inputs, params)?;
    let mut tpcs = Vec::with_capacity(inputs.len());
    let mut keys = Vec::with_capacity(inputs.len());
    for (t, note) in piece.notes.iter().enumerate() {
        let row = &output.tpc_logits[t];
        let idx = if opts.constrain_to_enharmonics {
            note.pitch_class()
                .enharmonics()
                .into_iter()
                .map(Tpc::class_index)
                .max_by(|&a, &b| {
                    row[a].partial_cmp(&row[b]).unwrap().then(b.cmp(&a))
                })
                .expect("every pitch class has enharmonics")
        } else {
            argmax(row)
        };
        tpcs.push(Tpc::from_class_index(idx).expect("argmax index in range"));
        keys.push(
            KeySignature::from_class_index(argmax(&output.ks_logits[t]))
                .expect("argmax index in range"),
        );
    }
    Ok((tpcs, keys))
}
