//! Analytic gradients for the recurrent model.
//!
//! Each call runs its own forward pass (keeping per-step gate values) and
//! then walks the graph in reverse. When a dropout source is supplied the
//! sampled mask is shared between the forward and backward halves of the
//! call. Trailing masked steps are never processed, so results are invariant
//! to the amount of padding.

use rand_chacha::ChaCha20Rng;

use super::forward::{argmax, forward_cached, log_softmax, rows_to_buf, Buf2, DirCache, StageCache};
use super::{ArchVariant, BiGru, GruCell, ModelParams, NeuralError};
use crate::tonal::{NUM_KEY_SIGNATURES, NUM_TPC};

/// Gradient of the mean per-step loss with respect to every parameter.
///
/// Returns `(loss, gradients)`; the gradient container mirrors the parameter
/// container. `dropout_rng` enables training-mode dropout; pass `None` for
/// the deterministic path.
pub fn backward(
    inputs: &[Vec<f64>],
    tpc_labels: &[usize],
    ks_labels: &[usize],
    mask: &[bool],
    params: &ModelParams,
    dropout_rng: Option<&mut ChaCha20Rng>,
) -> Result<(f64, ModelParams), NeuralError> {
    let (loss_sum, mut grads, count) =
        backward_sum(inputs, tpc_labels, ks_labels, mask, params, dropout_rng)?;
    if count == 0 {
        return Ok((0.0, grads));
    }
    let scale = 1.0 / count as f64;
    scale_params(&mut grads, scale);
    Ok((loss_sum * scale, grads))
}

/// Unnormalized form of [`backward`]: the loss summed over unmasked steps,
/// the gradient of that sum, and the number of unmasked steps. Batch code
/// accumulates these and rescales once.
pub fn backward_sum(
    inputs: &[Vec<f64>],
    tpc_labels: &[usize],
    ks_labels: &[usize],
    mask: &[bool],
    params: &ModelParams,
    dropout_rng: Option<&mut ChaCha20Rng>,
) -> Result<(f64, ModelParams, usize), NeuralError> {
    let steps = inputs.len();
    if steps == 0 {
        return Err(NeuralError::EmptySequence);
    }
    for (what, len) in [
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
    let t_eff = mask.iter().rposition(|&m| m).map_or(0, |p| p + 1);
    if t_eff == 0 {
        return Ok((0.0, ModelParams::zeros(params.config), 0));
    }
    let buf = rows_to_buf(&inputs[..t_eff], params.config.input_dim(), "model input")?;
    let cache = forward_cached(&buf, params, dropout_rng);

    // Loss and logit gradients (sum form: softmax minus one-hot per
    // unmasked step).
    let mut loss_sum = 0.0;
    let mut count = 0usize;
    let mut d_tpc = Buf2::new(t_eff, NUM_TPC);
    let mut d_ks = Buf2::new(t_eff, NUM_KEY_SIGNATURES);
    for t in 0..t_eff {
        if !mask[t] {
            continue;
        }
        let (tpc, ks) = (tpc_labels[t], ks_labels[t]);
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
        let log_p = log_softmax(cache.tpc_logits.row(t));
        loss_sum -= log_p[tpc];
        for (d, lp) in d_tpc.row_mut(t).iter_mut().zip(&log_p) {
            *d = lp.exp();
        }
        d_tpc.row_mut(t)[tpc] -= 1.0;

        let log_p = log_softmax(cache.ks_logits.row(t));
        loss_sum -= log_p[ks];
        for (d, lp) in d_ks.row_mut(t).iter_mut().zip(&log_p) {
            *d = lp.exp();
        }
        d_ks.row_mut(t)[ks] -= 1.0;
        count += 1;
    }

    let mut grads = ModelParams::zeros(params.config);

    // Heads, and gradient buffers for each stage's (dropout-masked) output.
    let width_a = params.config.stage_width();
    let mut d_src_a = Buf2::new(t_eff, width_a);
    for t in 0..t_eff {
        let d = d_tpc.row(t);
        grads.head_tpc.w.add_outer(d, cache.stage_a.dropped.row(t));
        for (g, dv) in grads.head_tpc.b.iter_mut().zip(d) {
            *g += dv;
        }
        params.head_tpc.w.addmv_t(d, d_src_a.row_mut(t));
    }

    match params.config.variant {
        ArchVariant::SingleStage => {
            for t in 0..t_eff {
                let d = d_ks.row(t);
                grads.head_ks.w.add_outer(d, cache.stage_a.dropped.row(t));
                for (g, dv) in grads.head_ks.b.iter_mut().zip(d) {
                    *g += dv;
                }
                params.head_ks.w.addmv_t(d, d_src_a.row_mut(t));
            }
        }
        ArchVariant::TwoStage | ArchVariant::Separate => {
            let sb_cache = cache.stage_b.as_ref().expect("stage B cache");
            let sb_params = params.stage_b.as_ref().expect("stage B params");
            let sb_grads = grads.stage_b.as_mut().expect("stage B grads");
            let mut d_src_b = Buf2::new(t_eff, width_a);
            for t in 0..t_eff {
                let d = d_ks.row(t);
                grads.head_ks.w.add_outer(d, sb_cache.dropped.row(t));
                for (g, dv) in grads.head_ks.b.iter_mut().zip(d) {
                    *g += dv;
                }
                params.head_ks.w.addmv_t(d, d_src_b.row_mut(t));
            }
            match params.config.variant {
                ArchVariant::TwoStage => {
                    stage_backward(
                        sb_params,
                        &cache.stage_a.dropped,
                        sb_cache,
                        &d_src_b,
                        sb_grads,
                        Some(&mut d_src_a),
                    );
                }
                ArchVariant::Separate => {
                    stage_backward(sb_params, &cache.inputs, sb_cache, &d_src_b, sb_grads, None);
                }
                ArchVariant::SingleStage => unreachable!(),
            }
        }
    }

    stage_backward(
        &params.stage_a,
        &cache.inputs,
        &cache.stage_a,
        &d_src_a,
        &mut grads.stage_a,
        None,
    );

    Ok((loss_sum, grads, count))
}

/// Backpropagate one recurrent stage. `d_dropped` is the gradient with
/// respect to the stage's dropout-masked output; input gradients are
/// accumulated into `d_inputs` when the caller needs them.
fn stage_backward(
    gru: &BiGru,
    inputs: &Buf2,
    cache: &StageCache,
    d_dropped: &Buf2,
    grads: &mut BiGru,
    mut d_inputs: Option<&mut Buf2>,
) {
    // Chain through the dropout mask.
    let mut d_out = d_dropped.clone();
    if let Some(mask) = &cache.mask {
        for (d, m) in d_out.data.iter_mut().zip(&mask.data) {
            *d *= m;
        }
    }
    let hidden = gru.fwd.hidden();
    dir_backward(
        &gru.fwd,
        inputs,
        &cache.fwd,
        &d_out,
        0,
        false,
        &mut grads.fwd,
        d_inputs.as_deref_mut(),
    );
    if let (Some(cell), Some(dir_cache), Some(gcell)) =
        (gru.bwd.as_ref(), cache.bwd.as_ref(), grads.bwd.as_mut())
    {
        dir_backward(
            cell,
            inputs,
            dir_cache,
            &d_out,
            hidden,
            true,
            gcell,
            d_inputs,
        );
    }
}

/// Backpropagation through time for one direction. `col` selects this
/// direction's columns in `d_out`; `reverse` must match the forward pass.
#[allow(clippy::too_many_arguments)]
fn dir_backward(
    cell: &GruCell,
    inputs: &Buf2,
    cache: &DirCache,
    d_out: &Buf2,
    col: usize,
    reverse: bool,
    gcell: &mut GruCell,
    mut d_inputs: Option<&mut Buf2>,
) {
    let steps = inputs.steps();
    let hidden = cell.hidden();
    let mut dh_carry = vec![0.0; hidden];
    let mut dh = vec![0.0; hidden];
    let mut dan = vec![0.0; hidden];
    let mut dm = vec![0.0; hidden];
    let mut dar = vec![0.0; hidden];
    let mut daz = vec![0.0; hidden];

    // Visit steps in reverse processing order; the recurrent gradient flows
    // toward the step processed earlier.
    let order: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new(0..steps)
    } else {
        Box::new((0..steps).rev())
    };
    for t in order {
        let r = cache.r.row(t);
        let z = cache.z.row(t);
        let n = cache.n.row(t);
        let m = cache.m.row(t);
        let h_prev = cache.h_prev.row(t);
        let d_slice = &d_out.row(t)[col..col + hidden];
        for i in 0..hidden {
            dh[i] = d_slice[i] + dh_carry[i];
            let dn = dh[i] * (1.0 - z[i]);
            let dz = dh[i] * (h_prev[i] - n[i]);
            dan[i] = dn * (1.0 - n[i] * n[i]);
            dm[i] = dan[i] * r[i];
            let dr = dan[i] * m[i];
            dar[i] = dr * r[i] * (1.0 - r[i]);
            daz[i] = dz * z[i] * (1.0 - z[i]);
        }
        let x = inputs.row(t);
        gcell.w_r.add_outer(&dar, x);
        gcell.w_z.add_outer(&daz, x);
        gcell.w_n.add_outer(&dan, x);
        gcell.u_r.add_outer(&dar, h_prev);
        gcell.u_z.add_outer(&daz, h_prev);
        gcell.u_n.add_outer(&dm, h_prev);
        for i in 0..hidden {
            gcell.b_r[i] += dar[i];
            gcell.b_z[i] += daz[i];
            gcell.b_in[i] += dan[i];
            gcell.b_hn[i] += dm[i];
        }
        if let Some(d_in) = d_inputs.as_deref_mut() {
            let row = d_in.row_mut(t);
            cell.w_r.addmv_t(&dar, row);
            cell.w_z.addmv_t(&daz, row);
            cell.w_n.addmv_t(&dan, row);
        }
        // dh_prev for the step processed before this one.
        for v in dh_carry.iter_mut() {
            *v = 0.0;
        }
        cell.u_r.addmv_t(&dar, &mut dh_carry);
        cell.u_z.addmv_t(&daz, &mut dh_carry);
        cell.u_n.addmv_t(&dm, &mut dh_carry);
        for i in 0..hidden {
            dh_carry[i] += dh[i] * z[i];
        }
    }
}

fn scale_params(params: &mut ModelParams, scale: f64) {
    for stage in [Some(&mut params.stage_a), params.stage_b.as_mut()]
        .into_iter()
        .flatten()
    {
        for cell in [Some(&mut stage.fwd), stage.bwd.as_mut()].into_iter().flatten() {
            for (tensor, _) in cell.tensors_mut() {
                for v in tensor.iter_mut() {
                    *v *= scale;
                }
            }
        }
    }
    for v in params
        .head_tpc
        .w
        .data
        .iter_mut()
        .chain(&mut params.head_tpc.b)
        .chain(&mut params.head_ks.w.data)
        .chain(&mut params.head_ks.b)
    {
        *v *= scale;
    }
}

/// Self-predicted labels (per-head argmax), handy for accuracy bookkeeping
/// and for the stationarity check at an overfit optimum.
pub fn self_predicted(
    inputs: &[Vec<f64>],
    params: &ModelParams,
) -> Result<(Vec<usize>, Vec<usize>), NeuralError> {
    let buf = rows_to_buf(inputs, params.config.input_dim(), "model input")?;
    let cache = forward_cached(&buf, params, None);
    let tpc = (0..buf.steps()).map(|t| argmax(cache.tpc_logits.row(t))).collect();
    let ks = (0..buf.steps()).map(|t| argmax(cache.ks_logits.row(t))).collect();
    Ok((tpc, ks))
}
