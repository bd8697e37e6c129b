//! Training: Adam updates, the stepped learning-rate schedule, the
//! piece-level train/validation split, transposition augmentation of the
//! training split, and the epoch loop over padded mini-batches.
//!
//! Everything is driven by one seeded generator, so a fixed seed yields
//! bit-identical parameters and history across runs.

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::augment;
use crate::corpus::LabeledPiece;
use crate::neural::{
    backward_sum, encode_piece, ArchVariant, ModelConfig, ModelParams, NeuralError,
};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("corpus contains no trainable pieces")]
    EmptyCorpus,
    #[error("training split is empty (fraction too small)")]
    EmptySplit,
    #[error("single_rnn and separate are mutually exclusive")]
    ConflictingVariants,
    #[error(transparent)]
    Neural(#[from] NeuralError),
}

/// Training hyperparameters. The defaults are the tuned values: 40 epochs,
/// learning rate 0.01 divided by 10 after epoch 20, batches of 32,
/// an 85/15 piece split, augmentation on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub lr_drop_epoch: usize,
    pub lr_drop_factor: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub split_fraction: f64,
    pub augment: bool,
    /// Duration classes for input encoding.
    pub k: usize,
    pub hidden_per_dir: usize,
    pub dropout: f64,
    /// Optional global-norm gradient clip.
    pub grad_clip: Option<f64>,
    // Ablations.
    pub single_rnn: bool,
    pub separate: bool,
    pub no_durations: bool,
    pub unidirectional: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 40,
            lr: 0.01,
            lr_drop_epoch: 20,
            lr_drop_factor: 10.0,
            batch_size: 32,
            seed: 0,
            split_fraction: 0.85,
            augment: true,
            k: 4,
            hidden_per_dir: 150,
            dropout: 0.3,
            grad_clip: None,
            single_rnn: false,
            separate: false,
            no_durations: false,
            unidirectional: false,
        }
    }
}

impl TrainConfig {
    /// The model shape this configuration trains. The unidirectional variant
    /// doubles the per-direction hidden size to keep the parameter budget.
    pub fn model_config(&self) -> Result<ModelConfig, TrainError> {
        let variant = match (self.single_rnn, self.separate) {
            (false, false) => ArchVariant::TwoStage,
            (true, false) => ArchVariant::SingleStage,
            (false, true) => ArchVariant::Separate,
            (true, true) => return Err(TrainError::ConflictingVariants),
        };
        Ok(ModelConfig {
            duration_classes: if self.no_durations { 0 } else { self.k },
            hidden_per_dir: if self.unidirectional {
                self.hidden_per_dir * 2
            } else {
                self.hidden_per_dir
            },
            bidirectional: !self.unidirectional,
            variant,
            dropout: self.dropout,
        })
    }
}

/// Learning rate for a 1-based epoch: the base rate, divided once by the
/// drop factor after `lr_drop_epoch` epochs.
pub fn lr_at(epoch: usize, config: &TrainConfig) -> f64 {
    if epoch > config.lr_drop_epoch {
        config.lr / config.lr_drop_factor
    } else {
        config.lr
    }
}

/// First and second moment accumulators for Adam.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }
}

/// One Adam update with bias correction (beta1 0.9, beta2 0.999, eps 1e-8).
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), state.m.len());
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - ADAM_BETA1.powi(t);
    let bc2 = 1.0 - ADAM_BETA2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * g;
        state.v[i] = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
    }
}

/// Deterministic piece-level split: shuffle with the given generator, then
/// take `floor(fraction * n)` pieces for training.
pub fn split_pieces(
    n: usize,
    fraction: f64,
    rng: &mut ChaCha20Rng,
) -> (Vec<usize>, Vec<usize>) {
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(rng);
    let n_train = ((n as f64) * fraction).floor() as usize;
    let n_train = n_train.min(n);
    let val = indices.split_off(n_train);
    (indices, val)
}

/// A piece encoded for the model.
struct EncodedSeq {
    inputs: Vec<Vec<f64>>,
    tpc: Vec<usize>,
    ks: Vec<usize>,
}

fn encode_labeled(piece: &LabeledPiece, config: &ModelConfig) -> Result<EncodedSeq, NeuralError> {
    let inputs = encode_piece(&piece.piece, config.duration_classes)?;
    Ok(EncodedSeq {
        inputs,
        tpc: piece.tpcs.iter().map(|t| t.class_index()).collect(),
        ks: piece.keys.iter().map(|k| k.class_index()).collect(),
    })
}

/// Sequences padded to a common length with per-step masks.
struct Batch {
    inputs: Vec<Vec<Vec<f64>>>,
    tpc: Vec<Vec<usize>>,
    ks: Vec<Vec<usize>>,
    masks: Vec<Vec<bool>>,
}

impl Batch {
    fn build(seqs: &[&EncodedSeq], input_dim: usize) -> Batch {
        let max_len = seqs.iter().map(|s| s.inputs.len()).max().unwrap_or(0);
        let mut batch = Batch {
            inputs: Vec::with_capacity(seqs.len()),
            tpc: Vec::with_capacity(seqs.len()),
            ks: Vec::with_capacity(seqs.len()),
            masks: Vec::with_capacity(seqs.len()),
        };
        for seq in seqs {
            let len = seq.inputs.len();
            let mut inputs = seq.inputs.clone();
            inputs.resize(max_len, vec![0.0; input_dim]);
            let mut tpc = seq.tpc.clone();
            tpc.resize(max_len, 0);
            let mut ks = seq.ks.clone();
            ks.resize(max_len, 0);
            let mut mask = vec![true; len];
            mask.resize(max_len, false);
            batch.inputs.push(inputs);
            batch.tpc.push(tpc);
            batch.ks.push(ks);
            batch.masks.push(mask);
        }
        batch
    }
}

/// Mean loss over the batch's unmasked steps and the matching gradients.
/// Members are processed in order, so the reduction is deterministic.
fn batch_backward(
    params: &ModelParams,
    batch: &Batch,
    rng: &mut ChaCha20Rng,
) -> Result<(f64, Vec<f64>, usize), NeuralError> {
    let mut total_loss = 0.0;
    let mut total_steps = 0usize;
    let mut grad_acc = vec![0.0; params.param_count()];
    for i in 0..batch.inputs.len() {
        let (loss_sum, grads, count) = backward_sum(
            &batch.inputs[i],
            &batch.tpc[i],
            &batch.ks[i],
            &batch.masks[i],
            params,
            Some(rng),
        )?;
        total_loss += loss_sum;
        total_steps += count;
        for (acc, g) in grad_acc.iter_mut().zip(grads.flatten()) {
            *acc += g;
        }
    }
    if total_steps > 0 {
        let scale = 1.0 / total_steps as f64;
        for g in grad_acc.iter_mut() {
            *g *= scale;
        }
        total_loss *= scale;
    }
    Ok((total_loss, grad_acc, total_steps))
}

/// Per-epoch bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_tpc_accuracy: f64,
    pub train_ks_accuracy: f64,
    /// Absent when the validation split is empty.
    pub val_tpc_accuracy: Option<f64>,
    pub val_ks_accuracy: Option<f64>,
}

/// A trained model plus its training history.
pub struct TrainOutcome {
    pub params: ModelParams,
    pub history: Vec<EpochStats>,
    /// Number of training sequences after augmentation.
    pub train_sequences: usize,
    /// Number of held-out validation pieces.
    pub val_pieces: usize,
}

/// Train on a labeled corpus.
///
/// The corpus is split by piece (85/15 by default, seeded); the training
/// split is augmented by transposition when enabled; each epoch shuffles the
/// training sequences, batches them with padding and masks, and applies one
/// Adam update per batch. The validation split is never augmented and never
/// touches the optimizer. Returns the final-epoch parameters.
pub fn train(corpus: &[LabeledPiece], config: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    let model_config = config.model_config()?;
    let usable: Vec<&LabeledPiece> = corpus
        .iter()
        .filter(|p| {
            if p.is_empty() {
                log::warn!("skipping empty piece {:?}", p.piece.id);
                false
            } else {
                true
            }
        })
        .collect();
    if usable.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }

    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let (train_idx, val_idx) = split_pieces(usable.len(), config.split_fraction, &mut rng);
    if train_idx.is_empty() {
        return Err(TrainError::EmptySplit);
    }

    // Originals first, then that piece's transposed variants.
    let mut train_seqs: Vec<EncodedSeq> = Vec::new();
    for &i in &train_idx {
        let piece = usable[i];
        train_seqs.push(encode_labeled(piece, &model_config)?);
        if config.augment {
            for variant in augment::augment(piece) {
                train_seqs.push(encode_labeled(&variant, &model_config)?);
            }
        }
    }
    let val_seqs: Vec<EncodedSeq> = val_idx
        .iter()
        .map(|&i| encode_labeled(usable[i], &model_config))
        .collect::<Result<_, _>>()?;

    log::info!(
        "training on {} sequences ({} pieces before augmentation), validating on {}",
        train_seqs.len(),
        train_idx.len(),
        val_idx.len()
    );

    let mut params = ModelParams::init(model_config, config.seed);
    let mut adam = AdamState::new(params.param_count());
    let mut history = Vec::with_capacity(config.epochs);

    let mut order: Vec<usize> = (0..train_seqs.len()).collect();
    for epoch in 1..=config.epochs {
        let lr = lr_at(epoch, config);
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_steps = 0usize;
        for chunk in order.chunks(config.batch_size.max(1)) {
            let members: Vec<&EncodedSeq> = chunk.iter().map(|&i| &train_seqs[i]).collect();
            let batch = Batch::build(&members, model_config.input_dim());
            let (loss, mut grads, steps) = batch_backward(&params, &batch, &mut rng)?;
            if steps == 0 {
                continue;
            }
            if let Some(limit) = config.grad_clip {
                clip_by_norm(&mut grads, limit);
            }
            let mut flat = params.flatten();
            adam_step(&mut flat, &grads, &mut adam, lr);
            params = ModelParams::from_flat(model_config, config.seed, &flat)?;
            epoch_loss += loss * steps as f64;
            epoch_steps += steps;
        }

        let (train_tpc, train_ks) = accuracy(&params, &train_seqs)?;
        let (val_tpc, val_ks) = if val_seqs.is_empty() {
            (None, None)
        } else {
            let (t, k) = accuracy(&params, &val_seqs)?;
            (Some(t), Some(k))
        };
        let stats = EpochStats {
            epoch,
            lr,
            train_loss: if epoch_steps == 0 {
                0.0
            } else {
                epoch_loss / epoch_steps as f64
            },
            train_tpc_accuracy: train_tpc,
            train_ks_accuracy: train_ks,
            val_tpc_accuracy: val_tpc,
            val_ks_accuracy: val_ks,
        };
        log::info!(
            "epoch {:3}: lr {:.4} loss {:.4} train acc {:.4}/{:.4} val acc {}/{}",
            stats.epoch,
            stats.lr,
            stats.train_loss,
            stats.train_tpc_accuracy,
            stats.train_ks_accuracy,
            stats
                .val_tpc_accuracy
                .map_or("-".to_string(), |v| format!("{v:.4}")),
            stats
                .val_ks_accuracy
                .map_or("-".to_string(), |v| format!("{v:.4}")),
        );
        history.push(stats);
    }

    Ok(TrainOutcome {
        params,
        history,
        train_sequences: train_seqs.len(),
        val_pieces: val_idx.len(),
    })
}

fn clip_by_norm(grads: &mut [f64], limit: f64) {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > limit && norm > 0.0 {
        let scale = limit / norm;
        for g in grads.iter_mut() {
            *g *= scale;
        }
    }
}

/// Argmax accuracy of both heads over encoded sequences (dropout inactive).
fn accuracy(params: &ModelParams, seqs: &[EncodedSeq]) -> Result<(f64, f64), NeuralError> {
    let mut notes = 0usize;
    let mut tpc_hits = 0usize;
    let mut ks_hits = 0usize;
    for seq in seqs {
        let (tpc, ks) = crate::neural::self_predicted(&seq.inputs, params)?;
        notes += seq.inputs.len();
        tpc_hits += tpc.iter().zip(&seq.tpc).filter(|(a, b)| a == b).count();
        ks_hits += ks.iter().zip(&seq.ks).filter(|(a, b)| a == b).count();
    }
    if notes == 0 {
        return Ok((0.0, 0.0));
    }
    Ok((
        tpc_hits as f64 / notes as f64,
        ks_hits as f64 / notes as f64,
    ))
}
