//! The recurrent estimator: parameters, architecture variants, exact
//! gradients and the weight file format.
//!
//! The default model is two stacked bidirectional GRU layers, each followed
//! by a linear head. Stage one reads the encoded notes and produces spelling
//! logits (35 classes); stage two reads stage one's (dropout-masked) hidden
//! states and produces key signature logits (15 classes). Ablation variants
//! share one recurrent stage between both heads, or give each task its own
//! independent recurrent stage over the inputs.
//!
//! All arithmetic is `f64`. Parameters serialize to a self-describing
//! container (see [`ModelParams::to_bytes`]) whose payload is the flattened
//! parameter vector; the flattening order is fixed and documented on
//! [`ModelParams::flatten`].

mod backward;
mod forward;

pub use backward::{backward, backward_sum, self_predicted};
pub use forward::{
    bidirectional_pass, encode_piece, forward, gru_cell, loss, predict, softmax_rows,
    ModelOutput, PredictOptions,
};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tonal::{NUM_KEY_SIGNATURES, NUM_TPC};

/// Identifies the gate equations and dropout placement baked into saved
/// weights: reset gate applied to the hidden-side candidate pre-activation,
/// dropout applied once to the first stage's output.
pub const CONVENTION: &str = "gru-reset-on-hidden-candidate/dropout-stage1/v1";

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("empty sequence")]
    EmptySequence,
    #[error("bad weight data: {0}")]
    BadWeights(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which heads read which recurrent stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchVariant {
    /// Stage B consumes stage A's hidden states (the default).
    TwoStage,
    /// One recurrent stage shared by both heads.
    SingleStage,
    /// Independent per-task recurrent stages over the inputs.
    Separate,
}

/// Model dimensions and options. Parameter shapes are a pure function of
/// this value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Number of duration one-hot slots appended to the 12 pitch-class slots;
    /// 0 disables duration features.
    pub duration_classes: usize,
    /// Hidden units per direction in each recurrent stage.
    pub hidden_per_dir: usize,
    pub bidirectional: bool,
    pub variant: ArchVariant,
    /// Dropout rate on recurrent-stage outputs during training.
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            duration_classes: 4,
            hidden_per_dir: 150,
            bidirectional: true,
            variant: ArchVariant::TwoStage,
            dropout: 0.3,
        }
    }
}

impl ModelConfig {
    pub fn input_dim(&self) -> usize {
        12 + self.duration_classes
    }

    pub fn directions(&self) -> usize {
        if self.bidirectional {
            2
        } else {
            1
        }
    }

    /// Width of a recurrent stage's per-step output.
    pub fn stage_width(&self) -> usize {
        self.hidden_per_dir * self.directions()
    }

    fn stage_b_input(&self) -> Option<usize> {
        match self.variant {
            ArchVariant::TwoStage => Some(self.stage_width()),
            ArchVariant::Separate => Some(self.input_dim()),
            ArchVariant::SingleStage => None,
        }
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// out += self * x
    pub fn addmv(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            let mut acc = 0.0;
            for (w, xv) in row.iter().zip(x) {
                acc += w * xv;
            }
            *o += acc;
        }
    }

    /// out += self^T * y
    pub fn addmv_t(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (yv, row) in y.iter().zip(self.data.chunks_exact(self.cols)) {
            if *yv != 0.0 {
                for (o, w) in out.iter_mut().zip(row) {
                    *o += yv * w;
                }
            }
        }
    }

    /// self += y ⊗ x
    pub fn add_outer(&mut self, y: &[f64], x: &[f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(x.len(), self.cols);
        for (yv, row) in y.iter().zip(self.data.chunks_exact_mut(self.cols)) {
            if *yv != 0.0 {
                for (w, xv) in row.iter_mut().zip(x) {
                    *w += yv * xv;
                }
            }
        }
    }
}

/// One direction of a gated recurrent layer.
///
/// Gate equations, with `h` the previous hidden state:
/// `r = sigmoid(w_r x + u_r h + b_r)`, `z = sigmoid(w_z x + u_z h + b_z)`,
/// `n = tanh(w_n x + r * (u_n h + b_hn) + b_in)`, `h' = (1-z)*n + z*h`.
#[derive(Debug, Clone, PartialEq)]
pub struct GruCell {
    pub w_r: Mat,
    pub w_z: Mat,
    pub w_n: Mat,
    pub u_r: Mat,
    pub u_z: Mat,
    pub u_n: Mat,
    pub b_r: Vec<f64>,
    pub b_z: Vec<f64>,
    pub b_in: Vec<f64>,
    pub b_hn: Vec<f64>,
}

impl GruCell {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        GruCell {
            w_r: Mat::zeros(hidden, input),
            w_z: Mat::zeros(hidden, input),
            w_n: Mat::zeros(hidden, input),
            u_r: Mat::zeros(hidden, hidden),
            u_z: Mat::zeros(hidden, hidden),
            u_n: Mat::zeros(hidden, hidden),
            b_r: vec![0.0; hidden],
            b_z: vec![0.0; hidden],
            b_in: vec![0.0; hidden],
            b_hn: vec![0.0; hidden],
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_r.rows
    }

    pub fn input(&self) -> usize {
        self.w_r.cols
    }

    fn tensors(&self) -> [(&[f64], usize); 10] {
        let h = self.hidden();
        [
            (&self.w_r.data, h),
            (&self.w_z.data, h),
            (&self.w_n.data, h),
            (&self.u_r.data, h),
            (&self.u_z.data, h),
            (&self.u_n.data, h),
            (&self.b_r, h),
            (&self.b_z, h),
            (&self.b_in, h),
            (&self.b_hn, h),
        ]
    }

    fn tensors_mut(&mut self) -> [(&mut Vec<f64>, usize); 10] {
        let h = self.hidden();
        [
            (&mut self.w_r.data, h),
            (&mut self.w_z.data, h),
            (&mut self.w_n.data, h),
            (&mut self.u_r.data, h),
            (&mut self.u_z.data, h),
            (&mut self.u_n.data, h),
            (&mut self.b_r, h),
            (&mut self.b_z, h),
            (&mut self.b_in, h),
            (&mut self.b_hn, h),
        ]
    }
}

/// A recurrent stage: forward direction plus an optional reverse direction.
#[derive(Debug, Clone, PartialEq)]
pub struct BiGru {
    pub fwd: GruCell,
    pub bwd: Option<GruCell>,
}

impl BiGru {
    fn zeros(input: usize, hidden: usize, bidirectional: bool) -> Self {
        BiGru {
            fwd: GruCell::zeros(input, hidden),
            bwd: bidirectional.then(|| GruCell::zeros(input, hidden)),
        }
    }

    pub fn output_width(&self) -> usize {
        self.fwd.hidden() * if self.bwd.is_some() { 2 } else { 1 }
    }
}

/// A linear head: `logits = w * input + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub w: Mat,
    pub b: Vec<f64>,
}

impl Linear {
    fn zeros(classes: usize, input: usize) -> Self {
        Linear {
            w: Mat::zeros(classes, input),
            b: vec![0.0; classes],
        }
    }
}

/// All trainable weights plus the configuration that shapes them.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    /// Seed the parameters were initialized with (provenance only).
    pub seed: u64,
    pub stage_a: BiGru,
    pub stage_b: Option<BiGru>,
    pub head_tpc: Linear,
    pub head_ks: Linear,
}

impl ModelParams {
    /// All-zero parameters with the shapes implied by `config`.
    pub fn zeros(config: ModelConfig) -> Self {
        let input = config.input_dim();
        let hidden = config.hidden_per_dir;
        let width = config.stage_width();
        ModelParams {
            config,
            seed: 0,
            stage_a: BiGru::zeros(input, hidden, config.bidirectional),
            stage_b: config
                .stage_b_input()
                .map(|i| BiGru::zeros(i, hidden, config.bidirectional)),
            head_tpc: Linear::zeros(NUM_TPC, width),
            head_ks: Linear::zeros(NUM_KEY_SIGNATURES, width),
        }
    }

    /// Seeded initialization: every tensor is filled, in flattening order,
    /// with uniform samples from [-1/sqrt(H), 1/sqrt(H)], where H is the
    /// hidden width the tensor feeds (the per-direction hidden size for
    /// recurrent tensors, the incoming width for the heads).
    pub fn init(config: ModelConfig, seed: u64) -> Self {
        let mut params = Self::zeros(config);
        params.seed = seed;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut fill = |data: &mut [f64], fan: usize| {
            let bound = 1.0 / (fan as f64).sqrt();
            for v in data.iter_mut() {
                *v = rng.gen_range(-bound..=bound);
            }
        };
        for stage in [Some(&mut params.stage_a), params.stage_b.as_mut()]
            .into_iter()
            .flatten()
        {
            for cell in [Some(&mut stage.fwd), stage.bwd.as_mut()].into_iter().flatten() {
                for (tensor, fan) in cell.tensors_mut() {
                    fill(tensor, fan);
                }
            }
        }
        let width = config.stage_width();
        fill(&mut params.head_tpc.w.data, width);
        fill(&mut params.head_tpc.b, width);
        fill(&mut params.head_ks.w.data, width);
        fill(&mut params.head_ks.b, width);
        params
    }

    /// Total number of trainable scalars.
    pub fn param_count(&self) -> usize {
        self.tensor_sizes().into_iter().sum()
    }

    fn tensor_sizes(&self) -> Vec<usize> {
        let mut sizes = Vec::new();
        for stage in [Some(&self.stage_a), self.stage_b.as_ref()].into_iter().flatten() {
            for cell in [Some(&stage.fwd), stage.bwd.as_ref()].into_iter().flatten() {
                sizes.extend(cell.tensors().iter().map(|(t, _)| t.len()));
            }
        }
        sizes.push(self.head_tpc.w.data.len());
        sizes.push(self.head_tpc.b.len());
        sizes.push(self.head_ks.w.data.len());
        sizes.push(self.head_ks.b.len());
        sizes
    }

    /// Flatten all parameters into one vector.
    ///
    /// Order: stage A forward cell, stage A reverse cell (if bidirectional),
    /// stage B cells likewise (if present), spelling head matrix then bias,
    /// key signature head matrix then bias. Within a cell: `w_r, w_z, w_n,
    /// u_r, u_z, u_n, b_r, b_z, b_in, b_hn`. Matrices are row-major.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for stage in [Some(&self.stage_a), self.stage_b.as_ref()].into_iter().flatten() {
            for cell in [Some(&stage.fwd), stage.bwd.as_ref()].into_iter().flatten() {
                for (tensor, _) in cell.tensors() {
                    out.extend_from_slice(tensor);
                }
            }
        }
        out.extend_from_slice(&self.head_tpc.w.data);
        out.extend_from_slice(&self.head_tpc.b);
        out.extend_from_slice(&self.head_ks.w.data);
        out.extend_from_slice(&self.head_ks.b);
        out
    }

    /// Inverse of [`ModelParams::flatten`].
    pub fn from_flat(config: ModelConfig, seed: u64, flat: &[f64]) -> Result<Self, NeuralError> {
        let mut params = Self::zeros(config);
        params.seed = seed;
        let expected = params.param_count();
        if flat.len() != expected {
            return Err(NeuralError::DimensionMismatch {
                what: "flat parameter vector",
                expected,
                got: flat.len(),
            });
        }
        let mut pos = 0usize;
        {
            let mut write = |data: &mut [f64]| {
                data.copy_from_slice(&flat[pos..pos + data.len()]);
                pos += data.len();
            };
            for stage in [Some(&mut params.stage_a), params.stage_b.as_mut()]
                .into_iter()
                .flatten()
            {
                for cell in [Some(&mut stage.fwd), stage.bwd.as_mut()].into_iter().flatten() {
                    for (tensor, _) in cell.tensors_mut() {
                        write(tensor);
                    }
                }
            }
            write(&mut params.head_tpc.w.data);
            write(&mut params.head_tpc.b);
            write(&mut params.head_ks.w.data);
            write(&mut params.head_ks.b);
        }
        debug_assert_eq!(pos, expected);
        Ok(params)
    }
}

const MAGIC: &[u8; 4] = b"PKSW";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct WeightsHeader {
    convention: String,
    duration_classes: usize,
    hidden_per_dir: usize,
    bidirectional: bool,
    variant: ArchVariant,
    dropout: f64,
    seed: u64,
    param_count: usize,
}

impl ModelParams {
    /// Serialize to the weight container: magic `PKSW`, little-endian u32
    /// version and header length, a JSON header (convention tag, dimensions,
    /// dropout, seed, parameter count), then the flattened parameters as
    /// little-endian f64. Byte-identical for identical parameters.
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = WeightsHeader {
            convention: CONVENTION.to_string(),
            duration_classes: self.config.duration_classes,
            hidden_per_dir: self.config.hidden_per_dir,
            bidirectional: self.config.bidirectional,
            variant: self.config.variant,
            dropout: self.config.dropout,
            seed: self.seed,
            param_count: self.param_count(),
        };
        let header_bytes = serde_json::to_vec(&header).expect("header serializes");
        let flat = self.flatten();
        let mut out = Vec::with_capacity(12 + header_bytes.len() + flat.len() * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header_bytes.len() as u32).to_le_bytes());
        out.extend_from_slice(&header_bytes);
        for v in flat {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NeuralError> {
        let bad = |m: &str| NeuralError::BadWeights(m.to_string());
        if bytes.len() < 12 {
            return Err(bad("file shorter than the fixed header"));
        }
        if &bytes[0..4] != MAGIC {
            return Err(bad("missing PKSW magic"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(NeuralError::BadWeights(format!(
                "unsupported version {version}"
            )));
        }
        let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let header_end = 12usize
            .checked_add(header_len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| bad("header length exceeds file"))?;
        let header: WeightsHeader = serde_json::from_slice(&bytes[12..header_end])
            .map_err(|e| NeuralError::BadWeights(format!("header: {e}")))?;
        if header.convention != CONVENTION {
            return Err(NeuralError::BadWeights(format!(
                "unknown convention {:?}",
                header.convention
            )));
        }
        if header.hidden_per_dir == 0 || header.hidden_per_dir > 1 << 16 {
            return Err(bad("hidden size out of range"));
        }
        if header.duration_classes > 1 << 16 {
            return Err(bad("duration classes out of range"));
        }
        if !(0.0..1.0).contains(&header.dropout) {
            return Err(bad("dropout outside [0, 1)"));
        }
        let config = ModelConfig {
            duration_classes: header.duration_classes,
            hidden_per_dir: header.hidden_per_dir,
            bidirectional: header.bidirectional,
            variant: header.variant,
            dropout: header.dropout,
        };
        let expected = ModelParams::zeros(config).param_count();
        if header.param_count != expected {
            return Err(NeuralError::BadWeights(format!(
                "parameter count {} does not match dimensions (expected {expected})",
                header.param_count
            )));
        }
        let payload = &bytes[header_end..];
        if payload.len() != expected * 8 {
            return Err(bad("payload size does not match parameter count"));
        }
        let flat: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        ModelParams::from_flat(config, header.seed, &flat)
    }
}
