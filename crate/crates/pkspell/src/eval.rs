//! Evaluation: per-note accuracy and error counts for both tasks, grouped by
//! a piece attribute, plus per-piece global key signature accuracy.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::corpus::LabeledPiece;
use crate::neural::{predict, ModelParams, NeuralError, PredictOptions};
use crate::tonal::KeySignature;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("corpus contains no evaluable pieces")]
    EmptyCorpus,
    #[error("empty key signature list")]
    EmptyInput,
    #[error(transparent)]
    Neural(#[from] NeuralError),
}

/// Attribute used to group per-note error counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GroupBy {
    /// The piece's composer field ("unknown" when absent).
    #[default]
    Composer,
    /// The piece id.
    PieceId,
}

/// Note and error counts for one group of pieces.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GroupStats {
    pub notes: usize,
    pub tpc_errors: usize,
    pub ks_errors: usize,
}

impl GroupStats {
    pub fn tpc_error_rate(&self) -> f64 {
        rate(self.tpc_errors, self.notes)
    }

    pub fn ks_error_rate(&self) -> f64 {
        rate(self.ks_errors, self.notes)
    }

    pub fn tpc_accuracy(&self) -> f64 {
        1.0 - self.tpc_error_rate()
    }

    pub fn ks_accuracy(&self) -> f64 {
        1.0 - self.ks_error_rate()
    }
}

fn rate(errors: usize, notes: usize) -> f64 {
    if notes == 0 {
        0.0
    } else {
        errors as f64 / notes as f64
    }
}

/// Evaluation results over a labeled corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Per-group counts, keyed by the grouping attribute (sorted).
    pub groups: BTreeMap<String, GroupStats>,
    pub total: GroupStats,
    /// Pieces actually evaluated.
    pub pieces: usize,
    /// Pieces whose aggregated key signature matched the ground truth.
    pub global_ks_correct: usize,
}

impl EvalReport {
    pub fn global_ks_accuracy(&self) -> f64 {
        if self.pieces == 0 {
            0.0
        } else {
            self.global_ks_correct as f64 / self.pieces as f64
        }
    }

    /// Plain-text table: error rate and error count per group and in total,
    /// for both tasks, plus the global key signature accuracy.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let name_width = self
            .groups
            .keys()
            .map(|k| k.len())
            .chain(["total".len()])
            .max()
            .unwrap_or(5)
            .max(5);
        let _ = writeln!(
            out,
            "{:name_width$}  {:>16}  {:>16}  {:>8}",
            "group", "tpc error", "ks error", "notes"
        );
        let mut row = |name: &str, s: &GroupStats| {
            let _ = writeln!(
                out,
                "{:name_width$}  {:>7.2}% {:>7}  {:>7.2}% {:>7}  {:>8}",
                name,
                100.0 * s.tpc_error_rate(),
                format!("({})", s.tpc_errors),
                100.0 * s.ks_error_rate(),
                format!("({})", s.ks_errors),
                s.notes
            );
        };
        for (name, stats) in &self.groups {
            row(name, stats);
        }
        row("total", &self.total);
        let _ = writeln!(
            out,
            "global key signature accuracy: {:.2}% ({}/{} pieces)",
            100.0 * self.global_ks_accuracy(),
            self.global_ks_correct,
            self.pieces
        );
        out
    }
}

/// Aggregate per-note key signatures into one per-piece value by majority
/// vote; ties prefer fewer accidentals, then flats.
pub fn global_key_signature(keys: &[KeySignature]) -> Result<KeySignature, EvalError> {
    let weights = vec![1.0; keys.len()];
    global_key_signature_weighted(keys, &weights)
}

/// Like [`global_key_signature`] but with one vote weight per note
/// (typically its duration).
pub fn global_key_signature_weighted(
    keys: &[KeySignature],
    weights: &[f64],
) -> Result<KeySignature, EvalError> {
    if keys.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut tally = [0.0f64; 15];
    for (k, w) in keys.iter().zip(weights) {
        tally[k.class_index()] += w;
    }
    let winner = KeySignature::all()
        .max_by(|a, b| {
            let pref = |k: &KeySignature| {
                let fifths = i32::from(k.fifths());
                // Higher is better: tally, then fewer accidentals, then flats.
                (
                    tally[k.class_index()],
                    std::cmp::Reverse(fifths.abs()),
                    std::cmp::Reverse(fifths),
                )
            };
            pref(a).partial_cmp(&pref(b)).expect("tallies are finite")
        })
        .expect("fifteen candidates");
    Ok(winner)
}

/// Evaluation options.
#[derive(Debug, Clone, Copy, Default)]
pub struct EvalOptions {
    pub group_by: GroupBy,
    /// Weight global key signature votes by note duration instead of
    /// counting notes equally.
    pub duration_weighted_ks: bool,
}

/// Run the model over every piece and report per-note errors for both tasks,
/// grouped per [`EvalOptions::group_by`], plus global key signature
/// accuracy. Pieces without notes are skipped with a warning.
pub fn evaluate(
    corpus: &[LabeledPiece],
    params: &ModelParams,
    opts: &EvalOptions,
) -> Result<EvalReport, EvalError> {
    let mut report = EvalReport {
        groups: BTreeMap::new(),
        total: GroupStats::default(),
        pieces: 0,
        global_ks_correct: 0,
    };
    for piece in corpus {
        if piece.is_empty() {
            log::warn!("skipping empty piece {:?}", piece.piece.id);
            continue;
        }
        let (tpcs, keys) = predict(&piece.piece, params, &PredictOptions::default())?;
        let group = match opts.group_by {
            GroupBy::Composer => piece
                .piece
                .composer
                .clone()
                .unwrap_or_else(|| "unknown".to_string()),
            GroupBy::PieceId => piece.piece.id.clone(),
        };
        let stats = report.groups.entry(group).or_default();
        stats.notes += piece.len();
        stats.tpc_errors += tpcs.iter().zip(&piece.tpcs).filter(|(a, b)| a != b).count();
        stats.ks_errors += keys.iter().zip(&piece.keys).filter(|(a, b)| a != b).count();

        report.pieces += 1;
        let vote = |ks: &[KeySignature]| {
            if opts.duration_weighted_ks {
                let weights: Vec<f64> = piece.piece.notes.iter().map(|n| n.duration).collect();
                global_key_signature_weighted(ks, &weights)
            } else {
                global_key_signature(ks)
            }
        };
        let truth = vote(&piece.keys)?;
        let predicted = vote(&keys)?;
        if truth == predicted {
            report.global_ks_correct += 1;
        }
    }
    if report.pieces == 0 {
        return Err(EvalError::EmptyCorpus);
    }
    for stats in report.groups.values() {
        report.total.notes += stats.notes;
        report.total.tpc_errors += stats.tpc_errors;
        report.total.ks_errors += stats.ks_errors;
    }
    Ok(report)
}
