//! Data augmentation by transposition.
//!
//! Pitch-classes move by chromatic intervals (semitones); tonal-pitch-classes
//! and key signatures move along the line of fifths. Several fifth shifts
//! produce the same chromatic interval, so one is selected per interval by
//! parsimony: the candidate whose transposed labels carry the fewest
//! accidentals, counted over note occurrences (doubles count 2, single
//! accidentals 1). Candidates that push any label out of range are discarded.

use thiserror::Error;

use crate::corpus::{LabeledPiece, Piece};
use crate::tonal::FifthShift;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AugmentError {
    #[error("chromatic interval must be in 1..=11, got {0}")]
    InvalidChromatic(u8),
    #[error("no valid transposition for this chromatic interval")]
    NoValidTransposition,
}

/// The selected transposition for one chromatic interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TranspositionChoice {
    pub chromatic: u8,
    pub fifth_shift: FifthShift,
    /// Total accidental count of the transposed labels.
    pub accidental_total: u64,
}

/// All fifth shifts in `[-12, 12]` producing the given chromatic interval,
/// ascending by magnitude with the positive shift first on ties.
pub fn candidate_shifts(chromatic: u8) -> Result<Vec<FifthShift>, AugmentError> {
    if !(1..=11).contains(&chromatic) {
        return Err(AugmentError::InvalidChromatic(chromatic));
    }
    let mut shifts: Vec<FifthShift> = (-12..=12)
        .map(FifthShift)
        .filter(|f| f.chromatic() == chromatic)
        .collect();
    shifts.sort_by_key(|f| (f.0.abs(), f.0 < 0));
    Ok(shifts)
}

/// Pick the parsimonious transposition for one chromatic interval.
///
/// Candidates where any note's tpc or any key signature transposes out of
/// range are discarded; among the survivors the smallest accidental total
/// wins, ties broken toward smaller magnitude, then the positive shift.
pub fn choose_transposition(
    piece: &LabeledPiece,
    chromatic: u8,
) -> Result<TranspositionChoice, AugmentError> {
    let mut best: Option<TranspositionChoice> = None;
    for shift in candidate_shifts(chromatic)? {
        let Some(total) = accidental_total(piece, shift) else {
            continue;
        };
        // Candidates arrive in tie-break order, so strict improvement suffices.
        if best.is_none_or(|b| total < b.accidental_total) {
            best = Some(TranspositionChoice {
                chromatic,
                fifth_shift: shift,
                accidental_total: total,
            });
        }
    }
    best.ok_or(AugmentError::NoValidTransposition)
}

/// Accidental count of the piece's labels after `shift`, or `None` if any
/// label leaves the representable range.
fn accidental_total(piece: &LabeledPiece, shift: FifthShift) -> Option<u64> {
    let mut total: u64 = 0;
    for tpc in &piece.tpcs {
        total += u64::from(tpc.transposed(shift).ok()?.accidental_cost());
    }
    for ks in &piece.keys {
        ks.transposed(shift).ok()?;
    }
    Some(total)
}

/// Transposed variants of a labeled piece, one per chromatic interval with a
/// valid parsimonious choice (up to 11). The original is not included.
pub fn augment(piece: &LabeledPiece) -> Vec<LabeledPiece> {
    (1..=11u8)
        .filter_map(|chromatic| {
            let choice = choose_transposition(piece, chromatic).ok()?;
            Some(transpose_piece(piece, choice))
        })
        .collect()
}

fn transpose_piece(piece: &LabeledPiece, choice: TranspositionChoice) -> LabeledPiece {
    let shift = choice.fifth_shift;
    let mut rows: Vec<(crate::corpus::Note, _, _)> = piece
        .piece
        .notes
        .iter()
        .zip(piece.tpcs.iter().zip(&piece.keys))
        .map(|(note, (tpc, ks))| {
            let mut note = *note;
            let mut pitch = u16::from(note.pitch) + u16::from(choice.chromatic);
            if pitch > 127 {
                pitch -= 12; // fold the top octave back into MIDI range
            }
            note.pitch = pitch as u8;
            (
                note,
                tpc.transposed(shift).expect("candidate was validated"),
                ks.transposed(shift).expect("candidate was validated"),
            )
        })
        .collect();
    // Folding can reorder same-onset notes, so restore the ordering
    // invariant with the labels attached.
    rows.sort_by(|a, b| {
        a.0.onset
            .total_cmp(&b.0.onset)
            .then(a.0.pitch.cmp(&b.0.pitch))
    });
    let transposed = Piece {
        id: format!("{}+{}", piece.piece.id, choice.chromatic),
        composer: piece.piece.composer.clone(),
        notes: rows.iter().map(|r| r.0).collect(),
    };
    let tpcs = rows.iter().map(|r| r.1).collect();
    let keys = rows.iter().map(|r| r.2).collect();
    LabeledPiece::new(transposed, tpcs, keys)
        .expect("transposition preserves pitch-class consistency")
}
