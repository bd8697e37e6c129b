//! Note sequences, labeled pieces, and the two text interchange formats:
//! the line-delimited labeled corpus and the prediction document.
//!
//! Corpus format: one piece per line, each line a JSON object
//! `{"id": ..., "composer": ..., "notes": [{"onset", "duration", "pitch",
//! "tpc", "ks"}, ...]}` (composer optional). Prediction format: a single JSON
//! object `{"id", "notes": [{"onset", "pitch", "tpc", "ks"}], "global_ks"}`
//! with keys always in that order. Both are UTF-8; writing is deterministic,
//! byte-identical for identical inputs.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tonal::{KeySignature, PitchClass, Tpc};

/// One note event: onset and duration in seconds, MIDI pitch in `[0, 127]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Note {
    pub onset: f64,
    pub duration: f64,
    pub pitch: u8,
}

impl Note {
    pub fn pitch_class(&self) -> PitchClass {
        PitchClass::from_midi(self.pitch)
    }
}

/// An ordered note sequence. Notes are sorted by onset, ties by pitch
/// low-to-high; equal (onset, pitch) keep their source order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Piece {
    pub id: String,
    pub composer: Option<String>,
    pub notes: Vec<Note>,
}

impl Piece {
    /// Restore the ordering invariant (stable, so equal keys keep source order).
    pub fn sort_notes(&mut self) {
        self.notes
            .sort_by(|a, b| a.onset.total_cmp(&b.onset).then(a.pitch.cmp(&b.pitch)));
    }
}

/// A piece with one tonal-pitch-class and one key signature per note.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPiece {
    pub piece: Piece,
    pub tpcs: Vec<Tpc>,
    pub keys: Vec<KeySignature>,
}

impl LabeledPiece {
    /// Build a labeled piece, checking the per-note label invariants:
    /// label lists match the note count and every tpc sounds as its note's
    /// pitch class.
    pub fn new(
        piece: Piece,
        tpcs: Vec<Tpc>,
        keys: Vec<KeySignature>,
    ) -> Result<Self, CorpusError> {
        if tpcs.len() != piece.notes.len() || keys.len() != piece.notes.len() {
            return Err(CorpusError::LengthMismatch {
                piece: piece.id.clone(),
                notes: piece.notes.len(),
                labels: tpcs.len().min(keys.len()),
            });
        }
        for (i, (note, tpc)) in piece.notes.iter().zip(&tpcs).enumerate() {
            if tpc.pitch_class() != note.pitch_class() {
                return Err(CorpusError::Consistency {
                    piece: piece.id.clone(),
                    note: i,
                    tpc: tpc.to_string(),
                    pitch: note.pitch,
                });
            }
        }
        Ok(LabeledPiece { piece, tpcs, keys })
    }

    pub fn len(&self) -> usize {
        self.piece.notes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.piece.notes.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("piece {piece:?} note {note}: tpc {tpc} does not sound as pitch {pitch}")]
    Consistency {
        piece: String,
        note: usize,
        tpc: String,
        pitch: u8,
    },
    #[error("piece {piece:?}: {notes} notes but {labels} labels")]
    LengthMismatch {
        piece: String,
        notes: usize,
        labels: usize,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Serialize, Deserialize)]
struct NoteRecord {
    onset: f64,
    duration: f64,
    pitch: u8,
    tpc: Tpc,
    ks: i8,
}

#[derive(Serialize, Deserialize)]
struct PieceRecord {
    id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    composer: Option<String>,
    notes: Vec<NoteRecord>,
}

/// Read a labeled corpus (one JSON piece per line; blank lines ignored).
///
/// Validates pitch/tpc consistency and restores the note ordering invariant.
pub fn read_corpus<R: BufRead>(reader: R) -> Result<Vec<LabeledPiece>, CorpusError> {
    let mut pieces = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PieceRecord =
            serde_json::from_str(&line).map_err(|e| CorpusError::Schema {
                line: lineno + 1,
                message: e.to_string(),
            })?;
        pieces.push(piece_from_record(record, lineno + 1)?);
    }
    if pieces.is_empty() {
        log::warn!("corpus contains no pieces");
    }
    Ok(pieces)
}

fn piece_from_record(record: PieceRecord, line: usize) -> Result<LabeledPiece, CorpusError> {
    let mut rows: Vec<(Note, Tpc, KeySignature)> = Vec::with_capacity(record.notes.len());
    for (i, n) in record.notes.into_iter().enumerate() {
        if n.pitch > 127 {
            return Err(CorpusError::Schema {
                line,
                message: format!("note {i}: pitch {} out of range", n.pitch),
            });
        }
        let ks = KeySignature::new(n.ks).ok_or_else(|| CorpusError::Schema {
            line,
            message: format!("note {i}: key signature {} out of range", n.ks),
        })?;
        let duration = if n.duration.is_finite() && n.duration > 0.0 {
            n.duration
        } else {
            log::warn!(
                "piece {:?} note {i}: clamping duration {} to 1 ms",
                record.id,
                n.duration
            );
            1e-3
        };
        if !n.onset.is_finite() || n.onset < 0.0 {
            return Err(CorpusError::Schema {
                line,
                message: format!("note {i}: onset {} invalid", n.onset),
            });
        }
        rows.push((
            Note {
                onset: n.onset,
                duration,
                pitch: n.pitch,
            },
            n.tpc,
            ks,
        ));
    }
    rows.sort_by(|a, b| {
        a.0.onset
            .total_cmp(&b.0.onset)
            .then(a.0.pitch.cmp(&b.0.pitch))
    });
    let mut piece = Piece {
        id: record.id,
        composer: record.composer,
        notes: Vec::with_capacity(rows.len()),
    };
    let mut tpcs = Vec::with_capacity(rows.len());
    let mut keys = Vec::with_capacity(rows.len());
    for (note, tpc, ks) in rows {
        piece.notes.push(note);
        tpcs.push(tpc);
        keys.push(ks);
    }
    LabeledPiece::new(piece, tpcs, keys)
}

/// Write a labeled corpus, one piece per line.
pub fn write_corpus<W: Write>(pieces: &[LabeledPiece], mut writer: W) -> Result<(), CorpusError> {
    for lp in pieces {
        let record = PieceRecord {
            id: lp.piece.id.clone(),
            composer: lp.piece.composer.clone(),
            notes: lp
                .piece
                .notes
                .iter()
                .zip(lp.tpcs.iter().zip(&lp.keys))
                .map(|(n, (tpc, ks))| NoteRecord {
                    onset: n.onset,
                    duration: n.duration,
                    pitch: n.pitch,
                    tpc: *tpc,
                    ks: ks.fifths(),
                })
                .collect(),
        };
        serde_json::to_writer(&mut writer, &record).map_err(io_error)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct PredictionNote {
    onset: f64,
    pitch: u8,
    tpc: Tpc,
    ks: i8,
}

/// A prediction document: per-note spelling and key signature for one piece,
/// plus the aggregated global key signature (absent for empty pieces).
#[derive(Serialize, Deserialize)]
pub struct PredictionDoc {
    id: String,
    notes: Vec<PredictionNote>,
    #[serde(skip_serializing_if = "Option::is_none")]
    global_ks: Option<i8>,
}

impl PredictionDoc {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn global_ks(&self) -> Option<i8> {
        self.global_ks
    }

    pub fn labels(&self) -> impl Iterator<Item = (Tpc, i8)> + '_ {
        self.notes.iter().map(|n| (n.tpc, n.ks))
    }
}

/// Serialize predictions for one piece. Deterministic: identical inputs
/// produce identical bytes.
pub fn write_predictions(
    piece: &Piece,
    tpcs: &[Tpc],
    keys: &[KeySignature],
    global_ks: Option<KeySignature>,
) -> Result<Vec<u8>, CorpusError> {
    if tpcs.len() != piece.notes.len() || keys.len() != piece.notes.len() {
        return Err(CorpusError::LengthMismatch {
            piece: piece.id.clone(),
            notes: piece.notes.len(),
            labels: tpcs.len().min(keys.len()),
        });
    }
    let doc = PredictionDoc {
        id: piece.id.clone(),
        notes: piece
            .notes
            .iter()
            .zip(tpcs.iter().zip(keys))
            .map(|(n, (tpc, ks))| PredictionNote {
                onset: n.onset,
                pitch: n.pitch,
                tpc: *tpc,
                ks: ks.fifths(),
            })
            .collect(),
        global_ks: global_ks.map(KeySignature::fifths),
    };
    let mut bytes = serde_json::to_vec(&doc).map_err(io_error)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Parse a prediction document produced by [`write_predictions`].
pub fn read_predictions(bytes: &[u8]) -> Result<PredictionDoc, CorpusError> {
    serde_json::from_slice(bytes).map_err(|e| CorpusError::Schema {
        line: 1,
        message: e.to_string(),
    })
}

fn io_error(e: serde_json::Error) -> CorpusError {
    CorpusError::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}
