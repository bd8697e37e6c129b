//! Acceptance suite: one test per release criterion, each printing a
//! PASS line (run with `cargo test --test acceptance -- --nocapture` to see
//! them). Oracles here are written independently of the library internals
//! they check.

use std::time::Instant;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

use pkspell::augment::{augment, choose_transposition};
use pkspell::corpus::{LabeledPiece, Note, Piece};
use pkspell::eval::{evaluate, EvalOptions, GroupBy};
use pkspell::midi::read_midi;
use pkspell::neural::{
    backward, forward, loss, predict, ArchVariant, ModelConfig, ModelParams, PredictOptions,
};
use pkspell::quant::kmeans_1d;
use pkspell::tonal::{FifthShift, KeySignature, PitchClass, Tpc};
use pkspell::train::{train, TrainConfig};

// ---------------------------------------------------------------------------
// Criterion 1: analytic gradients vs central finite differences.
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_gradient_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(0x9dad);
    let mut worst: f64 = 0.0;
    let mut checked_params = 0usize;

    for instance in 0..100 {
        // Hidden size 8 per direction; cycle through the architecture
        // variants so the same check covers every ablation.
        let config = match instance % 5 {
            0 => cfg(ArchVariant::TwoStage, true, 4),
            1 => cfg(ArchVariant::SingleStage, true, 4),
            2 => cfg(ArchVariant::Separate, true, 4),
            3 => cfg(ArchVariant::TwoStage, false, 4),
            _ => cfg(ArchVariant::TwoStage, true, 0),
        };
        let params = ModelParams::init(config, rng.gen());
        let steps = rng.gen_range(1..=6);
        let inputs: Vec<Vec<f64>> = (0..steps)
            .map(|_| {
                let mut row = vec![0.0; config.input_dim()];
                row[rng.gen_range(0..12)] = 1.0;
                if config.duration_classes > 0 {
                    row[12 + rng.gen_range(0..config.duration_classes)] = 1.0;
                }
                row
            })
            .collect();
        let tpc_labels: Vec<usize> = (0..steps).map(|_| rng.gen_range(0..35)).collect();
        let ks_labels: Vec<usize> = (0..steps).map(|_| rng.gen_range(0..15)).collect();
        let mask = vec![true; steps];

        let (_, grads) =
            backward(&inputs, &tpc_labels, &ks_labels, &mask, &params, None).unwrap();
        let analytic = grads.flatten();
        let flat = params.flatten();
        let step = 1e-5;
        let eval_loss = |theta: &[f64]| -> f64 {
            let p = ModelParams::from_flat(config, 0, theta).unwrap();
            loss(
                &forward(&inputs, &p).unwrap(),
                &tpc_labels,
                &ks_labels,
                &mask,
            )
            .unwrap()
        };
        for i in 0..flat.len() {
            let mut plus = flat.clone();
            plus[i] += step;
            let mut minus = flat.clone();
            minus[i] -= step;
            let numeric = (eval_loss(&plus) - eval_loss(&minus)) / (2.0 * step);
            // Guarded relative error: tiny components are compared on an
            // absolute scale where finite differences bottom out.
            let denom = analytic[i].abs().max(numeric.abs()).max(1e-3);
            worst = worst.max((analytic[i] - numeric).abs() / denom);
        }
        checked_params += flat.len();
    }

    let elapsed = start.elapsed();
    assert!(worst < 1e-4, "max relative error {worst}");
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    println!(
        "ACCEPTANCE gradient oracle: PASS (100 instances, {checked_params} parameters, \
         max rel err {worst:.2e}, {elapsed:?})"
    );
}

fn cfg(variant: ArchVariant, bidirectional: bool, durations: usize) -> ModelConfig {
    ModelConfig {
        duration_classes: durations,
        hidden_per_dir: 8,
        bidirectional,
        variant,
        dropout: 0.3,
    }
}

// ---------------------------------------------------------------------------
// Criterion 2: exact 1-D k-means vs exhaustive contiguous-partition search.
// ---------------------------------------------------------------------------

/// Exhaustive search over contiguous partitions of the sorted distinct
/// values into at most k clusters, preferring the lexicographically smallest
/// boundary list among cost ties. Cost arithmetic matches the definition
/// used by the DP (prefix moments, suffix-associated totals).
fn exhaustive_kmeans(durations: &[f64], k: usize) -> (f64, Vec<usize>) {
    let mut sorted = durations.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut values: Vec<f64> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    for &v in &sorted {
        if values.last() != Some(&v) {
            values.push(v);
            weights.push(0.0);
        }
        *weights.last_mut().unwrap() += 1.0;
    }
    let m = values.len();
    let mut pw = vec![0.0; m + 1];
    let mut py = vec![0.0; m + 1];
    let mut py2 = vec![0.0; m + 1];
    for i in 0..m {
        pw[i + 1] = pw[i] + weights[i];
        py[i + 1] = py[i] + weights[i] * values[i];
        py2[i + 1] = py2[i] + weights[i] * values[i] * values[i];
    }
    let seg = |i: usize, j: usize| -> f64 {
        if i == j {
            return 0.0;
        }
        let w = pw[j + 1] - pw[i];
        let sy = py[j + 1] - py[i];
        let sy2 = py2[j + 1] - py2[i];
        (sy2 - sy * (sy / w)).max(0.0)
    };

    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut consider = |bounds: &[usize]| {
        let mut starts = vec![0usize];
        starts.extend_from_slice(bounds);
        starts.push(m);
        let mut cost = 0.0;
        for c in (0..starts.len() - 1).rev() {
            // Suffix association matters: it matches the DP's sum order.
            #[allow(clippy::assign_op_pattern)]
            {
                cost = seg(starts[c], starts[c + 1] - 1) + cost;
            }
        }
        let better = match &best {
            None => true,
            Some((bc, bb)) => cost < *bc || (cost == *bc && bounds < bb.as_slice()),
        };
        if better {
            best = Some((cost, bounds.to_vec()));
        }
    };

    // Enumerate every ascending boundary list of length 0..k-1.
    let mut stack: Vec<Vec<usize>> = vec![Vec::new()];
    while let Some(bounds) = stack.pop() {
        consider(&bounds);
        if bounds.len() + 1 < k {
            let from = bounds.last().map_or(1, |&b| b + 1);
            for b in from..m {
                let mut next = bounds.clone();
                next.push(b);
                stack.push(next);
            }
        }
    }
    best.unwrap()
}

#[test]
fn criterion_2_kmeans_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(0x1d);
    let mut cases = 0usize;
    while cases < 1200 {
        let n = rng.gen_range(1..=12);
        let k = rng.gen_range(1..=4);
        // Mix: small integers force cost ties; uniform reals cover the
        // generic position.
        let durations: Vec<f64> = (0..n)
            .map(|_| {
                if rng.gen_bool(0.5) {
                    rng.gen_range(1..=6) as f64
                } else {
                    rng.gen_range(0.001..100.0)
                }
            })
            .collect();

        let dp = kmeans_1d(&durations, k).unwrap();
        let (oracle_cost, oracle_bounds) = exhaustive_kmeans(&durations, k);
        assert_eq!(
            dp.total_cost, oracle_cost,
            "cost mismatch for {durations:?} k={k}"
        );

        // Recover the DP's distinct-value boundaries from its assignment and
        // compare them under the tie rule.
        let mut sorted: Vec<(f64, usize)> = durations
            .iter()
            .zip(&dp.assignment)
            .map(|(&d, c)| (d, c.index()))
            .collect();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut dp_bounds = Vec::new();
        let mut distinct = 0usize;
        let mut last: Option<(f64, usize)> = None;
        for &(v, c) in &sorted {
            if let Some((lv, lc)) = last {
                if v != lv {
                    distinct += 1;
                    if c != lc {
                        dp_bounds.push(distinct);
                    }
                } else {
                    assert_eq!(c, lc, "equal durations split across classes");
                }
            }
            last = Some((v, c));
        }
        assert_eq!(
            dp_bounds, oracle_bounds,
            "assignment mismatch for {durations:?} k={k}"
        );
        cases += 1;
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    println!("ACCEPTANCE k-means oracle: PASS ({cases} cases, {elapsed:?})");
}

// ---------------------------------------------------------------------------
// Criterion 3: parsimonious transposition choice vs exhaustive search.
// ---------------------------------------------------------------------------

/// Independent accidental accounting from raw line-of-fifths integers.
fn oracle_choice(
    tpc_indices: &[i32],
    ks_fifths: &[i32],
    chromatic: u8,
) -> Option<(i32, u64)> {
    let alter_of = |idx: i32| -> i32 {
        let base = (idx + 1).rem_euclid(7) - 1;
        (idx - base) / 7
    };
    let mut best: Option<(i32, u64)> = None;
    for shift in -12i32..=12 {
        if (7 * shift).rem_euclid(12) != i32::from(chromatic) {
            continue;
        }
        let mut total: u64 = 0;
        let mut valid = true;
        for &idx in tpc_indices {
            let moved = idx + shift;
            if !(-15..=19).contains(&moved) {
                valid = false;
                break;
            }
            total += alter_of(moved).unsigned_abs() as u64;
        }
        if valid {
            for &f in ks_fifths {
                if !(-7..=7).contains(&(f + shift)) {
                    valid = false;
                    break;
                }
            }
        }
        if !valid {
            continue;
        }
        let better = match best {
            None => true,
            Some((bs, bt)) => {
                total < bt || (total == bt && (shift.abs(), shift < 0) < (bs.abs(), bs < 0))
            }
        };
        if better {
            best = Some((shift, total));
        }
    }
    best
}

fn random_labeled_piece(rng: &mut ChaCha20Rng, id: usize) -> LabeledPiece {
    let len = rng.gen_range(1..=20);
    let ks = KeySignature::new(rng.gen_range(-7..=7)).unwrap();
    let mut notes = Vec::with_capacity(len);
    let mut tpcs = Vec::with_capacity(len);
    let mut keys = Vec::with_capacity(len);
    for i in 0..len {
        let tpc = Tpc::from_class_index(rng.gen_range(0..35)).unwrap();
        let pitch = 48 + tpc.pitch_class().value();
        notes.push(Note {
            onset: i as f64 * 0.5,
            duration: 0.25 + 0.25 * rng.gen_range(0..3) as f64,
            pitch,
        });
        tpcs.push(tpc);
        keys.push(if rng.gen_bool(0.9) {
            ks
        } else {
            KeySignature::new(rng.gen_range(-7..=7)).unwrap()
        });
    }
    let piece = Piece {
        id: format!("r{id}"),
        composer: None,
        notes,
    };
    LabeledPiece::new(piece, tpcs, keys).unwrap()
}

#[test]
fn criterion_3_augmentation_oracle() {
    let mut rng = ChaCha20Rng::seed_from_u64(0xa46);
    for id in 0..200 {
        let piece = random_labeled_piece(&mut rng, id);
        let tpc_indices: Vec<i32> = piece.tpcs.iter().map(|t| t.fifth_index()).collect();
        let ks_fifths: Vec<i32> = piece.keys.iter().map(|k| i32::from(k.fifths())).collect();
        for chromatic in 1..=11u8 {
            let got = choose_transposition(&piece, chromatic).ok();
            let expected = oracle_choice(&tpc_indices, &ks_fifths, chromatic);
            match (got, expected) {
                (None, None) => {}
                (Some(choice), Some((shift, total))) => {
                    assert_eq!(choice.fifth_shift.0, shift, "piece {id} chromatic {chromatic}");
                    assert_eq!(choice.accidental_total, total);
                }
                (got, expected) => {
                    panic!("piece {id} chromatic {chromatic}: {got:?} vs {expected:?}")
                }
            }
        }
        // Every emitted variant must satisfy the label invariants.
        for variant in augment(&piece) {
            LabeledPiece::new(variant.piece.clone(), variant.tpcs.clone(), variant.keys.clone())
                .expect("variant passes validation");
        }
    }

    // The diatonic major-scale fixture admits every chromatic interval.
    let piece = c_major_scale();
    let variants = augment(&piece);
    assert_eq!(variants.len(), 11);
    assert_eq!(choose_transposition(&piece, 7).unwrap().fifth_shift, FifthShift(1));
    assert_eq!(choose_transposition(&piece, 1).unwrap().fifth_shift, FifthShift(-5));
    println!("ACCEPTANCE augmentation oracle: PASS (200 pieces x 11 intervals)");
}

fn c_major_scale() -> LabeledPiece {
    scale_piece("cmaj", None, 60, ["C", "D", "E", "F", "G", "A", "B"], 0, 1)
}

/// A scale piece: `cycles` up-and-down traversals of the major scale on
/// `tonic`, with a repeating duration pattern.
fn scale_piece(
    id: &str,
    composer: Option<&str>,
    tonic: u8,
    names: [&str; 7],
    fifths: i8,
    cycles: usize,
) -> LabeledPiece {
    let offsets = [0u8, 2, 4, 5, 7, 9, 11];
    let durations = [0.5, 0.25, 0.5, 1.0];
    let mut notes = Vec::new();
    let mut tpcs: Vec<Tpc> = Vec::new();
    let mut onset = 0.0;
    for c in 0..cycles {
        for i in 0..7 {
            let degree = if c % 2 == 0 { i } else { 6 - i };
            let duration = durations[(c * 7 + i) % durations.len()];
            notes.push(Note {
                onset,
                duration,
                pitch: tonic + offsets[degree],
            });
            tpcs.push(names[degree].parse().unwrap());
            onset += duration;
        }
    }
    let n = notes.len();
    let piece = Piece {
        id: id.into(),
        composer: composer.map(str::to_string),
        notes,
    };
    LabeledPiece::new(piece, tpcs, vec![KeySignature::new(fifths).unwrap(); n]).unwrap()
}

// ---------------------------------------------------------------------------
// Criterion 4: tonal arithmetic, exhaustively.
// ---------------------------------------------------------------------------

#[test]
fn criterion_4_tonal_arithmetic() {
    // Naming round-trips over all 35 classes.
    for t in Tpc::all() {
        assert_eq!(t.to_string().parse::<Tpc>().unwrap(), t);
    }

    // The enharmonic table: pitch class -> spelled names, in line-of-fifths
    // order. Exactly the published correspondence.
    let table: [(u8, &[&str]); 12] = [
        (0, &["Dbb", "C", "B#"]),
        (1, &["Db", "C#", "B##"]),
        (2, &["Ebb", "D", "C##"]),
        (3, &["Fbb", "Eb", "D#"]),
        (4, &["Fb", "E", "D##"]),
        (5, &["Gbb", "F", "E#"]),
        (6, &["Gb", "F#", "E##"]),
        (7, &["Abb", "G", "F##"]),
        (8, &["Ab", "G#"]),
        (9, &["Bbb", "A", "G##"]),
        (10, &["Cbb", "Bb", "A#"]),
        (11, &["Cb", "B", "A##"]),
    ];
    let mut seen = 0usize;
    for (pc, names) in table {
        let got: Vec<String> = PitchClass::new(pc)
            .unwrap()
            .enharmonics()
            .iter()
            .map(Tpc::to_string)
            .collect();
        assert_eq!(got, names, "pitch class {pc}");
        seen += names.len();
    }
    assert_eq!(seen, 35);

    // Transposition commutes with the sounding pitch class for every
    // in-range (class, shift) pair.
    for t in Tpc::all() {
        for shift in -12i32..=12 {
            if let Ok(moved) = t.transposed(FifthShift(shift)) {
                let expected =
                    (i32::from(t.pitch_class().value()) + 7 * shift).rem_euclid(12);
                assert_eq!(i32::from(moved.pitch_class().value()), expected);
                assert_eq!(moved.transposed(FifthShift(-shift)), Ok(t));
            }
        }
    }
    println!("ACCEPTANCE tonal arithmetic: PASS (35 classes, shifts -12..=12)");
}

// ---------------------------------------------------------------------------
// Criterion 5: overfit sanity on four synthetic pieces.
// ---------------------------------------------------------------------------

fn overfit_corpus() -> Vec<LabeledPiece> {
    vec![
        scale_piece("c", Some("a"), 60, ["C", "D", "E", "F", "G", "A", "B"], 0, 4),
        scale_piece("g", Some("a"), 55, ["G", "A", "B", "C", "D", "E", "F#"], 1, 4),
        scale_piece("f", Some("b"), 53, ["F", "G", "A", "Bb", "C", "D", "E"], -1, 4),
        scale_piece("d", Some("b"), 62, ["D", "E", "F#", "G", "A", "B", "C#"], 2, 4),
    ]
}

#[test]
fn criterion_5_overfit_sanity() {
    let start = Instant::now();
    let corpus = overfit_corpus();
    assert!(corpus.iter().all(|p| p.len() <= 50));
    let config = TrainConfig {
        epochs: 200,
        split_fraction: 1.0,
        augment: false,
        seed: 11,
        ..TrainConfig::default()
    };
    // Default architecture: two bidirectional stages, 150 units per
    // direction, dropout 0.3.
    assert_eq!(config.hidden_per_dir, 150);

    let outcome = train(&corpus, &config).unwrap();
    let hit = outcome
        .history
        .iter()
        .find(|e| e.train_tpc_accuracy >= 0.99 && e.train_ks_accuracy >= 0.99);
    let elapsed = start.elapsed();
    let hit = hit.unwrap_or_else(|| {
        panic!(
            "never reached 99%/99%; best tpc {:.4}, ks {:.4}",
            outcome
                .history
                .iter()
                .map(|e| e.train_tpc_accuracy)
                .fold(0.0, f64::max),
            outcome
                .history
                .iter()
                .map(|e| e.train_ks_accuracy)
                .fold(0.0, f64::max),
        )
    });
    assert!(elapsed.as_secs_f64() < 120.0, "took {elapsed:?}");
    println!(
        "ACCEPTANCE overfit sanity: PASS (99% on both tasks by epoch {}, {elapsed:?})",
        hit.epoch
    );
}

// ---------------------------------------------------------------------------
// Criterion 6: uniform loss of the all-zero model.
// ---------------------------------------------------------------------------

#[test]
fn criterion_6_uniform_loss() {
    let params = ModelParams::zeros(ModelConfig::default());
    let inputs: Vec<Vec<f64>> = (0..7)
        .map(|i| {
            let mut row = vec![0.0; 16];
            row[i % 12] = 1.0;
            row[12 + i % 4] = 1.0;
            row
        })
        .collect();
    let out = forward(&inputs, &params).unwrap();
    let tpc_labels: Vec<usize> = (0..7).map(|i| (i * 5) % 35).collect();
    let ks_labels: Vec<usize> = (0..7).map(|i| (i * 2) % 15).collect();
    let l = loss(&out, &tpc_labels, &ks_labels, &[true; 7]).unwrap();
    let expected = (35.0f64).ln() + (15.0f64).ln();
    assert!(
        (l - expected).abs() < 1e-6,
        "per-note loss {l} vs ln(35)+ln(15) = {expected}"
    );
    println!("ACCEPTANCE uniform loss: PASS ({l:.9} vs {expected:.9})");
}

// ---------------------------------------------------------------------------
// Criterion 7: predictions survive a 2x tempo scaling bit-for-bit.
// ---------------------------------------------------------------------------

fn fixture_smf(tempo_scale: u32) -> Vec<u8> {
    fn varint(mut v: u32) -> Vec<u8> {
        let mut rev = vec![(v & 0x7f) as u8];
        v >>= 7;
        while v > 0 {
            rev.push(0x80 | (v & 0x7f) as u8);
            v >>= 7;
        }
        rev.reverse();
        rev
    }
    let mut track: Vec<u8> = Vec::new();
    let tempo = |track: &mut Vec<u8>, delta: u32, us: u32| {
        track.extend(varint(delta));
        track.extend([0xff, 0x51, 0x03]);
        track.extend_from_slice(&(us * tempo_scale).to_be_bytes()[1..]);
    };
    let on = |track: &mut Vec<u8>, delta: u32, pitch: u8| {
        track.extend(varint(delta));
        track.extend([0x90, pitch, 80]);
    };
    let off = |track: &mut Vec<u8>, delta: u32, pitch: u8| {
        track.extend(varint(delta));
        track.extend([0x80, pitch, 0]);
    };
    tempo(&mut track, 0, 500_000);
    // A little melody with a chord and notes across a tempo change.
    on(&mut track, 0, 60);
    on(&mut track, 0, 64);
    on(&mut track, 0, 67);
    off(&mut track, 480, 60);
    off(&mut track, 0, 64);
    off(&mut track, 0, 67);
    on(&mut track, 0, 62);
    tempo(&mut track, 240, 250_000);
    off(&mut track, 240, 62);
    on(&mut track, 0, 65);
    off(&mut track, 960, 65);
    on(&mut track, 0, 69);
    off(&mut track, 120, 69);
    track.extend([0x00, 0xff, 0x2f, 0x00]);

    let mut out = Vec::new();
    out.extend_from_slice(b"MThd");
    out.extend_from_slice(&6u32.to_be_bytes());
    out.extend_from_slice(&0u16.to_be_bytes());
    out.extend_from_slice(&1u16.to_be_bytes());
    out.extend_from_slice(&480u16.to_be_bytes());
    out.extend_from_slice(b"MTrk");
    out.extend_from_slice(&(track.len() as u32).to_be_bytes());
    out.extend_from_slice(&track);
    out
}

#[test]
fn criterion_7_tempo_scale_invariance() {
    let piece = read_midi(&fixture_smf(1)).unwrap();
    let slowed = read_midi(&fixture_smf(2)).unwrap();
    assert_eq!(piece.notes.len(), slowed.notes.len());
    for (a, b) in piece.notes.iter().zip(&slowed.notes) {
        assert_eq!(a.duration * 2.0, b.duration);
    }

    let params = ModelParams::init(ModelConfig::default(), 99);
    let opts = PredictOptions::default();
    let original = predict(&piece, &params, &opts).unwrap();
    let scaled = predict(&slowed, &params, &opts).unwrap();
    assert_eq!(original, scaled);
    println!(
        "ACCEPTANCE tempo scale invariance: PASS ({} notes)",
        piece.notes.len()
    );
}

// ---------------------------------------------------------------------------
// Criterion 8: training determinism and exact planted-error accounting.
// ---------------------------------------------------------------------------

fn truncated(mut piece: LabeledPiece, n: usize) -> LabeledPiece {
    piece.piece.notes.truncate(n);
    piece.tpcs.truncate(n);
    piece.keys.truncate(n);
    piece
}

#[test]
fn criterion_8_determinism_and_planted_errors() {
    // Twenty 50-note pieces in four well-separated keys: exactly 1000 notes.
    let keys: [(&str, u8, [&str; 7], i8); 4] = [
        ("x", 60, ["C", "D", "E", "F", "G", "A", "B"], 0),
        ("x", 57, ["A", "B", "C#", "D", "E", "F#", "G#"], 3),
        ("y", 63, ["Eb", "F", "G", "Ab", "Bb", "C", "D"], -3),
        ("y", 59, ["B", "C#", "D#", "E", "F#", "G#", "A#"], 5),
    ];
    let mut corpus = Vec::new();
    for i in 0..20 {
        let (composer, tonic, names, fifths) = keys[i % 4];
        let piece = scale_piece(
            &format!("p{i:02}"),
            Some(composer),
            tonic + 12 * ((i / 4) % 2) as u8,
            names,
            fifths,
            8,
        );
        corpus.push(truncated(piece, 50));
    }
    assert_eq!(corpus.iter().map(LabeledPiece::len).sum::<usize>(), 1000);

    let config = TrainConfig {
        epochs: 100,
        lr_drop_epoch: 50,
        hidden_per_dir: 32,
        dropout: 0.0,
        split_fraction: 1.0,
        augment: false,
        seed: 5,
        ..TrainConfig::default()
    };

    // Two full runs, byte-identical weights.
    let first = train(&corpus, &config).unwrap();
    let second = train(&corpus, &config).unwrap();
    let bytes = first.params.to_bytes();
    assert_eq!(bytes, second.params.to_bytes(), "weight bytes differ");

    // The overfit model reproduces its training labels exactly, so a corpus
    // with planted label changes yields exactly those error counts.
    let clean = evaluate(&corpus, &first.params, &EvalOptions { group_by: GroupBy::Composer, ..Default::default() }).unwrap();
    assert_eq!(clean.total.notes, 1000);
    assert_eq!(
        (clean.total.tpc_errors, clean.total.ks_errors),
        (0, 0),
        "model did not fully fit the corpus; accuracies {:.4}/{:.4}",
        1.0 - clean.total.tpc_error_rate(),
        1.0 - clean.total.ks_error_rate()
    );

    let mut planted = corpus.clone();
    {
        // One spelling error in piece p00 (composer x): respell note 10 as
        // its other enharmonic.
        let piece = &mut planted[0];
        let old = piece.tpcs[10];
        let new = old
            .pitch_class()
            .enharmonics()
            .into_iter()
            .find(|&t| t != old)
            .unwrap();
        piece.tpcs[10] = new;
        // One key signature error in piece p02 (composer y).
        let piece = &mut planted[2];
        let old = piece.keys[20];
        piece.keys[20] = KeySignature::new(if old.fifths() == 0 { 1 } else { 0 }).unwrap();
    }

    let report = evaluate(&planted, &first.params, &EvalOptions { group_by: GroupBy::Composer, ..Default::default() }).unwrap();
    assert_eq!(report.total.notes, 1000);
    assert_eq!(report.total.tpc_errors, 1);
    assert_eq!(report.total.ks_errors, 1);
    assert_eq!(report.total.tpc_error_rate(), 0.001); // 0.10%
    assert_eq!(report.groups["x"].tpc_errors, 1);
    assert_eq!(report.groups["y"].tpc_errors, 0);
    assert_eq!(report.groups["x"].ks_errors, 0);
    assert_eq!(report.groups["y"].ks_errors, 1);
    // One flipped note out of 50 does not move a piece's majority vote.
    assert_eq!(report.global_ks_correct, 20);

    let table = report.render_table();
    assert!(table.contains("0.10%"), "{table}");
    println!("ACCEPTANCE determinism and planted errors: PASS\n{table}");
}

// ---------------------------------------------------------------------------
// Criterion 9: MIDI conformance on hand-computed fixtures.
// ---------------------------------------------------------------------------

#[test]
fn criterion_9_midi_conformance() {
    // Checked-in fixture: mid-track tempo change plus a chord.
    let bytes = include_bytes!("fixtures/tempo_chord.mid");
    let piece = read_midi(bytes).unwrap();

    // The file holds, at 480 ticks per quarter:
    //   tick 0:    tempo 500000, chord on (64, 60)
    //   tick 480:  chord off, note 67 on
    //   tick 720:  tempo 250000
    //   tick 960:  note 67 off, note 72 on
    //   tick 1440: note 72 off, end of track
    //
    // Seconds by hand: the first quarter (480 ticks) spans 0.5 s. Tick 720
    // is 0.75 s; tick 960 adds 240 ticks at 250000 us/q = 0.125 s -> 0.875 s;
    // tick 1440 adds another 480 ticks at the fast tempo -> 1.125 s.
    let expected: [(u8, f64, f64); 4] = [
        (60, 0.0, 0.5),   // chord ordered low-to-high
        (64, 0.0, 0.5),
        (67, 0.5, 0.375), // spans the tempo change: 0.25 + 0.125
        (72, 0.875, 0.25),
    ];
    assert_eq!(piece.notes.len(), expected.len());
    for (note, (pitch, onset, duration)) in piece.notes.iter().zip(expected) {
        assert_eq!(note.pitch, pitch);
        assert_eq!(note.onset, onset, "onset of pitch {pitch}");
        assert_eq!(note.duration, duration, "duration of pitch {pitch}");
    }

    // Checked-in format-1 fixture: conductor track with the tempo map,
    // two melody tracks with a shared onset. 960 ticks at 480 tpq and
    // 600000 us/q = 1.2 s; the simultaneous notes order by pitch and the
    // cross-track duplicate of pitch 72 keeps track order.
    let bytes = include_bytes!("fixtures/format1.mid");
    let piece = read_midi(bytes).unwrap();
    let got: Vec<(u8, f64, f64)> = piece
        .notes
        .iter()
        .map(|n| (n.pitch, n.onset, n.duration))
        .collect();
    assert_eq!(
        got,
        vec![
            (55, 0.0, 0.6),
            (72, 0.0, 1.2),
            (72, 0.0, 0.6),
            (76, 0.6, 0.6),
        ]
    );
    println!("ACCEPTANCE midi conformance: PASS (2 fixtures, {} notes)", 4 + got.len());
}
