//! Tonal arithmetic: pitch-classes, tonal-pitch-classes, key signatures and
//! transposition along the line of fifths.
//!
//! A tonal-pitch-class (tpc) is a diatonic letter plus an accidental in
//! `[-2, +2]`, giving 7 x 5 = 35 classes. Arranged on the line of fifths
//! (`Fbb` .. `B##`) every class has a *fifth index* in `[-15, 19]`; a key
//! signature is a fifths count in `[-7, +7]`. Transposition of both is plain
//! integer addition on those indices, which is what makes augmentation by
//! transposition cheap and exact.

use std::fmt;
use std::str::FromStr;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Number of tonal-pitch-classes.
pub const NUM_TPC: usize = 35;
/// Number of key signatures.
pub const NUM_KEY_SIGNATURES: usize = 15;
/// Lowest representable fifth index (Fbb).
pub const MIN_FIFTH_INDEX: i32 = -15;
/// Highest representable fifth index (B##).
pub const MAX_FIFTH_INDEX: i32 = 19;

/// Transposition outside the representable range (would need a triple
/// accidental, or a key signature beyond seven sharps/flats).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("transposition leaves the representable range")]
pub struct OutOfRange;

/// Failure to parse a spelled tonal-pitch-class name.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid tonal-pitch-class name {0:?}")]
pub struct ParseTpcError(pub String);

/// Pitch class modulo octave, 0..=11 (C=0 .. B=11).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PitchClass(u8);

impl PitchClass {
    pub fn new(value: u8) -> Option<Self> {
        (value < 12).then_some(PitchClass(value))
    }

    /// Pitch class of a MIDI pitch number.
    pub fn from_midi(pitch: u8) -> Self {
        PitchClass(pitch % 12)
    }

    pub fn value(self) -> u8 {
        self.0
    }

    /// All 12 pitch classes in ascending order.
    pub fn all() -> impl Iterator<Item = PitchClass> {
        (0..12).map(PitchClass)
    }

    /// The tonal-pitch-classes that sound as this pitch class, in line-of-fifths
    /// order. Over all 12 pitch classes these sets partition the 35 tpcs.
    pub fn enharmonics(self) -> Vec<Tpc> {
        Tpc::all().filter(|t| t.pitch_class() == self).collect()
    }

    pub fn transposed(self, chromatic: u8) -> PitchClass {
        PitchClass((self.0 + chromatic % 12) % 12)
    }
}

impl fmt::Display for PitchClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Diatonic letter name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Letter {
    C,
    D,
    E,
    F,
    G,
    A,
    B,
}

impl Letter {
    /// Position on the line of fifths: F=-1, C=0, G=1, D=2, A=3, E=4, B=5.
    pub fn fifth_base(self) -> i32 {
        match self {
            Letter::F => -1,
            Letter::C => 0,
            Letter::G => 1,
            Letter::D => 2,
            Letter::A => 3,
            Letter::E => 4,
            Letter::B => 5,
        }
    }

    /// Semitone of the natural note: C=0, D=2, E=4, F=5, G=7, A=9, B=11.
    pub fn natural_semitone(self) -> i32 {
        match self {
            Letter::C => 0,
            Letter::D => 2,
            Letter::E => 4,
            Letter::F => 5,
            Letter::G => 7,
            Letter::A => 9,
            Letter::B => 11,
        }
    }

    fn as_char(self) -> char {
        match self {
            Letter::C => 'C',
            Letter::D => 'D',
            Letter::E => 'E',
            Letter::F => 'F',
            Letter::G => 'G',
            Letter::A => 'A',
            Letter::B => 'B',
        }
    }

    fn from_char(c: char) -> Option<Letter> {
        Some(match c {
            'C' => Letter::C,
            'D' => Letter::D,
            'E' => Letter::E,
            'F' => Letter::F,
            'G' => Letter::G,
            'A' => Letter::A,
            'B' => Letter::B,
            _ => return None,
        })
    }
}

/// A tonal-pitch-class: letter plus accidental in `[-2, +2]`
/// (-2 = double flat .. +2 = double sharp).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Tpc {
    letter: Letter,
    alter: i8,
}

impl Tpc {
    /// Build from letter and accidental; `alter` outside `[-2, 2]` is rejected.
    pub fn new(letter: Letter, alter: i8) -> Option<Self> {
        ((-2..=2).contains(&alter)).then_some(Tpc { letter, alter })
    }

    pub fn letter(self) -> Letter {
        self.letter
    }

    pub fn alter(self) -> i8 {
        self.alter
    }

    /// Index on the line of fifths, in `[-15, 19]` (Fbb .. B##).
    pub fn fifth_index(self) -> i32 {
        self.letter.fifth_base() + 7 * i32::from(self.alter)
    }

    /// Canonical class index in `[0, 34]`: line-of-fifths order, Fbb = 0.
    pub fn class_index(self) -> usize {
        (self.fifth_index() - MIN_FIFTH_INDEX) as usize
    }

    /// Inverse of [`Tpc::fifth_index`].
    pub fn from_fifth_index(index: i32) -> Result<Self, OutOfRange> {
        if !(MIN_FIFTH_INDEX..=MAX_FIFTH_INDEX).contains(&index) {
            return Err(OutOfRange);
        }
        let base = (index + 1).rem_euclid(7) - 1;
        let letter = match base {
            -1 => Letter::F,
            0 => Letter::C,
            1 => Letter::G,
            2 => Letter::D,
            3 => Letter::A,
            4 => Letter::E,
            5 => Letter::B,
            _ => unreachable!(),
        };
        let alter = ((index - base) / 7) as i8;
        Ok(Tpc { letter, alter })
    }

    /// Inverse of [`Tpc::class_index`].
    pub fn from_class_index(index: usize) -> Result<Self, OutOfRange> {
        if index >= NUM_TPC {
            return Err(OutOfRange);
        }
        Tpc::from_fifth_index(index as i32 + MIN_FIFTH_INDEX)
    }

    /// All 35 classes in line-of-fifths order.
    pub fn all() -> impl Iterator<Item = Tpc> {
        (MIN_FIFTH_INDEX..=MAX_FIFTH_INDEX).map(|i| Tpc::from_fifth_index(i).unwrap())
    }

    /// The sounding pitch class: (natural semitone + alter) mod 12.
    pub fn pitch_class(self) -> PitchClass {
        let pc = (self.letter.natural_semitone() + i32::from(self.alter)).rem_euclid(12);
        PitchClass(pc as u8)
    }

    /// Shift along the line of fifths; errors if the result would need a
    /// triple accidental.
    pub fn transposed(self, shift: FifthShift) -> Result<Tpc, OutOfRange> {
        Tpc::from_fifth_index(self.fifth_index() + shift.0)
    }

    /// Accidental weight: 0 for natural, 1 for sharp/flat, 2 for doubles.
    pub fn accidental_cost(self) -> u32 {
        self.alter.unsigned_abs() as u32
    }
}

impl fmt::Display for Tpc {
    /// Canonical text form: letter then `bb`, `b`, ``, `#` or `##`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let acc = match self.alter {
            -2 => "bb",
            -1 => "b",
            0 => "",
            1 => "#",
            2 => "##",
            _ => unreachable!(),
        };
        write!(f, "{}{}", self.letter.as_char(), acc)
    }
}

impl FromStr for Tpc {
    type Err = ParseTpcError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseTpcError(s.to_string());
        let mut chars = s.chars();
        let letter = chars.next().and_then(Letter::from_char).ok_or_else(err)?;
        let alter = match chars.as_str() {
            "" => 0,
            "#" => 1,
            "##" => 2,
            "b" => -1,
            "bb" => -2,
            _ => return Err(err()),
        };
        Ok(Tpc { letter, alter })
    }
}

impl Serialize for Tpc {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Tpc {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(D::Error::custom)
    }
}

/// A key signature as a fifths count in `[-7, +7]`
/// (negative = flats, positive = sharps).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct KeySignature(i8);

impl KeySignature {
    pub fn new(fifths: i8) -> Option<Self> {
        ((-7..=7).contains(&fifths)).then_some(KeySignature(fifths))
    }

    pub fn fifths(self) -> i8 {
        self.0
    }

    /// Canonical class index in `[0, 14]`: fifths + 7.
    pub fn class_index(self) -> usize {
        (i32::from(self.0) + 7) as usize
    }

    pub fn from_class_index(index: usize) -> Result<Self, OutOfRange> {
        if index >= NUM_KEY_SIGNATURES {
            return Err(OutOfRange);
        }
        Ok(KeySignature(index as i8 - 7))
    }

    /// All 15 key signatures, flats first.
    pub fn all() -> impl Iterator<Item = KeySignature> {
        (-7..=7).map(KeySignature)
    }

    pub fn transposed(self, shift: FifthShift) -> Result<KeySignature, OutOfRange> {
        let fifths = i32::from(self.0) + shift.0;
        i8::try_from(fifths)
            .ok()
            .and_then(KeySignature::new)
            .ok_or(OutOfRange)
    }
}

impl fmt::Display for KeySignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:+}", self.0)
    }
}

/// A transposition along the line of fifths. `+1` is a perfect fifth up,
/// `-5` a minor second up, `+7` an augmented unison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FifthShift(pub i32);

impl FifthShift {
    /// The chromatic interval (semitones, 0..=11) this shift produces.
    pub fn chromatic(self) -> u8 {
        (7 * self.0).rem_euclid(12) as u8
    }

    pub fn inverse(self) -> FifthShift {
        FifthShift(-self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tpc(s: &str) -> Tpc {
        s.parse().unwrap()
    }

    #[test]
    fn pitch_class_of_named_classes() {
        assert_eq!(tpc("C").pitch_class().value(), 0);
        assert_eq!(tpc("B#").pitch_class().value(), 0);
        assert_eq!(tpc("Fbb").pitch_class().value(), 3);
        assert_eq!(tpc("Eb").pitch_class().value(), 3);
        assert_eq!(tpc("F##").pitch_class().value(), 7);
    }

    #[test]
    fn enharmonics_of_c_and_tritone() {
        let pc0: Vec<String> = PitchClass::new(0)
            .unwrap()
            .enharmonics()
            .iter()
            .map(Tpc::to_string)
            .collect();
        assert_eq!(pc0, ["Dbb", "C", "B#"]);

        let pc6: Vec<String> = PitchClass::new(6)
            .unwrap()
            .enharmonics()
            .iter()
            .map(Tpc::to_string)
            .collect();
        assert_eq!(pc6, ["Gb", "F#", "E##"]);
    }

    #[test]
    fn enharmonics_partition_all_35_classes() {
        let total: usize = PitchClass::all().map(|pc| pc.enharmonics().len()).sum();
        assert_eq!(total, NUM_TPC);
        for t in Tpc::all() {
            let owners = PitchClass::all()
                .filter(|pc| pc.enharmonics().contains(&t))
                .count();
            assert_eq!(owners, 1, "{t} must belong to exactly one pitch class");
        }
    }

    #[test]
    fn transpose_tpc_examples() {
        assert_eq!(tpc("C").transposed(FifthShift(1)), Ok(tpc("G")));
        assert_eq!(tpc("C").transposed(FifthShift(0)), Ok(tpc("C")));
        // B## sits at the top of the line of fifths.
        assert_eq!(tpc("B##").fifth_index(), MAX_FIFTH_INDEX);
        assert_eq!(tpc("B##").transposed(FifthShift(1)), Err(OutOfRange));
        assert_eq!(tpc("Fbb").transposed(FifthShift(-1)), Err(OutOfRange));
    }

    #[test]
    fn transpose_key_signature_examples() {
        let ks = |n: i8| KeySignature::new(n).unwrap();
        assert_eq!(ks(0).transposed(FifthShift(2)), Ok(ks(2)));
        assert_eq!(ks(-7).transposed(FifthShift(-1)), Err(OutOfRange));
        assert_eq!(ks(3).transposed(FifthShift(-3)), Ok(ks(0)));
    }

    #[test]
    fn accidental_costs() {
        assert_eq!(tpc("C").accidental_cost(), 0);
        assert_eq!(tpc("Eb").accidental_cost(), 1);
        assert_eq!(tpc("F##").accidental_cost(), 2);
    }

    #[test]
    fn spelled_names_round_trip_all_classes() {
        for t in Tpc::all() {
            let name = t.to_string();
            assert_eq!(name.parse::<Tpc>().unwrap(), t);
        }
        assert_eq!(tpc("C#").to_string(), "C#");
        assert_eq!(tpc("Abb").to_string(), "Abb");
        assert_eq!(tpc("G").to_string(), "G");
    }

    #[test]
    fn rejects_malformed_names() {
        for bad in ["", "H", "C###", "Cbbb", "C b", "c", "C#b", "Db#"] {
            assert!(bad.parse::<Tpc>().is_err(), "{bad:?} should not parse");
        }
    }

    #[test]
    fn class_index_is_line_of_fifths_order() {
        assert_eq!(tpc("Fbb").class_index(), 0);
        assert_eq!(tpc("C").class_index(), 15);
        assert_eq!(tpc("B##").class_index(), 34);
        for (i, t) in Tpc::all().enumerate() {
            assert_eq!(t.class_index(), i);
            assert_eq!(Tpc::from_class_index(i).unwrap(), t);
        }
    }

    #[test]
    fn fifth_shift_chromatic() {
        assert_eq!(FifthShift(1).chromatic(), 7);
        assert_eq!(FifthShift(-5).chromatic(), 1);
        assert_eq!(FifthShift(7).chromatic(), 1);
        assert_eq!(FifthShift(0).chromatic(), 0);
    }

    proptest! {
        #[test]
        fn transpose_round_trips(index in MIN_FIFTH_INDEX..=MAX_FIFTH_INDEX, shift in -12i32..=12) {
            let t = Tpc::from_fifth_index(index).unwrap();
            if let Ok(up) = t.transposed(FifthShift(shift)) {
                prop_assert_eq!(up.transposed(FifthShift(-shift)), Ok(t));
            }
        }

        #[test]
        fn transpose_commutes_with_pitch_class(index in MIN_FIFTH_INDEX..=MAX_FIFTH_INDEX, shift in -12i32..=12) {
            let t = Tpc::from_fifth_index(index).unwrap();
            if let Ok(up) = t.transposed(FifthShift(shift)) {
                let expected = (i32::from(t.pitch_class().value()) + 7 * shift).rem_euclid(12);
                prop_assert_eq!(i32::from(up.pitch_class().value()), expected);
            }
        }
    }
}
