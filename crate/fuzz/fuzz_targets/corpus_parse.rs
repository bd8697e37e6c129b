#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(pieces) = pkspell::corpus::read_corpus(data) {
        for piece in &pieces {
            // Accepted pieces satisfy the label invariants; writing them
            // back and re-reading must succeed and agree.
            assert_eq!(piece.tpcs.len(), piece.piece.notes.len());
            for (note, tpc) in piece.piece.notes.iter().zip(&piece.tpcs) {
                assert_eq!(tpc.pitch_class(), note.pitch_class());
            }
        }
        let mut bytes = Vec::new();
        pkspell::corpus::write_corpus(&pieces, &mut bytes).unwrap();
        let back = pkspell::corpus::read_corpus(bytes.as_slice()).unwrap();
        assert_eq!(back, pieces);
    }
});
