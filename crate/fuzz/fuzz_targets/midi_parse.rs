#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(piece) = pkspell::midi::read_midi(data) {
        // Parsed notes must satisfy the ordering and validity invariants.
        let mut last = None;
        for n in &piece.notes {
            assert!(n.pitch <= 127);
            assert!(n.duration > 0.0);
            assert!(n.onset >= 0.0);
            if let Some((onset, pitch)) = last {
                assert!(n.onset > onset || (n.onset == onset && n.pitch >= pitch));
            }
            last = Some((n.onset, n.pitch));
        }
    }
});
