#![no_main]
use libfuzzer_sys::fuzz_target;
use pkspell::Tpc;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(tpc) = text.parse::<Tpc>() {
            // Accepted names are canonical and round-trip.
            assert_eq!(tpc.to_string(), text);
            assert!(tpc.pitch_class().value() < 12);
        }
    }
});
