#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(doc) = pkspell::corpus::read_predictions(data) {
        let _ = doc.id();
        let _ = doc.global_ks();
        for (tpc, ks) in doc.labels() {
            let _ = tpc.to_string();
            let _ = ks;
        }
    }
});
