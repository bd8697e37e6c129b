#![no_main]
use libfuzzer_sys::fuzz_target;
use pkspell::ModelParams;

fuzz_target!(|data: &[u8]| {
    if let Ok(params) = ModelParams::from_bytes(data) {
        // Accepted containers re-serialize losslessly (compare bytes, not
        // values: the payload may hold NaN bit patterns).
        let bytes = params.to_bytes();
        let again = ModelParams::from_bytes(&bytes).unwrap();
        assert_eq!(bytes, again.to_bytes());
    }
});
