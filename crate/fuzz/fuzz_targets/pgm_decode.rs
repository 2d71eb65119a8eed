#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok((h, w, px)) = icnn::data::decode_pgm(data) {
        assert_eq!(px.len(), h * w);
        assert!(px.iter().all(|v| (0.0..=1.0).contains(v)));
    }
});
