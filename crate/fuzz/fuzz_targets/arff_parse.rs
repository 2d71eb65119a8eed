#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        for label_count in [1usize, 3] {
            let _ = icnn::data::arff_parse(text, label_count);
        }
    }
});
