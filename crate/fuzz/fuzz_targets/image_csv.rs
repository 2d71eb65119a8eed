#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok((h, w, images)) = icnn::data::parse_image_csv(text) {
            for img in &images {
                assert_eq!(img.len(), h * w);
            }
        }
    }
});
