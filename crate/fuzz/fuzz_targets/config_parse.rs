#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = icnn_cli::RunConfig::parse(text) {
            let _ = cfg.get_u64("seed", 0);
            let _ = cfg.get_widths("hidden", "4");
            let _ = cfg.resolved_text();
        }
    }
});
