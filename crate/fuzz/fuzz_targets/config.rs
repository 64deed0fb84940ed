#![no_main]

use ekman_column::config::RunConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = RunConfig::parse(text, None) {
        let _ = cfg.simulation();
        let _ = cfg.experiment();
    }
});
