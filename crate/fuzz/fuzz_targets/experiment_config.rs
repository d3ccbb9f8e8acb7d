#![no_main]

use extrema_dp::harness::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if text.len() > 16 * 1024 {
        return;
    }
    // from_toml validates; a config that loads must answer its accessors
    if let Ok(cfg) = ExperimentConfig::from_toml(text) {
        let _ = cfg.interest_truth();
        let _ = cfg.truth_label();
        assert!(cfg.truth_max().is_finite());
    }
});
