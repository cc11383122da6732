#![no_main]

use dkfd_core::config::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = ExperimentConfig::parse(text) {
            let _ = cfg.validate();
            let again = ExperimentConfig::parse(&cfg.to_text()).expect("echoed config parses");
            assert_eq!(again.to_text(), cfg.to_text());
        }
    }
});
