#![no_main]
use libfuzzer_sys::fuzz_target;

use sduda::pipeline::PipelineConfig;

fuzz_target!(|text: &str| {
    if let Ok(cfg) = PipelineConfig::from_config_text(text) {
        let f = cfg.to_config_text();
        let parsed = PipelineConfig::from_config_text(&f).unwrap();
        assert_eq!(parsed.to_config_text(), f);
    }
});
