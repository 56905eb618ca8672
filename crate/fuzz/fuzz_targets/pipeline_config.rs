#![no_main]

use cdnerr_cli::config::{PipelineConfig, ResolvedConfig};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = PipelineConfig::from_toml(text, "fuzz") {
        if let Ok(resolved) = ResolvedConfig::resolve(&cfg) {
            let _ = resolved.manifest_value();
        }
    }
});
