#![no_main]

use cdnerr::synth::{generate, SynthSpec};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(mut spec) = SynthSpec::from_toml(text) else { return };
    spec.total_lines = spec.total_lines.min(2000);
    if spec.validate().is_ok() {
        let summary = generate(&spec, std::io::sink(), None).expect("valid spec generates");
        assert_eq!(summary.lines, spec.total_lines);
    }
});
