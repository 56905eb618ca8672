#![no_main]

use cdnerr::ingest::{parse_line, Schema};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(schema) = Schema::from_toml(text) {
        let header = schema.header_line();
        let _ = parse_line(&header, &schema, 1);
    }
});
