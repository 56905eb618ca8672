#![no_main]

use cdnerr::ingest::{format_json_line, parse_json_line};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(line) = std::str::from_utf8(data) else { return };
    if let Ok(record) = parse_json_line(line, 1) {
        parse_json_line(&format_json_line(&record), 1).expect("formatted record reparses");
    }
});
