#![no_main]

use cdnerr::ingest::{format_line, parse_line, Schema};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(line) = std::str::from_utf8(data) else { return };
    let schema = Schema::default();
    if let Ok(record) = parse_line(line, &schema, 1) {
        // Anything accepted must survive being written back out.
        let again = format_line(&record, &schema);
        parse_line(&again, &schema, 1).expect("formatted record reparses");
    }
});
