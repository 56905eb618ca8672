#![no_main]

use cdnerr::ingest::{RecordStream, Schema, StreamOptions};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let options = StreamOptions { errors_only: false, max_line_bytes: 4096, ..StreamOptions::default() };
    let mut stream = RecordStream::new(data, Schema::default(), options);
    let mut ok = 0u64;
    for item in stream.by_ref() {
        match item {
            Ok(_) => ok += 1,
            Err(_) => break,
        }
    }
    let stats = stream.stats();
    assert!(stats.parsed >= ok);
    assert!(stats.parsed + stats.rejected <= stats.total_lines);
});
