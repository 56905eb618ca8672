#![no_main]

use cdnerr::report::ClusterReport;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(report) = serde_json::from_slice::<ClusterReport>(data) {
        let _ = (report.total_rows(), report.status_histogram());
    }
});
