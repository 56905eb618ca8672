#![no_main]

use cdnerr::features::{decode_matrix, encode_matrix};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = decode_matrix(data) {
        let back = decode_matrix(encode_matrix(&m).as_slice()).expect("round trip");
        assert_eq!(back.shape(), m.shape());
    }
});
