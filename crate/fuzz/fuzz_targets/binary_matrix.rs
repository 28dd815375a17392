#![no_main]

use libfuzzer_sys::fuzz_target;
use ulrot::io::{decode_binary_matrix, encode_binary_matrix};

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = decode_binary_matrix(data) {
        // Accepted input re-encodes to the same bytes.
        assert_eq!(encode_binary_matrix(&m).unwrap(), data);
    }
});
