#![no_main]

use libfuzzer_sys::fuzz_target;
use ulrot::io::parse_csv_matrix;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(m) = parse_csv_matrix(text) {
        // Every accepted row has the header's width.
        assert_eq!(m.len(), m.nrows() * m.ncols());
    }
});
