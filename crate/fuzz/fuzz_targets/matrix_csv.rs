//! Detection-matrix CSVs must never panic the parser, and any accepted
//! matrix must round-trip through the canonical writer unchanged.

#![no_main]

use flowguard::fault::parse_matrix;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(matrix) = parse_matrix("fuzz", text) else {
        return;
    };
    let written = matrix.to_csv_string();
    let again = parse_matrix("fuzz", &written).expect("canonical form reparses");
    assert_eq!(matrix, again, "round trip changed the matrix");
});
