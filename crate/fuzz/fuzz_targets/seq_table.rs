//! Sequence-table files must never panic the parser, and any accepted
//! file must round-trip through the canonical writer unchanged.

#![no_main]

use flowguard::seqcheck::{parse_seq_file, write_seq_file};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(tables) = parse_seq_file("fuzz", text) else {
        return;
    };
    let written = write_seq_file(&tables);
    let again = parse_seq_file("fuzz", &written).expect("canonical form reparses");
    assert_eq!(tables, again, "round trip changed the tables");
});
