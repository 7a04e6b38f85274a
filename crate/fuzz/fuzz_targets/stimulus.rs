//! Stimulus files must never panic the parser, and any accepted file
//! must round-trip through the canonical writer unchanged.

#![no_main]

use flowguard::designs::{parse_stimulus, write_stimulus};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(stim) = parse_stimulus("fuzz", text) else {
        return;
    };
    let written = write_stimulus(&stim);
    let again = parse_stimulus("fuzz", &written).expect("canonical form reparses");
    assert_eq!(stim, again, "round trip changed the stimulus");
});
