//! Net definition files must never panic the parser; every parsed net
//! must survive structural validation without panicking, and any parsed
//! file must round-trip through the canonical writer unchanged.

#![no_main]

use flowguard::petri::{parse_net_file, write_net_file, PetriNet};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(nets) = parse_net_file("fuzz", text) else {
        return;
    };
    let written = write_net_file(&nets);
    let again = parse_net_file("fuzz", &written).expect("canonical form reparses");
    assert_eq!(nets, again, "round trip changed the nets");
    for parsed in nets {
        // Building may reject the definition, but must not panic.
        let _ = PetriNet::build(parsed.spec);
    }
});
