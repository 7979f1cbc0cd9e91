//! Any text either fails to parse with a structured error or parses into a
//! scenario whose canonical serialization round-trips to an equal value.

#![no_main]

use libfuzzer_sys::fuzz_target;
use npsim::scenario::{load_scenario, serialize_scenario};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(scenario) = load_scenario(text) {
        let canonical = serialize_scenario(&scenario);
        let reparsed = load_scenario(&canonical).expect("canonical form must parse");
        assert_eq!(scenario, reparsed, "canonical round trip changed the scenario");
        assert_eq!(
            canonical,
            serialize_scenario(&reparsed),
            "canonical serialization must be a fixed point"
        );
    }
});
