//! A line that parses as a capsule must print back to a line that parses to
//! an equal (time, capsule) pair.

#![no_main]

use libfuzzer_sys::fuzz_target;
use npsim::capsule::{capsule_line, parse_capsule_line};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok((at, capsule)) = parse_capsule_line(text) {
        let printed = capsule_line(at, &capsule);
        let (at2, capsule2) = parse_capsule_line(&printed).expect("printed capsule must parse");
        assert_eq!(at, at2, "timestamp changed across the round trip");
        assert_eq!(capsule, capsule2, "payload changed across the round trip");
    }
});
