//! Every line of arbitrary text either fails with a structured error or
//! parses into a record that prints back to a line parsing to the same
//! record.

#![no_main]

use libfuzzer_sys::fuzz_target;
use npsim::metrics::parse_event_line;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    for line in text.lines() {
        if let Ok(record) = parse_event_line(line) {
            let printed = record.to_string();
            let reparsed = parse_event_line(&printed).expect("printed record must parse");
            assert_eq!(record, reparsed, "record changed across the round trip");
        }
    }
});
