//! Corpus record lines: parsing must never panic, and an accepted record
//! must survive a serialize/parse round trip unchanged.

#![no_main]

use libfuzzer_sys::fuzz_target;
use litkg::corpus::parse_record;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(doc) = parse_record(text) {
        let json = serde_json::to_string(&doc).expect("accepted records serialize");
        let again = parse_record(&json).expect("serialized records parse");
        assert_eq!(doc, again);
    }
});
