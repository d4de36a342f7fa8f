//! Relation pattern TSV: parsing must never panic, and accepted patterns
//! must carry non-empty phrases.

#![no_main]

use libfuzzer_sys::fuzz_target;
use litkg::extract::parse_patterns;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(patterns) = parse_patterns(text) {
        for (phrase, _) in &patterns {
            assert!(!phrase.is_empty());
        }
    }
});
