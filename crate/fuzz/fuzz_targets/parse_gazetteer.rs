//! Gazetteer TSV: parsing must never panic, and accepted entries must
//! carry non-empty terms.

#![no_main]

use libfuzzer_sys::fuzz_target;
use litkg::extract::parse_gazetteer;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(entries) = parse_gazetteer(text) {
        for (term, _) in &entries {
            assert!(!term.is_empty());
        }
    }
});
