//! Structured extractor responses: parsing must never panic, and accepted
//! output must respect the closed taxonomies' confidence bounds.

#![no_main]

use libfuzzer_sys::fuzz_target;
use litkg::extract::parse_llm_response;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(parsed) = parse_llm_response(text) {
        for triple in &parsed.triples {
            assert!((0.0..=1.0).contains(&triple.confidence));
            assert!(!triple.head.is_empty() && !triple.tail.is_empty());
        }
        for mention in &parsed.mentions {
            assert!(!mention.surface.is_empty());
        }
    }
});
