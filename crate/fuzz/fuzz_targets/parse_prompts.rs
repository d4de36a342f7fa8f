//! Prompt tables: parsing must never panic, and accepted prompts must
//! carry non-empty text and entity names.

#![no_main]

use libfuzzer_sys::fuzz_target;
use litkg::eval::parse_prompts;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(prompts) = parse_prompts(text) {
        for prompt in &prompts {
            assert!(!prompt.text.is_empty());
        }
    }
});
