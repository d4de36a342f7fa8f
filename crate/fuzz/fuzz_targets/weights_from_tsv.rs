//! Relation-model weight tables: parsing must never panic, and an
//! accepted table must round-trip through its own serializer exactly.

#![no_main]

use libfuzzer_sys::fuzz_target;
use litkg::relmodel::Weights;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(weights) = Weights::from_tsv(text) {
        let rendered = weights.to_tsv();
        let again = Weights::from_tsv(&rendered).expect("rendered tables parse");
        assert_eq!(weights, again);
        assert_eq!(rendered, again.to_tsv());
    }
});
