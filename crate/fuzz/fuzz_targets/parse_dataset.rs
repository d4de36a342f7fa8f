//! Link-prediction splits: the input is carved into train/valid/test on
//! ASCII record separators (0x1E). Parsing must never panic, and an
//! accepted dataset must pass its own validator.

#![no_main]

use libfuzzer_sys::fuzz_target;
use litkg::linkpred::parse_dataset;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let mut parts = text.splitn(3, '\x1e');
    let train = parts.next().unwrap_or("");
    let valid = parts.next().unwrap_or("");
    let test = parts.next().unwrap_or("");
    if let Ok(dataset) = parse_dataset(train, valid, test) {
        dataset.validate().expect("accepted datasets validate");
        assert_eq!(
            dataset.all_triples().len(),
            dataset.train.len() + dataset.valid.len() + dataset.test.len()
        );
    }
});
