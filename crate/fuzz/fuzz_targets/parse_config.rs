//! Pipeline configs: parsing must never panic, and an accepted config
//! must hash and echo without panicking, with a stable digest.

#![no_main]

use libfuzzer_sys::fuzz_target;
use litkg::pipeline::parse_config;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(config) = parse_config(text) {
        let digest = config.digest();
        assert_eq!(digest, config.digest());
        let _ = config.echo();
    }
});
