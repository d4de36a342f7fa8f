//! Recorded judge verdicts: parsing must never panic, and judging the
//! first line's item against an accepted table must succeed.

#![no_main]

use libfuzzer_sys::fuzz_target;
use litkg::eval::{Judge, RecordedJudge};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(judge) = RecordedJudge::from_tsv(text) {
        let first_item = text
            .lines()
            .map(str::trim)
            .find(|l| !l.is_empty() && !l.starts_with('#'))
            .and_then(|l| l.split('\t').next());
        if let Some(item) = first_item {
            judge.judge(item, "probe").expect("recorded items judge");
        }
    }
});
