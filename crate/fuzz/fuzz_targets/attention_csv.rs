#![no_main]

use libfuzzer_sys::fuzz_target;
use mhd_asr::export::{csv_text, parse_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(rows) = parse_csv(text) {
        let written = csv_text(&rows).expect("parsed matrix is rectangular");
        assert_eq!(parse_csv(&written).expect("written CSV reads back"), rows);
    }
});
