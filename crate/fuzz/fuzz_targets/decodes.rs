#![no_main]

use libfuzzer_sys::fuzz_target;
use mhd_asr::decoding::format_decodes;
use mhd_asr::experiment::parse_decodes;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(rows) = parse_decodes(text) {
        let written = format_decodes(rows.iter().map(|(id, h)| (id.as_str(), h.as_str())));
        let _ = parse_decodes(&written);
    }
});
