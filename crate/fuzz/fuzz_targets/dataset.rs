#![no_main]

use libfuzzer_sys::fuzz_target;
use mhd_asr::data::Dataset;

// Input: manifest text, a NUL byte, then the feature blob.
fuzz_target!(|data: &[u8]| {
    let Some(split) = data.iter().position(|&b| b == 0) else {
        return;
    };
    let Ok(manifest) = std::str::from_utf8(&data[..split]) else {
        return;
    };
    if let Ok(d) = Dataset::parse(manifest, &data[split + 1..]) {
        let text = d.manifest().to_text();
        let blob = d.blob();
        let again = Dataset::parse(&text, &blob).expect("re-parse of written dataset");
        assert_eq!(again.manifest().to_text(), text);
        assert_eq!(again.blob(), blob);
    }
});
