#![no_main]

use libfuzzer_sys::fuzz_target;
use mhd_asr::checkpoint::Checkpoint;

// Input: manifest text, a NUL byte, then the parameter blob.
fuzz_target!(|data: &[u8]| {
    let Some(split) = data.iter().position(|&b| b == 0) else {
        return;
    };
    let Ok(manifest) = std::str::from_utf8(&data[..split]) else {
        return;
    };
    let blob = &data[split + 1..];
    if let Ok(ck) = Checkpoint::<f64>::parse(manifest, blob) {
        let text = ck.manifest().to_text();
        let bytes = ck.blob();
        let again = Checkpoint::<f64>::parse(&text, &bytes).expect("re-parse of written checkpoint");
        assert_eq!(again.manifest().to_text(), text);
        assert_eq!(again.blob(), bytes);
    }
    let _ = Checkpoint::<f32>::parse(manifest, blob);
});
