#![no_main]

use libfuzzer_sys::fuzz_target;
use mhd_asr::experiment::{ExperimentConfig, Variant};
use mhd_asr::kv::KeyValues;
use mhd_asr::model::ModelConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(kv) = KeyValues::parse(text) else {
        return;
    };
    if let Ok(again) = KeyValues::parse(&kv.to_text()) {
        assert_eq!(again, kv);
    }
    let _ = ModelConfig::read(&kv);
    if let Ok(cfg) = ExperimentConfig::from_kv(&kv) {
        let _ = cfg.validate();
        let back = ExperimentConfig::from_kv(&cfg.to_kv()).expect("written config reads back");
        assert_eq!(back.to_kv().to_text(), cfg.to_kv().to_text());
    }
    for (_, v) in kv.iter() {
        if let Ok(variant) = v.parse::<Variant>() {
            assert_eq!(variant.to_string().parse::<Variant>().ok(), Some(variant));
        }
    }
});
