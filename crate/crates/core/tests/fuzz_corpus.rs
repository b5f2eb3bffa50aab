use std::fs;
use std::path::PathBuf;

use mhd_asr::checkpoint::Checkpoint;
use mhd_asr::data::Dataset;
use mhd_asr::experiment::{parse_decodes, ExperimentConfig};
use mhd_asr::export::{csv_text, parse_csv, parse_pgm};
use mhd_asr::kv::KeyValues;

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let path = e.unwrap().path();
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            (name, fs::read(&path).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

fn split_nul(bytes: &[u8]) -> (&str, &[u8]) {
    let at = bytes.iter().position(|&b| b == 0).expect("seed has a NUL separator");
    (std::str::from_utf8(&bytes[..at]).unwrap(), &bytes[at + 1..])
}

#[test]
fn checkpoint_seeds_parse_and_rewrite_identically() {
    for (name, bytes) in seeds("checkpoint") {
        let (manifest, blob) = split_nul(&bytes);
        let ck = Checkpoint::<f64>::parse(manifest, blob).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(ck.manifest().to_text(), manifest, "{name}");
        assert_eq!(ck.blob(), blob, "{name}");
    }
}

#[test]
fn dataset_seeds_parse_and_rewrite_identically() {
    for (name, bytes) in seeds("dataset") {
        let (manifest, blob) = split_nul(&bytes);
        let d = Dataset::parse(manifest, blob).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(d.manifest().to_text(), manifest, "{name}");
        assert_eq!(d.blob(), blob, "{name}");
    }
}

#[test]
fn config_seeds_parse() {
    for (name, bytes) in seeds("config") {
        let kv = KeyValues::parse(std::str::from_utf8(&bytes).unwrap()).unwrap_or_else(|e| panic!("{name}: {e}"));
        if name.ends_with(".conf") || name == "full" {
            let cfg = ExperimentConfig::from_kv(&kv).unwrap_or_else(|e| panic!("{name}: {e}"));
            cfg.validate().unwrap();
        }
    }
}

#[test]
fn attention_seeds_parse() {
    for (name, bytes) in seeds("attention_csv") {
        let rows = parse_csv(std::str::from_utf8(&bytes).unwrap()).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(parse_csv(&csv_text(&rows).unwrap()).unwrap(), rows);
    }
    for (name, bytes) in seeds("attention_pgm") {
        let img = parse_pgm(&bytes).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(img.pixels.len(), img.width * img.height);
    }
}

#[test]
fn decode_seeds_parse() {
    for (name, bytes) in seeds("decodes") {
        parse_decodes(std::str::from_utf8(&bytes).unwrap()).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}
