//! Synthetic transduction corpus and its on-disk format.
//!
//! Each utterance is a random symbol string. Every content symbol owns a
//! fixed template vector drawn once from N(0, 1); the features repeat the
//! template of each symbol for a random number of frames and add Gaussian
//! noise. Adjacent symbols differ unless `allow_repeats` is set.
//!
//! A dataset directory holds `dataset.txt`, a `key = value` manifest, and
//! `features.bin`, little-endian f32 frames in manifest order. Utterance
//! entries read `utt.<i> = <split> <id> <byte offset> <frames> <text>`.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::decoder::VocabSpec;
use crate::encoder::{FeatureSequence, MIN_FRAMES};
use crate::error::{Error, Result};
use crate::kv::KeyValues;
use crate::real::Real;
use crate::rng::RngState;
use crate::tensor::Tensor;
use crate::training::Example;

pub const FORMAT: &str = "mhd-dataset";
pub const VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "dataset.txt";
pub const BLOB_FILE: &str = "features.bin";

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTaskConfig {
    /// Output vocabulary size including sos and eos.
    pub vocab: usize,
    pub dim: usize,
    pub frames_per_symbol: (usize, usize),
    pub noise: f64,
    /// Symbols per utterance.
    pub length: (usize, usize),
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub seed: u64,
    pub allow_repeats: bool,
}

impl Default for SyntheticTaskConfig {
    fn default() -> Self {
        SyntheticTaskConfig {
            vocab: 10,
            dim: 8,
            frames_per_symbol: (8, 12),
            noise: 0.2,
            length: (3, 7),
            train: 2000,
            dev: 200,
            test: 200,
            seed: 1,
            allow_repeats: false,
        }
    }
}

impl SyntheticTaskConfig {
    pub const KEYS: &'static [&'static str] = &[
        "data.vocab",
        "data.dim",
        "data.frames_min",
        "data.frames_max",
        "data.noise",
        "data.length_min",
        "data.length_max",
        "data.train",
        "data.dev",
        "data.test",
        "data.seed",
        "data.allow_repeats",
    ];

    pub fn content_symbols(&self) -> usize {
        self.vocab.saturating_sub(2)
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab < 3 || self.vocab > 28 {
            return Err(Error::Config(format!("vocabulary must hold 3..=28 symbols, got {}", self.vocab)));
        }
        if !self.allow_repeats && self.vocab < 4 && self.length.1 > 1 {
            return Err(Error::Config("one content symbol cannot form strings without repeats".into()));
        }
        if self.dim == 0 {
            return Err(Error::Config("feature dimension must be positive".into()));
        }
        let (flo, fhi) = self.frames_per_symbol;
        if flo < MIN_FRAMES || flo > fhi {
            return Err(Error::Config(format!(
                "frames per symbol must satisfy {MIN_FRAMES} <= min <= max, got {flo}..{fhi}"
            )));
        }
        let (llo, lhi) = self.length;
        if llo == 0 || llo > lhi {
            return Err(Error::Config(format!("sequence length must satisfy 1 <= min <= max, got {llo}..{lhi}")));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config("noise level must be a finite non-negative number".into()));
        }
        if self.train == 0 {
            return Err(Error::Config("training split must be nonempty".into()));
        }
        Ok(())
    }

    pub fn apply(&mut self, kv: &KeyValues) -> Result<()> {
        kv.read_into("data.vocab", &mut self.vocab)?;
        kv.read_into("data.dim", &mut self.dim)?;
        kv.read_into("data.frames_min", &mut self.frames_per_symbol.0)?;
        kv.read_into("data.frames_max", &mut self.frames_per_symbol.1)?;
        kv.read_into("data.noise", &mut self.noise)?;
        kv.read_into("data.length_min", &mut self.length.0)?;
        kv.read_into("data.length_max", &mut self.length.1)?;
        kv.read_into("data.train", &mut self.train)?;
        kv.read_into("data.dev", &mut self.dev)?;
        kv.read_into("data.test", &mut self.test)?;
        kv.read_into("data.seed", &mut self.seed)?;
        kv.read_into("data.allow_repeats", &mut self.allow_repeats)?;
        Ok(())
    }

    pub fn write(&self, kv: &mut KeyValues) {
        kv.set("data.vocab", self.vocab);
        kv.set("data.dim", self.dim);
        kv.set("data.frames_min", self.frames_per_symbol.0);
        kv.set("data.frames_max", self.frames_per_symbol.1);
        kv.set("data.noise", self.noise);
        kv.set("data.length_min", self.length.0);
        kv.set("data.length_max", self.length.1);
        kv.set("data.train", self.train);
        kv.set("data.dev", self.dev);
        kv.set("data.test", self.test);
        kv.set("data.seed", self.seed);
        kv.set("data.allow_repeats", self.allow_repeats);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|x| x.to_string() == s)
            .ok_or_else(|| Error::Config(format!("unknown split {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub split: Split,
    pub id: String,
    pub text: String,
    /// `[frames, dim]`
    pub features: Tensor<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub dim: usize,
    pub vocab: VocabSpec,
    /// Extra manifest entries carried through unchanged (generator settings).
    pub meta: KeyValues,
    pub utterances: Vec<Utterance>,
}

/// Draws a dataset deterministically from `config.seed`.
pub fn generate_dataset(config: &SyntheticTaskConfig) -> Result<Dataset> {
    config.validate()?;
    let vocab = VocabSpec::letters(config.content_symbols())?;
    let content: Vec<usize> = (0..vocab.size()).filter(|&i| !vocab.is_special(i)).collect();
    let mut rng = RngState::new(config.seed);
    let templates: Vec<Vec<f64>> = content
        .iter()
        .map(|_| (0..config.dim).map(|_| rng.normal()).collect())
        .collect();

    let mut utterances = Vec::with_capacity(config.train + config.dev + config.test);
    for (split, count) in [
        (Split::Train, config.train),
        (Split::Dev, config.dev),
        (Split::Test, config.test),
    ] {
        for i in 0..count {
            let len = rng.range_inclusive(config.length.0, config.length.1);
            let mut symbols: Vec<usize> = Vec::with_capacity(len);
            for _ in 0..len {
                let s = match symbols.last() {
                    Some(&prev) if !config.allow_repeats => {
                        let k = rng.range_inclusive(0, content.len() - 2);
                        if k >= prev {
                            k + 1
                        } else {
                            k
                        }
                    }
                    _ => rng.range_inclusive(0, content.len() - 1),
                };
                symbols.push(s);
            }
            let mut data = Vec::new();
            for &s in &symbols {
                let frames = rng.range_inclusive(config.frames_per_symbol.0, config.frames_per_symbol.1);
                for _ in 0..frames {
                    for &t in &templates[s] {
                        data.push((t + config.noise * rng.normal()) as f32);
                    }
                }
            }
            let frames = data.len() / config.dim;
            let ids: Vec<usize> = symbols.iter().map(|&s| content[s]).collect();
            utterances.push(Utterance {
                split,
                id: format!("{split}-{i:05}"),
                text: vocab.decode(&ids),
                features: Tensor::new(&[frames, config.dim], data)?,
            });
        }
    }
    let mut meta = KeyValues::new();
    config.write(&mut meta);
    Ok(Dataset {
        dim: config.dim,
        vocab,
        meta,
        utterances,
    })
}

impl Dataset {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &Utterance> {
        self.utterances.iter().filter(move |u| u.split == split)
    }

    pub fn len(&self, split: Split) -> usize {
        self.split(split).count()
    }

    pub fn find(&self, id: &str) -> Option<&Utterance> {
        self.utterances.iter().find(|u| u.id == id)
    }

    /// Target ids for `text` followed by eos.
    pub fn target(&self, text: &str) -> Result<Vec<usize>> {
        let mut ids = self.vocab.encode(text)?;
        ids.push(self.vocab.eos());
        Ok(ids)
    }

    pub fn examples<T: Real>(&self, split: Split) -> Result<Vec<Example<T>>> {
        self.split(split)
            .map(|u| {
                Ok(Example {
                    id: u.id.clone(),
                    features: FeatureSequence::new(u.features.clone())?.cast(),
                    target: self.target(&u.text)?,
                })
            })
            .collect()
    }

    pub fn manifest(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("format", FORMAT);
        kv.set("version", VERSION);
        kv.set("dim", self.dim);
        kv.set("symbols", self.vocab.symbols().join(" "));
        kv.set("sos", self.vocab.sos());
        kv.set("eos", self.vocab.eos());
        kv.merge(&self.meta);
        kv.set("utterances", self.utterances.len());
        let mut offset = 0usize;
        for (i, u) in self.utterances.iter().enumerate() {
            let frames = u.features.shape()[0];
            kv.set(
                &format!("utt.{i}"),
                format!("{} {} {offset} {frames} {}", u.split, u.id, u.text),
            );
            offset += u.features.len() * 4;
        }
        kv
    }

    pub fn blob(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.utterances.iter().map(|u| u.features.len() * 4).sum());
        for u in &self.utterances {
            for &x in u.features.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn parse(manifest: &str, blob: &[u8]) -> Result<Self> {
        let kv = KeyValues::parse(manifest)?;
        if kv.require("format")? != FORMAT {
            return Err(Error::Format("not a dataset manifest".into()));
        }
        let version: u32 = kv.required("version")?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported dataset version {version}")));
        }
        let dim: usize = kv.required("dim")?;
        if dim == 0 {
            return Err(Error::Format("feature dimension is zero".into()));
        }
        let vocab = VocabSpec::new(
            kv.require("symbols")?.split_whitespace().map(String::from).collect(),
            kv.required("sos")?,
            kv.required("eos")?,
        )?;
        let count: usize = kv.required("utterances")?;
        let mut meta = KeyValues::new();
        for (k, v) in kv.iter() {
            if k.starts_with("data.") {
                meta.set(k, v);
            }
        }
        let known = ["format", "version", "dim", "symbols", "sos", "eos", "utterances", "utt.*", "data.*"];
        if let Some(k) = kv.unknown_keys(&known).first() {
            return Err(Error::Format(format!("unexpected key {k:?}")));
        }
        if kv.len() != known.len() - 2 + meta.len() + count {
            return Err(Error::Format("utterance count does not match entries".into()));
        }

        let mut utterances = Vec::with_capacity(count.min(blob.len()));
        let mut expected_offset = 0usize;
        for i in 0..count {
            let key = format!("utt.{i}");
            let entry = kv.require(&key)?;
            let fields: Vec<&str> = entry.split_whitespace().collect();
            let (split, id, offset, frames, text) = match fields.as_slice() {
                [s, id, o, f] => (*s, *id, *o, *f, ""),
                [s, id, o, f, t] => (*s, *id, *o, *f, *t),
                _ => return Err(Error::Format(format!("{key}: expected `split id offset frames [text]`"))),
            };
            let bad = |what: &str| Error::Format(format!("{key}: bad {what}"));
            let split: Split = split.parse().map_err(|_| bad("split"))?;
            let offset: usize = offset.parse().map_err(|_| bad("offset"))?;
            let frames: usize = frames.parse().map_err(|_| bad("frame count"))?;
            if offset != expected_offset {
                return Err(bad("offset (features must be contiguous)"));
            }
            if frames == 0 {
                return Err(bad("frame count"));
            }
            vocab.encode(text).map_err(|_| bad("text"))?;
            let bytes = frames
                .checked_mul(dim)
                .and_then(|n| n.checked_mul(4))
                .ok_or_else(|| bad("frame count"))?;
            let end = offset
                .checked_add(bytes)
                .filter(|&e| e <= blob.len())
                .ok_or_else(|| Error::Format(format!("{key}: features run past the blob")))?;
            let data = blob[offset..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            expected_offset = end;
            utterances.push(Utterance {
                split,
                id: id.to_string(),
                text: text.to_string(),
                features: Tensor::new(&[frames, dim], data)?,
            });
        }
        if expected_offset != blob.len() {
            return Err(Error::Format(format!("{} trailing bytes in feature blob", blob.len() - expected_offset)));
        }
        Ok(Dataset {
            dim,
            vocab,
            meta,
            utterances,
        })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = dir.join(MANIFEST_FILE);
        fs::write(&manifest, self.manifest().to_text()).map_err(|e| Error::io(&manifest, e))?;
        let blob = dir.join(BLOB_FILE);
        fs::write(&blob, self.blob()).map_err(|e| Error::io(&blob, e))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&manifest).map_err(|e| Error::io(&manifest, e))?;
        let blob = dir.join(BLOB_FILE);
        let bytes = fs::read(&blob).map_err(|e| Error::io(&blob, e))?;
        Self::parse(&text, &bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticTaskConfig {
        SyntheticTaskConfig {
            train: 20,
            dev: 5,
            test: 5,
            ..SyntheticTaskConfig::default()
        }
    }

    #[test]
    fn noiseless_single_symbol_repeats_its_template() {
        let cfg = SyntheticTaskConfig {
            noise: 0.0,
            length: (1, 1),
            train: 6,
            dev: 0,
            test: 0,
            ..SyntheticTaskConfig::default()
        };
        let d = generate_dataset(&cfg).unwrap();
        let mut seen: std::collections::HashMap<String, Vec<f32>> = Default::default();
        for u in &d.utterances {
            let first = u.features.row(0).to_vec();
            for t in 0..u.features.shape()[0] {
                assert_eq!(u.features.row(t), &first[..]);
            }
            if let Some(prev) = seen.insert(u.text.clone(), first.clone()) {
                assert_eq!(prev, first);
            }
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = generate_dataset(&small()).unwrap();
        let b = generate_dataset(&small()).unwrap();
        assert_eq!(a.manifest().to_text(), b.manifest().to_text());
        assert_eq!(a.blob(), b.blob());
        let c = generate_dataset(&SyntheticTaskConfig { seed: 2, ..small() }).unwrap();
        assert_ne!(a.blob(), c.blob());
    }

    #[test]
    fn write_read_write_is_identical() {
        let d = generate_dataset(&small()).unwrap();
        let text = d.manifest().to_text();
        let blob = d.blob();
        let back = Dataset::parse(&text, &blob).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.manifest().to_text(), text);
        assert_eq!(back.blob(), blob);

        let dir = tempfile::tempdir().unwrap();
        d.save(dir.path()).unwrap();
        assert_eq!(Dataset::load(dir.path()).unwrap(), d);
    }

    #[test]
    fn damaged_datasets_are_rejected() {
        let d = generate_dataset(&small()).unwrap();
        let text = d.manifest().to_text();
        let blob = d.blob();
        assert!(Dataset::parse(&text, &blob[..blob.len() - 4]).is_err());
        assert!(Dataset::parse(&text, &[&blob[..], &[0, 0, 0, 0]].concat()).is_err());
        assert!(Dataset::parse(&text.replace("utterances = 30", "utterances = 31"), &blob).is_err());
        assert!(Dataset::parse(&text.replace("utt.0 = train", "utt.0 = valid"), &blob).is_err());
        assert!(Dataset::parse(&format!("{text}bogus = 1\n"), &blob).is_err());
    }

    #[test]
    fn splits_sizes_and_no_adjacent_repeats() {
        let d = generate_dataset(&small()).unwrap();
        assert_eq!((d.len(Split::Train), d.len(Split::Dev), d.len(Split::Test)), (20, 5, 5));
        for u in &d.utterances {
            let chars: Vec<char> = u.text.chars().collect();
            assert!((3..=7).contains(&chars.len()));
            assert!(chars.windows(2).all(|w| w[0] != w[1]));
            assert!(u.features.shape()[0] >= 8 * chars.len());
            assert!(u.features.shape()[0] <= 12 * chars.len());
        }
        let ex = d.examples::<f64>(Split::Dev).unwrap();
        assert_eq!(ex.len(), 5);
        assert_eq!(*ex[0].target.last().unwrap(), d.vocab.eos());
    }

    #[test]
    fn symbol_frequencies_are_uniform() {
        let cfg = SyntheticTaskConfig {
            train: 10_000,
            dev: 0,
            test: 0,
            frames_per_symbol: (4, 4),
            dim: 1,
            ..SyntheticTaskConfig::default()
        };
        let d = generate_dataset(&cfg).unwrap();
        let mut counts = [0usize; 8];
        let mut total = 0;
        for u in &d.utterances {
            for c in u.text.bytes() {
                counts[(c - b'a') as usize] += 1;
                total += 1;
            }
        }
        let p = 1.0 / 8.0;
        let sigma = (total as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - total as f64 * p).abs() < 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn invalid_configs() {
        let bad = |f: fn(&mut SyntheticTaskConfig)| {
            let mut c = SyntheticTaskConfig::default();
            f(&mut c);
            c.validate().is_err()
        };
        assert!(bad(|c| c.vocab = 2));
        assert!(bad(|c| c.frames_per_symbol = (3, 5)));
        assert!(bad(|c| c.length = (0, 3)));
        assert!(bad(|c| c.noise = -1.0));
        assert!(bad(|c| c.train = 0));
    }
}
