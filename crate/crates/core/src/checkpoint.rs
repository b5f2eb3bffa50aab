//! Checkpoints: a `key = value` manifest plus a little-endian blob.
//!
//! The manifest records precision, trainer progress, the RNG position,
//! the model configuration and one `param.<i> = <name> <shape>` line per
//! parameter (with a trailing `frozen` for non-trainable ones). The blob
//! holds every parameter in manifest order, followed, when
//! `optimizer = adadelta`, by all `E[g²]` slots and then all `E[dx²]`
//! slots in the same order.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::kv::KeyValues;
use crate::model::ModelConfig;
use crate::params::ParamStore;
use crate::real::{Precision, Real};
use crate::rng;
use crate::tensor::Tensor;
use crate::training::{AdaDeltaState, TrainerState};

pub const FORMAT: &str = "mhd-checkpoint";
pub const VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const BLOB_FILE: &str = "params.bin";

#[derive(Debug, Clone)]
pub struct Checkpoint<T> {
    pub config: ModelConfig,
    pub store: ParamStore<T>,
    pub optimizer: Option<AdaDeltaState<T>>,
    pub trainer: TrainerState,
}

fn opt_f64(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |x| x.to_string())
}

fn read_opt_f64(kv: &KeyValues, key: &str) -> Result<Option<f64>> {
    match kv.require(key)? {
        "none" => Ok(None),
        v => v
            .parse()
            .map(Some)
            .map_err(|_| Error::Format(format!("{key}: cannot parse {v:?}"))),
    }
}

fn parse_shape(s: &str) -> Result<Vec<usize>> {
    let shape = s
        .split('x')
        .map(|d| d.parse::<usize>().ok().filter(|&d| d > 0))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| Error::Format(format!("bad shape {s:?}")))?;
    shape
        .iter()
        .try_fold(1usize, |n, &d| n.checked_mul(d))
        .ok_or_else(|| Error::Format(format!("shape {s:?} overflows")))?;
    Ok(shape)
}

struct BlobReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl BlobReader<'_> {
    fn tensor<T: Real>(&mut self, shape: &[usize]) -> Result<Tensor<T>> {
        let width = T::PRECISION.byte_width();
        let n: usize = shape.iter().product();
        let end = n
            .checked_mul(width)
            .and_then(|b| b.checked_add(self.pos))
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("blob is shorter than the manifest requires".into()))?;
        let data = self.bytes[self.pos..end]
            .chunks_exact(width)
            .map(T::read_le)
            .collect();
        self.pos = end;
        Tensor::new(shape, data)
    }
}

impl<T: Real> Checkpoint<T> {
    pub fn manifest(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("format", FORMAT);
        kv.set("version", VERSION);
        kv.set("precision", T::PRECISION.as_str());
        kv.set("epoch", self.trainer.epoch);
        kv.set("rng.algorithm", rng::ALGORITHM);
        kv.set("rng.seed", self.trainer.rng_seed);
        kv.set("rng.word_pos", self.trainer.rng_word_pos);
        kv.set("trainer.best_valid", opt_f64(self.trainer.best_valid));
        kv.set("trainer.previous_valid", opt_f64(self.trainer.previous_valid));
        match &self.optimizer {
            Some(o) => {
                kv.set("optimizer", "adadelta");
                kv.set("optimizer.rho", o.rho);
                kv.set("optimizer.eps", o.eps);
            }
            None => kv.set("optimizer", "none"),
        }
        self.config.write(&mut kv);
        kv.set("params", self.store.len());
        for (id, p) in self.store.iter() {
            let shape: Vec<String> = p.value.shape().iter().map(|d| d.to_string()).collect();
            let frozen = if p.trainable() { "" } else { " frozen" };
            kv.set(&format!("param.{}", id.0), format!("{} {}{frozen}", p.name, shape.join("x")));
        }
        kv
    }

    pub fn blob(&self) -> Vec<u8> {
        let width = T::PRECISION.byte_width();
        let mut out = Vec::with_capacity(self.store.num_elements() * width * 3);
        let mut put = |t: &Tensor<T>| t.data().iter().for_each(|&x| x.write_le(&mut out));
        self.store.iter().for_each(|(_, p)| put(&p.value));
        if let Some(o) = &self.optimizer {
            o.eg2.iter().for_each(&mut put);
            o.edx2.iter().for_each(&mut put);
        }
        out
    }

    pub fn parse(manifest: &str, blob: &[u8]) -> Result<Self> {
        let kv = KeyValues::parse(manifest)?;
        if kv.require("format")? != FORMAT {
            return Err(Error::Format("not a checkpoint manifest".into()));
        }
        let version: u32 = kv.required("version")?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let precision: Precision = kv
            .require("precision")?
            .parse()
            .map_err(Error::Format)?;
        if precision != T::PRECISION {
            return Err(Error::Format(format!(
                "checkpoint holds {} values, expected {}",
                precision.as_str(),
                T::PRECISION.as_str()
            )));
        }
        if kv.require("rng.algorithm")? != rng::ALGORITHM {
            return Err(Error::Format("checkpoint uses a different RNG".into()));
        }
        let trainer = TrainerState {
            epoch: kv.required("epoch")?,
            rng_seed: kv.required("rng.seed")?,
            rng_word_pos: kv.required("rng.word_pos")?,
            best_valid: read_opt_f64(&kv, "trainer.best_valid")?,
            previous_valid: read_opt_f64(&kv, "trainer.previous_valid")?,
        };
        let config = ModelConfig::read(&kv)?;

        let count: usize = kv.required("params")?;
        let mut reader = BlobReader { bytes: blob, pos: 0 };
        let mut store = ParamStore::new();
        for i in 0..count.min(blob.len() + 1) {
            let entry = kv.require(&format!("param.{i}"))?;
            let mut parts = entry.split_whitespace();
            let (name, shape) = match (parts.next(), parts.next()) {
                (Some(n), Some(s)) => (n, parse_shape(s)?),
                _ => return Err(Error::Format(format!("param.{i}: expected `name shape`"))),
            };
            let frozen = match parts.next() {
                None => false,
                Some("frozen") => true,
                Some(x) => return Err(Error::Format(format!("param.{i}: unexpected {x:?}"))),
            };
            let value = reader.tensor::<T>(&shape)?.with_requires_grad(!frozen);
            store.insert(name, value)?;
        }
        if store.len() != count {
            return Err(Error::Format("blob is shorter than the manifest requires".into()));
        }
        let optimizer = match kv.require("optimizer")? {
            "none" => None,
            "adadelta" => {
                let rho: T = kv.required("optimizer.rho")?;
                let eps: T = kv.required("optimizer.eps")?;
                let mut o = AdaDeltaState::new(&store, rho, eps)?;
                for slot in o.eg2.iter_mut().chain(o.edx2.iter_mut()) {
                    *slot = reader.tensor(slot.shape())?;
                }
                Some(o)
            }
            other => return Err(Error::Format(format!("unknown optimizer {other:?}"))),
        };
        if reader.pos != blob.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after the last tensor",
                blob.len() - reader.pos
            )));
        }
        Ok(Checkpoint {
            config,
            store,
            optimizer,
            trainer,
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
    use crate::attention::AttentionKind;
    use crate::decoder::{DecoderConfig, VocabSpec};
    use crate::model::Model;
    use crate::rng::RngState;
    use crate::training::tests::tiny_task;
    use crate::training::{TrainConfig, Trainer};

    fn sample() -> Checkpoint<f64> {
        let vocab = VocabSpec::letters(3).unwrap();
        let mut cfg = ModelConfig::desk(3, vocab, DecoderConfig::mhd(AttentionKind::Coverage, 2));
        cfg.encoder.units = 3;
        cfg.encoder.projection = 3;
        cfg.decoder.units = 4;
        let mut model = Model::<f64>::init(cfg, &mut RngState::new(1)).unwrap();
        model.store.freeze_prefix("enc.l0.");
        let mut opt = AdaDeltaState::new(&model.store, 0.95, 1e-8).unwrap();
        opt.eg2[3].data_mut()[0] = 0.125;
        opt.edx2[5].data_mut()[1] = 1.0 / 3.0;
        Checkpoint {
            config: model.config,
            store: model.store,
            optimizer: Some(opt),
            trainer: TrainerState {
                epoch: 4,
                rng_seed: 99,
                rng_word_pos: 1 << 70,
                best_valid: Some(0.1 + 0.2),
                previous_valid: None,
            },
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = sample();
        let text = ck.manifest().to_text();
        let blob = ck.blob();
        let back = Checkpoint::<f64>::parse(&text, &blob).unwrap();
        assert_eq!(back.config, ck.config);
        assert_eq!(back.trainer, ck.trainer);
        assert_eq!(back.optimizer, ck.optimizer);
        for ((_, a), (_, b)) in back.store.iter().zip(ck.store.iter()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.value, b.value);
            assert_eq!(a.trainable(), b.trainable());
        }
        assert_eq!(back.manifest().to_text(), text);
        assert_eq!(back.blob(), blob);
    }

    #[test]
    fn damaged_inputs_are_rejected() {
        let ck = sample();
        let text = ck.manifest().to_text();
        let blob = ck.blob();
        assert!(Checkpoint::<f64>::parse(&text, &blob[..blob.len() - 1]).is_err());
        let mut longer = blob.clone();
        longer.push(0);
        assert!(Checkpoint::<f64>::parse(&text, &longer).is_err());
        assert!(Checkpoint::<f32>::parse(&text, &blob).is_err());
        assert!(Checkpoint::<f64>::parse(&text.replace("version = 1", "version = 2"), &blob).is_err());
        assert!(Checkpoint::<f64>::parse(&text.replace("param.0 = ", "param.0 = x "), &blob).is_err());
        assert!(Checkpoint::<f64>::parse("format = other", &blob).is_err());
    }

    #[test]
    fn resume_reproduces_next_epoch_bitwise() {
        let (cfg, data) = tiny_task(9, 8);
        let config = TrainConfig {
            batch_size: 4,
            seed: 21,
            ..TrainConfig::default()
        };
        let model = Model::init(cfg, &mut RngState::new(3)).unwrap();
        let mut t = Trainer::new(model, config.clone()).unwrap();
        t.train_epoch(&data, &data[..3]).unwrap();

        let dir = tempfile::tempdir().unwrap();
        Checkpoint {
            config: t.model.config.clone(),
            store: t.model.store.clone(),
            optimizer: Some(t.optimizer.clone()),
            trainer: t.state(),
        }
        .save(dir.path())
        .unwrap();
        let continued = t.train_epoch(&data, &data[..3]).unwrap();

        let ck = Checkpoint::<f64>::load(dir.path()).unwrap();
        let model = Model::from_store(ck.config, ck.store).unwrap();
        let mut r = Trainer::resume(model, ck.optimizer.unwrap(), config, ck.trainer).unwrap();
        let resumed = r.train_epoch(&data, &data[..3]).unwrap();
        assert_eq!(resumed, continued);
        for ((_, a), (_, b)) in r.model.store.iter().zip(t.model.store.iter()) {
            assert_eq!(a.value, b.value);
        }
    }

    #[test]
    fn missing_files_report_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let err = Checkpoint::<f64>::load(dir.path()).unwrap_err();
        assert!(err.to_string().contains(MANIFEST_FILE));
    }
}
