//! End-to-end runs: train a variant on a dataset, decode the test split,
//! score it and export attention traces.
//!
//! An output directory holds `last/` and `best/` checkpoints, `train_log.tsv`,
//! `decode.txt`, `attention/` and `results.tsv`. Everything except the
//! `seconds` column of `results.tsv` is a pure function of the inputs.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::attention::AttentionKind;
use crate::checkpoint::Checkpoint;
use crate::data::{Dataset, Split, SyntheticTaskConfig};
use crate::decoder::DecoderConfig;
use crate::decoding::{beam_search, format_decodes, BeamConfig, BeamResult};
use crate::error::{Error, Result};
use crate::export::export_attention;
use crate::kv::KeyValues;
use crate::metrics::ErrorCount;
use crate::model::{Model, ModelConfig};
use crate::rng::RngState;
use crate::training::{EpochMetrics, Example, Trainer};

/// Decoder architecture named the way results tables label it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Variant {
    Single(AttentionKind),
    Mha(AttentionKind),
    Mhd(AttentionKind),
    Hmhd(Vec<AttentionKind>),
}

impl Variant {
    /// The comparison set run by `compare` when no list is given.
    pub const STANDARD: [&'static str; 9] = [
        "Dot",
        "Add",
        "Loc",
        "MHA-Dot",
        "MHA-Add",
        "MHA-Loc",
        "MHD-Loc",
        "Dot+Add+Loc+Cov",
        "2xLoc+2xCov",
    ];

    pub fn decoder(&self, heads: usize) -> DecoderConfig {
        match self {
            Variant::Single(k) => DecoderConfig::single(*k),
            Variant::Mha(k) => DecoderConfig::mha(*k, heads),
            Variant::Mhd(k) => DecoderConfig::mhd(*k, heads),
            Variant::Hmhd(kinds) => DecoderConfig::hmhd(kinds.clone()),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::Single(k) => write!(f, "{k}"),
            Variant::Mha(k) => write!(f, "MHA-{k}"),
            Variant::Mhd(k) => write!(f, "MHD-{k}"),
            Variant::Hmhd(kinds) => {
                let mut terms = Vec::new();
                for run in kinds.chunk_by(|a, b| a == b) {
                    terms.push(match run.len() {
                        1 => run[0].to_string(),
                        n => format!("{n}x{}", run[0]),
                    });
                }
                f.write_str(&terms.join("+"))
            }
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let lower = s.to_ascii_lowercase();
        if let Some(k) = lower.strip_prefix("mha-") {
            return Ok(Variant::Mha(k.parse()?));
        }
        if let Some(k) = lower.strip_prefix("mhd-") {
            return Ok(Variant::Mhd(k.parse()?));
        }
        if !s.contains('+') && !lower.contains('x') {
            return Ok(Variant::Single(s.parse()?));
        }
        let mut kinds = Vec::new();
        for term in lower.split('+') {
            let (count, kind) = match term.split_once('x') {
                Some((n, k)) => (
                    n.parse::<usize>()
                        .ok()
                        .filter(|&n| n > 0)
                        .ok_or_else(|| Error::Config(format!("bad head count in {term:?}")))?,
                    k,
                ),
                None => (1, term),
            };
            let kind: AttentionKind = kind.parse()?;
            kinds.extend(std::iter::repeat_n(kind, count));
        }
        Ok(Variant::Hmhd(kinds))
    }
}

/// Everything a run depends on, read from a flat `key = value` file.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: SyntheticTaskConfig,
    pub train: crate::training::TrainConfig,
    pub beam: BeamConfig,
    pub variant: Variant,
    /// Head count for the MHA and MHD variants.
    pub heads: usize,
    /// Test utterances whose attention is exported.
    pub traces: usize,
    /// `model.*` entries applied over the defaults derived from the variant.
    pub model: KeyValues,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            data: SyntheticTaskConfig::default(),
            train: crate::training::TrainConfig::default(),
            beam: BeamConfig::default(),
            variant: Variant::Single(AttentionKind::Location),
            heads: 4,
            traces: 3,
            model: KeyValues::new(),
        }
    }
}

impl ExperimentConfig {
    pub const KEYS: &'static [&'static str] = &["experiment.variant", "experiment.heads", "experiment.traces"];

    fn known_keys() -> Vec<&'static str> {
        let mut keys: Vec<&str> = Self::KEYS.to_vec();
        keys.extend(SyntheticTaskConfig::KEYS);
        keys.extend(crate::training::TrainConfig::KEYS);
        keys.extend(BeamConfig::KEYS);
        keys.extend(ModelConfig::KEYS);
        keys
    }

    /// Applies every entry of `kv`; unknown keys are an error.
    pub fn apply(&mut self, kv: &KeyValues) -> Result<()> {
        let unknown = kv.unknown_keys(&Self::known_keys());
        if !unknown.is_empty() {
            return Err(Error::Config(format!("unknown configuration keys: {}", unknown.join(", "))));
        }
        self.data.apply(kv)?;
        self.train.apply(kv)?;
        self.beam.apply(kv)?;
        if let Some(v) = kv.get("experiment.variant") {
            self.variant = v.parse()?;
        }
        kv.read_into("experiment.heads", &mut self.heads)?;
        kv.read_into("experiment.traces", &mut self.traces)?;
        for (k, v) in kv.iter() {
            if k.starts_with("model.") {
                self.model.set(k, v);
            }
        }
        Ok(())
    }

    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply(kv)?;
        Ok(cfg)
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("experiment.variant", &self.variant);
        kv.set("experiment.heads", self.heads);
        kv.set("experiment.traces", self.traces);
        self.data.write(&mut kv);
        self.train.write(&mut kv);
        self.beam.write(&mut kv);
        kv.merge(&self.model);
        kv
    }

    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        self.train.validate()?;
        self.beam.validate()?;
        if self.heads == 0 {
            return Err(Error::Config("head count must be positive".into()));
        }
        Ok(())
    }

    pub fn model_config(&self, dataset: &Dataset) -> Result<ModelConfig> {
        let mut cfg = ModelConfig::desk(dataset.dim, dataset.vocab.clone(), self.variant.decoder(self.heads));
        cfg.apply(&self.model)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultsRow {
    pub variant: String,
    pub cer: f64,
    pub epochs: usize,
    pub seconds: f64,
}

impl ResultsRow {
    pub const HEADER: &'static str = "variant\tcer\tepochs\tseconds";

    pub fn to_line(&self) -> String {
        format!("{}\t{:.4}\t{}\t{:.1}", self.variant, self.cer, self.epochs, self.seconds)
    }

    /// The row without its wall-clock column.
    pub fn deterministic_part(&self) -> String {
        format!("{}\t{:.4}\t{}", self.variant, self.cer, self.epochs)
    }
}

pub fn results_table(rows: &[ResultsRow]) -> String {
    let mut out = format!("{}\n", ResultsRow::HEADER);
    for r in rows {
        out.push_str(&r.to_line());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub epochs: usize,
    pub best_valid: Option<f64>,
    pub history: Vec<EpochMetrics>,
}

pub const LOG_HEADER: &str = "epoch\ttrain_loss\tvalid_loss\teps\teps_decayed\timproved\tmax_clipped_norm";

fn log_line(m: &EpochMetrics) -> String {
    format!(
        "{}\t{:.6}\t{:.6}\t{:e}\t{}\t{}\t{:.6}\n",
        m.epoch, m.train_loss, m.valid_loss, m.eps, m.eps_decayed, m.improved, m.max_clipped_norm
    )
}

/// Validation data: the dev split, or a held-out tail of the training
/// split when the dataset has no dev utterances.
fn train_valid_split(dataset: &Dataset, fraction: f64) -> Result<(Vec<Example<f64>>, Vec<Example<f64>>)> {
    let mut train = dataset.examples::<f64>(Split::Train)?;
    let dev = dataset.examples::<f64>(Split::Dev)?;
    if !dev.is_empty() {
        return Ok((train, dev));
    }
    let held = ((train.len() as f64 * fraction).ceil() as usize).max(1);
    if held >= train.len() {
        return Err(Error::Config("training split too small to hold out validation data".into()));
    }
    let valid = train.split_off(train.len() - held);
    Ok((train, valid))
}

/// Trains into `out`, resuming from `out/last` when `resume` is set and a
/// checkpoint exists there.
pub fn train(
    cfg: &ExperimentConfig,
    dataset: &Dataset,
    out: &Path,
    resume: bool,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let model_cfg = cfg.model_config(dataset)?;
    let (train_set, valid_set) = train_valid_split(dataset, cfg.train.valid_fraction)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let last_dir = out.join("last");
    let best_dir = out.join("best");
    let log_path = out.join("train_log.tsv");

    let (mut trainer, mut log) = if resume && last_dir.join(crate::checkpoint::MANIFEST_FILE).exists() {
        let ck = Checkpoint::<f64>::load(&last_dir)?;
        if ck.config != model_cfg {
            return Err(Error::Config("checkpoint was trained with a different model configuration".into()));
        }
        let optimizer = ck
            .optimizer
            .ok_or_else(|| Error::Format("checkpoint has no optimizer state".into()))?;
        let model = Model::from_store(ck.config, ck.store)?;
        let log = fs::read_to_string(&log_path).map_err(|e| Error::io(&log_path, e))?;
        let kept: Vec<&str> = log.lines().take(ck.trainer.epoch + 1).collect();
        (
            Trainer::resume(model, optimizer, cfg.train.clone(), ck.trainer)?,
            kept.join("\n") + "\n",
        )
    } else {
        let mut rng = RngState::new(cfg.train.seed).fork();
        let model = Model::<f64>::init(model_cfg, &mut rng)?;
        (Trainer::new(model, cfg.train.clone())?, format!("{LOG_HEADER}\n"))
    };

    let history = trainer.fit(&train_set, &valid_set, |t, m| {
        let state = t.state();
        Checkpoint {
            config: t.model.config.clone(),
            store: t.model.store.clone(),
            optimizer: Some(t.optimizer.clone()),
            trainer: state,
        }
        .save(&last_dir)?;
        if let (true, Some(best)) = (m.improved, t.best_params()) {
            Checkpoint {
                config: t.model.config.clone(),
                store: best.clone(),
                optimizer: None,
                trainer: state,
            }
            .save(&best_dir)?;
        }
        log.push_str(&log_line(m));
        fs::write(&log_path, &log).map_err(|e| Error::io(&log_path, e))?;
        on_epoch(m);
        Ok(())
    })?;
    Ok(TrainOutcome {
        epochs: trainer.epoch(),
        best_valid: trainer.best_valid(),
        history,
    })
}

pub fn load_model(dir: &Path) -> Result<Model<f64>> {
    let ck = Checkpoint::<f64>::load(dir)?;
    Model::from_store(ck.config, ck.store)
}

#[derive(Debug, Clone)]
pub struct Decoded {
    pub id: String,
    pub reference: String,
    pub hypothesis: String,
    pub result: BeamResult,
}

/// Beam-decodes every utterance of `split` in parallel, keeping manifest order.
pub fn decode_split(model: &Model<f64>, dataset: &Dataset, split: Split, beam: &BeamConfig) -> Result<Vec<Decoded>> {
    if model.vocab() != &dataset.vocab {
        return Err(Error::Config("model and dataset vocabularies differ".into()));
    }
    let utts: Vec<_> = dataset.split(split).collect();
    utts.par_iter()
        .map(|u| {
            let x = crate::encoder::FeatureSequence::new(u.features.clone())?.cast::<f64>();
            let result = beam_search(model, &x, beam)?;
            Ok(Decoded {
                id: u.id.clone(),
                reference: u.text.clone(),
                hypothesis: model.vocab().decode(&result.tokens),
                result,
            })
        })
        .collect()
}

pub fn decode_text(decoded: &[Decoded]) -> String {
    format_decodes(decoded.iter().map(|d| (d.id.as_str(), d.hypothesis.as_str())))
}

/// Reads `id<TAB>text` lines as written by [`decode_text`].
pub fn parse_decodes(text: &str) -> Result<Vec<(String, String)>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let (id, hyp) = l
                .split_once('\t')
                .ok_or_else(|| Error::parse(i + 1, "expected `id<TAB>text`"))?;
            Ok((id.to_string(), hyp.to_string()))
        })
        .collect()
}

/// Corpus error rate of `id -> hypothesis` pairs against the dataset references.
pub fn score(dataset: &Dataset, hyps: &[(String, String)]) -> Result<ErrorCount> {
    let mut count = ErrorCount::default();
    for (id, hyp) in hyps {
        let u = dataset
            .find(id)
            .ok_or_else(|| Error::Config(format!("utterance {id:?} is not in the dataset")))?;
        count.add(&dataset.vocab.encode(hyp)?, &dataset.vocab.encode(&u.text)?, &dataset.vocab)?;
    }
    Ok(count)
}

pub fn export_traces(decoded: &[Decoded], dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut files = Vec::new();
    for d in decoded {
        if d.result.trace.steps() > 0 {
            files.extend(export_attention(&d.result.trace, dir, &d.id)?);
        }
    }
    Ok(files)
}

/// Trains `cfg.variant`, decodes the test split with the best checkpoint and
/// writes every artifact into `out`.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    dataset: &Dataset,
    out: &Path,
    on_epoch: impl FnMut(&EpochMetrics),
) -> Result<ResultsRow> {
    let start = Instant::now();
    let outcome = train(cfg, dataset, out, false, on_epoch)?;
    let model = load_model(&out.join("best"))?;
    let decoded = decode_split(&model, dataset, Split::Test, &cfg.beam)?;
    if decoded.is_empty() {
        return Err(Error::Config("test split is empty".into()));
    }
    let decode_path = out.join("decode.txt");
    fs::write(&decode_path, decode_text(&decoded)).map_err(|e| Error::io(&decode_path, e))?;
    let pairs: Vec<(String, String)> = decoded.iter().map(|d| (d.id.clone(), d.hypothesis.clone())).collect();
    let cer = score(dataset, &pairs)?.rate();
    let traces = &decoded[..cfg.traces.min(decoded.len())];
    export_traces(traces, &out.join("attention"))?;
    let row = ResultsRow {
        variant: cfg.variant.to_string(),
        cer,
        epochs: outcome.epochs,
        seconds: start.elapsed().as_secs_f64(),
    };
    let results = out.join("results.tsv");
    fs::write(&results, results_table(std::slice::from_ref(&row))).map_err(|e| Error::io(&results, e))?;
    let config = out.join("config.txt");
    fs::write(&config, cfg.to_kv().to_text()).map_err(|e| Error::io(&config, e))?;
    Ok(row)
}
