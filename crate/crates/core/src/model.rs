//! Full encoder-decoder model and the teacher-forced objective.

use crate::attention::{AttentionKind, LocationConfig};
use crate::decoder::{Decoder, DecoderConfig, DecoderMemory, DecoderMode, DecoderState, VocabSpec};
use crate::encoder::{Encoder, EncoderConfig, FeatureSequence};
use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::kv::{join, KeyValues};
use crate::params::{Gradients, ParamStore};
use crate::real::Real;
use crate::rng::RngState;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub decoder: DecoderConfig,
    pub vocab: VocabSpec,
    /// Uniform initialisation range for every parameter.
    pub init: (f64, f64),
}

const KEYS: &[&str] = &[
    "model.input_dim",
    "model.encoder.layers",
    "model.encoder.units",
    "model.encoder.projection",
    "model.encoder.subsample",
    "model.decoder.mode",
    "model.decoder.heads",
    "model.decoder.units",
    "model.decoder.layers",
    "model.decoder.attention_dim",
    "model.decoder.head_dim",
    "model.decoder.location_filters",
    "model.decoder.location_width",
    "model.decoder.value_projection",
    "model.vocab",
    "model.vocab.sos",
    "model.vocab.eos",
    "model.init_low",
    "model.init_high",
];

impl ModelConfig {
    pub const KEYS: &'static [&'static str] = KEYS;

    /// Desk-scale model over `input_dim` features and a letter vocabulary.
    /// The init range is the full-scale ±0.1 widened by sqrt(10) for layers
    /// a tenth as wide.
    pub fn desk(input_dim: usize, vocab: VocabSpec, decoder: DecoderConfig) -> Self {
        ModelConfig {
            encoder: EncoderConfig::desk(input_dim),
            decoder,
            vocab,
            init: (-0.3, 0.3),
        }
    }

    /// 320-unit model with init range ±0.1.
    pub fn full(input_dim: usize, vocab: VocabSpec, decoder: DecoderConfig) -> Self {
        ModelConfig {
            encoder: EncoderConfig::full(input_dim),
            decoder: decoder.with_full_sizes(),
            vocab,
            init: (-0.1, 0.1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.decoder.validate()?;
        if !(self.init.0 < self.init.1) {
            return Err(Error::Config(format!("empty init range {:?}", self.init)));
        }
        Ok(())
    }

    pub fn write(&self, kv: &mut KeyValues) {
        let e = &self.encoder;
        let d = &self.decoder;
        kv.set("model.input_dim", e.input_dim);
        kv.set("model.encoder.layers", e.layers);
        kv.set("model.encoder.units", e.units);
        kv.set("model.encoder.projection", e.projection);
        kv.set("model.encoder.subsample", join(&e.subsample));
        kv.set("model.decoder.mode", d.mode);
        kv.set("model.decoder.heads", join(&d.kinds));
        kv.set("model.decoder.units", d.units);
        kv.set("model.decoder.layers", d.layers);
        kv.set("model.decoder.attention_dim", d.attention_dim);
        kv.set("model.decoder.head_dim", d.head_dim);
        kv.set("model.decoder.location_filters", d.location.filters);
        kv.set("model.decoder.location_width", d.location.width);
        kv.set("model.decoder.value_projection", d.value_projection);
        kv.set("model.vocab", self.vocab.symbols().join(" "));
        kv.set("model.vocab.sos", self.vocab.sos());
        kv.set("model.vocab.eos", self.vocab.eos());
        kv.set("model.init_low", self.init.0);
        kv.set("model.init_high", self.init.1);
    }

    /// Applies whichever `model.*` keys are present.
    pub fn apply(&mut self, kv: &KeyValues) -> Result<()> {
        let e = &mut self.encoder;
        let d = &mut self.decoder;
        kv.read_into("model.input_dim", &mut e.input_dim)?;
        kv.read_into("model.encoder.layers", &mut e.layers)?;
        kv.read_into("model.encoder.units", &mut e.units)?;
        kv.read_into("model.encoder.projection", &mut e.projection)?;
        if let Some(s) = kv.list("model.encoder.subsample")? {
            e.subsample = s.into_iter().collect();
        }
        kv.read_into("model.decoder.mode", &mut d.mode)?;
        if let Some(kinds) = kv.list::<AttentionKind>("model.decoder.heads")? {
            d.kinds = kinds;
        }
        kv.read_into("model.decoder.units", &mut d.units)?;
        kv.read_into("model.decoder.layers", &mut d.layers)?;
        kv.read_into("model.decoder.attention_dim", &mut d.attention_dim)?;
        kv.read_into("model.decoder.head_dim", &mut d.head_dim)?;
        kv.read_into("model.decoder.location_filters", &mut d.location.filters)?;
        kv.read_into("model.decoder.location_width", &mut d.location.width)?;
        kv.read_into("model.decoder.value_projection", &mut d.value_projection)?;
        if kv.get("model.vocab").is_some()
            || kv.get("model.vocab.sos").is_some()
            || kv.get("model.vocab.eos").is_some()
        {
            let symbols = match kv.get("model.vocab") {
                Some(v) => v.split_whitespace().map(String::from).collect(),
                None => self.vocab.symbols().to_vec(),
            };
            let sos = kv.value("model.vocab.sos")?.unwrap_or(self.vocab.sos());
            let eos = kv.value("model.vocab.eos")?.unwrap_or(self.vocab.eos());
            self.vocab = VocabSpec::new(symbols, sos, eos)?;
        }
        kv.read_into("model.init_low", &mut self.init.0)?;
        kv.read_into("model.init_high", &mut self.init.1)?;
        Ok(())
    }

    /// Reads a complete configuration; every key must be present.
    pub fn read(kv: &KeyValues) -> Result<Self> {
        if let Some(missing) = KEYS.iter().find(|k| kv.get(k).is_none()) {
            return Err(Error::Format(format!("missing key {missing:?}")));
        }
        let mut cfg = ModelConfig {
            encoder: EncoderConfig::desk(1),
            decoder: DecoderConfig::single(AttentionKind::Dot),
            vocab: VocabSpec::letters(1)?,
            init: (-0.1, 0.1),
        };
        cfg.decoder.location = LocationConfig::desk();
        cfg.apply(kv)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub store: ParamStore<T>,
    pub encoder: Encoder,
    pub decoder: Decoder,
}

/// Encoded utterance ready for step-wise decoding.
#[derive(Debug, Clone)]
pub struct Session {
    pub memory: DecoderMemory,
    pub state: DecoderState,
    /// Encoder output length `T'`.
    pub frames: usize,
}

impl<T: Real> Model<T> {
    /// Registers encoder then decoder parameters, drawing initial values
    /// from `rng` in registration order.
    pub fn init(config: ModelConfig, rng: &mut RngState) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let encoder = Encoder::init(config.encoder.clone(), &mut store, config.init, rng)?;
        let decoder = Decoder::init(
            config.decoder.clone(),
            config.vocab.clone(),
            config.encoder.projection,
            &mut store,
            config.init,
            rng,
        )?;
        Ok(Model {
            config,
            store,
            encoder,
            decoder,
        })
    }

    /// Rebuilds the model structure around existing parameter values, which
    /// must match the configuration's names and shapes in order.
    pub fn from_store(config: ModelConfig, store: ParamStore<T>) -> Result<Self> {
        let mut model = Self::init(config, &mut RngState::new(0))?;
        if store.len() != model.store.len() {
            return Err(Error::Format(format!(
                "expected {} parameters, found {}",
                model.store.len(),
                store.len()
            )));
        }
        for ((_, want), (_, got)) in model.store.iter().zip(store.iter()) {
            if want.name != got.name || want.value.shape() != got.value.shape() {
                return Err(Error::Format(format!(
                    "parameter {} {:?} does not match {} {:?}",
                    got.name,
                    got.value.shape(),
                    want.name,
                    want.value.shape()
                )));
            }
        }
        model.store = store;
        Ok(model)
    }

    pub fn vocab(&self) -> &VocabSpec {
        &self.config.vocab
    }

    pub fn mode(&self) -> DecoderMode {
        self.config.decoder.mode
    }

    /// Encodes `x` and returns the zero decoder state.
    pub fn begin(&self, g: &mut Graph<'_, T>, x: &FeatureSequence<T>) -> Result<Session> {
        let enc = self.encoder.encode(g, x)?;
        let memory = self.decoder.prepare(g, &enc, None)?;
        let state = self.decoder.initial_state(g);
        Ok(Session {
            memory,
            state,
            frames: enc.len,
        })
    }

    pub fn check_target(&self, target: &[usize]) -> Result<()> {
        let vocab = self.vocab();
        match target.last() {
            None => return Err(Error::Contract("empty target sequence".into())),
            Some(&last) if last != vocab.eos() => {
                return Err(Error::Contract("target must end with eos".into()))
            }
            _ => {}
        }
        target.iter().try_for_each(|&id| vocab.check(id))
    }

    /// `sum_l -log p(c*_l | c*_{<l}, X)` with the ground-truth prefix fed
    /// at every step, starting from sos.
    pub fn loss_graph(&self, g: &mut Graph<'_, T>, x: &FeatureSequence<T>, target: &[usize]) -> Result<Var> {
        self.check_target(target)?;
        let mut session = self.begin(g, x)?;
        let mut prev = self.vocab().sos();
        let mut total: Option<Var> = None;
        for &c in target {
            let out = self.decoder.step(g, &session.memory, prev, &session.state)?;
            let nll = g.nll(out.logits, c)?;
            total = Some(match total {
                Some(t) => g.add(t, nll)?,
                None => nll,
            });
            session.state = out.state;
            prev = c;
        }
        Ok(total.expect("nonempty target"))
    }

    pub fn loss(&self, x: &FeatureSequence<T>, target: &[usize]) -> Result<T> {
        let mut g = Graph::with_params(&self.store);
        let loss = self.loss_graph(&mut g, x, target)?;
        Ok(g.item(loss))
    }

    pub fn loss_and_grads(&self, x: &FeatureSequence<T>, target: &[usize]) -> Result<(T, Gradients<T>)> {
        let mut g = Graph::with_params(&self.store);
        let loss = self.loss_graph(&mut g, x, target)?;
        let value = g.item(loss);
        let grads = g
            .backward(loss)?
            .into_params()
            .expect("graph was built over the parameter store");
        Ok((value, grads))
    }
}
