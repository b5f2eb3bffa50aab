//! Autoregressive character decoders.
//!
//! Four wirings share one step interface:
//!
//! * `Single`: one attention over the encoder states, one LSTM. The LSTM
//!   input is `[embed(c_{l-1}); r_l]`, its state is `q`, and the query for
//!   step `l` is `q_{l-1}`. Logits are `W q_l + b`.
//! * `Mha`: `N` heads attend with `W_Q^(n) q_{l-1}` against keys
//!   `W_K^(n) h_t`, sum values `W_V^(n) h_t`, and the head contexts are
//!   fused by `W_O` into one context for the single LSTM.
//! * `Mhd`: each head owns an LSTM and its own state `q^(n)`, which is the
//!   query of that head. All heads read the same previous token. Logits are
//!   `sum_n W^(n) q_l^(n) + b`.
//! * `Hmhd`: `Mhd` with a different attention kind per head.
//!
//! Initial decoder states are zero. The previous token is embedded with a
//! trainable table whose width equals the decoder units.

use std::fmt;
use std::str::FromStr;

use crate::attention::{
    self, AttentionDims, AttentionHistory, AttentionKind, AttentionMemory, AttentionParams,
    LocationConfig,
};
use crate::encoder::{lstm_cell, EncoderStates, LstmParams, LstmState};
use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::params::{ParamId, ParamStore};
use crate::real::Real;
use crate::rng::RngState;

/// Output symbol inventory. Symbols are whitespace-free strings; the
/// synthetic tasks use one character per content symbol.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VocabSpec {
    symbols: Vec<String>,
    sos: usize,
    eos: usize,
}

impl VocabSpec {
    pub fn new(symbols: Vec<String>, sos: usize, eos: usize) -> Result<Self> {
        if sos == eos {
            return Err(Error::Config("sos and eos must differ".into()));
        }
        if sos >= symbols.len() || eos >= symbols.len() {
            return Err(Error::Config(format!(
                "sos {sos} / eos {eos} outside vocabulary of {}",
                symbols.len()
            )));
        }
        for (i, s) in symbols.iter().enumerate() {
            if s.is_empty() || s.chars().any(char::is_whitespace) {
                return Err(Error::Config(format!("symbol {i} is empty or has whitespace")));
            }
            if symbols[..i].contains(s) {
                return Err(Error::Config(format!("duplicate symbol {s:?}")));
            }
        }
        Ok(VocabSpec { symbols, sos, eos })
    }

    /// `<sos>`, `<eos>`, then `content` lowercase letters.
    pub fn letters(content: usize) -> Result<Self> {
        if content == 0 || content > 26 {
            return Err(Error::Config(format!("letter vocabulary needs 1..=26 symbols, got {content}")));
        }
        let mut symbols = vec!["<sos>".to_string(), "<eos>".to_string()];
        symbols.extend((b'a'..b'a' + content as u8).map(|c| (c as char).to_string()));
        Self::new(symbols, 0, 1)
    }

    pub fn size(&self) -> usize {
        self.symbols.len()
    }

    pub fn sos(&self) -> usize {
        self.sos
    }

    pub fn eos(&self) -> usize {
        self.eos
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn is_special(&self, id: usize) -> bool {
        id == self.sos || id == self.eos
    }

    pub fn check(&self, id: usize) -> Result<()> {
        if id >= self.size() {
            return Err(Error::TokenOutOfRange {
                id,
                size: self.size(),
            });
        }
        Ok(())
    }

    /// Maps each character of `text` to a single-character symbol.
    pub fn encode(&self, text: &str) -> Result<Vec<usize>> {
        text.chars()
            .map(|c| {
                let mut buf = [0u8; 4];
                let s: &str = c.encode_utf8(&mut buf);
                self.symbols
                    .iter()
                    .position(|x| x == s)
                    .filter(|&i| !self.is_special(i))
                    .ok_or_else(|| Error::Config(format!("character {c:?} not in vocabulary")))
            })
            .collect()
    }

    /// Concatenates content symbols, dropping sos/eos.
    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter()
            .filter(|&&i| !self.is_special(i) && i < self.size())
            .map(|&i| self.symbols[i].as_str())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecoderMode {
    Single,
    Mha,
    Mhd,
    Hmhd,
}

impl fmt::Display for DecoderMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DecoderMode::Single => "single",
            DecoderMode::Mha => "mha",
            DecoderMode::Mhd => "mhd",
            DecoderMode::Hmhd => "hmhd",
        })
    }
}

impl FromStr for DecoderMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(DecoderMode::Single),
            "mha" => Ok(DecoderMode::Mha),
            "mhd" => Ok(DecoderMode::Mhd),
            "hmhd" => Ok(DecoderMode::Hmhd),
            _ => Err(Error::Config(format!("unknown decoder mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderConfig {
    pub mode: DecoderMode,
    /// One attention kind per head.
    pub kinds: Vec<AttentionKind>,
    pub units: usize,
    pub layers: usize,
    /// Hidden size of additive-family scorers.
    pub attention_dim: usize,
    /// Per-head query/key/value width for the multi-head modes.
    pub head_dim: usize,
    pub location: LocationConfig,
    /// Multi-head decoders project values with `W_V^(n)`; when off, head
    /// contexts are sums of raw encoder states.
    pub value_projection: bool,
}

impl DecoderConfig {
    fn base(mode: DecoderMode, kinds: Vec<AttentionKind>) -> Self {
        DecoderConfig {
            mode,
            kinds,
            units: 32,
            layers: 1,
            attention_dim: 32,
            head_dim: 32,
            location: LocationConfig::desk(),
            value_projection: true,
        }
    }

    pub fn single(kind: AttentionKind) -> Self {
        Self::base(DecoderMode::Single, vec![kind])
    }

    pub fn mha(kind: AttentionKind, heads: usize) -> Self {
        Self::base(DecoderMode::Mha, vec![kind; heads])
    }

    pub fn mhd(kind: AttentionKind, heads: usize) -> Self {
        Self::base(DecoderMode::Mhd, vec![kind; heads])
    }

    pub fn hmhd(kinds: Vec<AttentionKind>) -> Self {
        Self::base(DecoderMode::Hmhd, kinds)
    }

    /// Heterogeneous decoder from attention-kind names, one per head.
    pub fn hmhd_configure(names: &[&str]) -> Result<Self> {
        let kinds = names
            .iter()
            .map(|n| n.parse())
            .collect::<Result<Vec<AttentionKind>>>()?;
        let cfg = Self::hmhd(kinds);
        cfg.validate()?;
        Ok(cfg)
    }

    /// Full-scale sizes: 320 units, one layer.
    pub fn with_full_sizes(mut self) -> Self {
        self.units = 320;
        self.attention_dim = 320;
        self.head_dim = 320;
        self.location = LocationConfig::full();
        self
    }

    pub fn heads(&self) -> usize {
        self.kinds.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.kinds.is_empty() {
            return Err(Error::Config("decoder needs at least one head".into()));
        }
        if self.layers != 1 {
            return Err(Error::Config(format!(
                "only one decoder layer is supported, got {}",
                self.layers
            )));
        }
        if self.units == 0 || self.attention_dim == 0 || self.head_dim == 0 {
            return Err(Error::Config("decoder sizes must be positive".into()));
        }
        match self.mode {
            DecoderMode::Single if self.kinds.len() != 1 => {
                return Err(Error::Config("single-head decoder takes exactly one kind".into()))
            }
            DecoderMode::Mha | DecoderMode::Mhd
                if self.kinds.iter().any(|&k| k != self.kinds[0]) =>
            {
                return Err(Error::Config(format!(
                    "{} replicates one attention kind; use hmhd for mixed heads",
                    self.mode
                )))
            }
            _ => {}
        }
        if self.kinds.contains(&AttentionKind::Location) {
            self.location.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct HeadProjection {
    /// `[dk, units]`
    pub query: ParamId,
    /// `[dk, enc]`
    pub key: ParamId,
    /// `[dv, enc]`
    pub value: Option<ParamId>,
}

#[derive(Debug, Clone, Copy)]
pub struct HeadParams {
    pub attention: AttentionParams,
    pub projection: Option<HeadProjection>,
    /// Per-head LSTM and readout `W^(n)` (multi-head decoders only).
    pub lstm: Option<LstmParams>,
    pub readout: Option<ParamId>,
}

#[derive(Debug, Clone, Copy)]
pub struct SharedCore {
    pub lstm: LstmParams,
    /// `[V, units]`
    pub readout: ParamId,
    /// `W_O`, `[enc, N * dv]` (MHA only).
    pub mix: Option<ParamId>,
}

#[derive(Debug, Clone)]
pub struct Decoder {
    pub config: DecoderConfig,
    pub vocab: VocabSpec,
    /// `[V, units]`
    pub embedding: ParamId,
    pub heads: Vec<HeadParams>,
    pub shared: Option<SharedCore>,
    /// `[V]`
    pub bias: ParamId,
}

#[derive(Debug, Clone, Copy)]
pub struct HeadState {
    pub index: usize,
    /// Own recurrent state in multi-head decoders.
    pub recurrent: Option<LstmState>,
    pub history: AttentionHistory,
}

#[derive(Debug, Clone)]
pub struct DecoderState {
    /// LSTM state of single and MHA decoders.
    pub shared: Option<LstmState>,
    pub heads: Vec<HeadState>,
}

#[derive(Debug, Clone)]
pub struct DecoderMemory {
    pub heads: Vec<AttentionMemory>,
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    pub state: DecoderState,
    pub logits: Var,
    /// Attention weights of each head at this step.
    pub weights: Vec<Var>,
}

impl Decoder {
    pub fn init<T: Real>(
        config: DecoderConfig,
        vocab: VocabSpec,
        encoder_dim: usize,
        store: &mut ParamStore<T>,
        init: (f64, f64),
        rng: &mut RngState,
    ) -> Result<Self> {
        config.validate()?;
        let units = config.units;
        let v = vocab.size();
        let n = config.heads();
        let dk = config.head_dim;
        let multi = config.mode != DecoderMode::Single;
        let per_head = matches!(config.mode, DecoderMode::Mhd | DecoderMode::Hmhd);
        let project_values = match config.mode {
            DecoderMode::Single => false,
            DecoderMode::Mha => true,
            DecoderMode::Mhd | DecoderMode::Hmhd => config.value_projection,
        };
        let context_dim = if project_values { dk } else { encoder_dim };

        let embedding = store.uniform("dec.embed", &[v, units], init, rng)?;
        let mut heads = Vec::with_capacity(n);
        for (i, &kind) in config.kinds.iter().enumerate() {
            let prefix = format!("dec.head{i}");
            let projection = if multi {
                Some(HeadProjection {
                    query: store.uniform(format!("{prefix}.w_query"), &[dk, units], init, rng)?,
                    key: store.uniform(format!("{prefix}.w_key"), &[dk, encoder_dim], init, rng)?,
                    value: if project_values {
                        Some(store.uniform(format!("{prefix}.w_value"), &[dk, encoder_dim], init, rng)?)
                    } else {
                        None
                    },
                })
            } else {
                None
            };
            let dims = if multi {
                AttentionDims {
                    query: dk,
                    key: dk,
                    hidden: config.attention_dim,
                }
            } else {
                AttentionDims {
                    query: units,
                    key: encoder_dim,
                    hidden: config.attention_dim,
                }
            };
            let attention = AttentionParams::init(
                kind,
                store,
                &format!("{prefix}.att"),
                dims,
                config.location,
                init,
                rng,
            )?;
            let (lstm, readout) = if per_head {
                (
                    Some(LstmParams::init(
                        store,
                        &format!("{prefix}.lstm"),
                        units + context_dim,
                        units,
                        init,
                        rng,
                    )?),
                    Some(store.uniform(format!("{prefix}.out"), &[v, units], init, rng)?),
                )
            } else {
                (None, None)
            };
            heads.push(HeadParams {
                attention,
                projection,
                lstm,
                readout,
            });
        }
        let shared = if per_head {
            None
        } else {
            let mix = if config.mode == DecoderMode::Mha {
                Some(store.uniform("dec.mix", &[encoder_dim, n * dk], init, rng)?)
            } else {
                None
            };
            Some(SharedCore {
                lstm: LstmParams::init(store, "dec.lstm", units + encoder_dim, units, init, rng)?,
                readout: store.uniform("dec.out", &[v, units], init, rng)?,
                mix,
            })
        };
        let bias = store.uniform("dec.bias", &[v], init, rng)?;
        Ok(Decoder {
            config,
            vocab,
            embedding,
            heads,
            shared,
            bias,
        })
    }

    /// Projects encoder states per head and precomputes attention keys.
    pub fn prepare<T: Real>(
        &self,
        g: &mut Graph<'_, T>,
        enc: &EncoderStates,
        mask: Option<Vec<bool>>,
    ) -> Result<DecoderMemory> {
        let mut heads = Vec::with_capacity(self.heads.len());
        for head in &self.heads {
            let (keys_in, values) = match &head.projection {
                Some(p) => {
                    let wk = g.param(p.key);
                    let keys = g.matmul_nt(enc.states, wk)?;
                    let values = match p.value {
                        Some(v) => {
                            let wv = g.param(v);
                            g.matmul_nt(enc.states, wv)?
                        }
                        None => enc.states,
                    };
                    (keys, values)
                }
                None => (enc.states, enc.states),
            };
            heads.push(attention::prepare(
                g,
                &head.attention,
                keys_in,
                values,
                mask.clone(),
            )?);
        }
        Ok(DecoderMemory { heads })
    }

    pub fn initial_state<T: Real>(&self, g: &mut Graph<'_, T>) -> DecoderState {
        let units = self.config.units;
        let shared = self.shared.map(|_| LstmState::zeros(g, units));
        let heads = self
            .heads
            .iter()
            .enumerate()
            .map(|(index, h)| HeadState {
                index,
                recurrent: h.lstm.map(|_| LstmState::zeros(g, units)),
                history: AttentionHistory::new(),
            })
            .collect();
        DecoderState { shared, heads }
    }

    /// Embedding row for the previous token.
    pub fn embed_input<T: Real>(&self, g: &mut Graph<'_, T>, token: usize) -> Result<Var> {
        self.vocab.check(token)?;
        let table = g.param(self.embedding);
        g.row(table, token)
    }

    pub fn step<T: Real>(
        &self,
        g: &mut Graph<'_, T>,
        mem: &DecoderMemory,
        prev: usize,
        state: &DecoderState,
    ) -> Result<StepOutput> {
        if state.heads.len() != self.heads.len() || mem.heads.len() != self.heads.len() {
            return Err(Error::Contract(format!(
                "decoder has {} heads, state has {}, memory has {}",
                self.heads.len(),
                state.heads.len(),
                mem.heads.len()
            )));
        }
        match self.config.mode {
            DecoderMode::Single => self.single_step(g, mem, prev, state),
            DecoderMode::Mha => self.mha_step(g, mem, prev, state),
            DecoderMode::Mhd | DecoderMode::Hmhd => self.mhd_step(g, mem, prev, state),
        }
    }

    fn shared_core(&self) -> Result<&SharedCore> {
        self.shared
            .as_ref()
            .ok_or_else(|| Error::Contract(format!("{} decoder has no shared LSTM", self.config.mode)))
    }

    fn shared_state(state: &DecoderState) -> Result<LstmState> {
        state
            .shared
            .ok_or_else(|| Error::Contract("decoder state lacks the shared LSTM state".into()))
    }

    /// Attention of head `n` with an already-projected query.
    fn head_attend<T: Real>(
        &self,
        g: &mut Graph<'_, T>,
        n: usize,
        query: Var,
        mem: &AttentionMemory,
        history: &AttentionHistory,
    ) -> Result<(Var, Var, AttentionHistory)> {
        let head = &self.heads[n];
        let q = match &head.projection {
            Some(p) => {
                let wq = g.param(p.query);
                g.matvec(wq, query)?
            }
            None => query,
        };
        let (a, history) = attention::attend(g, &head.attention, q, mem, history)?;
        let r = attention::context_vector(g, a, mem.values)?;
        Ok((a, r, history))
    }

    fn shared_readout<T: Real>(&self, g: &mut Graph<'_, T>, h: Var) -> Result<Var> {
        let core = self.shared_core()?;
        let w = g.param(core.readout);
        let b = g.param(self.bias);
        let z = g.matvec(w, h)?;
        g.add(z, b)
    }

    pub fn single_step<T: Real>(
        &self,
        g: &mut Graph<'_, T>,
        mem: &DecoderMemory,
        prev: usize,
        state: &DecoderState,
    ) -> Result<StepOutput> {
        let core = *self.shared_core()?;
        let q = Self::shared_state(state)?;
        let hs = &state.heads[0];
        let (a, r, history) = self.head_attend(g, 0, q.h, &mem.heads[0], &hs.history)?;
        let emb = self.embed_input(g, prev)?;
        let x = g.concat(&[emb, r])?;
        let next = lstm_cell(g, x, q, &core.lstm)?;
        let logits = self.shared_readout(g, next.h)?;
        Ok(StepOutput {
            state: DecoderState {
                shared: Some(next),
                heads: vec![HeadState { history, ..*hs }],
            },
            logits,
            weights: vec![a],
        })
    }

    pub fn mha_step<T: Real>(
        &self,
        g: &mut Graph<'_, T>,
        mem: &DecoderMemory,
        prev: usize,
        state: &DecoderState,
    ) -> Result<StepOutput> {
        let core = *self.shared_core()?;
        let mix = core
            .mix
            .ok_or_else(|| Error::Contract("MHA decoder lacks W_O".into()))?;
        let q = Self::shared_state(state)?;
        let mut weights = Vec::with_capacity(self.heads.len());
        let mut contexts = Vec::with_capacity(self.heads.len());
        let mut heads = Vec::with_capacity(self.heads.len());
        for (n, hs) in state.heads.iter().enumerate() {
            let (a, r, history) = self.head_attend(g, n, q.h, &mem.heads[n], &hs.history)?;
            weights.push(a);
            contexts.push(r);
            heads.push(HeadState { history, ..*hs });
        }
        let stacked = g.concat(&contexts)?;
        let wo = g.param(mix);
        let r = g.matvec(wo, stacked)?;
        let emb = self.embed_input(g, prev)?;
        let x = g.concat(&[emb, r])?;
        let next = lstm_cell(g, x, q, &core.lstm)?;
        let logits = self.shared_readout(g, next.h)?;
        Ok(StepOutput {
            state: DecoderState {
                shared: Some(next),
                heads,
            },
            logits,
            weights,
        })
    }

    pub fn mhd_step<T: Real>(
        &self,
        g: &mut Graph<'_, T>,
        mem: &DecoderMemory,
        prev: usize,
        state: &DecoderState,
    ) -> Result<StepOutput> {
        let emb = self.embed_input(g, prev)?;
        let mut weights = Vec::with_capacity(self.heads.len());
        let mut heads = Vec::with_capacity(self.heads.len());
        let mut logits: Option<Var> = None;
        for (n, hs) in state.heads.iter().enumerate() {
            let params = &self.heads[n];
            let (lstm, readout) = match (&params.lstm, params.readout) {
                (Some(l), Some(w)) => (*l, w),
                _ => return Err(Error::Contract(format!("head {n} has no decoder LSTM"))),
            };
            let q = hs
                .recurrent
                .ok_or_else(|| Error::Contract(format!("head {n} state lacks its LSTM state")))?;
            let (a, r, history) = self.head_attend(g, n, q.h, &mem.heads[n], &hs.history)?;
            let x = g.concat(&[emb, r])?;
            let next = lstm_cell(g, x, q, &lstm)?;
            let w = g.param(readout);
            let part = g.matvec(w, next.h)?;
            logits = Some(match logits {
                Some(acc) => g.add(acc, part)?,
                None => part,
            });
            weights.push(a);
            heads.push(HeadState {
                index: hs.index,
                recurrent: Some(next),
                history,
            });
        }
        let b = g.param(self.bias);
        let logits = g.add(logits.expect("at least one head"), b)?;
        Ok(StepOutput {
            state: DecoderState {
                shared: None,
                heads,
            },
            logits,
            weights,
        })
    }
}
