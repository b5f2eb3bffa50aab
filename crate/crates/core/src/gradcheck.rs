//! Central-difference gradient checks over randomized tiny instances.
//!
//! For each parameter tensor the reported error is
//! `|g_analytic - g_numeric| / max(|g_analytic|, |g_numeric|, 1e-8)` with
//! L2 norms taken over the whole tensor. Frozen tensors are not perturbed;
//! their analytic gradient must be exactly zero and they report error 0.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::attention::{self, AttentionDims, AttentionHistory, AttentionKind, AttentionParams, LocationConfig};
use crate::decoder::{Decoder, DecoderConfig, VocabSpec};
use crate::encoder::{Encoder, EncoderConfig, EncoderStates, FeatureSequence};
use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::model::{Model, ModelConfig};
use crate::params::ParamStore;
use crate::rng::RngState;
use crate::tensor::Tensor;

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
const FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct GroupReport {
    pub name: String,
    pub elements: usize,
    pub rel_err: f64,
    pub max_abs_err: f64,
    pub frozen: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub scope: Scope,
    pub groups: Vec<GroupReport>,
}

impl GradReport {
    pub fn max_rel_err(&self) -> f64 {
        self.groups.iter().map(|g| g.rel_err).fold(0.0, f64::max)
    }

    pub fn passed(&self, tol: f64) -> bool {
        self.groups.iter().all(|g| g.rel_err < tol)
    }

    /// Tab-separated `group elements rel_err max_abs_err` lines.
    pub fn to_table(&self) -> String {
        let mut out = String::from("group\telements\trel_err\tmax_abs_err\n");
        for g in &self.groups {
            let name = if g.frozen {
                format!("{} (frozen)", g.name)
            } else {
                g.name.clone()
            };
            out.push_str(&format!("{name}\t{}\t{:.3e}\t{:.3e}\n", g.elements, g.rel_err, g.max_abs_err));
        }
        out
    }
}

fn norm(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|x| x * x).sum::<f64>().sqrt()
}

/// Compares reverse-mode gradients of `loss` with central differences for
/// every element of every trainable parameter in `store`.
pub fn check_store<F>(store: &ParamStore<f64>, step: f64, prefix: &str, loss: F) -> Result<Vec<GroupReport>>
where
    F: Fn(&mut Graph<'_, f64>) -> Result<Var> + Sync,
{
    let mut g = Graph::with_params(store);
    let l = loss(&mut g)?;
    let analytic = g
        .backward(l)?
        .into_params()
        .expect("graph was built over the parameter store");

    let elements: Vec<(usize, usize)> = store
        .iter()
        .filter(|(_, p)| p.trainable())
        .flat_map(|(id, p)| (0..p.value.len()).map(move |i| (id.0, i)))
        .collect();
    let eval = |s: &ParamStore<f64>| -> Result<f64> {
        let mut g = Graph::with_params(s);
        let l = loss(&mut g)?;
        Ok(g.item(l))
    };
    let numeric: Vec<f64> = elements
        .par_iter()
        .map_init(
            || store.clone(),
            |s, &(p, i)| -> Result<f64> {
                let id = crate::params::ParamId(p);
                let orig = s.value(id).data()[i];
                s.value_mut(id).data_mut()[i] = orig + step;
                let up = eval(s)?;
                s.value_mut(id).data_mut()[i] = orig - step;
                let down = eval(s)?;
                s.value_mut(id).data_mut()[i] = orig;
                Ok((up - down) / (2.0 * step))
            },
        )
        .collect::<Result<_>>()?;

    let mut reports = Vec::new();
    let mut cursor = 0;
    for (id, p) in store.iter() {
        let a = analytic.get(id).data();
        let name = format!("{prefix}{}", p.name);
        if !p.trainable() {
            let zero = a.iter().all(|&x| x == 0.0);
            reports.push(GroupReport {
                name,
                elements: a.len(),
                rel_err: if zero { 0.0 } else { f64::INFINITY },
                max_abs_err: if zero { 0.0 } else { f64::INFINITY },
                frozen: true,
            });
            continue;
        }
        let n = &numeric[cursor..cursor + a.len()];
        cursor += a.len();
        let diff = norm(a.iter().zip(n).map(|(x, y)| x - y));
        let denom = norm(a.iter().copied()).max(norm(n.iter().copied())).max(FLOOR);
        let max_abs_err = a.iter().zip(n).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        reports.push(GroupReport {
            name,
            elements: a.len(),
            rel_err: diff / denom,
            max_abs_err,
            frozen: false,
        });
    }
    Ok(reports)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    Tensor,
    Encoder,
    Attention,
    Decoder,
    All,
    Frozen,
}

impl Scope {
    pub const ALL: [Scope; 6] = [
        Scope::Tensor,
        Scope::Encoder,
        Scope::Attention,
        Scope::Decoder,
        Scope::All,
        Scope::Frozen,
    ];
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scope::Tensor => "tensor",
            Scope::Encoder => "encoder",
            Scope::Attention => "attention",
            Scope::Decoder => "decoder",
            Scope::All => "all",
            Scope::Frozen => "frozen",
        })
    }
}

impl FromStr for Scope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scope::ALL
            .into_iter()
            .find(|x| x.to_string() == s)
            .ok_or_else(|| Error::Config(format!("unknown gradcheck scope {s:?}")))
    }
}

fn random(shape: &[usize], rng: &mut RngState) -> Result<Tensor<f64>> {
    Ok(Tensor::uniform_init(shape, -1.0, 1.0, rng)?.with_requires_grad(false))
}

/// `sum(x * r)` for a fixed random `r`, reducing any tensor to a scalar.
fn probe(g: &mut Graph<'_, f64>, x: Var, r: &Tensor<f64>) -> Result<Var> {
    let r = g.constant(r.clone());
    let m = g.mul(x, r)?;
    Ok(g.sum(m))
}

fn tensor_scope(rng: &mut RngState) -> Result<Vec<GroupReport>> {
    let mut s = ParamStore::new();
    let init = (-1.0, 1.0);
    let w = s.uniform("w", &[4, 3], init, rng)?;
    let u = s.uniform("u", &[5, 3], init, rng)?;
    let x = s.uniform("x", &[3], init, rng)?;
    let k = s.uniform("kernels", &[2, 3], init, rng)?;
    let r = random(&[4, 2], rng)?;
    check_store(&s, STEP, "", |g| {
        let (w, u, x, k) = (g.param(w), g.param(u), g.param(x), g.param(k));
        let wx = g.matvec(w, x)?;
        let h = g.tanh(wx);
        let a = g.softmax(h, Some(&[true, true, false, true]))?;
        let f = g.conv1d(k, a)?;
        let wu = g.matmul_nt(w, u)?;
        let s = g.sigmoid(wu);
        let sa = g.vecmat(a, s)?;
        let nll = g.nll(sa, 2)?;
        let p = probe(g, f, &r)?;
        let o = g.outer(a, x)?;
        let os = g.sum(o);
        let t = g.add(nll, p)?;
        g.add(t, os)
    })
}

fn encoder_scope(rng: &mut RngState) -> Result<Vec<GroupReport>> {
    let cfg = EncoderConfig {
        input_dim: 3,
        layers: 2,
        units: 3,
        projection: 4,
        subsample: [1].into_iter().collect(),
    };
    let mut s = ParamStore::new();
    let enc = Encoder::init(cfg, &mut s, (-0.5, 0.5), rng)?;
    let x = FeatureSequence::new(random(&[7, 3], rng)?)?;
    let r = random(&[4, 4], rng)?;
    check_store(&s, STEP, "", |g| {
        let out = enc.encode(g, &x)?;
        probe(g, out.states, &r)
    })
}

fn attention_scope(rng: &mut RngState) -> Result<Vec<GroupReport>> {
    let mut reports = Vec::new();
    for kind in AttentionKind::ALL {
        let mut s = ParamStore::new();
        let dims = AttentionDims {
            query: 3,
            key: 4,
            hidden: 5,
        };
        let loc = LocationConfig { filters: 2, width: 3 };
        let params = AttentionParams::init(kind, &mut s, "att", dims, loc, (-0.8, 0.8), rng)?;
        let keys = s.uniform("keys", &[6, 4], (-1.0, 1.0), rng)?;
        let queries = s.uniform("queries", &[3, 3], (-1.0, 1.0), rng)?;
        let mask = vec![true, true, true, true, false, true];
        let r = random(&[4], rng)?;
        let group = check_store(&s, STEP, &format!("{kind}/"), |g| {
            let k = g.param(keys);
            let qs = g.param(queries);
            let mem = attention::prepare(g, &params, k, k, Some(mask.clone()))?;
            let mut h = AttentionHistory::new();
            let mut total: Option<Var> = None;
            for l in 0..3 {
                let q = g.row(qs, l)?;
                let (a, next) = attention::attend(g, &params, q, &mem, &h)?;
                let c = attention::context_vector(g, a, mem.values)?;
                let p = probe(g, c, &r)?;
                total = Some(match total {
                    Some(t) => g.add(t, p)?,
                    None => p,
                });
                h = next;
            }
            Ok(total.expect("three steps"))
        })?;
        reports.extend(group);
    }
    Ok(reports)
}

fn decoder_scope(rng: &mut RngState) -> Result<Vec<GroupReport>> {
    let mut reports = Vec::new();
    let configs = [
        DecoderConfig::single(AttentionKind::Location),
        DecoderConfig::mha(AttentionKind::Additive, 2),
        DecoderConfig::mhd(AttentionKind::Dot, 2),
        DecoderConfig::hmhd(vec![AttentionKind::Location, AttentionKind::Coverage]),
    ];
    for mut cfg in configs {
        cfg.units = 4;
        cfg.attention_dim = 3;
        cfg.head_dim = 3;
        cfg.location = LocationConfig { filters: 2, width: 3 };
        let mode = cfg.mode;
        let mut s = ParamStore::new();
        let dec = Decoder::init(cfg, VocabSpec::letters(3)?, 4, &mut s, (-1.0, 1.0), rng)?;
        let enc = random(&[5, 4], rng)?;
        let target = [2, 4, 1];
        let group = check_store(&s, STEP, &format!("{mode}/"), |g| {
            let states = g.constant(enc.clone());
            let e = EncoderStates {
                states,
                len: 5,
                dim: 4,
            };
            let mem = dec.prepare(g, &e, None)?;
            let mut state = dec.initial_state(g);
            let mut prev = dec.vocab.sos();
            let mut total: Option<Var> = None;
            for &c in &target {
                let out = dec.step(g, &mem, prev, &state)?;
                let nll = g.nll(out.logits, c)?;
                total = Some(match total {
                    Some(t) => g.add(t, nll)?,
                    None => nll,
                });
                state = out.state;
                prev = c;
            }
            Ok(total.expect("nonempty target"))
        })?;
        reports.extend(group);
    }
    Ok(reports)
}

/// Two-head heterogeneous model with 8 units everywhere, 12 input frames and
/// a 4-token target.
pub fn tiny_hmhd(rng: &mut RngState) -> Result<(Model<f64>, FeatureSequence<f64>, Vec<usize>)> {
    let decoder = DecoderConfig::hmhd(vec![AttentionKind::Location, AttentionKind::Coverage]);
    let mut cfg = ModelConfig::desk(4, VocabSpec::letters(4)?, decoder);
    cfg.encoder.units = 8;
    cfg.encoder.projection = 8;
    cfg.decoder.units = 8;
    cfg.decoder.attention_dim = 8;
    cfg.decoder.head_dim = 8;
    cfg.init = (-0.8, 0.8);
    let model = Model::init(cfg, rng)?;
    let x = FeatureSequence::new(random(&[12, 4], rng)?)?;
    Ok((model, x, vec![2, 5, 3, 1]))
}

fn model_scope(rng: &mut RngState, freeze_encoder: bool) -> Result<Vec<GroupReport>> {
    let (mut model, x, target) = tiny_hmhd(rng)?;
    if freeze_encoder {
        model.store.freeze_prefix("enc.");
    }
    let m = &model;
    check_store(&model.store, STEP, "", |g| m.loss_graph(g, &x, &target))
}

pub fn run(scope: Scope, seed: u64) -> Result<GradReport> {
    let mut rng = RngState::new(seed);
    let groups = match scope {
        Scope::Tensor => tensor_scope(&mut rng)?,
        Scope::Encoder => encoder_scope(&mut rng)?,
        Scope::Attention => attention_scope(&mut rng)?,
        Scope::Decoder => decoder_scope(&mut rng)?,
        Scope::All => model_scope(&mut rng, false)?,
        Scope::Frozen => model_scope(&mut rng, true)?,
    };
    Ok(GradReport { scope, groups })
}
