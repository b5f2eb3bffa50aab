//! Alignment between one decoder query and all encoder frames.
//!
//! Four energy functions are supported. With `k_t` the (possibly projected)
//! encoder state at frame `t` and `q` the decoder query:
//!
//! ```text
//! dot       e_t = q^T W_a k_t
//! additive  e_t = g^T tanh(W_q q + W_h k_t + b)
//! location  e_t = g^T tanh(W_q q + W_h k_t + W_f f_t + b),  F = K * a_prev
//! coverage  e_t = g^T tanh(W_q q + W_h k_t + w_v v_t + b),  v = sum of past a
//! ```
//!
//! Weights are `softmax(e)` over unmasked frames. Dot energies are not
//! scaled by `1/sqrt(d)`.
//!
//! `W_h k_t` (or `W_a k_t`) does not depend on the step and is computed once
//! per utterance by [`prepare`].

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::params::{ParamId, ParamStore};
use crate::real::Real;
use crate::rng::RngState;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AttentionKind {
    Dot,
    Additive,
    Location,
    Coverage,
}

impl AttentionKind {
    pub const ALL: [AttentionKind; 4] = [
        AttentionKind::Dot,
        AttentionKind::Additive,
        AttentionKind::Location,
        AttentionKind::Coverage,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            AttentionKind::Dot => "Dot",
            AttentionKind::Additive => "Add",
            AttentionKind::Location => "Loc",
            AttentionKind::Coverage => "Cov",
        }
    }
}

impl fmt::Display for AttentionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for AttentionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dot" => Ok(AttentionKind::Dot),
            "add" | "additive" => Ok(AttentionKind::Additive),
            "loc" | "location" => Ok(AttentionKind::Location),
            "cov" | "coverage" => Ok(AttentionKind::Coverage),
            _ => Err(Error::Config(format!("unknown attention kind {s:?}"))),
        }
    }
}

/// Convolution filters applied to the previous weights in location attention.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocationConfig {
    pub filters: usize,
    /// Must be odd; filters are centred on the current frame.
    pub width: usize,
}

impl LocationConfig {
    pub fn desk() -> Self {
        LocationConfig {
            filters: 4,
            width: 11,
        }
    }

    /// Ten filters of width 101.
    pub fn full() -> Self {
        LocationConfig {
            filters: 10,
            width: 101,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.filters == 0 {
            return Err(Error::Config("location attention needs at least one filter".into()));
        }
        if self.width % 2 == 0 {
            return Err(Error::Config(format!(
                "location filter width must be odd, got {}",
                self.width
            )));
        }
        Ok(())
    }
}

/// Sizes shared by every attention kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionDims {
    pub query: usize,
    pub key: usize,
    /// Hidden size of the additive scorer.
    pub hidden: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct AdditiveParams {
    /// `[A, dq]`
    pub w_q: ParamId,
    /// `[A, dk]`
    pub w_h: ParamId,
    /// `[A]`
    pub g: ParamId,
    /// `[A]`
    pub b: ParamId,
}

#[derive(Debug, Clone, Copy)]
pub enum AttentionParams {
    Dot {
        /// `[dq, dk]`
        w_a: ParamId,
    },
    Additive(AdditiveParams),
    Location {
        base: AdditiveParams,
        /// `[C, W]`
        kernels: ParamId,
        /// `[A, C]`
        w_f: ParamId,
    },
    Coverage {
        base: AdditiveParams,
        /// `[A]`
        w_v: ParamId,
    },
}

impl AttentionParams {
    pub fn init<T: Real>(
        kind: AttentionKind,
        store: &mut ParamStore<T>,
        prefix: &str,
        dims: AttentionDims,
        location: LocationConfig,
        init: (f64, f64),
        rng: &mut RngState,
    ) -> Result<Self> {
        let a = dims.hidden;
        let additive = |store: &mut ParamStore<T>, rng: &mut RngState| -> Result<AdditiveParams> {
            Ok(AdditiveParams {
                w_q: store.uniform(format!("{prefix}.w_q"), &[a, dims.query], init, rng)?,
                w_h: store.uniform(format!("{prefix}.w_h"), &[a, dims.key], init, rng)?,
                g: store.uniform(format!("{prefix}.g"), &[a], init, rng)?,
                b: store.uniform(format!("{prefix}.b"), &[a], init, rng)?,
            })
        };
        Ok(match kind {
            AttentionKind::Dot => AttentionParams::Dot {
                w_a: store.uniform(format!("{prefix}.w_a"), &[dims.query, dims.key], init, rng)?,
            },
            AttentionKind::Additive => AttentionParams::Additive(additive(store, rng)?),
            AttentionKind::Location => {
                location.validate()?;
                let base = additive(store, rng)?;
                AttentionParams::Location {
                    base,
                    kernels: store.uniform(
                        format!("{prefix}.kernels"),
                        &[location.filters, location.width],
                        init,
                        rng,
                    )?,
                    w_f: store.uniform(format!("{prefix}.w_f"), &[a, location.filters], init, rng)?,
                }
            }
            AttentionKind::Coverage => {
                let base = additive(store, rng)?;
                AttentionParams::Coverage {
                    base,
                    w_v: store.uniform(format!("{prefix}.w_v"), &[a], init, rng)?,
                }
            }
        })
    }

    pub fn kind(&self) -> AttentionKind {
        match self {
            AttentionParams::Dot { .. } => AttentionKind::Dot,
            AttentionParams::Additive(_) => AttentionKind::Additive,
            AttentionParams::Location { .. } => AttentionKind::Location,
            AttentionParams::Coverage { .. } => AttentionKind::Coverage,
        }
    }
}

/// Per-utterance encoder memory as seen by one attention head.
#[derive(Debug, Clone)]
pub struct AttentionMemory {
    /// Step-independent key term: `k W_a^T` (dot) or `k W_h^T` (others).
    pub keys: Var,
    /// Rows summed by the context vector.
    pub values: Var,
    pub frames: usize,
    /// `false` marks padded frames that must receive zero weight.
    pub mask: Option<Vec<bool>>,
}

impl AttentionMemory {
    fn valid_frames(&self) -> usize {
        self.mask
            .as_ref()
            .map_or(self.frames, |m| m.iter().filter(|&&b| b).count())
    }
}

/// Precomputes the key term for `params` over `keys_in` (`[T', dk]`).
pub fn prepare<T: Real>(
    g: &mut Graph<'_, T>,
    params: &AttentionParams,
    keys_in: Var,
    values: Var,
    mask: Option<Vec<bool>>,
) -> Result<AttentionMemory> {
    let (frames, _) = g.value(keys_in).dims2("attention_prepare")?;
    let (vframes, _) = g.value(values).dims2("attention_prepare")?;
    if vframes != frames {
        return Err(Error::shape("attention_prepare", format!("{frames} keys vs {vframes} values")));
    }
    if let Some(m) = &mask {
        if m.len() != frames || !m.iter().any(|&b| b) {
            return Err(Error::shape(
                "attention_prepare",
                format!("mask of {} entries over {frames} frames", m.len()),
            ));
        }
    }
    let w = match params {
        AttentionParams::Dot { w_a } => *w_a,
        AttentionParams::Additive(b)
        | AttentionParams::Location { base: b, .. }
        | AttentionParams::Coverage { base: b, .. } => b.w_h,
    };
    let w = g.param(w);
    let keys = g.matmul_nt(keys_in, w)?;
    Ok(AttentionMemory {
        keys,
        values,
        frames,
        mask,
    })
}

/// Attention state carried between decoding steps.
#[derive(Debug, Clone, Copy)]
pub struct AttentionHistory {
    /// `a_{l-1}`; `None` before the first step.
    pub previous: Option<Var>,
    /// Running sum `a_1 + ... + a_{l-1}`; `None` means all zeros.
    pub accumulated: Option<Var>,
    /// 1-based index of the step about to be computed.
    pub step: usize,
}

impl Default for AttentionHistory {
    fn default() -> Self {
        Self::new()
    }
}

impl AttentionHistory {
    pub fn new() -> Self {
        AttentionHistory {
            previous: None,
            accumulated: None,
            step: 1,
        }
    }
}

pub fn dot_energy<T: Real>(
    g: &mut Graph<'_, T>,
    q: Var,
    mem: &AttentionMemory,
) -> Result<Var> {
    g.matvec(mem.keys, q)
}

fn additive_pre<T: Real>(
    g: &mut Graph<'_, T>,
    q: Var,
    mem: &AttentionMemory,
    p: &AdditiveParams,
) -> Result<Var> {
    let w_q = g.param(p.w_q);
    let b = g.param(p.b);
    let pq = g.matvec(w_q, q)?;
    let pq = g.add(pq, b)?;
    g.add_row(mem.keys, pq)
}

fn readout<T: Real>(g: &mut Graph<'_, T>, pre: Var, p: &AdditiveParams) -> Result<Var> {
    let act = g.tanh(pre);
    let gv = g.param(p.g);
    g.matvec(act, gv)
}

pub fn additive_energy<T: Real>(
    g: &mut Graph<'_, T>,
    q: Var,
    mem: &AttentionMemory,
    p: &AdditiveParams,
) -> Result<Var> {
    let pre = additive_pre(g, q, mem, p)?;
    readout(g, pre, p)
}

/// Uniform weights over valid frames, used as `a_0`.
pub fn initial_weights<T: Real>(g: &mut Graph<'_, T>, mem: &AttentionMemory) -> Var {
    let share = T::one() / T::lit(mem.valid_frames() as f64);
    let data = (0..mem.frames)
        .map(|t| {
            if mem.mask.as_ref().map_or(true, |m| m[t]) {
                share
            } else {
                T::zero()
            }
        })
        .collect();
    g.constant(Tensor::vector(data))
}

pub fn location_energy<T: Real>(
    g: &mut Graph<'_, T>,
    q: Var,
    mem: &AttentionMemory,
    history: &AttentionHistory,
    base: &AdditiveParams,
    kernels: ParamId,
    w_f: ParamId,
) -> Result<Var> {
    let prev = match history.previous {
        Some(p) => p,
        None if history.step <= 1 => initial_weights(g, mem),
        None => {
            return Err(Error::Contract(format!(
                "location attention at step {} needs the previous weights",
                history.step
            )))
        }
    };
    let pre = additive_pre(g, q, mem, base)?;
    let k = g.param(kernels);
    let feats = g.conv1d(k, prev)?;
    let w_f = g.param(w_f);
    let loc = g.matmul_nt(feats, w_f)?;
    let pre = g.add(pre, loc)?;
    readout(g, pre, base)
}

pub fn coverage_energy<T: Real>(
    g: &mut Graph<'_, T>,
    q: Var,
    mem: &AttentionMemory,
    history: &AttentionHistory,
    base: &AdditiveParams,
    w_v: ParamId,
) -> Result<Var> {
    let cov = match history.accumulated {
        Some(v) => v,
        None => g.constant(Tensor::zeros(&[mem.frames])),
    };
    let pre = additive_pre(g, q, mem, base)?;
    let w_v = g.param(w_v);
    let term = g.outer(cov, w_v)?;
    let pre = g.add(pre, term)?;
    readout(g, pre, base)
}

/// Energies for any kind.
pub fn energies<T: Real>(
    g: &mut Graph<'_, T>,
    params: &AttentionParams,
    q: Var,
    mem: &AttentionMemory,
    history: &AttentionHistory,
) -> Result<Var> {
    let e = match params {
        AttentionParams::Dot { .. } => dot_energy(g, q, mem)?,
        AttentionParams::Additive(p) => additive_energy(g, q, mem, p)?,
        AttentionParams::Location { base, kernels, w_f } => {
            location_energy(g, q, mem, history, base, *kernels, *w_f)?
        }
        AttentionParams::Coverage { base, w_v } => coverage_energy(g, q, mem, history, base, *w_v)?,
    };
    let n = g.value(e).dims1("energies")?;
    if n != mem.frames {
        return Err(Error::shape("energies", format!("{n} energies for {} frames", mem.frames)));
    }
    Ok(e)
}

/// Computes `a_l` and advances the history.
pub fn attend<T: Real>(
    g: &mut Graph<'_, T>,
    params: &AttentionParams,
    q: Var,
    mem: &AttentionMemory,
    history: &AttentionHistory,
) -> Result<(Var, AttentionHistory)> {
    let e = energies(g, params, q, mem, history)?;
    let a = g.softmax(e, mem.mask.as_deref())?;
    let accumulated = match history.accumulated {
        Some(acc) => g.add(acc, a)?,
        None => a,
    };
    Ok((
        a,
        AttentionHistory {
            previous: Some(a),
            accumulated: Some(accumulated),
            step: history.step + 1,
        },
    ))
}

/// `r = sum_t a_t h_t`.
pub fn context_vector<T: Real>(g: &mut Graph<'_, T>, a: Var, values: Var) -> Result<Var> {
    g.vecmat(a, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor;

    const DIMS: AttentionDims = AttentionDims {
        query: 3,
        key: 4,
        hidden: 5,
    };

    fn setup(kind: AttentionKind, seed: u64) -> (ParamStore<f64>, AttentionParams) {
        let mut store = ParamStore::new();
        let mut rng = RngState::new(seed);
        let loc = LocationConfig {
            filters: 2,
            width: 3,
        };
        let p = AttentionParams::init(kind, &mut store, "att", DIMS, loc, (-0.5, 0.5), &mut rng)
            .unwrap();
        (store, p)
    }

    fn random(shape: &[usize], rng: &mut RngState) -> Tensor<f64> {
        Tensor::uniform_init(shape, -1.0, 1.0, rng).unwrap()
    }

    fn zero_param(store: &mut ParamStore<f64>, id: ParamId) {
        let shape = store.value(id).shape().to_vec();
        store.set(id, Tensor::zeros(&shape)).unwrap();
    }

    #[test]
    fn dot_zero_query_is_uniform() {
        let (store, p) = setup(AttentionKind::Dot, 1);
        let mut rng = RngState::new(2);
        let mut g = Graph::with_params(&store);
        let h = g.constant(random(&[6, 4], &mut rng));
        let mem = prepare(&mut g, &p, h, h, None).unwrap();
        let q = g.constant(Tensor::zeros(&[3]));
        let (a, _) = attend(&mut g, &p, q, &mem, &AttentionHistory::new()).unwrap();
        for &w in g.value(a).data() {
            assert!((w - 1.0 / 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn single_frame_gets_all_weight() {
        for kind in AttentionKind::ALL {
            let (store, p) = setup(kind, 3);
            let mut rng = RngState::new(4);
            let mut g = Graph::with_params(&store);
            let h = g.constant(random(&[1, 4], &mut rng));
            let mem = prepare(&mut g, &p, h, h, None).unwrap();
            let q = g.constant(random(&[3], &mut rng));
            let (a, _) = attend(&mut g, &p, q, &mem, &AttentionHistory::new()).unwrap();
            assert_eq!(g.value(a).data(), &[1.0]);
        }
    }

    #[test]
    fn dot_matches_bilinear_form() {
        let (store, p) = setup(AttentionKind::Dot, 5);
        let AttentionParams::Dot { w_a } = p else { unreachable!() };
        let mut rng = RngState::new(6);
        let h = random(&[2, 4], &mut rng);
        let q = random(&[3], &mut rng);
        let mut g = Graph::with_params(&store);
        let hv = g.constant(h.clone());
        let mem = prepare(&mut g, &p, hv, hv, None).unwrap();
        let qv = g.constant(q.clone());
        let e = dot_energy(&mut g, qv, &mem).unwrap();
        let w = store.value(w_a).data();
        for t in 0..2 {
            let mut want = 0.0;
            for i in 0..3 {
                for j in 0..4 {
                    want += q.data()[i] * w[i * 4 + j] * h.row(t)[j];
                }
            }
            assert!((g.value(e).data()[t] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn additive_zero_readout_is_uniform() {
        let (mut store, p) = setup(AttentionKind::Additive, 7);
        let AttentionParams::Additive(base) = p else { unreachable!() };
        zero_param(&mut store, base.g);
        let mut rng = RngState::new(8);
        let mut g = Graph::with_params(&store);
        let h = g.constant(random(&[4, 4], &mut rng));
        let mem = prepare(&mut g, &p, h, h, None).unwrap();
        let q = g.constant(random(&[3], &mut rng));
        let (a, _) = attend(&mut g, &p, q, &mem, &AttentionHistory::new()).unwrap();
        assert!(g.value(a).data().iter().all(|&w| w == 0.25));
    }

    #[test]
    fn additive_identical_frames_tie() {
        let (mut store, p) = setup(AttentionKind::Additive, 9);
        let AttentionParams::Additive(base) = p else { unreachable!() };
        zero_param(&mut store, base.w_q);
        zero_param(&mut store, base.b);
        let mut rng = RngState::new(10);
        let frame = random(&[4], &mut rng);
        let other = random(&[4], &mut rng);
        let rows: Vec<f64> = [frame.data(), other.data(), frame.data()].concat();
        let mut g = Graph::with_params(&store);
        let h = g.constant(Tensor::new(&[3, 4], rows).unwrap());
        let mem = prepare(&mut g, &p, h, h, None).unwrap();
        let q = g.constant(random(&[3], &mut rng));
        let e = additive_energy(&mut g, q, &mem, &base).unwrap();
        let ev = g.value(e).data();
        assert_eq!(ev[0], ev[2]);
    }

    #[test]
    fn additive_matches_scalar_loop() {
        let (store, p) = setup(AttentionKind::Additive, 11);
        let AttentionParams::Additive(base) = p else { unreachable!() };
        let mut rng = RngState::new(12);
        let h = random(&[3, 4], &mut rng);
        let q = random(&[3], &mut rng);
        let mut g = Graph::with_params(&store);
        let hv = g.constant(h.clone());
        let mem = prepare(&mut g, &p, hv, hv, None).unwrap();
        let qv = g.constant(q.clone());
        let e = additive_energy(&mut g, qv, &mem, &base).unwrap();
        let (wq, wh, gv, b) = (
            store.value(base.w_q).data(),
            store.value(base.w_h).data(),
            store.value(base.g).data(),
            store.value(base.b).data(),
        );
        for t in 0..3 {
            let mut want = 0.0;
            for a in 0..5 {
                let mut z = b[a];
                for i in 0..3 {
                    z += wq[a * 3 + i] * q.data()[i];
                }
                for j in 0..4 {
                    z += wh[a * 4 + j] * h.row(t)[j];
                }
                want += gv[a] * z.tanh();
            }
            assert!((g.value(e).data()[t] - want).abs() < 1e-12);
        }
    }

    /// Runs `steps` attention calls with random queries, returning weights.
    fn rollout(
        store: &ParamStore<f64>,
        p: &AttentionParams,
        frames: usize,
        steps: usize,
        seed: u64,
    ) -> Vec<Vec<f64>> {
        let mut rng = RngState::new(seed);
        let h = random(&[frames, 4], &mut rng);
        let mut g = Graph::with_params(store);
        let hv = g.constant(h);
        let mem = prepare(&mut g, p, hv, hv, None).unwrap();
        let mut hist = AttentionHistory::new();
        let mut out = Vec::new();
        for _ in 0..steps {
            let q = g.constant(random(&[3], &mut rng));
            let (a, next) = attend(&mut g, p, q, &mem, &hist).unwrap();
            out.push(g.value(a).data().to_vec());
            hist = next;
        }
        out
    }

    #[test]
    fn location_without_filter_weights_is_additive() {
        let (mut store, p) = setup(AttentionKind::Location, 13);
        let AttentionParams::Location { base, w_f, .. } = p else { unreachable!() };
        zero_param(&mut store, w_f);
        let loc = rollout(&store, &p, 7, 4, 14);
        let add = rollout(&store, &AttentionParams::Additive(base), 7, 4, 14);
        assert_eq!(loc, add);
    }

    #[test]
    fn location_uniform_previous_with_delta_kernel_acts_as_bias() {
        // Uniform a_prev through delta kernels gives a constant f_t, so the
        // location term is a fixed vector inside the tanh: the weights equal
        // additive attention whose bias is b + W_f f.
        let (mut store, p) = setup(AttentionKind::Location, 15);
        let AttentionParams::Location { base, kernels, w_f } = p else { unreachable!() };
        store.set(kernels, Tensor::from_f64(&[2, 3], &[0.0, 1.0, 0.0, 0.0, 1.0, 0.0]).unwrap()).unwrap();
        let frames = 5;
        let f = [1.0 / frames as f64; 2];
        let wf = store.value(w_f).data().to_vec();
        let loc_w = rollout(&store, &p, frames, 1, 16);

        let mut shifted = store.clone();
        let b: Vec<f64> = store
            .value(base.b)
            .data()
            .iter()
            .enumerate()
            .map(|(a, &bv)| bv + wf[a * 2] * f[0] + wf[a * 2 + 1] * f[1])
            .collect();
        shifted.set(base.b, Tensor::vector(b)).unwrap();
        let add_w = rollout(&shifted, &AttentionParams::Additive(base), frames, 1, 16);
        for (a, b) in loc_w[0].iter().zip(&add_w[0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn location_matches_conv_composition() {
        let (store, p) = setup(AttentionKind::Location, 17);
        let AttentionParams::Location { base, kernels, w_f } = p else { unreachable!() };
        let mut rng = RngState::new(18);
        let h = random(&[5, 4], &mut rng);
        let q = random(&[3], &mut rng);
        let prev = tensor::softmax(&random(&[5], &mut rng), 0).unwrap();
        let mut g = Graph::with_params(&store);
        let hv = g.constant(h.clone());
        let mem = prepare(&mut g, &p, hv, hv, None).unwrap();
        let qv = g.constant(q.clone());
        let pv = g.constant(prev.clone());
        let hist = AttentionHistory {
            previous: Some(pv),
            accumulated: None,
            step: 2,
        };
        let e = location_energy(&mut g, qv, &mem, &hist, &base, kernels, w_f).unwrap();

        let f = tensor::conv1d(store.value(kernels), &prev).unwrap();
        let floc = tensor::matmul_nt(&f, store.value(w_f)).unwrap();
        let keys = tensor::matmul_nt(&h, store.value(base.w_h)).unwrap();
        let pq = tensor::matvec(store.value(base.w_q), &q).unwrap();
        for t in 0..5 {
            let mut want = 0.0;
            for a in 0..5 {
                let z = keys.row(t)[a] + pq.data()[a] + store.value(base.b).data()[a] + floc.row(t)[a];
                want += store.value(base.g).data()[a] * z.tanh();
            }
            assert!((g.value(e).data()[t] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn location_requires_history_after_first_step() {
        let (store, p) = setup(AttentionKind::Location, 19);
        let mut g = Graph::with_params(&store);
        let h = g.constant(Tensor::full(&[3, 4], 0.1));
        let mem = prepare(&mut g, &p, h, h, None).unwrap();
        let q = g.constant(Tensor::zeros(&[3]));
        let hist = AttentionHistory {
            previous: None,
            accumulated: None,
            step: 2,
        };
        assert!(matches!(attend(&mut g, &p, q, &mem, &hist), Err(Error::Contract(_))));
    }

    #[test]
    fn coverage_ablations_match_additive() {
        let (mut store, p) = setup(AttentionKind::Coverage, 20);
        let AttentionParams::Coverage { base, w_v } = p else { unreachable!() };
        // First step: empty coverage.
        let cov = rollout(&store, &p, 6, 1, 21);
        let add = rollout(&store, &AttentionParams::Additive(base), 6, 1, 21);
        assert_eq!(cov, add);
        // Any step with w_v = 0.
        zero_param(&mut store, w_v);
        let cov = rollout(&store, &p, 6, 4, 22);
        let add = rollout(&store, &AttentionParams::Additive(base), 6, 4, 22);
        assert_eq!(cov, add);
    }

    #[test]
    fn coverage_accumulates_emitted_weights() {
        let (store, p) = setup(AttentionKind::Coverage, 23);
        let mut rng = RngState::new(24);
        let mut g = Graph::with_params(&store);
        let h = g.constant(random(&[5, 4], &mut rng));
        let mem = prepare(&mut g, &p, h, h, None).unwrap();
        let mut hist = AttentionHistory::new();
        let mut emitted = vec![0.0; 5];
        for step in 1..=3 {
            let q = g.constant(random(&[3], &mut rng));
            let (a, next) = attend(&mut g, &p, q, &mem, &hist).unwrap();
            for (s, w) in emitted.iter_mut().zip(g.value(a).data()) {
                *s += w;
            }
            hist = next;
            let acc = g.value(hist.accumulated.unwrap()).data();
            assert_eq!(acc, emitted.as_slice());
            assert!((acc.iter().sum::<f64>() - step as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn masked_frames_get_no_weight() {
        for kind in AttentionKind::ALL {
            let (store, p) = setup(kind, 25);
            let mut rng = RngState::new(26);
            let mut g = Graph::with_params(&store);
            let h = g.constant(random(&[6, 4], &mut rng));
            let mask = vec![true, true, true, true, false, false];
            let mem = prepare(&mut g, &p, h, h, Some(mask)).unwrap();
            let mut hist = AttentionHistory::new();
            for _ in 0..3 {
                let q = g.constant(random(&[3], &mut rng));
                let (a, next) = attend(&mut g, &p, q, &mem, &hist).unwrap();
                let w = g.value(a).data();
                assert_eq!(&w[4..], &[0.0, 0.0]);
                assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                hist = next;
            }
        }
    }

    #[test]
    fn context_vector_cases() {
        let mut rng = RngState::new(27);
        let h = random(&[4, 3], &mut rng);
        let mut g = Graph::<f64>::new();
        let hv = g.constant(h.clone());
        let onehot = g.constant(Tensor::vector(vec![0.0, 0.0, 1.0, 0.0]));
        let r = context_vector(&mut g, onehot, hv).unwrap();
        assert_eq!(g.value(r).data(), h.row(2));

        let uni = g.constant(Tensor::full(&[4], 0.25));
        let r = context_vector(&mut g, uni, hv).unwrap();
        for j in 0..3 {
            let mean: f64 = (0..4).map(|t| h.row(t)[j]).sum::<f64>() / 4.0;
            assert!((g.value(r).data()[j] - mean).abs() < 1e-15);
        }

        let a = tensor::softmax(&random(&[4], &mut rng), 0).unwrap();
        let av = g.constant(a.clone());
        let r = context_vector(&mut g, av, hv).unwrap();
        for j in 0..3 {
            let want: f64 = (0..4).map(|t| a.data()[t] * h.row(t)[j]).sum();
            assert!((g.value(r).data()[j] - want).abs() < 1e-12);
        }
        let short = g.constant(Tensor::full(&[3], 1.0 / 3.0));
        assert!(context_vector(&mut g, short, hv).is_err());
    }

    #[test]
    fn kind_names_round_trip() {
        for kind in AttentionKind::ALL {
            assert_eq!(kind.short_name().parse::<AttentionKind>().unwrap(), kind);
        }
        assert!("mystery".parse::<AttentionKind>().is_err());
        assert!(LocationConfig { filters: 2, width: 4 }.validate().is_err());
    }
}
