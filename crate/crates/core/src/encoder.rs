//! Stacked bidirectional LSTM encoder with per-layer projection and frame
//! skipping.
//!
//! The LSTM cell uses the gate layout `[i, f, g, o]` in one `4H` block:
//!
//! ```text
//! z  = W_ih x + W_hh h + b
//! i  = sigmoid(z[0..H])       input gate
//! f  = sigmoid(z[H..2H])      forget gate
//! g  = tanh(z[2H..3H])        candidate
//! o  = sigmoid(z[3H..4H])     output gate
//! c' = f * c + i * g
//! h' = o * tanh(c')
//! ```
//!
//! A BLSTMP layer runs one cell left to right and another right to left,
//! concatenates the two hidden sequences per frame, and applies a bias-free
//! projection `[P, 2H]`. Subsampling layers then keep frames `0, 2, 4, ...`.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::params::{ParamId, ParamStore};
use crate::real::Real;
use crate::rng::RngState;
use crate::tensor::Tensor;

/// Shortest input that survives two halvings with at least one frame left.
pub const MIN_FRAMES: usize = 4;

/// A `T x D` matrix of input frames.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence<T> {
    frames: Tensor<T>,
}

impl<T: Real> FeatureSequence<T> {
    pub fn new(frames: Tensor<T>) -> Result<Self> {
        let (t, _) = frames.dims2("feature_sequence")?;
        if t < MIN_FRAMES {
            return Err(Error::InputTooShort {
                frames: t,
                min: MIN_FRAMES,
            });
        }
        if !frames.all_finite() {
            return Err(Error::NonFinite("feature_sequence"));
        }
        Ok(FeatureSequence { frames })
    }

    pub fn frames(&self) -> &Tensor<T> {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.frames.shape()[1]
    }

    pub fn cast<U: Real>(&self) -> FeatureSequence<U> {
        let data = self.frames.data().iter().map(|&x| U::lit(x.to_f64())).collect();
        FeatureSequence {
            frames: Tensor::new(self.frames.shape(), data).expect("same shape"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub input_dim: usize,
    pub layers: usize,
    pub units: usize,
    pub projection: usize,
    /// 1-based indices of layers whose output is subsampled.
    pub subsample: BTreeSet<usize>,
}

impl EncoderConfig {
    /// Six BLSTMP layers of 320 units, subsampling after layers 2 and 3.
    pub fn full(input_dim: usize) -> Self {
        EncoderConfig {
            input_dim,
            layers: 6,
            units: 320,
            projection: 320,
            subsample: [2, 3].into_iter().collect(),
        }
    }

    pub fn desk(input_dim: usize) -> Self {
        EncoderConfig {
            input_dim,
            layers: 2,
            units: 32,
            projection: 32,
            subsample: [1, 2].into_iter().collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.layers == 0 || self.units == 0 || self.projection == 0 {
            return Err(Error::Config("encoder sizes must be positive".into()));
        }
        if let Some(&bad) = self.subsample.iter().find(|&&i| i == 0 || i > self.layers) {
            return Err(Error::Config(format!(
                "subsample layer {bad} outside 1..={}",
                self.layers
            )));
        }
        Ok(())
    }

    /// Encoder output length for `frames` input frames.
    pub fn output_len(&self, frames: usize) -> usize {
        self.subsample.iter().fold(frames, |n, _| n.div_ceil(2))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LstmParams {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub bias: ParamId,
    pub units: usize,
    pub input: usize,
}

impl LstmParams {
    pub fn init<T: Real>(
        store: &mut ParamStore<T>,
        prefix: &str,
        input: usize,
        units: usize,
        init: (f64, f64),
        rng: &mut RngState,
    ) -> Result<Self> {
        Ok(LstmParams {
            w_ih: store.uniform(format!("{prefix}.w_ih"), &[4 * units, input], init, rng)?,
            w_hh: store.uniform(format!("{prefix}.w_hh"), &[4 * units, units], init, rng)?,
            bias: store.uniform(format!("{prefix}.bias"), &[4 * units], init, rng)?,
            units,
            input,
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

impl LstmState {
    pub fn zeros<T: Real>(g: &mut Graph<'_, T>, units: usize) -> Self {
        LstmState {
            h: g.constant(Tensor::zeros(&[units])),
            c: g.constant(Tensor::zeros(&[units])),
        }
    }
}

/// One LSTM step on input vector `x`.
pub fn lstm_cell<T: Real>(
    g: &mut Graph<'_, T>,
    x: Var,
    state: LstmState,
    p: &LstmParams,
) -> Result<LstmState> {
    let w_ih = g.param(p.w_ih);
    let projected = g.matvec(w_ih, x)?;
    lstm_step(g, projected, state, p)
}

/// LSTM step given the already-projected input `W_ih x`.
pub(crate) fn lstm_step<T: Real>(
    g: &mut Graph<'_, T>,
    projected: Var,
    state: LstmState,
    p: &LstmParams,
) -> Result<LstmState> {
    let hsz = p.units;
    let w_hh = g.param(p.w_hh);
    let bias = g.param(p.bias);
    let rec = g.matvec(w_hh, state.h)?;
    let z = g.add(projected, rec)?;
    let z = g.add(z, bias)?;
    let zi = g.slice(z, 0, hsz)?;
    let zf = g.slice(z, hsz, hsz)?;
    let zg = g.slice(z, 2 * hsz, hsz)?;
    let zo = g.slice(z, 3 * hsz, hsz)?;
    let i = g.sigmoid(zi);
    let f = g.sigmoid(zf);
    let cand = g.tanh(zg);
    let o = g.sigmoid(zo);
    let keep = g.mul(f, state.c)?;
    let write = g.mul(i, cand)?;
    let c = g.add(keep, write)?;
    let tc = g.tanh(c);
    let h = g.mul(o, tc)?;
    Ok(LstmState { h, c })
}

/// Runs a cell over every row of `input` (`[L, D]`) in the given direction,
/// returning hidden vectors in input order.
fn lstm_sequence<T: Real>(
    g: &mut Graph<'_, T>,
    input: Var,
    p: &LstmParams,
    reverse: bool,
) -> Result<Vec<Var>> {
    let (len, _) = g.value(input).dims2("lstm_sequence")?;
    let w_ih = g.param(p.w_ih);
    let projected = g.matmul_nt(input, w_ih)?;
    let mut state = LstmState::zeros(g, p.units);
    let mut out = vec![state.h; len];
    let order: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new((0..len).rev())
    } else {
        Box::new(0..len)
    };
    for t in order {
        let x = g.row(projected, t)?;
        state = lstm_step(g, x, state, p)?;
        out[t] = state.h;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
pub struct BlstmpParams {
    pub forward: LstmParams,
    pub backward: LstmParams,
    /// `[P, 2H]`, no bias.
    pub projection: ParamId,
}

/// One bidirectional layer with projection; `subsample` keeps even frames.
pub fn blstmp_layer<T: Real>(
    g: &mut Graph<'_, T>,
    input: Var,
    p: &BlstmpParams,
    subsample: bool,
) -> Result<Var> {
    let fwd = lstm_sequence(g, input, &p.forward, false)?;
    let bwd = lstm_sequence(g, input, &p.backward, true)?;
    let fwd = g.stack_rows(&fwd)?;
    let bwd = g.stack_rows(&bwd)?;
    let both = g.concat_cols(fwd, bwd)?;
    let proj = g.param(p.projection);
    let out = g.matmul_nt(both, proj)?;
    if subsample {
        let len = g.value(out).shape()[0];
        let keep: Vec<usize> = (0..len).step_by(2).collect();
        g.gather_rows(out, &keep)
    } else {
        Ok(out)
    }
}

/// Encoder output: `T' x P` hidden states on the graph.
#[derive(Debug, Clone, Copy)]
pub struct EncoderStates {
    pub states: Var,
    pub len: usize,
    pub dim: usize,
}

#[derive(Debug, Clone)]
pub struct Encoder {
    pub config: EncoderConfig,
    pub layers: Vec<BlstmpParams>,
}

impl Encoder {
    pub fn init<T: Real>(
        config: EncoderConfig,
        store: &mut ParamStore<T>,
        init: (f64, f64),
        rng: &mut RngState,
    ) -> Result<Self> {
        config.validate()?;
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let input = if l == 0 {
                config.input_dim
            } else {
                config.projection
            };
            let prefix = format!("enc.l{l}");
            let forward =
                LstmParams::init(store, &format!("{prefix}.fwd"), input, config.units, init, rng)?;
            let backward =
                LstmParams::init(store, &format!("{prefix}.bwd"), input, config.units, init, rng)?;
            let projection = store.uniform(
                format!("{prefix}.proj"),
                &[config.projection, 2 * config.units],
                init,
                rng,
            )?;
            layers.push(BlstmpParams {
                forward,
                backward,
                projection,
            });
        }
        Ok(Encoder { config, layers })
    }

    pub fn encode<T: Real>(
        &self,
        g: &mut Graph<'_, T>,
        x: &FeatureSequence<T>,
    ) -> Result<EncoderStates> {
        if x.len() < MIN_FRAMES {
            return Err(Error::InputTooShort {
                frames: x.len(),
                min: MIN_FRAMES,
            });
        }
        if x.dim() != self.config.input_dim {
            return Err(Error::shape(
                "encode",
                format!("feature dim {} vs {}", x.dim(), self.config.input_dim),
            ));
        }
        let mut h = g.constant(x.frames().clone());
        for (l, p) in self.layers.iter().enumerate() {
            h = blstmp_layer(g, h, p, self.config.subsample.contains(&(l + 1)))?;
        }
        let (len, dim) = g.value(h).dims2("encode")?;
        Ok(EncoderStates {
            states: h,
            len,
            dim,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sigmoid(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    /// Plain scalar-loop LSTM cell.
    fn scalar_cell(
        w_ih: &[f64],
        w_hh: &[f64],
        b: &[f64],
        x: &[f64],
        h: &[f64],
        c: &[f64],
    ) -> (Vec<f64>, Vec<f64>) {
        let hs = h.len();
        let mut z = vec![0.0; 4 * hs];
        for r in 0..4 * hs {
            let mut s = 0.0;
            for (k, xv) in x.iter().enumerate() {
                s += w_ih[r * x.len() + k] * xv;
            }
            for (k, hv) in h.iter().enumerate() {
                s += w_hh[r * hs + k] * hv;
            }
            z[r] = s + b[r];
        }
        let mut h2 = vec![0.0; hs];
        let mut c2 = vec![0.0; hs];
        for j in 0..hs {
            let i = sigmoid(z[j]);
            let f = sigmoid(z[hs + j]);
            let gg = z[2 * hs + j].tanh();
            let o = sigmoid(z[3 * hs + j]);
            c2[j] = f * c[j] + i * gg;
            h2[j] = o * c2[j].tanh();
        }
        (h2, c2)
    }

    fn cell_setup(input: usize, units: usize, seed: u64) -> (ParamStore<f64>, LstmParams) {
        let mut store = ParamStore::new();
        let mut rng = RngState::new(seed);
        let p = LstmParams::init(&mut store, "cell", input, units, (-0.5, 0.5), &mut rng).unwrap();
        (store, p)
    }

    #[test]
    fn zero_cell_stays_zero() {
        let (mut store, p) = cell_setup(3, 2, 0);
        for id in [p.w_ih, p.w_hh, p.bias] {
            let shape = store.value(id).shape().to_vec();
            store.set(id, Tensor::zeros(&shape)).unwrap();
        }
        let mut g = Graph::with_params(&store);
        let x = g.constant(Tensor::zeros(&[3]));
        let s0 = LstmState::zeros(&mut g, 2);
        let s = lstm_cell(&mut g, x, s0, &p).unwrap();
        assert!(g.value(s.h).data().iter().all(|&v| v == 0.0));
        assert!(g.value(s.c).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_input_gate_weights_halve_candidate() {
        // One unit, scalar input x = 0.7, h = 0, c = 0.
        // Input-gate row zeroed -> i = sigmoid(0) = 0.5, f irrelevant (c = 0),
        // candidate weight 2.0 -> g = tanh(1.4), output weight 1.0 -> o = sigmoid(0.7).
        let (mut store, p) = cell_setup(1, 1, 0);
        store.set(p.w_ih, Tensor::from_f64(&[4, 1], &[0.0, 0.3, 2.0, 1.0]).unwrap()).unwrap();
        store.set(p.w_hh, Tensor::zeros(&[4, 1])).unwrap();
        store.set(p.bias, Tensor::zeros(&[4])).unwrap();
        let mut g = Graph::with_params(&store);
        let x = g.constant(Tensor::vector(vec![0.7]));
        let s0 = LstmState::zeros(&mut g, 1);
        let s = lstm_cell(&mut g, x, s0, &p).unwrap();
        let c_want = 0.5 * 1.4f64.tanh();
        let h_want = sigmoid(0.7) * c_want.tanh();
        assert!((g.value(s.c).item() - c_want).abs() < 1e-15);
        assert!((g.value(s.h).item() - h_want).abs() < 1e-15);
    }

    #[test]
    fn cell_matches_scalar_loop() {
        let (store, p) = cell_setup(4, 3, 17);
        let mut rng = RngState::new(99);
        let x = Tensor::<f64>::uniform_init(&[4], -1.0, 1.0, &mut rng).unwrap();
        let h = Tensor::<f64>::uniform_init(&[3], -1.0, 1.0, &mut rng).unwrap();
        let c = Tensor::<f64>::uniform_init(&[3], -1.0, 1.0, &mut rng).unwrap();
        let mut g = Graph::with_params(&store);
        let xv = g.constant(x.clone());
        let st = LstmState {
            h: g.constant(h.clone()),
            c: g.constant(c.clone()),
        };
        let s = lstm_cell(&mut g, xv, st, &p).unwrap();
        let (h2, c2) = scalar_cell(
            store.value(p.w_ih).data(),
            store.value(p.w_hh).data(),
            store.value(p.bias).data(),
            x.data(),
            h.data(),
            c.data(),
        );
        for (a, b) in g.value(s.h).data().iter().zip(&h2) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in g.value(s.c).data().iter().zip(&c2) {
            assert!((a - b).abs() < 1e-12);
        }
        let bad = g.constant(Tensor::zeros(&[5]));
        assert!(lstm_cell(&mut g, bad, st, &p).is_err());
    }

    fn layer_setup(input: usize, units: usize, proj: usize, seed: u64) -> (ParamStore<f64>, BlstmpParams) {
        let mut store = ParamStore::new();
        let mut rng = RngState::new(seed);
        let init = (-0.3, 0.3);
        let forward = LstmParams::init(&mut store, "f", input, units, init, &mut rng).unwrap();
        let backward = LstmParams::init(&mut store, "b", input, units, init, &mut rng).unwrap();
        let projection = store.uniform("p", &[proj, 2 * units], init, &mut rng).unwrap();
        (
            store,
            BlstmpParams {
                forward,
                backward,
                projection,
            },
        )
    }

    #[test]
    fn subsampled_lengths() {
        let (store, p) = layer_setup(2, 3, 4, 1);
        for (len, want) in [(8, 4), (7, 4), (1, 1)] {
            let mut g = Graph::with_params(&store);
            let x = g.constant(Tensor::full(&[len, 2], 0.1));
            let y = blstmp_layer(&mut g, x, &p, true).unwrap();
            assert_eq!(g.value(y).shape(), &[want, 4]);
        }
    }

    #[test]
    fn subsample_keeps_even_frames() {
        let (store, p) = layer_setup(2, 3, 4, 2);
        let mut rng = RngState::new(5);
        let x = Tensor::<f64>::uniform_init(&[7, 2], -1.0, 1.0, &mut rng).unwrap();
        let mut g = Graph::with_params(&store);
        let xv = g.constant(x);
        let full = blstmp_layer(&mut g, xv, &p, false).unwrap();
        let sub = blstmp_layer(&mut g, xv, &p, true).unwrap();
        for (r, t) in [0, 2, 4, 6].iter().enumerate() {
            assert_eq!(g.value(sub).row(r), g.value(full).row(*t));
        }
    }

    #[test]
    fn palindrome_with_mirrored_cells_is_time_symmetric() {
        // Both directions share parameters; on a palindromic input the
        // backward hidden at t equals the forward hidden at L-1-t.
        let (mut store, p) = layer_setup(2, 3, 6, 3);
        for (src, dst) in [
            (p.forward.w_ih, p.backward.w_ih),
            (p.forward.w_hh, p.backward.w_hh),
            (p.forward.bias, p.backward.bias),
        ] {
            let v = store.value(src).clone();
            store.set(dst, v).unwrap();
        }
        // Projection picks out [fwd | bwd] unchanged.
        store.set(p.projection, Tensor::identity(6)).unwrap();
        let rows = [[0.1, -0.4], [0.9, 0.2], [-0.3, 0.5], [0.9, 0.2], [0.1, -0.4]];
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let mut g = Graph::with_params(&store);
        let x = g.constant(Tensor::from_f64(&[5, 2], &flat).unwrap());
        let y = blstmp_layer(&mut g, x, &p, false).unwrap();
        let out = g.value(y);
        for t in 0..5 {
            let fwd = &out.row(t)[..3];
            let bwd = &out.row(4 - t)[3..];
            assert_eq!(fwd, bwd);
        }
    }

    #[test]
    fn output_length_law() {
        let cfg = EncoderConfig::full(3);
        assert_eq!(cfg.output_len(100), 25);
        assert_eq!(cfg.output_len(4), 1);
        for t in 4..=200usize {
            assert_eq!(cfg.output_len(t), t.div_ceil(2).div_ceil(2));
        }
    }

    fn tiny_encoder(seed: u64) -> (ParamStore<f64>, Encoder) {
        let mut store = ParamStore::new();
        let mut rng = RngState::new(seed);
        let cfg = EncoderConfig {
            input_dim: 3,
            layers: 2,
            units: 4,
            projection: 5,
            subsample: [1, 2].into_iter().collect(),
        };
        let enc = Encoder::init(cfg, &mut store, (-0.1, 0.1), &mut rng).unwrap();
        (store, enc)
    }

    #[test]
    fn encode_lengths_and_errors() {
        let (store, enc) = tiny_encoder(4);
        let mut g = Graph::with_params(&store);
        for (t, want) in [(4, 1), (13, 4), (16, 4)] {
            let x = FeatureSequence::new(Tensor::full(&[t, 3], 0.2)).unwrap();
            assert_eq!(enc.encode(&mut g, &x).unwrap().len, want);
        }
        assert!(matches!(
            FeatureSequence::new(Tensor::<f64>::full(&[3, 3], 0.2)),
            Err(Error::InputTooShort { frames: 3, min: 4 })
        ));
        let wrong_dim = FeatureSequence::new(Tensor::full(&[8, 2], 0.2)).unwrap();
        assert!(enc.encode(&mut g, &wrong_dim).is_err());
    }

    #[test]
    fn encode_is_composition_of_layers() {
        let (store, enc) = tiny_encoder(8);
        let mut rng = RngState::new(1);
        let x = FeatureSequence::new(Tensor::uniform_init(&[9, 3], -1.0, 1.0, &mut rng).unwrap())
            .unwrap();
        let mut g = Graph::with_params(&store);
        let out = enc.encode(&mut g, &x).unwrap();
        let mut g2 = Graph::with_params(&store);
        let mut h = g2.constant(x.frames().clone());
        h = blstmp_layer(&mut g2, h, &enc.layers[0], true).unwrap();
        h = blstmp_layer(&mut g2, h, &enc.layers[1], true).unwrap();
        assert_eq!(g.value(out.states), g2.value(h));
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = EncoderConfig::desk(3);
        cfg.subsample.insert(3);
        assert!(cfg.validate().is_err());
        cfg.subsample.clear();
        cfg.subsample.insert(0);
        assert!(cfg.validate().is_err());
    }
}
