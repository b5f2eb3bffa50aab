//! AdaDelta optimisation of the teacher-forced objective.

use rayon::prelude::*;

use crate::encoder::FeatureSequence;
use crate::error::{Error, Result};
use crate::kv::KeyValues;
use crate::model::Model;
use crate::params::{Gradients, ParamStore};
use crate::real::Real;
use crate::rng::RngState;
use crate::tensor::Tensor;

/// One AdaDelta update on flat slices:
///
/// ```text
/// E[g²]  <- rho E[g²] + (1 - rho) g²
/// dx     <- -sqrt(E[dx²] + eps) / sqrt(E[g²] + eps) * g
/// E[dx²] <- rho E[dx²] + (1 - rho) dx²
/// p      <- p + lr dx
/// ```
pub fn adadelta_step<T: Real>(
    param: &mut [T],
    grad: &[T],
    eg2: &mut [T],
    edx2: &mut [T],
    rho: T,
    eps: T,
    lr: T,
) {
    let one = T::one();
    for i in 0..param.len() {
        let g = grad[i];
        eg2[i] = rho * eg2[i] + (one - rho) * g * g;
        let dx = -((edx2[i] + eps).sqrt() / (eg2[i] + eps).sqrt()) * g;
        edx2[i] = rho * edx2[i] + (one - rho) * dx * dx;
        param[i] = param[i] + lr * dx;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaDeltaState<T> {
    pub rho: T,
    pub eps: T,
    /// Running average of squared gradients, per parameter.
    pub eg2: Vec<Tensor<T>>,
    /// Running average of squared updates, per parameter.
    pub edx2: Vec<Tensor<T>>,
}

impl<T: Real> AdaDeltaState<T> {
    pub fn new(store: &ParamStore<T>, rho: T, eps: T) -> Result<Self> {
        if !(rho >= T::zero() && rho < T::one()) {
            return Err(Error::Config(format!("rho must lie in [0, 1), got {rho}")));
        }
        if !(eps > T::zero()) {
            return Err(Error::Config(format!("eps must be positive, got {eps}")));
        }
        let zeros = || -> Vec<Tensor<T>> {
            store
                .iter()
                .map(|(_, p)| Tensor::zeros(p.value.shape()))
                .collect()
        };
        Ok(AdaDeltaState {
            rho,
            eps,
            eg2: zeros(),
            edx2: zeros(),
        })
    }

    /// Applies one update to every trainable parameter.
    pub fn update(&mut self, store: &mut ParamStore<T>, grads: &Gradients<T>, lr: T) -> Result<()> {
        if grads.len() != store.len() || self.eg2.len() != store.len() {
            return Err(Error::Contract(format!(
                "{} gradients and {} optimizer slots for {} parameters",
                grads.len(),
                self.eg2.len(),
                store.len()
            )));
        }
        let ids: Vec<_> = store.iter().filter(|(_, p)| p.trainable()).map(|(id, _)| id).collect();
        for id in ids {
            let g = grads.get(id);
            let p = store.value_mut(id);
            if g.shape() != p.shape() {
                return Err(Error::shape(
                    "adadelta",
                    format!("grad {:?} vs param {:?}", g.shape(), p.shape()),
                ));
            }
            adadelta_step(
                p.data_mut(),
                g.data(),
                self.eg2[id.0].data_mut(),
                self.edx2[id.0].data_mut(),
                self.rho,
                self.eps,
                lr,
            );
        }
        Ok(())
    }

    /// `eps <- eps * factor`.
    pub fn decay_eps(&mut self, factor: T) -> Result<()> {
        if !(factor > T::zero() && factor < T::one()) {
            return Err(Error::Config(format!("eps decay factor must lie in (0, 1), got {factor}")));
        }
        self.eps = self.eps * factor;
        Ok(())
    }
}

/// Decides when to decay AdaDelta's eps: whenever an epoch's validation
/// loss is not lower than the previous epoch's.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EpsSchedule {
    pub previous: Option<f64>,
}

impl EpsSchedule {
    pub fn observe(&mut self, valid_loss: f64) -> bool {
        let decay = matches!(self.previous, Some(prev) if !(valid_loss < prev));
        self.previous = Some(valid_loss);
        decay
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossNorm {
    /// Batch loss divided by the number of target tokens.
    PerToken,
    /// Plain sum over the batch.
    Sum,
}

impl std::fmt::Display for LossNorm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossNorm::PerToken => "token",
            LossNorm::Sum => "sum",
        })
    }
}

impl std::str::FromStr for LossNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "token" => Ok(LossNorm::PerToken),
            "sum" => Ok(LossNorm::Sum),
            _ => Err(Error::Config(format!("unknown loss normalisation {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub clip_norm: f64,
    pub rho: f64,
    pub eps: f64,
    pub eps_decay: f64,
    /// Multiplier on the AdaDelta step.
    pub learning_rate: f64,
    pub seed: u64,
    /// Share of the training split held out when no dev split exists.
    pub valid_fraction: f64,
    pub loss_norm: LossNorm,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 30,
            max_epochs: 15,
            clip_norm: 5.0,
            rho: 0.95,
            eps: 1e-8,
            eps_decay: 1e-2,
            learning_rate: 1.0,
            seed: 1,
            valid_fraction: 0.1,
            loss_norm: LossNorm::PerToken,
        }
    }
}

impl TrainConfig {
    pub const KEYS: &'static [&'static str] = &[
        "train.batch_size",
        "train.max_epochs",
        "train.clip_norm",
        "train.rho",
        "train.eps",
        "train.eps_decay",
        "train.learning_rate",
        "train.seed",
        "train.valid_fraction",
        "train.loss_norm",
    ];

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::Config(format!("clip norm must be positive, got {}", self.clip_norm)));
        }
        if !(self.rho >= 0.0 && self.rho < 1.0) || !(self.eps > 0.0) {
            return Err(Error::Config("AdaDelta needs 0 <= rho < 1 and eps > 0".into()));
        }
        if !(self.eps_decay > 0.0 && self.eps_decay < 1.0) {
            return Err(Error::Config(format!("eps decay must lie in (0, 1), got {}", self.eps_decay)));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.valid_fraction) {
            return Err(Error::Config("validation fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn apply(&mut self, kv: &KeyValues) -> Result<()> {
        kv.read_into("train.batch_size", &mut self.batch_size)?;
        kv.read_into("train.max_epochs", &mut self.max_epochs)?;
        kv.read_into("train.clip_norm", &mut self.clip_norm)?;
        kv.read_into("train.rho", &mut self.rho)?;
        kv.read_into("train.eps", &mut self.eps)?;
        kv.read_into("train.eps_decay", &mut self.eps_decay)?;
        kv.read_into("train.learning_rate", &mut self.learning_rate)?;
        kv.read_into("train.seed", &mut self.seed)?;
        kv.read_into("train.valid_fraction", &mut self.valid_fraction)?;
        kv.read_into("train.loss_norm", &mut self.loss_norm)?;
        Ok(())
    }

    pub fn write(&self, kv: &mut KeyValues) {
        kv.set("train.batch_size", self.batch_size);
        kv.set("train.max_epochs", self.max_epochs);
        kv.set("train.clip_norm", self.clip_norm);
        kv.set("train.rho", self.rho);
        kv.set("train.eps", self.eps);
        kv.set("train.eps_decay", self.eps_decay);
        kv.set("train.learning_rate", self.learning_rate);
        kv.set("train.seed", self.seed);
        kv.set("train.valid_fraction", self.valid_fraction);
        kv.set("train.loss_norm", self.loss_norm);
    }
}

/// A training pair: features and the target ids ending in eos.
#[derive(Debug, Clone)]
pub struct Example<T> {
    pub id: String,
    pub features: FeatureSequence<T>,
    pub target: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchStats {
    /// Summed loss over the batch.
    pub loss: f64,
    pub tokens: usize,
    pub grad_norm: f64,
    pub clipped_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean loss per target token, measured before each batch update.
    pub train_loss: f64,
    pub valid_loss: f64,
    pub eps: f64,
    pub eps_decayed: bool,
    pub improved: bool,
    pub max_clipped_norm: f64,
}

/// Everything beyond parameters and optimizer slots needed to resume.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainerState {
    /// Completed epochs.
    pub epoch: usize,
    pub rng_seed: u64,
    pub rng_word_pos: u128,
    pub best_valid: Option<f64>,
    pub previous_valid: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Trainer<T> {
    pub model: Model<T>,
    pub optimizer: AdaDeltaState<T>,
    pub config: TrainConfig,
    rng: RngState,
    epoch: usize,
    schedule: EpsSchedule,
    best_valid: Option<f64>,
    best: Option<ParamStore<T>>,
}

impl<T: Real> Trainer<T> {
    pub fn new(model: Model<T>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let optimizer = AdaDeltaState::new(&model.store, T::lit(config.rho), T::lit(config.eps))?;
        let rng = RngState::new(config.seed);
        Ok(Trainer {
            model,
            optimizer,
            config,
            rng,
            epoch: 0,
            schedule: EpsSchedule::default(),
            best_valid: None,
            best: None,
        })
    }

    pub fn resume(model: Model<T>, optimizer: AdaDeltaState<T>, config: TrainConfig, state: TrainerState) -> Result<Self> {
        config.validate()?;
        if optimizer.eg2.len() != model.store.len() {
            return Err(Error::Format("optimizer state does not match the model".into()));
        }
        Ok(Trainer {
            model,
            optimizer,
            config,
            rng: RngState::resume(state.rng_seed, state.rng_word_pos),
            epoch: state.epoch,
            schedule: EpsSchedule {
                previous: state.previous_valid,
            },
            best_valid: state.best_valid,
            best: None,
        })
    }

    pub fn state(&self) -> TrainerState {
        TrainerState {
            epoch: self.epoch,
            rng_seed: self.rng.seed(),
            rng_word_pos: self.rng.word_pos(),
            best_valid: self.best_valid,
            previous_valid: self.schedule.previous,
        }
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Parameters of the epoch with the lowest validation loss so far, if
    /// that epoch ran in this session.
    pub fn best_params(&self) -> Option<&ParamStore<T>> {
        self.best.as_ref()
    }

    pub fn best_valid(&self) -> Option<f64> {
        self.best_valid
    }

    /// Per-utterance losses and gradients, evaluated in parallel and
    /// reduced in batch order so the result does not depend on scheduling.
    fn batch_gradients(&self, batch: &[&Example<T>]) -> Result<(f64, usize, Gradients<T>)> {
        let model = &self.model;
        let parts: Vec<(T, Gradients<T>)> = batch
            .par_iter()
            .map(|ex| model.loss_and_grads(&ex.features, &ex.target))
            .collect::<Result<_>>()?;
        let mut total = model.store.zero_grads();
        let mut loss = 0.0;
        let mut tokens = 0;
        for ((l, g), ex) in parts.iter().zip(batch) {
            loss += Real::to_f64(*l);
            tokens += ex.target.len();
            total.accumulate(g);
        }
        Ok((loss, tokens, total))
    }

    pub fn train_batch(&mut self, batch: &[&Example<T>], index: usize) -> Result<BatchStats> {
        let (loss, tokens, mut grads) = self.batch_gradients(batch)?;
        let diverged = |loss: f64| Error::Diverged {
            epoch: self.epoch + 1,
            batch: index,
            loss,
        };
        if !loss.is_finite() || !grads.all_finite() {
            return Err(diverged(loss));
        }
        if self.config.loss_norm == LossNorm::PerToken {
            grads.scale(T::lit(1.0 / tokens as f64));
        }
        let norm = grads.clip_grad_norm(T::lit(self.config.clip_norm))?.to_f64();
        let clipped_norm = grads.global_norm().to_f64();
        self.optimizer
            .update(&mut self.model.store, &grads, T::lit(self.config.learning_rate))?;
        if !self.model.store.iter().all(|(_, p)| p.value.all_finite()) {
            return Err(diverged(loss));
        }
        Ok(BatchStats {
            loss,
            tokens,
            grad_norm: norm,
            clipped_norm,
        })
    }

    /// Mean loss per target token without updating anything.
    pub fn evaluate(&self, data: &[Example<T>]) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::Contract("evaluation set is empty".into()));
        }
        let model = &self.model;
        let losses: Vec<T> = data
            .par_iter()
            .map(|ex| model.loss(&ex.features, &ex.target))
            .collect::<Result<_>>()?;
        let tokens: usize = data.iter().map(|ex| ex.target.len()).sum();
        let total: f64 = losses.iter().map(|&l| Real::to_f64(l)).sum();
        Ok(total / tokens as f64)
    }

    pub fn train_epoch(&mut self, train: &[Example<T>], valid: &[Example<T>]) -> Result<EpochMetrics> {
        if train.is_empty() {
            return Err(Error::Contract("training set is empty".into()));
        }
        let mut order: Vec<usize> = (0..train.len()).collect();
        self.rng.shuffle(&mut order);
        let mut loss = 0.0;
        let mut tokens = 0;
        let mut max_clipped: f64 = 0.0;
        for (b, chunk) in order.chunks(self.config.batch_size).enumerate() {
            let batch: Vec<&Example<T>> = chunk.iter().map(|&i| &train[i]).collect();
            let stats = self.train_batch(&batch, b + 1)?;
            loss += stats.loss;
            tokens += stats.tokens;
            max_clipped = max_clipped.max(stats.clipped_norm);
        }
        self.epoch += 1;
        let valid_loss = self.evaluate(valid)?;
        if !valid_loss.is_finite() {
            return Err(Error::Diverged {
                epoch: self.epoch,
                batch: 0,
                loss: valid_loss,
            });
        }
        let improved = self.best_valid.is_none_or(|b| valid_loss < b);
        if improved {
            self.best_valid = Some(valid_loss);
            self.best = Some(self.model.store.clone());
        }
        let eps_decayed = self.schedule.observe(valid_loss);
        if eps_decayed {
            self.optimizer.decay_eps(T::lit(self.config.eps_decay))?;
        }
        Ok(EpochMetrics {
            epoch: self.epoch,
            train_loss: loss / tokens as f64,
            valid_loss,
            eps: self.optimizer.eps.to_f64(),
            eps_decayed,
            improved,
            max_clipped_norm: max_clipped,
        })
    }

    /// Runs epochs until `max_epochs` have completed, calling `on_epoch`
    /// after each one.
    pub fn fit(
        &mut self,
        train: &[Example<T>],
        valid: &[Example<T>],
        mut on_epoch: impl FnMut(&Self, &EpochMetrics) -> Result<()>,
    ) -> Result<Vec<EpochMetrics>> {
        let mut history = Vec::new();
        while self.epoch < self.config.max_epochs {
            let m = self.train_epoch(train, valid)?;
            on_epoch(self, &m)?;
            history.push(m);
        }
        Ok(history)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::attention::AttentionKind;
    use crate::decoder::{DecoderConfig, VocabSpec};
    use crate::model::ModelConfig;
    use proptest::prelude::*;

    struct Reference {
        eg2: f64,
        edx2: f64,
    }

    impl Reference {
        fn step(&mut self, p: f64, g: f64, rho: f64, eps: f64) -> f64 {
            self.eg2 = rho * self.eg2 + (1.0 - rho) * g.powi(2);
            let rms_dx = (self.edx2 + eps).sqrt();
            let rms_g = (self.eg2 + eps).sqrt();
            let dx = -(rms_dx / rms_g) * g;
            self.edx2 = rho * self.edx2 + (1.0 - rho) * dx.powi(2);
            p + dx
        }
    }

    #[test]
    fn zero_gradient_only_decays_state() {
        let mut p = [0.3, -1.2];
        let mut eg2 = [0.5, 0.25];
        let mut edx2 = [0.125, 1.0];
        adadelta_step(&mut p, &[0.0, 0.0], &mut eg2, &mut edx2, 0.95, 1e-8, 1.0);
        assert_eq!(p, [0.3, -1.2]);
        assert_eq!(eg2, [0.95 * 0.5, 0.95 * 0.25]);
        assert_eq!(edx2, [0.95 * 0.125, 0.95 * 1.0]);
    }

    #[test]
    fn first_step_matches_closed_form() {
        let (g, rho, eps) = (0.7f64, 0.95, 1e-8);
        let mut p = [2.0];
        adadelta_step(&mut p, &[g], &mut [0.0], &mut [0.0], rho, eps, 1.0);
        let want = 2.0 - eps.sqrt() / ((1.0 - rho) * g * g + eps).sqrt() * g;
        assert!((p[0] - want).abs() < 1e-15);
    }

    #[test]
    fn two_steps_follow_the_recurrence() {
        let (rho, eps) = (0.9, 1e-6);
        let mut r = Reference { eg2: 0.0, edx2: 0.0 };
        let mut q = 1.0;
        let (mut p, mut eg2, mut edx2) = ([1.0], [0.0], [0.0]);
        for g in [0.5, -2.0] {
            adadelta_step(&mut p, &[g], &mut eg2, &mut edx2, rho, eps, 1.0);
            q = r.step(q, g, rho, eps);
        }
        assert!((p[0] - q).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn random_sequences_follow_the_recurrence(
            grads in prop::collection::vec(-10.0f64..10.0, 1..20),
            rho in 0.5f64..0.99,
            eps in 1e-10f64..1e-4,
            p0 in -3.0f64..3.0,
        ) {
            let mut r = Reference { eg2: 0.0, edx2: 0.0 };
            let mut q = p0;
            let (mut p, mut eg2, mut edx2) = ([p0], [0.0], [0.0]);
            for &g in &grads {
                adadelta_step(&mut p, &[g], &mut eg2, &mut edx2, rho, eps, 1.0);
                q = r.step(q, g, rho, eps);
                prop_assert!(eg2[0] >= 0.0 && edx2[0] >= 0.0);
            }
            prop_assert!((p[0] - q).abs() < 1e-12);
        }
    }

    #[test]
    fn eps_decay_arithmetic_and_trigger() {
        let store = ParamStore::<f64>::new();
        let mut opt = AdaDeltaState::new(&store, 0.95, 1e-8).unwrap();
        opt.decay_eps(1e-2).unwrap();
        assert!((opt.eps - 1e-10).abs() < 1e-25);
        assert!(opt.decay_eps(1.0).is_err());

        let mut s = EpsSchedule::default();
        assert!([1.0, 0.9, 0.8, 0.7].iter().all(|&v| !s.observe(v)));

        let mut opt = AdaDeltaState::new(&store, 0.95, 1e-8).unwrap();
        let mut s = EpsSchedule::default();
        for v in [1.0, 1.1, 1.2, 1.3] {
            if s.observe(v) {
                opt.decay_eps(1e-2).unwrap();
            }
        }
        let want = 1e-8 * 1e-2 * 1e-2 * 1e-2;
        assert!((opt.eps - want).abs() <= want * 1e-14);
    }

    pub(crate) fn tiny_task(n: usize, seed: u64) -> (ModelConfig, Vec<Example<f64>>) {
        let vocab = VocabSpec::letters(3).unwrap();
        let mut cfg = ModelConfig::desk(3, vocab, DecoderConfig::single(AttentionKind::Location));
        cfg.encoder.units = 4;
        cfg.encoder.projection = 4;
        cfg.decoder.units = 6;
        cfg.decoder.attention_dim = 4;
        let mut rng = RngState::new(seed);
        let data = (0..n)
            .map(|i| {
                let len = rng.range_inclusive(1, 3);
                let mut target: Vec<usize> = (0..len).map(|_| rng.range_inclusive(2, 4)).collect();
                let frames = 4 * len + 4;
                let mut x = Tensor::zeros(&[frames, 3]);
                for (t, v) in x.data_mut().iter_mut().enumerate() {
                    *v = target[(t / 3 / 4).min(len - 1)] as f64 * 0.3 + 0.1 * rng.normal();
                }
                target.push(1);
                Example {
                    id: format!("u{i}"),
                    features: FeatureSequence::new(x).unwrap(),
                    target,
                }
            })
            .collect();
        (cfg, data)
    }

    fn trainer(cfg: &ModelConfig, batch: usize) -> Trainer<f64> {
        let model = Model::init(cfg.clone(), &mut RngState::new(5)).unwrap();
        let config = TrainConfig {
            batch_size: batch,
            max_epochs: 3,
            seed: 11,
            ..TrainConfig::default()
        };
        Trainer::new(model, config).unwrap()
    }

    #[test]
    fn repeated_pair_loss_never_rises() {
        let (cfg, data) = tiny_task(1, 1);
        let train = vec![data[0].clone(); 4];
        let mut t = trainer(&cfg, 2);
        let mut last = f64::INFINITY;
        for _ in 0..5 {
            let m = t.train_epoch(&train, &train).unwrap();
            assert!(m.train_loss <= last, "{} > {last}", m.train_loss);
            last = m.train_loss;
        }
    }

    #[test]
    fn frozen_model_keeps_constant_loss() {
        let (cfg, data) = tiny_task(6, 2);
        let mut t = trainer(&cfg, 4);
        t.model.store.freeze_prefix("");
        let before = t.model.store.clone();
        let a = t.train_epoch(&data, &data).unwrap();
        let b = t.train_epoch(&data, &data).unwrap();
        assert_eq!(a.valid_loss, b.valid_loss);
        assert!((a.train_loss - b.train_loss).abs() < 1e-12);
        for ((_, x), (_, y)) in before.iter().zip(t.model.store.iter()) {
            assert_eq!(x.value, y.value);
        }
    }

    #[test]
    fn fixed_seed_reproduces_curves() {
        let (cfg, data) = tiny_task(10, 3);
        let run = || {
            let mut t = trainer(&cfg, 3);
            t.fit(&data, &data[..4], |_, _| Ok(())).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
    }

    #[test]
    fn clipped_norm_stays_bounded() {
        let (cfg, data) = tiny_task(8, 4);
        let mut t = trainer(&cfg, 8);
        t.config.clip_norm = 0.05;
        for batch in data.chunks(2) {
            let refs: Vec<&Example<f64>> = batch.iter().collect();
            let s = t.train_batch(&refs, 1).unwrap();
            assert!(s.clipped_norm <= 0.05 + 1e-9);
        }
    }

    #[test]
    fn non_finite_parameters_abort_training() {
        let (cfg, data) = tiny_task(4, 5);
        let mut t = trainer(&cfg, 2);
        let id = t.model.decoder.bias;
        let mut b = t.model.store.value(id).clone();
        b.data_mut()[0] = f64::NAN;
        t.model.store.set(id, b).unwrap();
        assert!(matches!(t.train_epoch(&data, &data), Err(Error::Diverged { epoch: 1, .. })));
    }

    #[test]
    fn config_validation_and_keys() {
        let mut c = TrainConfig::default();
        assert!(c.validate().is_ok());
        c.clip_norm = 0.0;
        assert!(c.validate().is_err());
        let mut kv = KeyValues::new();
        TrainConfig::default().write(&mut kv);
        assert_eq!(kv.len(), TrainConfig::KEYS.len());
        let mut back = TrainConfig {
            batch_size: 1,
            ..TrainConfig::default()
        };
        back.apply(&kv).unwrap();
        assert_eq!(back, TrainConfig::default());
    }
}
