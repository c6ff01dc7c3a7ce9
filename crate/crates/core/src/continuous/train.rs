use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::PairedDataset;
use crate::metric::{f_beta_hat_unconstrained, Beta, MetricParams};
use crate::{CoadError, Real, Result};

use super::loss::{batch_rates, loss_and_grads, run_batch};
use super::mlp::MlpPair;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub alpha: f64,
    pub beta: Beta<f64>,
    /// Hidden widths; each view's net is `[d, hidden.., 1]`.
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lambda_wall: f64,
    pub lambda_mag: f64,
    pub wall_temperature: f64,
    pub validation_fraction: f64,
    pub early_stop_patience: usize,
    /// Start each output bias at `logit(alpha)` instead of 0.
    pub prior_bias: bool,
    /// Independent initialisations; the one with the best validation F̂ wins.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            beta: Beta::Finite(1.0),
            hidden: vec![8, 8],
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            epochs: 100,
            batch_size: 256,
            lambda_wall: 1.0,
            lambda_mag: 1e-4,
            wall_temperature: 50.0,
            validation_fraction: 0.2,
            early_stop_patience: 10,
            prior_bias: true,
            restarts: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn metric_params<F: Real>(&self) -> Result<MetricParams<F>> {
        let beta = match self.beta {
            Beta::Finite(b) => Beta::Finite(F::from(b).unwrap()),
            Beta::Infinity => Beta::Infinity,
        };
        MetricParams::new(F::from(self.alpha).unwrap(), beta)
    }

    pub fn validate(&self) -> Result<()> {
        self.metric_params::<f64>()?;
        let positive = [
            ("learning_rate", self.learning_rate),
            ("adam_eps", self.adam_eps),
            ("wall_temperature", self.wall_temperature),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CoadError::OutOfRange(format!("{name} = {v} must be > 0")));
            }
        }
        for (name, v) in [
            ("lambda_wall", self.lambda_wall),
            ("lambda_mag", self.lambda_mag),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(CoadError::OutOfRange(format!("{name} = {v} must be >= 0")));
            }
        }
        for (name, v) in [
            ("adam_beta1", self.adam_beta1),
            ("adam_beta2", self.adam_beta2),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(CoadError::OutOfRange(format!(
                    "{name} = {v} must lie in [0, 1)"
                )));
            }
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(CoadError::OutOfRange(format!(
                "validation_fraction = {} must lie in (0, 1)",
                self.validation_fraction
            )));
        }
        if self.batch_size < 2 {
            return Err(CoadError::OutOfRange("batch_size must be >= 2".into()));
        }
        if self.early_stop_patience == 0 {
            return Err(CoadError::OutOfRange(
                "early_stop_patience must be >= 1".into(),
            ));
        }
        if self.restarts == 0 {
            return Err(CoadError::OutOfRange("restarts must be >= 1".into()));
        }
        if self.hidden.contains(&0) {
            return Err(CoadError::OutOfRange(
                "hidden widths must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn layer_sizes(&self, d: usize) -> Vec<usize> {
        let mut v = vec![d];
        v.extend(&self.hidden);
        v.push(1);
        v
    }
}

/// Adam on a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam<F> {
    m: Vec<F>,
    v: Vec<F>,
    t: i32,
    lr: F,
    b1: F,
    b2: F,
    eps: F,
}

impl<F: Real> Adam<F> {
    pub fn new(n: usize, config: &TrainConfig) -> Self {
        let f = |x: f64| F::from(x).unwrap();
        Self {
            m: vec![F::zero(); n],
            v: vec![F::zero(); n],
            t: 0,
            lr: f(config.learning_rate),
            b1: f(config.adam_beta1),
            b2: f(config.adam_beta2),
            eps: f(config.adam_eps),
        }
    }

    /// One descent step on `params` given the loss gradient.
    pub fn step(&mut self, params: &mut [F], grad: &[F]) {
        self.t += 1;
        let one = F::one();
        let c1 = one - self.b1.powi(self.t);
        let c2 = one - self.b2.powi(self.t);
        for k in 0..params.len() {
            self.m[k] = self.b1 * self.m[k] + (one - self.b1) * grad[k];
            self.v[k] = self.b2 * self.v[k] + (one - self.b2) * grad[k] * grad[k];
            let mh = self.m[k] / c1;
            let vh = self.v[k] / c2;
            params[k] = params[k] - self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean batch loss.
    pub train_loss: f64,
    pub val_f_hat: f64,
    pub val_mu_s: f64,
    pub val_mu_q: f64,
    pub val_mu_sq: f64,
    /// `μ_s, μ_q ≤ 0.5` on validation.
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    EarlyStop,
    Diverged(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch with the largest validation F̂ among feasible epochs.
    pub best_epoch: Option<usize>,
    pub stop: StopReason,
    pub train_rows: usize,
    pub val_rows: usize,
    /// Which restart produced the returned pair.
    pub restart: usize,
    /// Best feasible validation F̂ of every restart.
    pub restart_scores: Vec<Option<f64>>,
}

impl TrainHistory {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.best_epoch.map(|e| &self.epochs[e - 1])
    }
}

/// Seeded train/validation split: the first `round(n·fraction)` rows of a
/// shuffled index list go to validation. Returns `(train, validation)`.
pub fn split_rows(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    let n_val = ((n as f64) * fraction).round() as usize;
    let val = idx[..n_val].to_vec();
    let train = idx[n_val..].to_vec();
    (train, val)
}

/// Predictions of both nets on the given rows.
pub fn predict<F: Real>(
    pair: &MlpPair<F>,
    data: &PairedDataset<F>,
    rows: &[usize],
) -> Result<(Vec<F>, Vec<F>)> {
    let t = run_batch(pair, data, rows)?;
    Ok((
        t.s.iter().map(|x| x.prob).collect(),
        t.q.iter().map(|x| x.prob).collect(),
    ))
}

/// Hard joint prediction: an example is flagged when `p_s·p_q > 1/2`.
pub fn joint_flags<F: Real>(p_s: &[F], p_q: &[F]) -> Vec<bool> {
    let half = F::from(0.5).unwrap();
    p_s.iter().zip(p_q).map(|(&a, &b)| a * b > half).collect()
}

/// Initial pair for restart `k`: seed `config.seed + k`, Glorot weights and,
/// with `prior_bias`, output biases at `logit(alpha)`.
pub fn initial_pair<F: Real>(
    d_s: usize,
    d_q: usize,
    config: &TrainConfig,
    restart: usize,
) -> Result<MlpPair<F>> {
    let seed = config.seed.wrapping_add(restart as u64);
    let mut pair = MlpPair::new(&config.layer_sizes(d_s), &config.layer_sizes(d_q), seed)?;
    if config.prior_bias {
        let b = F::from((config.alpha / (1.0 - config.alpha)).ln()).unwrap();
        for net in [&mut pair.net_s, &mut pair.net_q] {
            net.layers_mut().last_mut().unwrap().bias[0] = b;
        }
    }
    Ok(pair)
}

/// Trains `config.restarts` fresh pairs and keeps the one whose best
/// feasible validation F̂ is highest (ties go to the earlier restart).
pub fn train<F: Real>(
    data: &PairedDataset<F>,
    config: &TrainConfig,
) -> Result<(MlpPair<F>, TrainHistory)> {
    config.validate()?;
    let mut best: Option<(MlpPair<F>, TrainHistory)> = None;
    let mut scores = Vec::with_capacity(config.restarts);
    for k in 0..config.restarts {
        let pair = initial_pair(data.d_s(), data.d_q(), config, k)?;
        let (pair, mut history) = train_from(pair, data, config)?;
        let score = history.best().map(|e| e.val_f_hat);
        scores.push(score);
        history.restart = k;
        let better = match (&best, score) {
            (None, _) => true,
            (Some((_, h)), Some(s)) => h.best().is_none_or(|b| s > b.val_f_hat),
            (Some(_), None) => false,
        };
        if better {
            best = Some((pair, history));
        }
    }
    let (pair, mut history) = best.expect("at least one restart");
    history.restart_scores = scores;
    Ok((pair, history))
}

/// Minibatch Adam on the training loss, validation F̂ after every epoch,
/// early stopping, and restore of the best feasible epoch.
pub fn train_from<F: Real>(
    mut pair: MlpPair<F>,
    data: &PairedDataset<F>,
    config: &TrainConfig,
) -> Result<(MlpPair<F>, TrainHistory)> {
    config.validate()?;
    if data.len() < 2 * config.batch_size {
        return Err(CoadError::Precondition(format!(
            "{} examples, need at least 2 x batch_size = {}",
            data.len(),
            2 * config.batch_size
        )));
    }
    let (mut train_rows, val_rows) =
        split_rows(data.len(), config.validation_fraction, config.seed);
    if val_rows.len() < 2 || train_rows.len() < 2 {
        return Err(CoadError::Precondition(
            "split leaves fewer than 2 rows on one side".into(),
        ));
    }
    let params = config.metric_params::<F>()?;
    let mut history = TrainHistory {
        epochs: Vec::new(),
        best_epoch: None,
        stop: StopReason::MaxEpochs,
        train_rows: train_rows.len(),
        val_rows: val_rows.len(),
        restart: 0,
        restart_scores: Vec::new(),
    };
    let (ps0, pq0) = pair.params();
    let mut adam_s = Adam::new(ps0.len(), config);
    let mut adam_q = Adam::new(pq0.len(), config);
    let mut best_params = (ps0, pq0);
    let mut best_score = f64::NEG_INFINITY;
    let mut stale = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(2);

    for epoch in 1..=config.epochs {
        train_rows.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        let mut diverged = None;
        // a trailing batch of one example is dropped
        for batch in train_rows
            .chunks(config.batch_size)
            .filter(|b| b.len() >= 2)
        {
            let out = match loss_and_grads(&pair, data, batch, config) {
                Ok(o) => o,
                Err(e) => {
                    diverged = Some(e.to_string());
                    break;
                }
            };
            loss_sum += out.loss.to_f64().unwrap();
            batches += 1;
            let (mut s, mut q) = pair.params();
            adam_s.step(&mut s, &out.grad_s);
            adam_q.step(&mut q, &out.grad_q);
            pair.set_params(&s, &q)?;
        }
        if let Some(msg) = diverged {
            history.stop = StopReason::Diverged(msg);
            break;
        }
        let (vs, vq) = predict(&pair, data, &val_rows)?;
        let rates = match batch_rates(&vs, &vq) {
            Ok(r) => r,
            Err(e) => {
                history.stop = StopReason::Diverged(e.to_string());
                break;
            }
        };
        let f_hat = f_beta_hat_unconstrained(&rates, &params).to_f64().unwrap();
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / batches.max(1) as f64,
            val_f_hat: f_hat,
            val_mu_s: rates.mu_s.to_f64().unwrap(),
            val_mu_q: rates.mu_q.to_f64().unwrap(),
            val_mu_sq: rates.mu_sq.to_f64().unwrap(),
            feasible: rates.within_constraint(),
        };
        if !record.train_loss.is_finite() || !f_hat.is_finite() {
            history.epochs.push(record);
            history.stop = StopReason::Diverged("non-finite loss or validation score".into());
            break;
        }
        if record.feasible && f_hat > best_score {
            best_score = f_hat;
            best_params = pair.params();
            history.best_epoch = Some(epoch);
            stale = 0;
        } else {
            stale += 1;
        }
        history.epochs.push(record);
        if stale >= config.early_stop_patience {
            history.stop = StopReason::EarlyStop;
            break;
        }
    }
    if history.best_epoch.is_some() || config.epochs == 0 {
        pair.set_params(&best_params.0, &best_params.1)?;
    }
    Ok((pair, history))
}
