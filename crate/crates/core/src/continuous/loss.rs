use crate::dataset::PairedDataset;
use crate::metric::{f_beta_hat_unconstrained, Beta, MetricParams, RateSummary};
use crate::{CoadError, Real, Result};

use super::mlp::{sigmoid, MlpPair, Trace};
use super::TrainConfig;

/// Gradient constants of F̂_β with respect to the per-example predictions:
/// `∂F̂/∂p_s(i) = (c1·p_q(i) − c2_s)/n` and `∂F̂/∂p_q(i) = (c1·p_s(i) − c2_q)/n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradConstants<F> {
    pub c1: F,
    pub c2_s: F,
    pub c2_q: F,
}

/// `None` when the covariance `μ_sq − μ_s·μ_q` or `μ_sq` is exactly zero,
/// where the constants are singular and the F̂ gradient is taken as 0.
pub fn gradient_constants<F: Real>(
    rates: &RateSummary<F>,
    params: &MetricParams<F>,
) -> Option<GradConstants<F>> {
    let one = F::one();
    let cov = rates.covariance();
    if cov == F::zero() || rates.mu_sq == F::zero() {
        return None;
    }
    let f = f_beta_hat_unconstrained(rates, params);
    let j = rates.mu_sq;
    let mut bracket = one / cov - one / (one - j);
    if let Beta::Finite(b) = params.beta() {
        bracket = bracket - one / (j + *params.alpha() * *b * *b);
    }
    Some(GradConstants {
        c1: f * bracket,
        c2_s: f * (rates.mu_q - j) / (cov * (one - rates.mu_s)),
        c2_q: f * (rates.mu_s - j) / (cov * (one - rates.mu_q)),
    })
}

/// Value and gradient of the training loss on one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput<F> {
    pub loss: F,
    pub f_hat: F,
    pub wall: F,
    pub magnitude: F,
    pub rates: RateSummary<F>,
    pub constants: Option<GradConstants<F>>,
    /// Flat layout of [`super::Mlp::params`].
    pub grad_s: Vec<F>,
    pub grad_q: Vec<F>,
}

const LOGIT_CLAMP: f64 = 30.0;

pub(crate) struct BatchTraces<F> {
    pub s: Vec<Trace<F>>,
    pub q: Vec<Trace<F>>,
}

pub(crate) fn run_batch<F: Real>(
    pair: &MlpPair<F>,
    data: &PairedDataset<F>,
    rows: &[usize],
) -> Result<BatchTraces<F>> {
    if data.d_s() != pair.net_s.input_dim() {
        return Err(CoadError::DimensionMismatch {
            expected: pair.net_s.input_dim(),
            got: data.d_s(),
        });
    }
    if data.d_q() != pair.net_q.input_dim() {
        return Err(CoadError::DimensionMismatch {
            expected: pair.net_q.input_dim(),
            got: data.d_q(),
        });
    }
    let mut s = Vec::with_capacity(rows.len());
    let mut q = Vec::with_capacity(rows.len());
    for &i in rows {
        s.push(pair.net_s.trace(data.s_row(i))?);
        q.push(pair.net_q.trace(data.q_row(i))?);
    }
    Ok(BatchTraces { s, q })
}

pub(crate) fn batch_rates<F: Real>(ps: &[F], pq: &[F]) -> Result<RateSummary<F>> {
    let n = F::from(ps.len()).unwrap();
    let mut ms = F::zero();
    let mut mq = F::zero();
    let mut msq = F::zero();
    for (&a, &b) in ps.iter().zip(pq) {
        ms = ms + a;
        mq = mq + b;
        msq = msq + a * b;
    }
    let (ms, mq) = (ms / n, mq / n);
    // rounding can nudge the mean product past the smaller marginal
    let msq = (msq / n).min(ms).min(mq);
    if !(ms.is_finite() && mq.is_finite() && msq.is_finite()) {
        return Err(CoadError::Numerical("non-finite batch rates".into()));
    }
    RateSummary::from_means(ms, mq, msq, Some(ps.len())).map_err(|e| match e {
        CoadError::DegenerateRates(m) => CoadError::Numerical(m),
        other => other,
    })
}

/// Loss and its gradient with respect to every parameter of both networks:
///
/// ```text
/// −F̂_β + λ_wall·[μ_s σ(t(μ_s − ½)) + μ_q σ(t(μ_q − ½))]
///      + λ_mag·mean(clamp(logit p_s)² + clamp(logit p_q)²)
/// ```
pub fn loss_and_grads<F: Real>(
    pair: &MlpPair<F>,
    data: &PairedDataset<F>,
    rows: &[usize],
    config: &TrainConfig,
) -> Result<LossOutput<F>> {
    if rows.len() < 2 {
        return Err(CoadError::Precondition(
            "batch needs at least 2 examples".into(),
        ));
    }
    let params = config.metric_params::<F>()?;
    let traces = run_batch(pair, data, rows)?;
    let ps: Vec<F> = traces.s.iter().map(|t| t.prob).collect();
    let pq: Vec<F> = traces.q.iter().map(|t| t.prob).collect();
    let rates = batch_rates(&ps, &pq)?;
    let f_hat = f_beta_hat_unconstrained(&rates, &params);
    let constants = gradient_constants(&rates, &params);

    let lit = |x: f64| F::from(x).unwrap();
    let n = F::from(rows.len()).unwrap();
    let t = lit(config.wall_temperature);
    let lw = lit(config.lambda_wall);
    let lm = lit(config.lambda_mag);
    let half = lit(0.5);
    let wall_term = |mu: F| {
        let sg = sigmoid(t * (mu - half));
        (mu * sg, sg + mu * t * sg * (F::one() - sg))
    };
    let (ws, dws) = wall_term(rates.mu_s);
    let (wq, dwq) = wall_term(rates.mu_q);
    let wall = lw * (ws + wq);

    let clamp = lit(LOGIT_CLAMP);
    let clamped = |l: F| l.max(-clamp).min(clamp);
    let magnitude =
        lm * traces.s.iter().zip(&traces.q).fold(F::zero(), |a, (s, q)| {
            a + clamped(s.logit).powi(2) + clamped(q.logit).powi(2)
        }) / n;
    let loss = -f_hat + wall + magnitude;
    if !loss.is_finite() {
        return Err(CoadError::Numerical("loss is not finite".into()));
    }

    let mut grad_s = vec![F::zero(); pair.net_s.n_params()];
    let mut grad_q = vec![F::zero(); pair.net_q.n_params()];
    let two = lit(2.0);
    let mag_grad = |l: F| {
        if l.abs() < clamp {
            lm * two * l / n
        } else {
            F::zero()
        }
    };
    for i in 0..rows.len() {
        let (ts, tq) = (&traces.s[i], &traces.q[i]);
        let (mut dps, mut dpq) = (lw * dws / n, lw * dwq / n);
        if let Some(c) = &constants {
            dps = dps - (c.c1 * tq.prob - c.c2_s) / n;
            dpq = dpq - (c.c1 * ts.prob - c.c2_q) / n;
        }
        let dls = dps * ts.prob * (F::one() - ts.prob) + mag_grad(ts.logit);
        let dlq = dpq * tq.prob * (F::one() - tq.prob) + mag_grad(tq.logit);
        pair.net_s.backward(ts, dls, &mut grad_s);
        pair.net_q.backward(tq, dlq, &mut grad_q);
    }
    if grad_s.iter().chain(&grad_q).any(|g| !g.is_finite()) {
        return Err(CoadError::Numerical("gradient is not finite".into()));
    }
    Ok(LossOutput {
        loss,
        f_hat,
        wall,
        magnitude,
        rates,
        constants,
        grad_s,
        grad_q,
    })
}

/// Gradient of F̂_β alone with respect to the output layers, in the
/// closed form `mean_i (c1·p_q(i) − c2_s)·p_s(i)(1 − p_s(i))·z_s(i)` (and the
/// `q` mirror). Returns `(w_s, b_s, w_q, b_q)`.
#[allow(clippy::type_complexity)]
pub fn final_layer_fbeta_grads<F: Real>(
    pair: &MlpPair<F>,
    data: &PairedDataset<F>,
    rows: &[usize],
    params: &MetricParams<F>,
) -> Result<(Vec<F>, F, Vec<F>, F)> {
    let traces = run_batch(pair, data, rows)?;
    let ps: Vec<F> = traces.s.iter().map(|t| t.prob).collect();
    let pq: Vec<F> = traces.q.iter().map(|t| t.prob).collect();
    let rates = batch_rates(&ps, &pq)?;
    let zs_dim = traces.s[0].inputs.last().unwrap().len();
    let zq_dim = traces.q[0].inputs.last().unwrap().len();
    let (mut ws, mut bs) = (vec![F::zero(); zs_dim], F::zero());
    let (mut wq, mut bq) = (vec![F::zero(); zq_dim], F::zero());
    let Some(c) = gradient_constants(&rates, params) else {
        return Ok((ws, bs, wq, bq));
    };
    let n = F::from(rows.len()).unwrap();
    for (ts, tq) in traces.s.iter().zip(&traces.q) {
        let ys = (c.c1 * tq.prob - c.c2_s) * ts.prob * (F::one() - ts.prob) / n;
        let yq = (c.c1 * ts.prob - c.c2_q) * tq.prob * (F::one() - tq.prob) / n;
        for (w, &z) in ws.iter_mut().zip(ts.inputs.last().unwrap()) {
            *w = *w + ys * z;
        }
        for (w, &z) in wq.iter_mut().zip(tq.inputs.last().unwrap()) {
            *w = *w + yq * z;
        }
        bs = bs + ys;
        bq = bq + yq;
    }
    Ok((ws, bs, wq, bq))
}
