//! Empirical rates and the unsupervised F̂_β family.
//!
//! Everything here is a pure function of two prediction vectors `p_s`, `p_q`
//! (entries in `[0, 1]`) and the metric parameters. The joint-event fraction
//! is `J = μ_sq`, and the false-positive fraction is estimated from the
//! disagreement between the detectors:
//!
//! ```text
//!   D = (μ_s − μ_sq)/(1 − μ_q) · (μ_q − μ_sq)/(1 − μ_s)
//! ```
//!
//! `D_naive = μ_s·μ_q` is the estimate obtained by treating `s` and `q` as
//! fully independent; it is kept for comparison.

use serde::{Deserialize, Serialize};

use crate::{min, CoadError, Result, Scalar};

/// Per-example detector outputs, each in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionVector<T>(Vec<T>);

impl<T: Scalar> PredictionVector<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(CoadError::Empty("prediction vector"));
        }
        if let Some(i) = values
            .iter()
            .position(|v| !(v >= &T::zero() && v <= &T::one()))
        {
            return Err(CoadError::OutOfRange(format!(
                "prediction {i} = {:?} is outside [0, 1]",
                values[i]
            )));
        }
        Ok(Self(values))
    }

    /// Builds a categorical vector from flags.
    pub fn from_flags(flags: &[bool]) -> Result<Self> {
        Self::new(
            flags
                .iter()
                .map(|&f| if f { T::one() } else { T::zero() })
                .collect(),
        )
    }

    pub fn values(&self) -> &[T] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn mean(&self) -> T {
        sum(self.0.iter().cloned()) / T::from_count(self.0.len())
    }

    /// Index of the first entry that is neither 0 nor 1.
    pub fn first_non_categorical(&self) -> Option<usize> {
        self.0.iter().position(|v| !(v.is_zero() || v.is_one()))
    }

    pub fn is_categorical(&self) -> bool {
        self.first_non_categorical().is_none()
    }
}

fn sum<T: Scalar>(it: impl Iterator<Item = T>) -> T {
    it.fold(T::zero(), |acc, x| acc + x)
}

/// Value of β. `Infinity` selects the recall limit.
///
/// Serialized as the bare number, or the string `"inf"`.
#[derive(Debug, Clone, PartialEq)]
pub enum Beta<T> {
    Finite(T),
    Infinity,
}

impl<T: Serialize> Serialize for Beta<T> {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Beta::Finite(b) => b.serialize(ser),
            Beta::Infinity => ser.serialize_str("inf"),
        }
    }
}

impl<'de, T: Deserialize<'de>> Deserialize<'de> for Beta<T> {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr<T> {
            Word(String),
            Value(T),
        }
        match Repr::<T>::deserialize(de)? {
            Repr::Value(b) => Ok(Beta::Finite(b)),
            Repr::Word(w) if matches!(w.as_str(), "inf" | "infinity" | "Infinity") => {
                Ok(Beta::Infinity)
            }
            Repr::Word(w) => Err(serde::de::Error::custom(format!(
                "beta must be a number or \"inf\", got {w:?}"
            ))),
        }
    }
}

impl<T: Scalar> Beta<T> {
    pub fn one() -> Self {
        Beta::Finite(T::one())
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Beta::Infinity)
    }

    /// β², or `None` at infinity.
    pub fn squared(&self) -> Option<T> {
        match self {
            Beta::Finite(b) => Some(b.clone() * b.clone()),
            Beta::Infinity => None,
        }
    }

    pub fn approx(&self) -> f64 {
        match self {
            Beta::Finite(b) => b.approx(),
            Beta::Infinity => f64::INFINITY,
        }
    }
}

/// Assumed anomaly fraction and β.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricParams<T> {
    alpha: T,
    beta: Beta<T>,
}

impl<T: Scalar> MetricParams<T> {
    pub fn new(alpha: T, beta: Beta<T>) -> Result<Self> {
        if !(alpha > T::zero() && alpha <= T::half()) {
            return Err(CoadError::OutOfRange(format!(
                "alpha = {alpha:?} must lie in (0, 0.5]"
            )));
        }
        if let Beta::Finite(b) = &beta {
            // also rejects NaN
            if !(b >= &T::zero()) {
                return Err(CoadError::OutOfRange(format!("beta = {b:?} must be >= 0")));
            }
        }
        Ok(Self { alpha, beta })
    }

    pub fn alpha(&self) -> &T {
        &self.alpha
    }

    pub fn beta(&self) -> &Beta<T> {
        &self.beta
    }

    /// κ = αβ², the only combination the optimisation depends on.
    pub fn kappa(&self) -> Option<T> {
        self.beta.squared().map(|b2| self.alpha.clone() * b2)
    }

    pub fn with_beta(&self, beta: Beta<T>) -> Result<Self> {
        Self::new(self.alpha.clone(), beta)
    }
}

/// Which false-positive estimate enters the dual form of F̂_β.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FalsePositiveEstimate {
    #[default]
    Disagreement,
    Naive,
}

/// Empirical rates of a detector pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSummary<T> {
    pub mu_s: T,
    pub mu_q: T,
    pub mu_sq: T,
    /// Joint-event fraction, identical to `mu_sq`.
    pub j: T,
    pub d: T,
    pub d_naive: T,
    /// Example count; `None` for population-level (exact) rates.
    pub n: Option<usize>,
}

impl<T: Scalar> RateSummary<T> {
    /// Builds the summary from the three means.
    pub fn from_means(mu_s: T, mu_q: T, mu_sq: T, n: Option<usize>) -> Result<Self> {
        let zero = T::zero();
        let one = T::one();
        for (name, v) in [("mu_s", &mu_s), ("mu_q", &mu_q), ("mu_sq", &mu_sq)] {
            if !(v >= &zero && v <= &one) {
                return Err(CoadError::OutOfRange(format!("{name} = {v:?}")));
            }
        }
        if mu_sq > min(&mu_s, &mu_q) {
            return Err(CoadError::OutOfRange(format!(
                "mu_sq = {mu_sq:?} exceeds min(mu_s, mu_q)"
            )));
        }
        if mu_s.is_one() || mu_q.is_one() {
            return Err(CoadError::DegenerateRates(
                "mu_s = 1 or mu_q = 1 leaves D undefined".into(),
            ));
        }
        let d = (mu_s.clone() - mu_sq.clone()) / (one.clone() - mu_q.clone())
            * ((mu_q.clone() - mu_sq.clone()) / (one - mu_s.clone()));
        let d_naive = mu_s.clone() * mu_q.clone();
        Ok(Self {
            j: mu_sq.clone(),
            mu_s,
            mu_q,
            mu_sq,
            d,
            d_naive,
            n,
        })
    }

    /// Builds the summary from integer counts over `n` examples.
    pub fn from_counts(n_s: usize, n_q: usize, n_sq: usize, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(CoadError::Empty("rate counts"));
        }
        let total = T::from_count(n);
        Self::from_means(
            T::from_count(n_s) / total.clone(),
            T::from_count(n_q) / total.clone(),
            T::from_count(n_sq) / total,
            Some(n),
        )
    }

    /// Cov(p_s, p_q) = μ_sq − μ_s·μ_q.
    pub fn covariance(&self) -> T {
        self.mu_sq.clone() - self.mu_s.clone() * self.mu_q.clone()
    }

    /// The detectors agree at least as often as independent guessers would.
    pub fn better_than_random(&self) -> bool {
        self.mu_sq >= self.mu_s.clone() * self.mu_q.clone()
    }

    pub fn within_constraint(&self) -> bool {
        self.mu_s <= T::half() && self.mu_q <= T::half()
    }

    pub fn false_positive_estimate(&self, estimate: FalsePositiveEstimate) -> T {
        match estimate {
            FalsePositiveEstimate::Disagreement => self.d.clone(),
            FalsePositiveEstimate::Naive => self.d_naive.clone(),
        }
    }
}

/// Computes μ_s, μ_q, μ_sq, D and D_naive.
pub fn compute_rates<T: Scalar>(
    p_s: &PredictionVector<T>,
    p_q: &PredictionVector<T>,
) -> Result<RateSummary<T>> {
    if p_s.len() != p_q.len() {
        return Err(CoadError::LengthMismatch {
            what: "p_s vs p_q",
            left: p_s.len(),
            right: p_q.len(),
        });
    }
    let n = T::from_count(p_s.len());
    let mu_s = p_s.mean();
    let mu_q = p_q.mean();
    let mu_sq = sum(p_s
        .values()
        .iter()
        .zip(p_q.values())
        .map(|(a, b)| a.clone() * b.clone()))
        / n;
    // a·b ≤ min(a, b) holds per element; rounding in the means can still
    // push μ_sq a hair above min(μ_s, μ_q) in floating point.
    let mu_sq = min(&mu_sq, &min(&mu_s, &mu_q));
    RateSummary::from_means(mu_s, mu_q, mu_sq, Some(p_s.len()))
}

fn check_constraint<T: Scalar>(rates: &RateSummary<T>) -> Result<()> {
    if !rates.within_constraint() {
        return Err(CoadError::ConstraintViolation(format!(
            "anomalies exist and are rare: need mu_s, mu_q <= 0.5 (mu_s = {:?}, mu_q = {:?})",
            rates.mu_s, rates.mu_q
        )));
    }
    Ok(())
}

/// F̂_β in its closed form. Enforces `μ_s, μ_q ≤ 0.5`; returns 0 when `μ_sq = 0`.
pub fn f_beta_hat<T: Scalar>(rates: &RateSummary<T>, params: &MetricParams<T>) -> Result<T> {
    check_constraint(rates)?;
    Ok(f_beta_hat_unconstrained(rates, params))
}

/// Closed form without the rarity constraint. The training loop and the
/// bound checks use this; evaluation goes through [`f_beta_hat`].
pub fn f_beta_hat_unconstrained<T: Scalar>(rates: &RateSummary<T>, params: &MetricParams<T>) -> T {
    if rates.mu_sq.is_zero() {
        return T::zero();
    }
    let one = T::one();
    let shape = rates.covariance() * (one.clone() - rates.mu_sq.clone())
        / ((one.clone() - rates.mu_s.clone()) * (one.clone() - rates.mu_q.clone()));
    match params.beta() {
        Beta::Finite(b) => {
            let b2 = b.clone() * b.clone();
            let kappa = params.alpha().clone() * b2.clone();
            (one + b2) * shape / (rates.mu_sq.clone() + kappa)
        }
        Beta::Infinity => shape / params.alpha().clone(),
    }
}

/// Dual form `(1 + β²)(J − D)/(J + αβ²)` with a chosen false-positive estimate.
/// No constraint check; returns 0 when `J = 0`.
pub fn f_beta_hat_dual<T: Scalar>(
    rates: &RateSummary<T>,
    params: &MetricParams<T>,
    estimate: FalsePositiveEstimate,
) -> T {
    f_beta_from_joint(&rates.j, &rates.false_positive_estimate(estimate), params)
}

/// `(1 + β²)(J − D)/(J + αβ²)` from a joint fraction and a false-positive fraction.
pub fn f_beta_from_joint<T: Scalar>(j: &T, d: &T, params: &MetricParams<T>) -> T {
    if j.is_zero() {
        return T::zero();
    }
    let true_pos = j.clone() - d.clone();
    match params.beta() {
        Beta::Finite(b) => {
            let b2 = b.clone() * b.clone();
            (T::one() + b2.clone()) * true_pos / (j.clone() + params.alpha().clone() * b2)
        }
        Beta::Infinity => true_pos / params.alpha().clone(),
    }
}

/// P̂ = F̂_0 (no constraint check).
pub fn precision_hat<T: Scalar>(rates: &RateSummary<T>) -> T {
    if rates.j.is_zero() {
        return T::zero();
    }
    (rates.j.clone() - rates.d.clone()) / rates.j.clone()
}

/// R̂ = F̂_∞ (no constraint check).
pub fn recall_hat<T: Scalar>(rates: &RateSummary<T>, alpha: &T) -> T {
    if rates.j.is_zero() {
        return T::zero();
    }
    (rates.j.clone() - rates.d.clone()) / alpha.clone()
}

/// Confusion counts of the joint prediction `p_s·p_q` against true labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn n(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn f_beta<T: Scalar>(&self, beta: &Beta<T>) -> T {
        f_beta_from_fractions(
            &T::from_count(self.tp),
            &T::from_count(self.tp + self.fp),
            &T::from_count(self.tp + self.fn_),
            beta,
        )
    }
}

pub fn confusion<T: Scalar>(
    p_s: &PredictionVector<T>,
    p_q: &PredictionVector<T>,
    labels: &[bool],
) -> Result<Confusion> {
    if p_s.len() != p_q.len() {
        return Err(CoadError::LengthMismatch {
            what: "p_s vs p_q",
            left: p_s.len(),
            right: p_q.len(),
        });
    }
    if labels.len() != p_s.len() {
        return Err(CoadError::LengthMismatch {
            what: "labels vs predictions",
            left: labels.len(),
            right: p_s.len(),
        });
    }
    if let Some(index) = p_s
        .first_non_categorical()
        .or_else(|| p_q.first_non_categorical())
    {
        return Err(CoadError::NotCategorical { index });
    }
    let mut c = Confusion::default();
    for ((a, b), &y) in p_s.values().iter().zip(p_q.values()).zip(labels) {
        let joint = a.is_one() && b.is_one();
        match (joint, y) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// Supervised F_β of the joint prediction. Precision at β = 0, recall at
/// infinity, 0 when nothing is predicted positive.
pub fn supervised_f_beta<T: Scalar>(
    p_s: &PredictionVector<T>,
    p_q: &PredictionVector<T>,
    labels: &[bool],
    beta: &Beta<T>,
) -> Result<T> {
    Ok(confusion(p_s, p_q, labels)?.f_beta(beta))
}

/// F_β from true-positive, predicted-positive and actual-positive amounts
/// (counts or fractions, as long as they share a scale).
pub fn f_beta_from_fractions<T: Scalar>(
    true_pos: &T,
    predicted_pos: &T,
    actual_pos: &T,
    beta: &Beta<T>,
) -> T {
    match beta {
        Beta::Infinity => {
            if actual_pos.is_zero() || predicted_pos.is_zero() {
                T::zero()
            } else {
                true_pos.clone() / actual_pos.clone()
            }
        }
        Beta::Finite(b) => {
            let b2 = b.clone() * b.clone();
            let denom = predicted_pos.clone() + b2.clone() * actual_pos.clone();
            if predicted_pos.is_zero() || denom.is_zero() {
                T::zero()
            } else {
                (T::one() + b2) * true_pos.clone() / denom
            }
        }
    }
}
