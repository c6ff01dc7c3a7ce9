use serde::{Deserialize, Serialize};

use crate::metric::{f_beta_from_joint, MetricParams};
use crate::{CoadError, Result, Scalar};

/// A categorical solution reduced to what the comparison needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalSolution<T> {
    pub mu_sq: T,
    pub d: T,
    pub description: String,
}

impl<T: Scalar> CategoricalSolution<T> {
    pub fn new(mu_sq: T, d: T, description: impl Into<String>) -> Result<Self> {
        if d > mu_sq {
            return Err(CoadError::Precondition(format!(
                "D = {d:?} exceeds mu_sq = {mu_sq:?}"
            )));
        }
        Ok(Self {
            mu_sq,
            d,
            description: description.into(),
        })
    }

    /// `(1 + β²)(μ_sq − D)/(μ_sq + αβ²)`.
    pub fn f_hat(&self, params: &MetricParams<T>) -> T {
        f_beta_from_joint(&self.mu_sq, &self.d, params)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict<T> {
    /// `a` is at least as good for every β > 0.
    AAlways,
    /// `b` is never strictly worse.
    BAlways,
    Equal,
    /// `b` wins below `β²_crit`, `a` strictly above.
    FlipAt {
        beta_sq_crit: T,
    },
}

/// Where, in β, the solution with more joint events overtakes the other.
/// Requires `a.mu_sq ≥ b.mu_sq`.
pub fn compare_solutions<T: Scalar>(
    a: &CategoricalSolution<T>,
    b: &CategoricalSolution<T>,
    alpha: &T,
) -> Result<Verdict<T>> {
    if a.mu_sq < b.mu_sq {
        return Err(CoadError::Precondition(
            "order the solutions so that a.mu_sq >= b.mu_sq".into(),
        ));
    }
    if a.d > a.mu_sq || b.d > b.mu_sq {
        return Err(CoadError::Precondition(
            "each solution needs mu_sq >= D".into(),
        ));
    }
    if !(alpha > &T::zero()) {
        return Err(CoadError::OutOfRange("alpha must be positive".into()));
    }
    let z = (a.mu_sq.clone() - b.mu_sq.clone()) - (a.d.clone() - b.d.clone());
    if z <= T::zero() {
        return Ok(if z.is_zero() && a.mu_sq == b.mu_sq {
            Verdict::Equal
        } else {
            Verdict::BAlways
        });
    }
    let crit =
        (b.mu_sq.clone() * a.d.clone() - a.mu_sq.clone() * b.d.clone()) / (alpha.clone() * z);
    Ok(if crit <= T::zero() {
        Verdict::AAlways
    } else {
        Verdict::FlipAt { beta_sq_crit: crit }
    })
}
