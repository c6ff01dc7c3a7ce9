use serde::{Deserialize, Serialize};

use crate::metric::{
    f_beta_from_fractions, f_beta_hat, Beta, MetricParams, PredictionVector, RateSummary,
};
use crate::synth::CellTable;
use crate::{CoadError, Result, Scalar};

use super::RegionLabeling;

/// Everything the bound checks need about one labeling on labelled data.
/// All amounts are fractions of the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledStats<T> {
    pub rates: RateSummary<T>,
    /// `E[p_s p_q y]`
    pub true_pos: T,
    /// `E[p_s p_q ¬y]`
    pub false_pos: T,
    /// `P(y)`
    pub anomaly_frac: T,
    pub ps_given_anomalous: T,
    pub ps_given_normal: T,
    pub pq_given_anomalous: T,
    pub pq_given_normal: T,
}

impl<T: Scalar> LabeledStats<T> {
    /// Exact statistics of a region labeling on a cell table.
    pub fn from_table(table: &CellTable<T>, labeling: &RegionLabeling<T>) -> Result<Self> {
        let z = T::zero;
        let (mut ms, mut mq, mut msq, mut tp, mut fp) = (z(), z(), z(), z(), z());
        let (mut sa, mut sn, mut qa, mut qn) = (z(), z(), z(), z());
        for i in 0..3 {
            for j in 0..3 {
                let (a, n) = (table.anomalous[i][j].clone(), table.normal[i][j].clone());
                let (ls, lq) = (labeling.s[i].clone(), labeling.q[j].clone());
                let both = ls.clone() * lq.clone();
                let p = a.clone() + n.clone();
                ms = ms + p.clone() * ls.clone();
                mq = mq + p * lq.clone();
                msq = msq + (a.clone() + n.clone()) * both.clone();
                tp = tp + a.clone() * both.clone();
                fp = fp + n.clone() * both;
                sa = sa + a.clone() * ls.clone();
                sn = sn + n.clone() * ls;
                qa = qa + a * lq.clone();
                qn = qn + n * lq;
            }
        }
        let pa = table.anomaly_mass();
        let pn = T::one() - pa.clone();
        Self::assemble(ms, mq, msq, tp, fp, pa, pn, sa, sn, qa, qn, None)
    }

    /// Statistics of predictions (categorical or soft) against labels.
    pub fn from_predictions(
        p_s: &PredictionVector<T>,
        p_q: &PredictionVector<T>,
        labels: &[bool],
    ) -> Result<Self> {
        if p_s.len() != p_q.len() || labels.len() != p_s.len() {
            return Err(CoadError::LengthMismatch {
                what: "predictions vs labels",
                left: p_s.len(),
                right: labels.len(),
            });
        }
        let z = T::zero;
        let (mut ms, mut mq, mut msq, mut tp, mut fp) = (z(), z(), z(), z(), z());
        let (mut sa, mut sn, mut qa, mut qn) = (z(), z(), z(), z());
        let mut n_anom = 0usize;
        for ((a, b), &y) in p_s.values().iter().zip(p_q.values()).zip(labels) {
            let both = a.clone() * b.clone();
            ms = ms + a.clone();
            mq = mq + b.clone();
            msq = msq + both.clone();
            if y {
                n_anom += 1;
                tp = tp + both;
                sa = sa + a.clone();
                qa = qa + b.clone();
            } else {
                fp = fp + both;
                sn = sn + a.clone();
                qn = qn + b.clone();
            }
        }
        let n = T::from_count(labels.len());
        let pa = T::from_count(n_anom) / n.clone();
        let pn = T::one() - pa.clone();
        let f = |v: T| v / n.clone();
        Self::assemble(
            f(ms),
            f(mq),
            f(msq),
            f(tp),
            f(fp),
            pa,
            pn,
            f(sa),
            f(sn),
            f(qa),
            f(qn),
            Some(labels.len()),
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        ms: T,
        mq: T,
        msq: T,
        tp: T,
        fp: T,
        pa: T,
        pn: T,
        sa: T,
        sn: T,
        qa: T,
        qn: T,
        n: Option<usize>,
    ) -> Result<Self> {
        let cond = |mass: T, class: &T| {
            if class.is_zero() {
                T::zero()
            } else {
                mass / class.clone()
            }
        };
        Ok(Self {
            rates: RateSummary::from_means(ms, mq, msq, n)?,
            true_pos: tp,
            false_pos: fp,
            ps_given_anomalous: cond(sa, &pa),
            ps_given_normal: cond(sn, &pn),
            pq_given_anomalous: cond(qa, &pa),
            pq_given_normal: cond(qn, &pn),
            anomaly_frac: pa,
        })
    }

    /// Each detector flags anomalies at least as often as normal examples.
    /// This is the "no worse than random guessing" hypothesis of the bound.
    pub fn no_worse_than_random(&self) -> bool {
        self.ps_given_anomalous >= self.ps_given_normal
            && self.pq_given_anomalous >= self.pq_given_normal
    }

    pub fn f_beta(&self, beta: &Beta<T>) -> T {
        f_beta_from_fractions(&self.true_pos, &self.rates.mu_sq, &self.anomaly_frac, beta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRecord<T> {
    pub name: String,
    pub beta: Beta<T>,
    pub f_hat: T,
    pub f: T,
    pub d: T,
    pub d_naive: T,
    pub fp: T,
    /// Meets the hypotheses of the bound.
    pub in_scope: bool,
    pub note: Option<String>,
    pub f_hat_le_f: bool,
    pub d_ge_fp: bool,
    pub d_le_naive: bool,
}

impl<T> BoundRecord<T> {
    pub fn holds(&self) -> bool {
        self.f_hat_le_f && self.d_ge_fp && self.d_le_naive
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport<T> {
    pub slack: T,
    pub records: Vec<BoundRecord<T>>,
    /// Every in-scope record satisfies all three inequalities.
    pub all_hold: bool,
    /// Largest `F̂_β − F_β` over in-scope records.
    pub max_excess: T,
    pub excluded: usize,
}

/// Checks `F̂_β ≤ F_β + slack`, `D + slack ≥ FP` and `D ≤ D_naive + slack` for
/// each labeling and β, with α set to the true anomaly fraction. Labelings
/// where a detector is worse than random are reported but excluded from
/// `all_hold`; so are those breaking the `μ ≤ 0.5` constraint.
pub fn verify_bounds<T: Scalar>(
    labelings: &[(String, LabeledStats<T>)],
    betas: &[Beta<T>],
    slack: T,
) -> Result<BoundsReport<T>> {
    let mut records = Vec::new();
    let mut all_hold = true;
    let mut max_excess: Option<T> = None;
    let mut excluded = 0;
    for (name, stats) in labelings {
        if stats.anomaly_frac.is_zero() || stats.anomaly_frac > T::half() {
            return Err(CoadError::Precondition(format!(
                "{name}: anomaly fraction {:?} must lie in (0, 0.5]",
                stats.anomaly_frac
            )));
        }
        let mut note = None;
        if !stats.no_worse_than_random() {
            note = Some("excluded: a detector is worse than random".to_string());
        } else if !stats.rates.within_constraint() {
            note = Some("excluded: mu_s or mu_q exceeds 0.5".to_string());
        }
        let in_scope = note.is_none();
        if !in_scope {
            excluded += 1;
        }
        for beta in betas {
            let params = MetricParams::new(stats.anomaly_frac.clone(), beta.clone())?;
            let f_hat = match f_beta_hat(&stats.rates, &params) {
                Ok(v) => v,
                Err(CoadError::ConstraintViolation(_)) => {
                    crate::metric::f_beta_hat_unconstrained(&stats.rates, &params)
                }
                Err(e) => return Err(e),
            };
            let f = stats.f_beta(beta);
            let r = &stats.rates;
            let record = BoundRecord {
                name: name.clone(),
                beta: beta.clone(),
                f_hat_le_f: f_hat <= f.clone() + slack.clone(),
                d_ge_fp: r.d.clone() + slack.clone() >= stats.false_pos,
                d_le_naive: r.d <= r.d_naive.clone() + slack.clone(),
                f_hat: f_hat.clone(),
                f: f.clone(),
                d: r.d.clone(),
                d_naive: r.d_naive.clone(),
                fp: stats.false_pos.clone(),
                in_scope,
                note: note.clone(),
            };
            if in_scope {
                all_hold &= record.holds();
                let excess = f_hat - f;
                if max_excess.as_ref().is_none_or(|m| excess > *m) {
                    max_excess = Some(excess);
                }
            }
            records.push(record);
        }
    }
    Ok(BoundsReport {
        slack,
        records,
        all_hold,
        max_excess: max_excess.unwrap_or_else(T::zero),
        excluded,
    })
}
