use serde::{Deserialize, Serialize};

use crate::metric::{f_beta_hat, Beta, MetricParams};
use crate::synth::OverlapScenario;
use crate::{CoadError, Result, Scalar};

use super::LabeledStats;

/// Labels per region: `s` over (A∖B, B, A^c∖B), `q` over (A∖C, C, A^c∖C).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionLabeling<T> {
    pub s: [T; 3],
    pub q: [T; 3],
}

impl<T: Scalar> RegionLabeling<T> {
    pub fn new(s: [T; 3], q: [T; 3]) -> Self {
        Self { s, q }
    }

    /// Labels are probabilities.
    pub fn is_valid(&self) -> bool {
        self.s
            .iter()
            .chain(&self.q)
            .all(|v| v >= &T::zero() && v <= &T::one())
    }

    pub fn labels_b(&self) -> &T {
        &self.s[1]
    }

    pub fn labels_c(&self) -> &T {
        &self.q[1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate<T> {
    pub name: String,
    pub labeling: RegionLabeling<T>,
}

/// The eight candidate optima for the overlap scenario: the four
/// categorical labelings of the noisy regions, the three that saturate the
/// rate constraint by partially labeling the normal-only regions, and the
/// one that labels only normal-only regions.
pub fn candidate_solutions<T: Scalar>(scenario: &OverlapScenario<T>) -> Vec<Candidate<T>> {
    let (o, l) = (T::zero, T::one);
    let [d1, d2, d3, d4] = scenario.d_levels();
    let mut out = Vec::with_capacity(8);
    for rho in [0, 1] {
        for eta in [0, 1] {
            let pick = |k: i32| if k == 1 { l() } else { o() };
            out.push(Candidate {
                name: format!("s=[1,{rho},0] q=[1,{eta},0]"),
                labeling: RegionLabeling::new([l(), pick(rho), o()], [l(), pick(eta), o()]),
            });
        }
    }
    out.push(Candidate {
        name: "s=[1,1,0] q=[1,1,d2]".into(),
        labeling: RegionLabeling::new([l(), l(), o()], [l(), l(), d2.clone()]),
    });
    out.push(Candidate {
        name: "s=[1,1,d1] q=[1,1,0]".into(),
        labeling: RegionLabeling::new([l(), l(), d1.clone()], [l(), l(), o()]),
    });
    out.push(Candidate {
        name: "s=[1,1,d1] q=[1,1,d2]".into(),
        labeling: RegionLabeling::new([l(), l(), d1], [l(), l(), d2]),
    });
    out.push(Candidate {
        name: "s=[0,0,d3] q=[0,0,d4]".into(),
        labeling: RegionLabeling::new([o(), o(), d3], [o(), o(), d4]),
    });
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore<T> {
    pub index: usize,
    pub f_hat: T,
}

/// Scores every valid candidate at one β and returns the argmax (first on ties).
pub fn best_candidate<T: Scalar>(
    scenario: &OverlapScenario<T>,
    candidates: &[Candidate<T>],
    params: &MetricParams<T>,
) -> Result<CandidateScore<T>> {
    let table = scenario.cell_table();
    let mut best: Option<CandidateScore<T>> = None;
    for (index, c) in candidates.iter().enumerate() {
        if !c.labeling.is_valid() {
            continue;
        }
        let stats = LabeledStats::from_table(&table, &c.labeling)?;
        let Ok(f_hat) = f_beta_hat(&stats.rates, params) else {
            continue;
        };
        if best.as_ref().is_none_or(|b| f_hat > b.f_hat) {
            best = Some(CandidateScore { index, f_hat });
        }
    }
    best.ok_or(CoadError::NoFeasiblePair)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaCrit<T> {
    pub beta_sq_crit: T,
    pub z: T,
}

/// Closed-form β² at which labeling `B` as anomalous starts to pay off:
///
/// ```text
///   z        = P(A∩B) + P(A^c∩B∩C) − c5/(c4+c5) · c6/(c4+c6)
///   β²_crit  = P(A∖B)/α · c5/(c4+c5) · c6/(c4+c6) / z
/// ```
///
/// With `α = P(A)` the first factor is `P(A∖B)/P(A)`.
pub fn beta_crit<T: Scalar>(scenario: &OverlapScenario<T>, alpha: &T) -> Result<BetaCrit<T>> {
    scenario.validate()?;
    if scenario.p_b().is_zero() {
        return Err(CoadError::NoFlip(
            "B is empty, the labeling of B never matters".into(),
        ));
    }
    let one = T::one();
    let pa = scenario.p_a.clone();
    let pn = scenario.p_normal();
    let ratio_b = scenario.c5() / (scenario.c4() + scenario.c5());
    let ratio_c = scenario.c6() / (scenario.c4() + scenario.c6());
    let p_a_and_b = (one.clone() - scenario.c1() - scenario.c2()) * pa;
    let p_ac_b_c = (one - scenario.c4() - scenario.c5() - scenario.c6()) * pn;
    let z = p_a_and_b + p_ac_b_c - ratio_b.clone() * ratio_c.clone();
    if !(z > T::zero()) {
        return Err(CoadError::ScenarioInvalid(format!(
            "z = {z:?} is not positive"
        )));
    }
    let beta_sq_crit = scenario.p_a_minus_b() / alpha.clone() * ratio_b * ratio_c / z.clone();
    Ok(BetaCrit { beta_sq_crit, z })
}

/// Locates, by bisection on `ln β²` over `[lo, hi]`, where the best
/// candidate's label on `B` switches from below ½ to above. `None` when it
/// does not switch inside the bracket.
pub fn empirical_flip(
    scenario: &OverlapScenario<f64>,
    alpha: f64,
    lo: f64,
    hi: f64,
    rel_tol: f64,
) -> Result<Option<f64>> {
    let cands = candidate_solutions(scenario);
    let labels_b = |b2: f64| -> Result<bool> {
        let params = MetricParams::new(alpha, Beta::Finite(b2.sqrt()))?;
        let best = best_candidate(scenario, &cands, &params)?;
        Ok(*cands[best.index].labeling.labels_b() > 0.5)
    };
    if labels_b(lo)? || !labels_b(hi)? {
        return Ok(None);
    }
    let (mut a, mut b) = (lo.ln(), hi.ln());
    while b - a > rel_tol {
        let m = 0.5 * (a + b);
        if labels_b(m.exp())? {
            b = m;
        } else {
            a = m;
        }
    }
    Ok(Some((0.5 * (a + b)).exp()))
}
