use serde::{Deserialize, Serialize};

use crate::metric::{f_beta_hat, MetricParams, PredictionVector, RateSummary};
use crate::{CoadError, Result, Scalar};

/// Best `p_q` for a fixed `p_s` at a fixed mean `gamma`: 1 where
/// `w(q) > tau`, `rho` where `w(q) = tau`, 0 below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerSolution<T> {
    pub p_q_star: PredictionVector<T>,
    pub tau: T,
    pub rho: T,
    pub gamma: T,
    /// Realised `μ_sq`, i.e. `μ*_sq(gamma)`.
    pub mu_sq: T,
    /// `p_s ≡ 0`: every assignment gives `μ_sq = 0`.
    pub degenerate: bool,
}

impl<T: Scalar> InnerSolution<T> {
    pub fn is_categorical(&self) -> bool {
        self.rho.is_zero() || self.rho.is_one()
    }
}

fn check_pairing(n: usize, pairing: &[usize]) -> Result<()> {
    if pairing.len() != n {
        return Err(CoadError::LengthMismatch {
            what: "pairing vs p_s",
            left: pairing.len(),
            right: n,
        });
    }
    let mut seen = vec![false; n];
    for &j in pairing {
        if j >= n || std::mem::replace(&mut seen[j], true) {
            return Err(CoadError::Precondition(
                "pairing must be a permutation".into(),
            ));
        }
    }
    Ok(())
}

/// Tied groups of `w`, sorted by value descending. Within a group indices
/// stay ascending.
fn groups<T: Scalar>(w: &[T]) -> Vec<(T, Vec<usize>)> {
    let mut idx: Vec<usize> = (0..w.len()).collect();
    idx.sort_by(|&a, &b| w[b].partial_cmp(&w[a]).expect("comparable").then(a.cmp(&b)));
    let mut out: Vec<(T, Vec<usize>)> = Vec::new();
    for i in idx {
        match out.last_mut() {
            Some((v, members)) if *v == w[i] => members.push(i),
            _ => out.push((w[i].clone(), vec![i])),
        }
    }
    out
}

struct Prepared<T> {
    w: Vec<T>,
    groups: Vec<(T, Vec<usize>)>,
    mu_s: T,
}

fn prepare<T: Scalar>(p_s: &PredictionVector<T>, pairing: &[usize]) -> Result<Prepared<T>> {
    check_pairing(p_s.len(), pairing)?;
    let mu_s = p_s.mean();
    if mu_s > T::half() {
        return Err(CoadError::ConstraintViolation(format!(
            "mu_s = {mu_s:?} exceeds 0.5"
        )));
    }
    let w: Vec<T> = pairing.iter().map(|&j| p_s.values()[j].clone()).collect();
    let groups = groups(&w);
    Ok(Prepared { w, groups, mu_s })
}

fn fill<T: Scalar>(prep: &Prepared<T>, gamma: T) -> Result<InnerSolution<T>> {
    if gamma < T::zero() {
        return Err(CoadError::OutOfRange(format!(
            "gamma = {gamma:?} is negative"
        )));
    }
    if gamma > T::half() {
        return Err(CoadError::ConstraintViolation(format!(
            "gamma = {gamma:?} exceeds 0.5"
        )));
    }
    let n = prep.w.len();
    let count = T::from_count(n);
    let mut mass = gamma.clone() * count.clone();
    let mut p = vec![T::zero(); n];
    let mut tau = prep
        .groups
        .last()
        .map(|g| g.0.clone())
        .unwrap_or_else(T::zero);
    let mut rho = T::one();
    for (value, members) in &prep.groups {
        let size = T::from_count(members.len());
        if mass >= size {
            for &i in members {
                p[i] = T::one();
            }
            mass = mass - size;
        } else {
            rho = mass / size;
            for &i in members {
                p[i] = rho.clone();
            }
            tau = value.clone();
            break;
        }
    }
    let mu_sq = prep
        .w
        .iter()
        .zip(&p)
        .fold(T::zero(), |a, (w, q)| a + w.clone() * q.clone())
        / count;
    Ok(InnerSolution {
        p_q_star: PredictionVector::new(p)?,
        tau,
        rho,
        gamma,
        mu_sq,
        degenerate: prep.mu_s.is_zero(),
    })
}

/// Greedy construction: with `w(q_i) = p_s[pairing[i]]`, hand out mass
/// `gamma·n` to the largest `w` first, splitting the boundary tie group evenly.
pub fn optimal_pq_given_ps<T: Scalar>(
    p_s: &PredictionVector<T>,
    pairing: &[usize],
    gamma: T,
) -> Result<InnerSolution<T>> {
    fill(&prepare(p_s, pairing)?, gamma)
}

/// `μ*_sq(γ)` on an increasing grid in `[0, 0.5]`.
pub fn mu_sq_star_curve<T: Scalar>(
    p_s: &PredictionVector<T>,
    pairing: &[usize],
    gammas: &[T],
) -> Result<Vec<T>> {
    if gammas.windows(2).any(|g| g[0] >= g[1]) {
        return Err(CoadError::Precondition(
            "gammas must be strictly increasing".into(),
        ));
    }
    let prep = prepare(p_s, pairing)?;
    gammas
        .iter()
        .map(|g| fill(&prep, g.clone()).map(|s| s.mu_sq))
        .collect()
}

/// Best response of `q` to a fixed `p_s` over `μ_q = γ ∈ [0, 0.5]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestResponse<T> {
    pub inner: InnerSolution<T>,
    pub f_hat: T,
    /// Candidate values of γ that were compared.
    pub candidates: Vec<T>,
}

fn score<T: Scalar>(mu_s: &T, sol: &InnerSolution<T>, params: &MetricParams<T>) -> Result<T> {
    if sol.mu_sq.is_zero() {
        return Ok(T::zero());
    }
    let rates = RateSummary::from_means(mu_s.clone(), sol.gamma.clone(), sol.mu_sq.clone(), None)?;
    f_beta_hat(&rates, params)
}

/// F̂_β of `p_s` against the inner solution at `gamma`.
pub fn inner_f_hat<T: Scalar>(
    p_s: &PredictionVector<T>,
    pairing: &[usize],
    gamma: T,
    params: &MetricParams<T>,
) -> Result<T> {
    let prep = prepare(p_s, pairing)?;
    score(&prep.mu_s, &fill(&prep, gamma)?, params)
}

/// Maximises F̂_β over γ. Candidates are 0, every cumulative tie-group
/// fraction up to 0.5 (categorical solutions), and 0.5 itself. Ties prefer
/// the categorical candidate with the smallest γ.
pub fn best_response<T: Scalar>(
    p_s: &PredictionVector<T>,
    pairing: &[usize],
    params: &MetricParams<T>,
) -> Result<BestResponse<T>> {
    let prep = prepare(p_s, pairing)?;
    let n = T::from_count(prep.w.len());
    let mut candidates = vec![T::zero()];
    let mut filled = 0usize;
    for (_, members) in &prep.groups {
        filled += members.len();
        let g = T::from_count(filled) / n.clone();
        if g > T::half() {
            break;
        }
        candidates.push(g);
    }
    if !candidates.contains(&T::half()) {
        candidates.push(T::half());
    }
    let mut best: Option<(T, InnerSolution<T>)> = None;
    for g in &candidates {
        let sol = fill(&prep, g.clone())?;
        let f = score(&prep.mu_s, &sol, params)?;
        if best.as_ref().is_none_or(|(b, _)| f > *b) {
            best = Some((f, sol));
        }
    }
    let (f_hat, inner) = best.expect("γ = 0 is always a candidate");
    Ok(BestResponse {
        inner,
        f_hat,
        candidates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Exact;

    fn pv(v: &[f64]) -> PredictionVector<f64> {
        PredictionVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn zero_gamma_gives_zero_vector() {
        let p = pv(&[0.2, 0.9, 0.1, 0.0]);
        let sol = optimal_pq_given_ps(&p, &[0, 1, 2, 3], 0.0).unwrap();
        assert!(sol.p_q_star.values().iter().all(|&v| v == 0.0));
        assert_eq!(sol.mu_sq, 0.0);
        assert_eq!(sol.tau, 0.9);
    }

    #[test]
    fn zero_ps_is_degenerate() {
        let p = pv(&[0.0; 6]);
        let sol = optimal_pq_given_ps(&p, &[5, 4, 3, 2, 1, 0], 0.25).unwrap();
        assert!(sol.degenerate);
        assert_eq!(sol.mu_sq, 0.0);
        assert!((sol.p_q_star.mean() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn ties_split_evenly() {
        let p = pv(&[1.0, 0.5, 0.5, 0.5, 0.0, 0.0]);
        let sol = optimal_pq_given_ps(&p, &[0, 1, 2, 3, 4, 5], 0.5).unwrap();
        // one full unit, then 2 of 3 tied units
        assert_eq!(sol.tau, 0.5);
        assert!((sol.rho - 2.0 / 3.0).abs() < 1e-15);
        assert!((sol.p_q_star.mean() - 0.5).abs() < 1e-15);
        assert!(!sol.is_categorical());
    }

    #[test]
    fn pairing_routes_w() {
        let p = pv(&[0.0, 0.0, 0.0, 1.0]);
        let sol = optimal_pq_given_ps(&p, &[3, 0, 1, 2], 0.25).unwrap();
        assert_eq!(sol.p_q_star.values(), &[1.0, 0.0, 0.0, 0.0]);
        assert!(optimal_pq_given_ps(&p, &[0, 0, 1, 2], 0.25).is_err());
    }

    #[test]
    fn constraint_errors() {
        let p = pv(&[0.1, 0.2]);
        assert!(matches!(
            optimal_pq_given_ps(&p, &[0, 1], 0.6),
            Err(CoadError::ConstraintViolation(_))
        ));
        let p = pv(&[0.9, 0.8]);
        assert!(optimal_pq_given_ps(&p, &[0, 1], 0.2).is_err());
    }

    #[test]
    fn half_indicator_curve_is_min_shaped() {
        let p = PredictionVector::new(
            [1, 1, 1, 1, 0, 0, 0, 0]
                .iter()
                .map(|&v| Exact::from_count(v))
                .collect(),
        )
        .unwrap();
        let pairing: Vec<usize> = (0..8).collect();
        let gammas: Vec<Exact> = (0..=5).map(|k| Exact::lit(k as f64 / 10.0)).collect();
        let curve = mu_sq_star_curve(&p, &pairing, &gammas).unwrap();
        for (g, m) in gammas.iter().zip(&curve) {
            assert_eq!(m, g);
        }
        for g in &gammas {
            let again = optimal_pq_given_ps(&p, &pairing, g.clone()).unwrap().mu_sq;
            assert_eq!(&again, g);
        }
    }
}
