//! Closed-form toy of the paired-digit experiment.
//!
//! Digit 0 is the normal class, digits 1..3 are anomaly classes with
//! frequency `w_i`. For an example of anomaly class `i` each view
//! independently shows digit 0 with probability `b_i`, else digit `i`.
//! All images of a digit are identical, so a labeling is just `y_d`, the
//! prediction for displayed digit `d`, shared by both views.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::metric::{f_beta_hat, Beta, MetricParams, RateSummary};
use crate::{CoadError, Result, Scalar};

/// Prediction per displayed digit, `y[0]` must be `false`.
pub type Labeling = [bool; 4];

/// How normal (digit 0) examples are observed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalBlur {
    /// Both views of a normal example show digit 0.
    #[default]
    None,
    /// Each view of a normal example independently shows digit `i` with
    /// probability `b_i` (`i = 1..3`), else digit 0.
    Symmetric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplifiedMnistModel<T> {
    pub w: [T; 4],
    /// `b[0]` is fixed at 0.
    pub b: [T; 4],
    #[serde(default)]
    pub normal_blur: NormalBlur,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelingScore<T> {
    pub labeling: Labeling,
    pub rates: Option<RateSummary<T>>,
    /// `None` when the labeling breaks the rate constraint.
    pub f_hat: Option<T>,
}

/// A run of consecutive sweep values sharing the same best labeling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regime<T> {
    pub labeling: Labeling,
    pub beta_start: T,
    pub beta_end: T,
}

impl<T: Scalar> SimplifiedMnistModel<T> {
    pub fn new(w: [T; 4], b: [T; 4], normal_blur: NormalBlur) -> Result<Self> {
        let m = Self { w, b, normal_blur };
        m.validate()?;
        Ok(m)
    }

    /// w = (0.85, 0.05, 0.05, 0.05), b = (0, 0, 0.05, 0.2).
    pub fn paper() -> Self {
        let l = T::lit;
        Self {
            w: [l(0.85), l(0.05), l(0.05), l(0.05)],
            b: [l(0.0), l(0.0), l(0.05), l(0.2)],
            normal_blur: NormalBlur::None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let zero = T::zero();
        let one = T::one();
        if self.w.iter().any(|v| v < &zero) {
            return Err(CoadError::OutOfRange(
                "class frequencies must be >= 0".into(),
            ));
        }
        let total = self.w.iter().fold(zero.clone(), |a, v| a + v.clone());
        if (total - one.clone()).approx().abs() > 1e-12 {
            return Err(CoadError::OutOfRange(
                "class frequencies must sum to 1".into(),
            ));
        }
        if !self.b[0].is_zero() {
            return Err(CoadError::OutOfRange("b_0 must be 0".into()));
        }
        if self.b.iter().any(|v| v < &zero || v > &one) {
            return Err(CoadError::OutOfRange(
                "blur probabilities must lie in [0, 1]".into(),
            ));
        }
        if self.normal_blur == NormalBlur::Symmetric {
            let sum = self.b.iter().fold(zero, |a, v| a + v.clone());
            if sum > one {
                return Err(CoadError::OutOfRange(
                    "symmetric normal blur needs b_1 + b_2 + b_3 <= 1".into(),
                ));
            }
        }
        Ok(())
    }

    /// `P(view shows digit d | class c)`, identical for both views.
    pub fn display_probs(&self, class: usize) -> [T; 4] {
        let one = T::one();
        let mut p: [T; 4] = std::array::from_fn(|_| T::zero());
        if class == 0 {
            match self.normal_blur {
                NormalBlur::None => p[0] = one,
                NormalBlur::Symmetric => {
                    let mut rest = one;
                    for d in 1..4 {
                        p[d] = self.b[d].clone();
                        rest = rest - self.b[d].clone();
                    }
                    p[0] = rest;
                }
            }
        } else {
            p[0] = self.b[class].clone();
            p[class] = one - self.b[class].clone();
        }
        p
    }

    /// Exact rates of a labeling. Views are conditionally independent given
    /// the class, so `μ_sq = Σ_c w_c E[y | c]²`.
    pub fn rates(&self, labeling: &Labeling) -> Result<RateSummary<T>> {
        let mut mu = T::zero();
        let mut mu_sq = T::zero();
        for c in 0..4 {
            let e = self
                .display_probs(c)
                .iter()
                .zip(labeling)
                .filter(|(_, &y)| y)
                .fold(T::zero(), |a, (p, _)| a + p.clone());
            mu = mu + self.w[c].clone() * e.clone();
            mu_sq = mu_sq + self.w[c].clone() * e.clone() * e;
        }
        RateSummary::from_means(mu.clone(), mu, mu_sq, None)
    }
}

/// F̂_β of one labeling. Errors when the labeling is not admissible.
pub fn simplified_mnist_fbeta<T: Scalar>(
    model: &SimplifiedMnistModel<T>,
    labeling: &Labeling,
    params: &MetricParams<T>,
) -> Result<T> {
    model.validate()?;
    if labeling[0] {
        return Err(CoadError::Precondition(
            "labeling must keep digit 0 normal".into(),
        ));
    }
    f_beta_hat(&model.rates(labeling)?, params)
}

/// All eight labelings with `y_0 = 0`, in binary order of `(y_1, y_2, y_3)`.
pub fn enumerate_labelings<T: Scalar>(
    model: &SimplifiedMnistModel<T>,
    params: &MetricParams<T>,
) -> Result<Vec<LabelingScore<T>>> {
    model.validate()?;
    Ok((0..8u8)
        .map(|k| {
            let labeling = [false, k & 4 != 0, k & 2 != 0, k & 1 != 0];
            let rates = model.rates(&labeling).ok();
            let f_hat = rates.as_ref().and_then(|r| f_beta_hat(r, params).ok());
            LabelingScore {
                labeling,
                rates,
                f_hat,
            }
        })
        .collect())
}

/// Highest-scoring feasible labeling; ties go to the earlier labeling.
pub fn best_labeling<T: Scalar>(scores: &[LabelingScore<T>]) -> Option<&LabelingScore<T>> {
    let mut best: Option<&LabelingScore<T>> = None;
    for s in scores {
        let Some(f) = &s.f_hat else { continue };
        if best.is_none_or(|b| f > b.f_hat.as_ref().unwrap()) {
            best = Some(s);
        }
    }
    best
}

/// Best labeling at each β in `betas` (ascending), collapsed into runs.
pub fn regime_sweep<T: Scalar>(
    model: &SimplifiedMnistModel<T>,
    alpha: T,
    betas: &[T],
) -> Result<Vec<Regime<T>>> {
    let mut out: Vec<Regime<T>> = Vec::new();
    for beta in betas {
        let params = MetricParams::new(alpha.clone(), Beta::Finite(beta.clone()))?;
        let scores = enumerate_labelings(model, &params)?;
        let Some(best) = best_labeling(&scores) else {
            continue;
        };
        match out.last_mut() {
            Some(r) if r.labeling == best.labeling => r.beta_end = beta.clone(),
            _ => out.push(Regime {
                labeling: best.labeling,
                beta_start: beta.clone(),
                beta_end: beta.clone(),
            }),
        }
    }
    Ok(out)
}

/// Displayed digits of sampled examples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MnistSample {
    pub class: Vec<usize>,
    pub s_digit: Vec<usize>,
    pub q_digit: Vec<usize>,
    pub seed: u64,
}

impl MnistSample {
    pub fn labels(&self) -> Vec<bool> {
        self.class.iter().map(|&c| c != 0).collect()
    }
}

fn draw(probs: &[f64; 4], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Draws `n` examples: class from `w`, then each view's digit independently.
pub fn sample_mnist<T: Scalar>(
    model: &SimplifiedMnistModel<T>,
    n: usize,
    seed: u64,
) -> Result<MnistSample> {
    model.validate()?;
    if n == 0 {
        return Err(CoadError::Empty("sample size"));
    }
    let f = |a: [T; 4]| a.map(|v| v.approx());
    let w = f(model.w.clone());
    let display: Vec<[f64; 4]> = (0..4).map(|c| f(model.display_probs(c))).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = MnistSample {
        class: Vec::with_capacity(n),
        s_digit: Vec::with_capacity(n),
        q_digit: Vec::with_capacity(n),
        seed,
    };
    for _ in 0..n {
        let c = draw(&w, &mut rng);
        out.class.push(c);
        out.s_digit.push(draw(&display[c], &mut rng));
        out.q_digit.push(draw(&display[c], &mut rng));
    }
    Ok(out)
}

/// `count` log-spaced values from `lo` to `hi`.
pub fn log_betas(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count < 2 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|k| (a + (b - a) * k as f64 / (count - 1) as f64).exp())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Exact;

    #[test]
    fn display_probs_are_distributions() {
        for blur in [NormalBlur::None, NormalBlur::Symmetric] {
            let m = SimplifiedMnistModel {
                normal_blur: blur,
                ..SimplifiedMnistModel::<Exact>::paper()
            };
            for c in 0..4 {
                let s = m
                    .display_probs(c)
                    .into_iter()
                    .fold(Exact::lit(0.0), |a, v| a + v);
                assert_eq!(s, Exact::lit(1.0));
            }
        }
    }

    #[test]
    fn digit_one_only_rates() {
        let m = SimplifiedMnistModel::<f64>::paper();
        let r = m.rates(&[false, true, false, false]).unwrap();
        assert!((r.mu_s - 0.05).abs() < 1e-15);
        assert!((r.mu_sq - 0.05).abs() < 1e-15);
        let r = m.rates(&[false, false, false, true]).unwrap();
        assert!((r.mu_s - 0.05 * 0.8).abs() < 1e-15);
        assert!((r.mu_sq - 0.05 * 0.64).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_models() {
        let mut m = SimplifiedMnistModel::<f64>::paper();
        m.w[0] = 0.9;
        assert!(m.validate().is_err());
        let mut m = SimplifiedMnistModel::<f64>::paper();
        m.b[0] = 0.1;
        assert!(m.validate().is_err());
        let p = MetricParams::new(0.15, Beta::one()).unwrap();
        assert!(simplified_mnist_fbeta(
            &SimplifiedMnistModel::paper(),
            &[true, false, false, false],
            &p
        )
        .is_err());
    }

    #[test]
    fn all_anomalous_when_most_mass_is_anomalous_is_infeasible() {
        let m =
            SimplifiedMnistModel::new([0.4, 0.2, 0.2, 0.2], [0.0, 0.0, 0.0, 0.0], NormalBlur::None)
                .unwrap();
        let p = MetricParams::new(0.5, Beta::one()).unwrap();
        let scores = enumerate_labelings(&m, &p).unwrap();
        assert_eq!(scores.len(), 8);
        assert!(scores[7].f_hat.is_none());
        assert!(scores[0].f_hat.is_some());
    }

    #[test]
    fn paper_sweep_regimes() {
        let betas = log_betas(1e-3, 1e3, 601);
        for blur in [NormalBlur::None, NormalBlur::Symmetric] {
            let m = SimplifiedMnistModel {
                normal_blur: blur,
                ..SimplifiedMnistModel::paper()
            };
            let seq: Vec<Labeling> = regime_sweep(&m, 0.15, &betas)
                .unwrap()
                .into_iter()
                .map(|r| r.labeling)
                .collect();
            assert_eq!(
                seq,
                vec![
                    [false, true, false, false],
                    [false, true, true, false],
                    [false, true, true, true]
                ]
            );
        }
    }

    #[test]
    fn sampled_digits_follow_the_model() {
        let m = SimplifiedMnistModel::<f64>::paper();
        let sample = sample_mnist(&m, 50_000, 4).unwrap();
        assert_eq!(sample, sample_mnist(&m, 50_000, 4).unwrap());
        let n = sample.class.len() as f64;
        for c in 0..4 {
            let freq = sample.class.iter().filter(|&&k| k == c).count() as f64 / n;
            assert!((freq - m.w[c]).abs() < 0.01);
        }
        // class 3 shows digit 0 with probability b_3
        let threes: Vec<usize> = (0..sample.class.len())
            .filter(|&i| sample.class[i] == 3)
            .collect();
        let blurred = threes.iter().filter(|&&i| sample.s_digit[i] == 0).count() as f64;
        assert!((blurred / threes.len() as f64 - 0.2).abs() < 0.03);
        assert!((0..sample.class.len())
            .filter(|&i| sample.class[i] == 0)
            .all(|i| sample.s_digit[i] == 0 && sample.q_digit[i] == 0));
    }
}
