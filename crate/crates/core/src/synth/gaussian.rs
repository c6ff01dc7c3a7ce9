use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::PairedDataset;
use crate::{CoadError, Result};

/// Half-normal outlier task: normal points are `|N(0,1)|` in each view,
/// anomalies `offset + |N(0, sigma_anom)|` in both views at once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianOutlierConfig {
    pub n: usize,
    pub anomaly_frac: f64,
    pub offset: f64,
    pub sigma_anom: f64,
}

impl GaussianOutlierConfig {
    /// 20k points, 5% anomalies drawn from `1 + |N(0, 1.5)|`.
    pub fn paper() -> Self {
        Self {
            n: 20_000,
            anomaly_frac: 0.05,
            offset: 1.0,
            sigma_anom: 1.5,
        }
    }

    pub fn anomaly_count(&self) -> usize {
        (self.n as f64 * self.anomaly_frac).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDataset {
    pub s_scores: Vec<f64>,
    pub q_scores: Vec<f64>,
    /// Ground truth, for evaluation only.
    pub labels: Vec<bool>,
    pub seed: u64,
    pub config: GaussianOutlierConfig,
}

impl ScoredDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn to_paired(&self) -> PairedDataset<f64> {
        let meta = format!(
            "gaussian_outliers n={} anomaly_frac={} offset={} sigma_anom={} seed={}",
            self.config.n,
            self.config.anomaly_frac,
            self.config.offset,
            self.config.sigma_anom,
            self.seed
        );
        PairedDataset::from_scores(
            self.s_scores.clone(),
            self.q_scores.clone(),
            Some(self.labels.clone()),
            meta,
        )
        .expect("generator output is consistent")
    }
}

/// Draws the dataset. Anomalies sit at seeded random indices; within each
/// class the two views are sampled independently.
pub fn gen_gaussian_outliers(config: &GaussianOutlierConfig, seed: u64) -> Result<ScoredDataset> {
    if config.n == 0 {
        return Err(CoadError::Empty("dataset size"));
    }
    if !(0.0..=0.5).contains(&config.anomaly_frac) {
        return Err(CoadError::OutOfRange(format!(
            "anomaly_frac = {} must lie in [0, 0.5]",
            config.anomaly_frac
        )));
    }
    if !(config.sigma_anom > 0.0 && config.sigma_anom.is_finite()) || !config.offset.is_finite() {
        return Err(CoadError::OutOfRange(
            "offset must be finite and sigma_anom positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels = vec![false; config.n];
    for i in index::sample(&mut rng, config.n, config.anomaly_count()) {
        labels[i] = true;
    }
    let unit = Normal::new(0.0f64, 1.0).expect("valid normal");
    let wide = Normal::new(0.0f64, config.sigma_anom).expect("valid normal");
    let mut s_scores = Vec::with_capacity(config.n);
    let mut q_scores = Vec::with_capacity(config.n);
    for &anomalous in &labels {
        let (s, q) = if anomalous {
            (
                config.offset + wide.sample(&mut rng).abs(),
                config.offset + wide.sample(&mut rng).abs(),
            )
        } else {
            (unit.sample(&mut rng).abs(), unit.sample(&mut rng).abs())
        };
        s_scores.push(s);
        q_scores.push(q);
    }
    Ok(ScoredDataset {
        s_scores,
        q_scores,
        labels,
        seed,
        config: config.clone(),
    })
}
