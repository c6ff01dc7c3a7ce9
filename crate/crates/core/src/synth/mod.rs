//! Seeded generators for the synthetic settings.
//!
//! All randomness comes from a `ChaCha8Rng` seeded with the caller's 64-bit
//! seed, so a (config, seed) pair always reproduces the same data.

mod gaussian;
mod mnist;
mod overlap;

pub use gaussian::{gen_gaussian_outliers, GaussianOutlierConfig, ScoredDataset};
pub use mnist::{
    best_labeling, enumerate_labelings, log_betas, regime_sweep, sample_mnist,
    simplified_mnist_fbeta, Labeling, LabelingScore, MnistSample, NormalBlur, Regime,
    SimplifiedMnistModel,
};
pub use overlap::{
    gen_overlap_scenario, sample_overlap, CellTable, OverlapMode, OverlapOutput, OverlapScenario,
    Region, RegionSample,
};
