//! Experiment configs and the built-in presets.

use std::path::Path;

use coad::categorical::GridSpec;
use coad::continuous::TrainConfig;
use coad::metric::{Beta, MetricParams};
use coad::synth::{GaussianOutlierConfig, NormalBlur, OverlapScenario, SimplifiedMnistModel};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::io::read_text;

/// One JSON document per experiment. Every section is optional; command-line
/// flags override the corresponding fields.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<MetricConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mnist: Option<MnistToyConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricConfig {
    pub alpha: f64,
    pub beta: Beta<f64>,
}

impl MetricConfig {
    pub fn params(&self) -> CliResult<MetricParams<f64>> {
        MetricParams::new(self.alpha, self.beta.clone()).map_err(|e| CliError::Usage(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorConfig {
    Gaussian(GaussianOutlierConfig),
    Overlap(OverlapGenConfig),
    Mnist(MnistGenConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverlapGenConfig {
    pub p_a: f64,
    /// Within-class cell masses `(c1, c2, c3, c4, c5, c6)`.
    pub c: [f64; 6],
    pub n: usize,
}

impl OverlapGenConfig {
    pub fn scenario(&self) -> CliResult<OverlapScenario<f64>> {
        Ok(OverlapScenario::new(self.p_a, self.c)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MnistGenConfig {
    pub w: [f64; 4],
    pub b: [f64; 4],
    #[serde(default)]
    pub normal_blur: NormalBlur,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MnistToyConfig {
    pub w: [f64; 4],
    pub b: [f64; 4],
    #[serde(default)]
    pub normal_blur: NormalBlur,
    pub alpha: f64,
    pub beta_min: f64,
    pub beta_max: f64,
    pub beta_count: usize,
}

impl MnistToyConfig {
    pub fn model(&self) -> CliResult<SimplifiedMnistModel<f64>> {
        Ok(SimplifiedMnistModel::new(self.w, self.b, self.normal_blur)?)
    }
}

pub const PRESETS: [&str; 3] = ["paper-4.1", "paper-overlap-demo", "paper-mnist-toy"];

fn paper_mnist_model() -> SimplifiedMnistModel<f64> {
    SimplifiedMnistModel::paper()
}

/// Built-in configurations.
///
/// - `paper-4.1`: 20k half-normal points with 5% anomalies, α = 0.05, β = 1,
///   all-midpoints grid, and the training settings used for the two-feature task.
/// - `paper-overlap-demo`: overlapping-set scenario with P(A) = 0.2,
///   c = (0.8, 0.1, 0.1, 0.85, 0.1, 0.05), 100k sampled examples, α = P(A).
/// - `paper-mnist-toy`: the simplified digit model, α = 0.15, β swept over
///   601 log-spaced values in [1e-3, 1e3].
pub fn preset(name: &str) -> CliResult<ExperimentConfig> {
    match name {
        "paper-4.1" => Ok(ExperimentConfig {
            generator: Some(GeneratorConfig::Gaussian(GaussianOutlierConfig::paper())),
            metric: Some(MetricConfig {
                alpha: 0.05,
                beta: Beta::Finite(1.0),
            }),
            grid: Some(GridSpec::AllMidpoints),
            train: Some(paper_train_config()),
            ..Default::default()
        }),
        "paper-overlap-demo" => Ok(ExperimentConfig {
            generator: Some(GeneratorConfig::Overlap(OverlapGenConfig {
                p_a: 0.2,
                c: [0.8, 0.1, 0.1, 0.85, 0.1, 0.05],
                n: 100_000,
            })),
            metric: Some(MetricConfig {
                alpha: 0.2,
                beta: Beta::Finite(1.0),
            }),
            grid: Some(GridSpec::AllMidpoints),
            ..Default::default()
        }),
        "paper-mnist-toy" => {
            let m = paper_mnist_model();
            Ok(ExperimentConfig {
                generator: Some(GeneratorConfig::Mnist(MnistGenConfig {
                    w: m.w,
                    b: m.b,
                    normal_blur: m.normal_blur,
                    n: 20_000,
                })),
                mnist: Some(MnistToyConfig {
                    w: m.w,
                    b: m.b,
                    normal_blur: m.normal_blur,
                    alpha: 0.15,
                    beta_min: 1e-3,
                    beta_max: 1e3,
                    beta_count: 601,
                }),
                ..Default::default()
            })
        }
        other => Err(CliError::Usage(format!(
            "unknown preset '{other}' (available: {})",
            PRESETS.join(", ")
        ))),
    }
}

/// Training settings for the two-feature task of the `paper-4.1` preset.
pub fn paper_train_config() -> TrainConfig {
    TrainConfig {
        alpha: 0.05,
        beta: Beta::Finite(1.0),
        hidden: vec![8, 8],
        learning_rate: 3e-3,
        epochs: 150,
        batch_size: 256,
        early_stop_patience: 30,
        restarts: 4,
        seed: 7,
        ..TrainConfig::default()
    }
}

pub fn parse_config(text: &str, source: &str) -> CliResult<ExperimentConfig> {
    serde_json::from_str(text)
        .map_err(|e| CliError::Input(format!("{source}: invalid config: {e}")))
}

/// Preset first, then the config file merged over it section by section.
pub fn load(preset_name: Option<&str>, path: Option<&Path>) -> CliResult<ExperimentConfig> {
    let mut cfg = match preset_name {
        Some(p) => preset(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(path) = path {
        let file = parse_config(&read_text(path)?, &path.display().to_string())?;
        cfg.seed = file.seed.or(cfg.seed);
        cfg.generator = file.generator.or(cfg.generator);
        cfg.metric = file.metric.or(cfg.metric);
        cfg.grid = file.grid.or(cfg.grid);
        cfg.train = file.train.or(cfg.train);
        cfg.mnist = file.mnist.or(cfg.mnist);
    }
    Ok(cfg)
}
