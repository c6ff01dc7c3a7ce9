//! Coincident anomaly detection.
//!
//! Two detectors look at two different slices of the same system (`s` and
//! `q`). Anomalies are expected to show up in both slices at once, while
//! normal fluctuations are independent between them. Agreement between the
//! two detectors therefore carries label information, and this crate turns
//! it into an unsupervised analogue of the F-beta score:
//!
//! ```text
//!   F̂_β = (1 + β²) · (μ_sq − μ_s·μ_q) / (μ_sq + αβ²) · (1 − μ_sq) / ((1 − μ_s)(1 − μ_q))
//! ```
//!
//! Modules:
//!
//! - [`metric`]: empirical rates, the F̂_β family and supervised counterparts.
//! - [`categorical`]: two-threshold detectors, threshold scans and P̂-R̂ frontiers.
//! - [`synth`]: seeded generators (Gaussian outliers, overlapping sets, simplified MNIST).
//! - [`continuous`]: paired feed-forward networks trained end to end on F̂_β.
//! - [`theory`]: executable checks of the bound, near-categorical and critical-β results.
//!
//! The math is written against the [`Scalar`] trait so the same code runs on
//! `f64`, `f32` and exact rationals ([`Exact`]). Exact arithmetic is what the
//! population-level checks use when an inequality has to hold with zero slack.

pub mod categorical;
pub mod continuous;
pub mod dataset;
pub mod error;
pub mod metric;
pub mod synth;
pub mod theory;

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive, Num, ToPrimitive};

pub use error::{CoadError, Result};

/// Number type the rate and threshold math is generic over.
pub trait Scalar:
    Num + FromPrimitive + ToPrimitive + Clone + PartialOrd + Debug + Send + Sync + 'static
{
    /// Converts a literal by its shortest decimal form, so `lit(0.1)` is
    /// exactly `1/10` for rationals and the usual `0.1` for floats. Panics
    /// only for values the type cannot represent (NaN or infinities for
    /// rationals), which never reach this from library code.
    fn lit(x: f64) -> Self {
        decimal_literal(x)
            .or_else(|| Self::from_f64(x))
            .unwrap_or_else(|| panic!("{x} is not representable"))
    }

    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count fits the scalar type")
    }

    fn half() -> Self {
        Self::one() / (Self::one() + Self::one())
    }

    fn approx(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Scalar for T where
    T: Num + FromPrimitive + ToPrimitive + Clone + PartialOrd + Debug + Send + Sync + 'static
{
}

/// Floating-point scalar used by the network code.
pub trait Real: Scalar + Float {}

impl<T: Scalar + Float> Real for T {}

/// Exact rational arithmetic.
pub type Exact = num_rational::BigRational;

pub type Rates = metric::RateSummary<f64>;
pub type ExactRates = metric::RateSummary<Exact>;
pub type Params = metric::MetricParams<f64>;
pub type ExactParams = metric::MetricParams<Exact>;
pub type Predictions = metric::PredictionVector<f64>;
pub type Thresholds = categorical::ThresholdPair<f64>;
pub type Scan = categorical::ScanResult<f64>;
pub type Scenario = synth::OverlapScenario<f64>;
pub type ExactScenario = synth::OverlapScenario<Exact>;
pub type Network = continuous::Mlp<f64>;
pub type NetworkPair = continuous::MlpPair<f64>;
pub type Dataset = dataset::PairedDataset<f64>;

/// `m · 10^e` with `|m| < 10^15` and `|e| <= 22`, built from exact integer
/// parts. Both parts are exact in `f64`, so the float result is correctly rounded.
fn decimal_literal<T: Scalar>(x: f64) -> Option<T> {
    if !x.is_finite() {
        return None;
    }
    let text = format!("{x:e}");
    let (mant, exp) = text.split_once('e')?;
    let mut exp: i32 = exp.parse().ok()?;
    let negative = mant.starts_with('-');
    let mant = mant.trim_start_matches('-');
    let (int, frac) = mant.split_once('.').unwrap_or((mant, ""));
    exp -= frac.len() as i32;
    let digits: u64 = format!("{int}{frac}").parse().ok()?;
    if digits >= 1_000_000_000_000_000 || exp.abs() > 22 {
        return None;
    }
    let mut m = T::from_u64(digits)?;
    if negative {
        m = T::zero() - m;
    }
    let scale = T::from_u64(10)?;
    let pow = (0..exp.unsigned_abs()).fold(T::one(), |a, _| a * scale.clone());
    Some(if exp >= 0 { m * pow } else { m / pow })
}

pub(crate) fn min<T: Scalar>(a: &T, b: &T) -> T {
    if a <= b {
        a.clone()
    } else {
        b.clone()
    }
}
