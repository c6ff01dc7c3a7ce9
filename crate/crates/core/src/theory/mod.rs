//! Executable versions of the metric's guarantees.
//!
//! - [`verify_bounds`]: F̂_β ≤ F_β, FP ≤ D and D ≤ D_naive on labelled data,
//!   exactly on probability tables or with a declared slack on samples.
//! - [`optimal_pq_given_ps`]: the greedy best `p_q` for a fixed `p_s`, which is
//!   categorical except for one tie group, and [`best_response`] over `μ_q`.
//! - [`compare_solutions`]: when one categorical solution beats another as β grows.
//! - [`beta_crit`]: closed-form critical β for the overlapping-sets scenario,
//!   cross-checked against [`candidate_solutions`].

mod bounds;
mod compare;
mod critical;
mod inner;

pub use bounds::{verify_bounds, BoundRecord, BoundsReport, LabeledStats};
pub use compare::{compare_solutions, CategoricalSolution, Verdict};
pub use critical::{
    best_candidate, beta_crit, candidate_solutions, empirical_flip, BetaCrit, Candidate,
    CandidateScore, RegionLabeling,
};
pub use inner::{
    best_response, inner_f_hat, mu_sq_star_curve, optimal_pq_given_ps, BestResponse, InnerSolution,
};
