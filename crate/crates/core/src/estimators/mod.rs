//! Matching estimators for covariate shift and treatment effects.
//!
//! * [`estimate_csa`]: impute each target label by a uniformly drawn label
//!   among its `k` nearest sources, then average `h` over the targets.
//! * [`estimate_weight`]: reweight the source pairs by their catchment counts.
//! * [`estimate_local_poly`]: replace the k-NN average by the intercept of a
//!   local polynomial least-squares fit.
//! * [`estimate_ate`] / [`estimate_att`] and [`estimate_ate_local_poly`]:
//!   the two-arm analogues.

mod ate;
mod bias;
mod hfunc;
mod local_poly;
mod shift;

pub use ate::{estimate_ate, estimate_ate_local_poly, estimate_att, AteEstimate};
pub use bias::{
    gamma_factor, semiparametric_variance, theoretical_bias_constant, BiasConstant, BiasTerm, Density, LocalJet,
    UniformDensity,
};
pub use hfunc::HFunction;
pub use local_poly::{estimate_local_poly, local_poly_regress, DegeneratePolicy, LocalPolyEstimate, LocalPolyOptions};
pub use shift::{estimate_csa, estimate_weight, CsaMode, Matcher};

/// Mean of `values` computed around the first entry, so a constant input
/// returns that constant exactly.
pub(crate) fn anchored_mean(values: impl Iterator<Item = f64>, anchor: f64, count: usize) -> f64 {
    anchor + values.map(|v| v - anchor).sum::<f64>() / count as f64
}
