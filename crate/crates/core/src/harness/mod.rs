//! Monte Carlo experiment driver: rate sweeps over (method, d, n), log-log
//! slope fitting, and verifiers for the distributional and bias claims.

mod report;
mod sweep;
mod verify_ate;
mod verify_bias;
mod verify_lemmas;

pub use report::{Check, VerifierReport};
pub use sweep::{
    fit_rate, run_sweep, Aggregate, CellFailure, KPolicy, MRule, MethodEntry, MethodKind, MethodSpec, RateFit,
    ResultRow, SetupRef, SweepConfig, SweepResult,
};
pub use verify_ate::{verify_ate_normality, AteNormalityConfig};
pub use verify_bias::{
    conditional_bias_1d, verify_bias_expansion, verify_bias_rate, BiasExpansionConfig, BiasRateConfig, LineFunction,
    RateRegime,
};
pub use verify_lemmas::{
    verify_catchment_tail, verify_negative_correlation, verify_tau_laws, CatchmentTailConfig, TauLawConfig,
};
