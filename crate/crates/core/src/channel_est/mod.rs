//! Absorption estimation: blind channel identification from one source and
//! block-sparse covariance recovery for several.

pub mod absorption;
pub mod covariance;
pub mod cross_relation;

pub use absorption::{energy_decay_curve, fit_absorption_ls, fit_log_gains, rt60_from_edc, rt60_sabine, rt60_sabine_at, AbsorptionFit};
pub use covariance::{
    absorption_from_image_factors, absorption_profile, active_group_count, block_sparse_covariance_recovery,
    build_kronecker_system, extract_absorption, joint_covariance_recovery, observation_covariance, top_groups,
    AbsorptionProfile, CovarianceBin, CovarianceOptions, CovarianceRecovery, KroneckerSystem,
};
pub use cross_relation::{
    build_cross_relation, build_cross_relation_pair, chi, estimate_rir_structured, split_filters, stack_filters,
    CrossRelationSystem, EpsilonRule,
    FilterSupport, RirSolverOptions, StructuredRirEstimate,
};
