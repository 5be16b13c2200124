//! Finite-systems harness: time scales and growth regimes, macroscopic path
//! ensembles over a size ladder, renormalised diffusion estimates, trapping
//! times, clustering diagnostics and the renewal-intersection check.

mod clustering;
mod fg;
mod fss;
mod renewal;
mod scales;
mod spec;

pub use clustering::{
    clustering_diagnostics, pair_diagnostic, shallow_depth, ClusteringReport, Pattern, ProbeReport, TimeRange,
    CLUSTERED_FRACTION, MIXING_TOLERANCE,
};
pub use fg::{
    absorb, censored_median, estimate_fg, fg_diffusion_reference, fg_reference_hitting_times, finite_hazard, relaxation_time,
    trapped_ks, trapping_time, FgOptions, FgPoint, FgTable, HazardSummary, TrappingReport, TrappingRung, BURN_IN_RELAXATIONS,
    TRAP_EPSILON,
};
pub use fss::{finite_systems_run, rung_master, FssResult, ReplicaPath, RungResult};
pub use renewal::{
    intersection_increments, intersection_law, renewal_density, renewal_intersection_exponent, sample_increment,
    LaplaceFit, LaplacePoint, RenewalReport, FIT_END_FRACTION, FIT_START_FRACTION, LAPLACE_LAMBDAS, LAPLACE_SCALE_FRACTION,
};
pub use scales::{time_scales, GrowthRegime, TimeScaleReport, SCALE_SEPARATION};
pub use spec::{
    BankFamily, BankSpec, DepthRule, ExperimentSpec, GeographyFamily, InitialLaw, Observable, Rung, TimeUnit,
    DEFAULT_BUDGET,
};
