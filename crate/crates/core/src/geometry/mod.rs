//! Finite geographies, translation-invariant migration kernels, transition
//! probabilities and mixing times.

mod group;
mod kernel;
mod transition;

pub use group::{Family, Geography};
pub use kernel::{KernelOptions, KernelSpec, MigrationKernel, FOLD_TOLERANCE};
pub use transition::{
    estimate_mixing_time, simulate_walk, transition_probability, transition_row, MixingOptions,
    TransitionEstimate, TransitionMethod, EXACT_SIZE_CAP, EXACT_TOLERANCE,
};
