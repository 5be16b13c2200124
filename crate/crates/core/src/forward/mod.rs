//! Euler-Maruyama integration of the interacting seed-bank diffusions and
//! their macroscopic observables.

mod diffusion;
mod dynamics;
mod state;

pub use diffusion::DiffusionFunction;
pub use dynamics::{
    default_dt, increasing_process_increment, noise_increment, Displacement, Dynamics, IncreasingIncrement, Observation, Stepper,
    Trajectory,
};
pub use state::{DepthMoments, Model, SystemState};
