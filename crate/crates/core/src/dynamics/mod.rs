//! Free one-dimensional dynamics, drift functionals and the SDE integrator.

mod drift;
mod kernel;
mod path;
mod potential;
mod simulate;

pub use drift::{
    builtin_drifts, BoundedFn, BuiltinDrift, ConstantDrift, DelayedFeedback, DriftFunctional, DriftSpec, Integrator,
    MarkovDrift, MemoryKernel, PathWindow, PreHistory, ResonanceDrift, SpaceTimeDrift, TimeMemory,
};
pub use kernel::{
    circle_heat_kernel, default_half_width, fit_decay_rate, free_kernel, kernel_sup_distance, kernel_sup_distance_on,
    ou_kernel, spectral_gap, SupDistance,
};
pub use path::{step_count, PathBundle};
pub use potential::{Potential, PotentialSpec, UltracontractivityReport};
pub use simulate::{simulate, simulate_with};

#[cfg(test)]
mod tests;
