//! Initial Gibbs measures, DLR and Dobrushin checks, and the two-time
//! (bi-space) measure with its conditional densities.

mod bispace;
mod dlr;
mod interaction;
mod sampler;

pub use bispace::{
    bispace_hamiltonian, conditional_density, decoupled_energy, quasilocality_probe, BiSpaceInteraction, ConditionalDensity, ConditionalParams,
    DynamicInteraction, ExpansionDynamics, ExplicitDynamics, NoDynamics, QuasilocalityCurve, QuasilocalityPoint,
};
pub use dlr::{conditional_cdf, conditional_ks, dlr_test, kolmogorov_pvalue, ks_test, DlrLine, DlrParams, DlrReport, KsReport, QuadratureCdf, TestFunction};
pub use interaction::{Interaction, PairForm, Summability, Term, TermTemplate};
pub use sampler::{hamiltonian, sample_gibbs, sample_gibbs_many, split_chain_check, ConvergenceReport, SamplerParams};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DobrushinReport {
    /// `β₀ sup_i Σ_{A∋i} (|A| - 1) ‖φ_A‖`.
    pub value: f64,
    pub passes: bool,
}

/// Deterministic, from declared norms only.
pub fn dobrushin_check(phi: &Interaction) -> DobrushinReport {
    let value = phi.beta0() * phi.summability().strong;
    DobrushinReport { value, passes: value < 1.0 }
}

#[cfg(test)]
mod tests;
