//! Empirical weight-decay constant `λ̂(β)`.

use serde::{Deserialize, Serialize};

use super::weights::WeightTable;
use super::Instance;
use crate::dynamics::kernel_sup_distance;
use crate::error::{Error, Result};
use crate::lattice::Configuration;
use crate::mc::McParams;

/// Fitted decay constants at one β.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaFit {
    pub beta: f64,
    pub slices: usize,
    pub step: f64,
    /// `max_Γ |K̂_Γ|^{1/|Γ|}`.
    pub lambda_hat: f64,
    /// Same with `|K̂| ± 2 stderr`.
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    /// Space factor: the maximum over polymers without time clusters.
    pub c1_hat: f64,
    /// Time factor: the maximum over polymers without space clusters.
    pub c2_hat: f64,
    /// `‖p_T - 1‖` on the kernel grid, the analytic counterpart of `c2_hat`.
    pub c2_kernel: f64,
    pub clusters: usize,
}

/// `λ̂(β)` on each β of the grid, maximised over the probe pairs. Weights at
/// different β reuse the same per-cluster random streams.
pub fn weight_bound_fit(
    betas: &[f64],
    inst: &Instance,
    probes: &[(Configuration, Configuration)],
    mc: &McParams,
    seed: u64,
) -> Result<Vec<LambdaFit>> {
    if betas.is_empty() || probes.is_empty() {
        return Err(Error::setup("weight fit needs a nonempty β grid and probe set"));
    }
    betas
        .iter()
        .map(|&beta| {
            let at = inst.with_beta(beta)?;
            let grid = at.grid()?;
            let mut fit = LambdaFit {
                beta,
                slices: grid.slices(),
                step: grid.step(),
                lambda_hat: 0.0,
                lambda_lo: 0.0,
                lambda_hi: 0.0,
                c1_hat: 0.0,
                c2_hat: 0.0,
                c2_kernel: kernel_sup_distance(&inst.pot, grid.step())?.value,
                clusters: 0,
            };
            for (x, y) in probes {
                let table = WeightTable::estimate(&at, x, y, mc, seed)?;
                fit.clusters = table.len();
                for (g, w) in table.polymers().clusters().iter().zip(table.weights()) {
                    let root = |v: f64| v.max(0.0).powf(1.0 / g.size() as f64);
                    let val = root(w.value.abs());
                    fit.lambda_hat = fit.lambda_hat.max(val);
                    fit.lambda_lo = fit.lambda_lo.max(root(w.value.abs() - 2.0 * w.stderr));
                    fit.lambda_hi = fit.lambda_hi.max(root(w.value.abs() + 2.0 * w.stderr));
                    if g.time_clusters().is_empty() {
                        fit.c1_hat = fit.c1_hat.max(val);
                    }
                    if g.space_clusters().is_empty() {
                        fit.c2_hat = fit.c2_hat.max(val);
                    }
                }
            }
            Ok(fit)
        })
        .collect()
}
