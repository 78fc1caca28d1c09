//! Cluster weights `K^t_Γ`, the polymer expansion of `f^t_Λ`, the truncated
//! interaction `Φ^t_Δ`, the Kotecký-Preiss check and the weight-decay fit.

mod fit;
mod interaction;
mod kp;
mod weights;

use crate::clusters::{ClusterContext, PolymerSet, TimeGrid, DEFAULT_CLUSTER_CAP};
use crate::dynamics::{DriftSpec, PotentialSpec};
use crate::error::Result;
use crate::lattice::Volume;

pub use fit::{weight_bound_fit, LambdaFit};
pub use interaction::{interaction_terms, summability_report, InteractionTable, SummabilityReport};
pub use kp::{kp_check, kp_lambda_star, KpResult};
pub use weights::{cluster_weight, reconstruct_density, WeightRow, WeightTable, DEFAULT_FAMILY_CAP};

/// One finite-volume expansion problem.
#[derive(Debug, Clone)]
pub struct Instance {
    pub drift: DriftSpec,
    pub pot: PotentialSpec,
    pub volume: Volume,
    pub horizon: f64,
    /// Euler / bridge grid step; must divide the slice length.
    pub dt: f64,
    /// Fixed slice count; `None` derives it from β.
    pub slices: Option<usize>,
    pub k_max: usize,
    pub cluster_cap: usize,
}

impl Instance {
    pub fn new(drift: DriftSpec, pot: PotentialSpec, volume: Volume, horizon: f64, dt: f64, k_max: usize) -> Self {
        Instance {
            drift,
            pot,
            volume,
            horizon,
            dt,
            slices: None,
            k_max,
            cluster_cap: DEFAULT_CLUSTER_CAP,
        }
    }

    pub fn with_slices(mut self, m: usize) -> Self {
        self.slices = Some(m);
        self
    }

    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        Ok(Instance {
            drift: self.drift.with_beta(beta)?,
            ..self.clone()
        })
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        let grid = match self.slices {
            Some(m) => TimeGrid::new(self.horizon, m)?,
            None => TimeGrid::for_intensity(self.horizon, self.drift.memory(), self.drift.beta)?,
        };
        grid.check_memory(self.drift.memory())?;
        crate::dynamics::step_count(grid.step(), self.dt)?;
        Ok(grid)
    }

    pub fn context(&self) -> Result<ClusterContext> {
        Ok(ClusterContext::new(
            self.volume.clone(),
            self.drift.nbhd().clone(),
            self.grid()?,
            self.drift.has_memory(),
        ))
    }

    pub fn polymers(&self) -> Result<PolymerSet> {
        PolymerSet::enumerate(&self.context()?, self.k_max, self.cluster_cap)
    }
}
