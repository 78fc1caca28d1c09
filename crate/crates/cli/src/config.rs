//! Experiment configuration: one TOML file, validated before any run.

use std::path::PathBuf;

use gibbsdyn::dynamics::{BuiltinDrift, DriftSpec, Potential, PotentialSpec, PreHistory};
use gibbsdyn::expansion::Instance;
use gibbsdyn::gibbs::{Interaction, SamplerParams, TermTemplate};
use gibbsdyn::lattice::{Configuration, Volume};
use gibbsdyn::McParams;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; every random stream derives from it.
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub lattice: LatticeConfig,
    pub potential: Potential,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<BuiltinDrift>,
    #[serde(default)]
    pub prehistory: PreHistory,
    pub t: f64,
    pub dt: f64,
    /// Dynamical intensity for single-β subcommands.
    #[serde(default)]
    pub beta: f64,
    /// β grid for `expand`; defaults to `[beta]`.
    #[serde(default)]
    pub betas: Vec<f64>,
    #[serde(default)]
    pub beta0: f64,
    #[serde(default)]
    pub interaction: Vec<TermTemplate>,
    #[serde(default)]
    pub mc: McParams,
    #[serde(default)]
    pub truncation: Truncation,
    #[serde(default)]
    pub sampler: SamplerParams,
    #[serde(default)]
    pub probes: Vec<Probe>,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub kp: KpConfig,
    #[serde(default)]
    pub dlr: DlrConfig,
    #[serde(default)]
    pub bispace: BispaceConfig,
    #[serde(default)]
    pub quasilocality: QuasilocalityConfig,
    #[serde(default)]
    pub report: ReportConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    /// Inclusive `[lo, hi]` per axis.
    pub bounds: Vec<[i64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Truncation {
    pub k_max: usize,
    pub n_max: usize,
    /// Slice count; derived from β when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slices: Option<usize>,
}

impl Default for Truncation {
    fn default() -> Self {
        Truncation {
            k_max: 4,
            n_max: 4,
            slices: None,
        }
    }
}

/// Start and end configurations in lattice site order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Probe {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub paths: usize,
    /// Initial configuration; drawn from `m` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig { paths: 1, x0: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KpConfig {
    pub lambda: f64,
    pub iterations: usize,
}

impl Default for KpConfig {
    fn default() -> Self {
        KpConfig { lambda: 0.0, iterations: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DlrConfig {
    pub n_outer: usize,
    pub n_inner: usize,
    /// Subvolume bounds; the middle site when empty.
    pub sub: Vec<[i64; 2]>,
    /// Draws for the single-site Kolmogorov-Smirnov check.
    pub ks_samples: usize,
}

impl Default for DlrConfig {
    fn default() -> Self {
        DlrConfig {
            n_outer: 400,
            n_inner: 32,
            sub: Vec::new(),
            ks_samples: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DynamicsKind {
    #[default]
    None,
    Expansion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BispaceConfig {
    /// Bounds of Λ; the middle site when empty.
    pub lambda: Vec<[i64; 2]>,
    pub dynamics: DynamicsKind,
    pub chains: usize,
    pub ess_threshold: f64,
    /// Values of `z` (on every site of Λ) at which the density is reported.
    pub z_grid: Vec<f64>,
    /// Time-`t` boundary condition on the lattice; zeros when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y: Option<Vec<f64>>,
}

impl Default for BispaceConfig {
    fn default() -> Self {
        BispaceConfig {
            lambda: Vec::new(),
            dynamics: DynamicsKind::None,
            chains: 2000,
            ess_threshold: 0.05,
            z_grid: vec![-1.0, -0.5, 0.0, 0.5, 1.0],
            y: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbePair {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuasilocalityConfig {
    /// Δ = Λ enlarged by each radius.
    pub radii: Vec<i64>,
    /// Probe pairs; drawn from `m` when empty.
    pub pairs: Vec<ProbePair>,
    pub random_pairs: usize,
}

impl Default for QuasilocalityConfig {
    fn default() -> Self {
        QuasilocalityConfig {
            radii: vec![0, 1, 2],
            pairs: Vec::new(),
            random_pairs: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub t_min: f64,
    pub t_max: f64,
    pub points: usize,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            t_min: 1.0,
            t_max: 5.0,
            points: 41,
        }
    }
}

fn invalid(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("{field}: {msg}"))
}

fn volume_of(bounds: &[[i64; 2]]) -> Volume {
    Volume::boxed(&bounds.iter().map(|b| (b[0], b[1])).collect::<Vec<_>>())
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))
    }

    /// The config as written next to the outputs; `out` is not part of it.
    pub fn resolved(&self) -> Self {
        ExperimentConfig { out: None, ..self.clone() }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.resolved()).expect("config serialises")
    }

    /// SHA-256 of the resolved TOML.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    /// Checks every field against the module preconditions.
    pub fn validate(&self) -> Result<(), CliError> {
        let b = &self.lattice.bounds;
        if b.is_empty() || b.len() > 3 {
            return Err(invalid("lattice.bounds", "give one [lo, hi] pair per axis (1 to 3 axes)"));
        }
        for (k, r) in b.iter().enumerate() {
            if r[0] > r[1] {
                return Err(invalid(&format!("lattice.bounds[{k}]"), "lo exceeds hi"));
            }
        }
        self.pot()?;
        if !(self.t > 0.0 && self.t.is_finite()) {
            return Err(invalid("t", "must be positive and finite"));
        }
        if !(self.dt > 0.0 && self.dt <= self.t) {
            return Err(invalid("dt", "must lie in (0, t]"));
        }
        gibbsdyn::dynamics::step_count(self.t, self.dt).map_err(|e| invalid("dt", e))?;
        for (name, v) in [("beta", self.beta), ("beta0", self.beta0)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(name, "must be finite and nonnegative"));
            }
        }
        for (k, &v) in self.betas.iter().enumerate() {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(&format!("betas[{k}]"), "must be finite and nonnegative"));
            }
        }
        if self.drift.is_some() {
            self.drift_at(self.beta)?;
        }
        for (k, t) in self.interaction.iter().enumerate() {
            t.sup_norm().map_err(|e| invalid(&format!("interaction[{k}]"), e))?;
        }
        self.interaction_on(&self.volume())?;
        self.mc.validate().map_err(|e| invalid("mc", e))?;
        self.sampler.validate().map_err(|e| invalid("sampler", e))?;
        let tr = &self.truncation;
        if tr.k_max == 0 {
            return Err(invalid("truncation.k_max", "must be positive"));
        }
        if !(1..=16).contains(&tr.n_max) {
            return Err(invalid("truncation.n_max", "must lie in 1..=16"));
        }
        if tr.slices == Some(0) {
            return Err(invalid("truncation.slices", "must be positive"));
        }
        let n = self.volume().len();
        for (k, p) in self.probes.iter().enumerate() {
            for (name, v) in [("x", &p.x), ("y", &p.y)] {
                if v.len() != n {
                    return Err(invalid(&format!("probes[{k}].{name}"), format!("has {} values, the lattice has {n} sites", v.len())));
                }
            }
        }
        if let Some(x0) = &self.simulate.x0 {
            if x0.len() != n {
                return Err(invalid("simulate.x0", format!("has {} values, the lattice has {n} sites", x0.len())));
            }
        }
        if self.simulate.paths == 0 {
            return Err(invalid("simulate.paths", "must be positive"));
        }
        if !(self.kp.lambda >= 0.0 && self.kp.lambda.is_finite()) {
            return Err(invalid("kp.lambda", "must be finite and nonnegative"));
        }
        if self.kp.iterations == 0 {
            return Err(invalid("kp.iterations", "must be positive"));
        }
        if self.dlr.n_outer < 2 || self.dlr.n_inner == 0 {
            return Err(invalid("dlr", "n_outer must be at least 2 and n_inner positive"));
        }
        if !self.dlr_sub().is_subset(&self.volume()) {
            return Err(invalid("dlr.sub", "must lie inside the lattice"));
        }
        if !self.lambda().is_subset(&self.volume()) {
            return Err(invalid("bispace.lambda", "must lie inside the lattice"));
        }
        if self.bispace.chains < 2 {
            return Err(invalid("bispace.chains", "must be at least 2"));
        }
        if let Some(y) = &self.bispace.y {
            if y.len() != n {
                return Err(invalid("bispace.y", format!("has {} values, the lattice has {n} sites", y.len())));
            }
        }
        if self.bispace.dynamics == DynamicsKind::Expansion && self.drift.is_none() {
            return Err(invalid("bispace.dynamics", "expansion dynamics needs a [drift] table"));
        }
        if self.quasilocality.radii.iter().any(|&r| r < 0) || self.quasilocality.radii.windows(2).any(|w| w[0] > w[1]) {
            return Err(invalid("quasilocality.radii", "must be nonnegative and nondecreasing"));
        }
        for (k, p) in self.quasilocality.pairs.iter().enumerate() {
            if p.a.len() != n || p.b.len() != n {
                return Err(invalid(&format!("quasilocality.pairs[{k}]"), format!("a and b need {n} values each")));
            }
        }
        let r = &self.report;
        if !(r.t_min > 0.0 && r.t_max > r.t_min && r.points >= 2) {
            return Err(invalid("report", "needs 0 < t_min < t_max and at least two points"));
        }
        Ok(())
    }

    pub fn volume(&self) -> Volume {
        volume_of(&self.lattice.bounds)
    }

    pub fn pot(&self) -> Result<PotentialSpec, CliError> {
        PotentialSpec::new(self.potential.clone()).map_err(|e| invalid("potential", e))
    }

    pub fn drift_at(&self, beta: f64) -> Result<DriftSpec, CliError> {
        let builtin = self.drift.as_ref().ok_or_else(|| invalid("drift", "this subcommand needs a [drift] table"))?;
        DriftSpec::from_builtin(beta, builtin, self.lattice.bounds.len())
            .map(|d| d.with_prehistory(self.prehistory))
            .map_err(|e| invalid("drift", e))
    }

    pub fn betas(&self) -> Vec<f64> {
        if self.betas.is_empty() {
            vec![self.beta]
        } else {
            self.betas.clone()
        }
    }

    pub fn instance(&self, beta: f64) -> Result<Instance, CliError> {
        let inst = Instance::new(self.drift_at(beta)?, self.pot()?, self.volume(), self.t, self.dt, self.truncation.k_max);
        Ok(match self.truncation.slices {
            Some(m) => inst.with_slices(m),
            None => inst,
        })
    }

    /// Template terms whose support lies in `region`.
    pub fn interaction_on(&self, region: &Volume) -> Result<Interaction, CliError> {
        Interaction::from_templates(self.beta0, &self.interaction, region).map_err(|e| invalid("interaction", e))
    }

    /// Largest distance spanned by a template term.
    pub fn interaction_reach(&self) -> i64 {
        self.interaction
            .iter()
            .map(|t| match t {
                TermTemplate::Site { .. } => 0,
                TermTemplate::Pair { distance, .. } => *distance,
                TermTemplate::Plaquette { .. } => 1,
            })
            .max()
            .unwrap_or(0)
    }

    pub fn configuration(&self, values: &[f64]) -> Configuration {
        let pot = PotentialSpec::new(self.potential.clone()).expect("validated");
        let space = pot.state_space();
        Configuration::new(space, self.volume().iter().cloned().zip(values.iter().map(|&v| space.canonical(v))))
    }

    fn middle(&self) -> Vec<[i64; 2]> {
        self.lattice
            .bounds
            .iter()
            .map(|b| {
                let m = b[0] + (b[1] - b[0]) / 2;
                [m, m]
            })
            .collect()
    }

    pub fn dlr_sub(&self) -> Volume {
        if self.dlr.sub.is_empty() {
            volume_of(&self.middle())
        } else {
            volume_of(&self.dlr.sub)
        }
    }

    pub fn lambda(&self) -> Volume {
        if self.bispace.lambda.is_empty() {
            volume_of(&self.middle())
        } else {
            volume_of(&self.bispace.lambda)
        }
    }

    /// `vol` enlarged by `r` in every axis direction.
    pub fn enlarged(&self, vol: &Volume, r: i64) -> Volume {
        let mut out = Volume::empty();
        for s in vol.iter() {
            let c = s.coords();
            let bounds: Vec<(i64, i64)> = c.iter().map(|&x| (x - r, x + r)).collect();
            out = out.union(&Volume::boxed(&bounds));
        }
        out
    }
}
