//! Two-time measure: bi-space Hamiltonian, conditional densities of the
//! time-`t` layer and their quasilocality.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::interaction::Interaction;
use super::sampler::{hamiltonian, metropolis, Compiled, Layout, SamplerParams};
use crate::dynamics::{free_kernel, PotentialSpec};
use crate::error::{Error, Result};
use crate::expansion::{interaction_terms, Instance, WeightTable};
use crate::lattice::{Configuration, Site, Volume};
use crate::mc::{replicas, Estimate, McParams};

/// The dynamical interaction `Φ^t_A(x, y)`.
pub trait DynamicInteraction: Send + Sync + fmt::Debug {
    /// All nonzero `Φ^t_A(x, y)`, keyed by `A`; `x` and `y` cover the volume.
    fn terms(&self, x: &Configuration, y: &Configuration) -> Result<BTreeMap<Volume, f64>>;

    fn is_zero(&self) -> bool {
        false
    }
}

/// `Φ ≡ 0`, the `β = 0` case.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoDynamics;

impl DynamicInteraction for NoDynamics {
    fn terms(&self, _: &Configuration, _: &Configuration) -> Result<BTreeMap<Volume, f64>> {
        Ok(BTreeMap::new())
    }

    fn is_zero(&self) -> bool {
        true
    }
}

type DynFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// Closed-form terms `Φ_A(x_A, y_A)`.
#[derive(Clone, Default)]
pub struct ExplicitDynamics {
    terms: Vec<(Volume, DynFn)>,
}

impl fmt::Debug for ExplicitDynamics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.terms.iter().map(|t| &t.0)).finish()
    }
}

impl ExplicitDynamics {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_term(mut self, support: Volume, f: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.terms.push((support, Arc::new(f)));
        self
    }
}

impl DynamicInteraction for ExplicitDynamics {
    fn terms(&self, x: &Configuration, y: &Configuration) -> Result<BTreeMap<Volume, f64>> {
        let mut out = BTreeMap::new();
        for (a, f) in &self.terms {
            let v = f(&x.values_on(a)?, &y.values_on(a)?);
            *out.entry(a.clone()).or_insert(0.0) += v;
        }
        Ok(out)
    }
}

/// `Φ^t` from the truncated cluster expansion on `instance`, with the weight
/// seed held fixed so that the map `(x, y) ↦ Φ` is deterministic.
#[derive(Debug, Clone)]
pub struct ExpansionDynamics {
    pub instance: Instance,
    pub n_max: usize,
    pub mc: McParams,
    pub seed: u64,
}

impl DynamicInteraction for ExpansionDynamics {
    fn terms(&self, x: &Configuration, y: &Configuration) -> Result<BTreeMap<Volume, f64>> {
        let vol = &self.instance.volume;
        let table = WeightTable::estimate(&self.instance, &x.restrict(vol), &y.restrict(vol), &self.mc, self.seed)?;
        let phi = interaction_terms(&table, self.n_max)?;
        Ok(phi.entries.into_iter().map(|(a, e)| (a, e.value)).collect())
    }

    fn is_zero(&self) -> bool {
        self.instance.drift.beta == 0.0
    }
}

/// Initial interaction, dynamical interaction and free kernel on a finite
/// volume of the two-time lattice.
#[derive(Debug, Clone)]
pub struct BiSpaceInteraction {
    pub initial: Interaction,
    pub dynamic: Arc<dyn DynamicInteraction>,
    pub pot: PotentialSpec,
    pub t: f64,
    pub volume: Volume,
}

impl BiSpaceInteraction {
    pub fn new(initial: Interaction, dynamic: Arc<dyn DynamicInteraction>, pot: PotentialSpec, t: f64, volume: Volume) -> Result<Self> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::setup(format!("t must be positive, got {t}")));
        }
        if volume.is_empty() {
            return Err(Error::setup("bi-space volume is empty"));
        }
        Ok(BiSpaceInteraction {
            initial,
            dynamic,
            pot,
            t,
            volume,
        })
    }

    /// `log p_t(x, y)`; numerical error when the kernel is not positive.
    pub fn log_kernel(&self, x: f64, y: f64) -> Result<f64> {
        let p = free_kernel(&self.pot, self.t, x, y)?;
        if !(p > 0.0 && p.is_finite()) {
            return Err(Error::numerical(format!("p_t({x}, {y}) = {p} is not positive")));
        }
        Ok(p.ln())
    }
}

/// `β₀ h_Δ(x) - Σ_{i ∈ Δ∪Δ'} log p_t(x_i, y_i) + Σ_{A ∩ (Δ∪Δ') ≠ ∅} Φ_A(x, y)`.
pub fn bispace_hamiltonian(bsi: &BiSpaceInteraction, delta: &Volume, delta_t: &Volume, x: &Configuration, y: &Configuration) -> Result<f64> {
    let union = delta.union(delta_t);
    if union.is_empty() {
        return Ok(0.0);
    }
    let mut h = 0.0;
    if !delta.is_empty() {
        h += bsi.initial.beta0() * hamiltonian(&bsi.initial, delta, x, Some(x))?;
    }
    for s in union.iter() {
        let (xi, yi) = (site_value(x, s)?, site_value(y, s)?);
        h -= bsi.log_kernel(xi, yi)?;
    }
    if !bsi.dynamic.is_zero() {
        for (a, v) in bsi.dynamic.terms(x, y)? {
            if a.intersects(&union) {
                h += v;
            }
        }
    }
    Ok(h)
}

fn site_value(c: &Configuration, s: &Site) -> Result<f64> {
    c.get(s).ok_or_else(|| Error::coverage(format!("configuration has no value at site {s}")))
}

/// Controls for [`conditional_density`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConditionalParams {
    /// Independent chains drawing `x` from the decoupled measure.
    pub chains: usize,
    pub sampler: SamplerParams,
    /// Minimum effective sample size of the numerator, as a fraction of `chains`.
    pub ess_threshold: f64,
}

impl Default for ConditionalParams {
    fn default() -> Self {
        ConditionalParams {
            chains: 2000,
            sampler: SamplerParams::default(),
            ess_threshold: 0.05,
        }
    }
}

/// Estimate of `g^{t,y}_Λ(z_Λ)` with per-chain contributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalDensity {
    pub estimate: Estimate,
    pub ess: f64,
    /// Per chain: integrand at `z_Λ` and at the normaliser draw.
    #[serde(skip)]
    pairs: Vec<(f64, f64)>,
}

impl ConditionalDensity {
    fn from_pairs(pairs: Vec<(f64, f64)>) -> Self {
        let n = pairs.len() as f64;
        let (mw, mv) = pairs.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0 / n, a.1 + p.1 / n));
        let g = mw / mv;
        let var: f64 = pairs.iter().map(|p| ((p.0 - g * p.1) / mv).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        let ess = {
            let (s, s2) = pairs.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.0 * p.0));
            if s2 > 0.0 {
                s * s / s2
            } else {
                0.0
            }
        };
        ConditionalDensity {
            estimate: Estimate::new(g, (var / n).sqrt(), pairs.len()),
            ess,
            pairs,
        }
    }

    /// `ĝ(self) - ĝ(other)` from chains sharing random numbers, with a
    /// paired delta-method error.
    pub fn paired_difference(&self, other: &ConditionalDensity) -> Estimate {
        let n = self.pairs.len().min(other.pairs.len());
        if n == 0 {
            return Estimate::exact(0.0);
        }
        let nf = n as f64;
        let mean = |p: &[(f64, f64)]| p[..n].iter().fold((0.0, 0.0), |a, q| (a.0 + q.0 / nf, a.1 + q.1 / nf));
        let (a_w, a_v) = mean(&self.pairs);
        let (b_w, b_v) = mean(&other.pairs);
        let (ga, gb) = (a_w / a_v, b_w / b_v);
        let var: f64 = (0..n)
            .map(|k| {
                let (p, q) = (self.pairs[k], other.pairs[k]);
                ((p.0 - ga * p.1) / a_v - (q.0 - gb * q.1) / b_v).powi(2)
            })
            .sum::<f64>()
            / (nf - 1.0).max(1.0);
        let se = (var / nf).sqrt();
        if se == 0.0 && ga == gb {
            Estimate::exact(0.0)
        } else {
            Estimate::new(ga - gb, se, n)
        }
    }
}

/// Energy of the decoupled measure `Q̃^{y}` on `x ∈ R^V`:
/// `β₀ Σ_{A⊂V} φ_A - Σ_{i∈V∖Λ} log p_t(x_i, y_i) + Σ_{A∩Λ=∅} Φ_A(x, y)`.
///
/// The dynamical terms enter with a plus sign, which is what makes the
/// decoupling of the two-time law exact.
pub fn decoupled_energy(bsi: &BiSpaceInteraction, lambda: &Volume, y_boundary: &Configuration, x: &Configuration) -> Result<f64> {
    let v = &bsi.volume;
    let phi = bsi.initial.restricted(v);
    let mut e = 0.0;
    for t in phi.terms() {
        e += bsi.initial.beta0() * t.evaluate(x)?;
    }
    for s in v.difference(lambda).iter() {
        e -= bsi.log_kernel(site_value(x, s)?, site_value(y_boundary, s)?)?;
    }
    if !bsi.dynamic.is_zero() {
        let y = y_with_placeholder(bsi, lambda, y_boundary)?;
        for (a, val) in bsi.dynamic.terms(x, &y)? {
            if !a.intersects(lambda) {
                e += val;
            }
        }
    }
    Ok(e)
}

/// `y_{V∖Λ}` completed by zeros on `Λ`; terms not meeting `Λ` ignore them.
fn y_with_placeholder(bsi: &BiSpaceInteraction, lambda: &Volume, y_boundary: &Configuration) -> Result<Configuration> {
    let outer = bsi.volume.difference(lambda);
    let y = y_boundary.restrict(&outer);
    if !y.covers(&outer) {
        return Err(Error::coverage("boundary condition does not cover the volume outside Λ"));
    }
    y.concat(&Configuration::constant(bsi.pot.state_space(), lambda, 0.0))
}

struct Prepared<'a> {
    bsi: &'a BiSpaceInteraction,
    lambda: &'a Volume,
    layout: Layout,
    phi: Interaction,
    compiled: Compiled,
    /// `y_i` for each slot outside Λ.
    y_at: Vec<Option<f64>>,
    y_full: Configuration,
}

impl<'a> Prepared<'a> {
    fn new(bsi: &'a BiSpaceInteraction, lambda: &'a Volume, y_boundary: &Configuration) -> Result<Self> {
        if lambda.is_empty() || !lambda.is_subset(&bsi.volume) {
            return Err(Error::setup("Λ must be a nonempty subset of the bi-space volume"));
        }
        let layout = Layout::new(&bsi.volume, None);
        let phi = bsi.initial.restricted(&bsi.volume);
        let compiled = Compiled::new(&phi, &layout)?;
        let y_full = y_with_placeholder(bsi, lambda, y_boundary)?;
        let y_at = layout
            .sites
            .iter()
            .map(|s| if lambda.contains(s) { None } else { y_full.get(s) })
            .collect();
        Ok(Prepared {
            bsi,
            lambda,
            layout,
            phi,
            compiled,
            y_at,
            y_full,
        })
    }

    fn local(&self, values: &[f64], k: usize) -> Result<f64> {
        let bsi = self.bsi;
        let mut e = bsi.initial.beta0() * self.compiled.local(&self.phi, values, k);
        if let Some(y) = self.y_at[k] {
            e -= bsi.log_kernel(values[k], y)?;
        }
        if !bsi.dynamic.is_zero() {
            let site = &self.layout.sites[k];
            let x = self.layout.configuration(&bsi.pot, values, false);
            for (a, v) in bsi.dynamic.terms(&x, &self.y_full)? {
                if a.contains(site) && !a.intersects(self.lambda) {
                    e += v;
                }
            }
        }
        Ok(e)
    }

    /// `∏_{i∈Λ} p_t(x_i, z_i) exp(-Σ_{A∩Λ≠∅} Φ_A(x, z_Λ y))`.
    fn integrand(&self, x: &Configuration, z: &Configuration) -> Result<f64> {
        let bsi = self.bsi;
        let mut log = 0.0;
        for s in self.lambda.iter() {
            log += bsi.log_kernel(site_value(x, s)?, site_value(z, s)?)?;
        }
        if !bsi.dynamic.is_zero() {
            let y = self.y_full.restrict(&bsi.volume.difference(self.lambda)).concat(&z.restrict(self.lambda))?;
            for (a, v) in bsi.dynamic.terms(x, &y)? {
                if a.intersects(self.lambda) {
                    log -= v;
                }
            }
        }
        Ok(log.exp())
    }
}

/// `ĝ^{t,y}_Λ(z_Λ)`: the decoupled integrand averaged over `x ~ Q̃^y`,
/// divided by its average at an independent `z' ~ m^{⊗Λ}`.
pub fn conditional_density(
    bsi: &BiSpaceInteraction,
    lambda: &Volume,
    z: &Configuration,
    y_boundary: &Configuration,
    params: &ConditionalParams,
    seed: u64,
) -> Result<ConditionalDensity> {
    params.sampler.validate()?;
    if params.chains < 2 {
        return Err(Error::setup("conditional density needs at least two chains"));
    }
    let z = z.restrict(lambda);
    if !z.covers(lambda) {
        return Err(Error::coverage("z does not cover Λ"));
    }
    let prep = Prepared::new(bsi, lambda, y_boundary)?;
    let free = prep.layout.free.len();
    let pairs = replicas(params.chains, 1, seed, "qtilde", |rng| {
        let mut values = prep.layout.initial(None);
        metropolis(&bsi.pot, &mut values, free, params.sampler.sweeps, rng, |v, k| prep.local(v, k))?;
        let x = prep.layout.configuration(&bsi.pot, &values, true);
        let w = prep.integrand(&x, &z)?;
        let zp = Configuration::new(
            bsi.pot.state_space(),
            lambda.iter().map(|s| Ok((s.clone(), bsi.pot.sample_one(rng)?))).collect::<Result<Vec<_>>>()?,
        );
        Ok((w, prep.integrand(&x, &zp)?))
    })?;
    let out = ConditionalDensity::from_pairs(pairs);
    if !out.estimate.value.is_finite() {
        return Err(Error::numerical("conditional density estimate is not finite"));
    }
    if out.ess < params.ess_threshold * params.chains as f64 {
        return Err(Error::Precision(format!(
            "conditional density ESS {:.1} is below {:.1}",
            out.ess,
            params.ess_threshold * params.chains as f64
        )));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasilocalityPoint {
    pub delta: Volume,
    /// `sup` over probes of `|ĝ(z) - ĝ(z')|` with `z = z'` on `Δ`.
    pub sup: f64,
    /// Standard error of the difference attaining the sup.
    pub stderr: f64,
    /// Difference within 4 standard errors of zero.
    pub at_noise_floor: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasilocalityCurve {
    pub points: Vec<QuasilocalityPoint>,
    /// Each point at most its predecessor plus 2 combined standard errors.
    pub non_increasing: bool,
}

/// For each `Δ` and each probe `(a, b)` on the volume, compares
/// `ĝ^{t,a_{Λᶜ}}_Λ(a_Λ)` with the same density at `z' = a_Δ b_{Δᶜ}`, all
/// under one seed so that the chains are coupled.
pub fn quasilocality_probe(
    bsi: &BiSpaceInteraction,
    lambda: &Volume,
    deltas: &[Volume],
    probes: &[(Configuration, Configuration)],
    params: &ConditionalParams,
    seed: u64,
) -> Result<QuasilocalityCurve> {
    if deltas.windows(2).any(|w| !w[0].is_subset(&w[1])) {
        return Err(Error::setup("the Δ sequence must be increasing"));
    }
    if probes.is_empty() {
        return Err(Error::setup("quasilocality needs at least one probe pair"));
    }
    let g = |z: &Configuration| conditional_density(bsi, lambda, z, z, params, seed);
    let base: Vec<ConditionalDensity> = probes.iter().map(|(a, _)| g(a)).collect::<Result<_>>()?;
    let mut points = Vec::with_capacity(deltas.len());
    for delta in deltas {
        let mut best = (f64::NEG_INFINITY, 0.0);
        for ((a, b), ga) in probes.iter().zip(&base) {
            let zp = a.restrict(delta).concat(&b.restrict(&b.domain().difference(delta)))?;
            let d = if zp == *a {
                Estimate::exact(0.0)
            } else {
                ga.paired_difference(&g(&zp)?)
            };
            if d.value.abs() > best.0 {
                best = (d.value.abs(), d.stderr);
            }
        }
        points.push(QuasilocalityPoint {
            delta: delta.clone(),
            sup: best.0,
            stderr: best.1,
            at_noise_floor: best.0 <= 4.0 * best.1,
        });
    }
    let non_increasing = points
        .windows(2)
        .all(|w| w[1].sup <= w[0].sup + 2.0 * w[0].stderr.hypot(w[1].stderr));
    Ok(QuasilocalityCurve { points, non_increasing })
}
