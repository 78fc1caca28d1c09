//! Ψ functionals, Girsanov weights, bridge expectations and the
//! finite-volume transition density `f^t_Λ(x, y)`.

mod bridge;

use rand::Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{simulate_with, step_count, BuiltinDrift, DriftSpec, PathBundle, PotentialSpec};
use crate::error::{Error, Result};
use crate::lattice::{interior, Configuration, Site, StateSpace, Volume};
use crate::mc::{replicas, self_normalized, Estimate, McParams};
use crate::rng::StreamRng;

pub use bridge::{circle_bridge, exact_bridge, ou_bridge, ou_bridge_mean, BridgeKind};

/// `Ψ_{k+N}` over one time window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsiTerm {
    pub center: Site,
    pub window: (f64, f64),
    pub value: f64,
}

/// Left-point sums `(Σ b ΔB̄, Σ b² dt)` at `site` over steps `from..to`.
fn site_sums(drift: &DriftSpec, path: &PathBundle, site: &Site, from: usize, to: usize) -> Result<(f64, f64)> {
    let slots = path.slots(site, drift)?;
    let ms = drift.memory_steps(path.dt())?;
    let inc = path.increments(site)?;
    let (mut s1, mut s2) = (0.0, 0.0);
    for k in from..to {
        let b = path.drift_at(drift, site, &slots, k, ms)?;
        s1 += b * inc[k];
        s2 += b * b;
    }
    Ok((s1, s2 * path.dt()))
}

fn window_steps(path: &PathBundle, window: (f64, f64)) -> Result<(usize, usize)> {
    let (a, b) = window;
    if b < a {
        return Err(Error::setup(format!("window [{a}, {b}] is reversed")));
    }
    Ok((path.step_of(a)?, path.step_of(b)?))
}

/// `Ψ_{k+N, [a,b]} = -β Σ b_k ΔB̄_k + β²/2 Σ b_k² dt` over grid points in `[a, b)`.
pub fn psi(drift: &DriftSpec, k: &Site, window: (f64, f64), path: &PathBundle) -> Result<f64> {
    if drift.beta == 0.0 {
        return Ok(0.0);
    }
    let (from, to) = window_steps(path, window)?;
    let (s1, s2) = site_sums(drift, path, k, from, to)?;
    Ok(-drift.beta * s1 + 0.5 * drift.beta * drift.beta * s2)
}

/// `Ψ_A`: nonzero only when `A = k + N` for some site `k`.
pub fn psi_for_set(drift: &DriftSpec, set: &Volume, window: (f64, f64), path: &PathBundle) -> Result<f64> {
    let nbhd = drift.nbhd();
    let Some(first) = set.iter().next() else {
        return Ok(0.0);
    };
    // The smallest element of k + N is k + (smallest offset).
    let k = first.minus(&nbhd.offsets()[0]);
    if nbhd.around(&k) == *set {
        psi(drift, &k, window, path)
    } else {
        Ok(0.0)
    }
}

/// All nonzero `Ψ_{k+N}` with `k + N ⊆ vol`.
pub fn psi_terms(drift: &DriftSpec, vol: &Volume, window: (f64, f64), path: &PathBundle) -> Result<Vec<PsiTerm>> {
    interior(vol, drift.nbhd())
        .iter()
        .map(|k| {
            Ok(PsiTerm {
                center: k.clone(),
                window,
                value: psi(drift, k, window, path)?,
            })
        })
        .collect()
}

/// `log M_{Λ,t} = Σ_{i ∈ Λ⁻} [β Σ b_i ΔB̄_i - β²/2 Σ b_i² dt]` over the whole path.
///
/// Accumulates time-major, independently of [`psi`].
pub fn girsanov_weight(drift: &DriftSpec, vol: &Volume, path: &PathBundle) -> Result<f64> {
    if drift.beta == 0.0 {
        return Ok(0.0);
    }
    let inner: Vec<Site> = interior(vol, drift.nbhd()).iter().cloned().collect();
    let slots: Vec<Vec<usize>> = inner.iter().map(|s| path.slots(s, drift)).collect::<Result<_>>()?;
    let incs: Vec<&[f64]> = inner.iter().map(|s| path.increments(s)).collect::<Result<_>>()?;
    let ms = drift.memory_steps(path.dt())?;
    let (beta, dt) = (drift.beta, path.dt());
    let mut log_m = 0.0;
    for k in 0..path.steps() {
        for ((site, sl), inc) in inner.iter().zip(&slots).zip(&incs) {
            let b = path.drift_at(drift, site, sl, k, ms)?;
            log_m += beta * b * inc[k] - 0.5 * beta * beta * b * b * dt;
        }
    }
    Ok(log_m)
}

/// Exact free bridges of every site of `vol` from `x` at time `start` to `y`.
pub fn sample_bridge_bundle<R: Rng + ?Sized>(
    pot: &PotentialSpec,
    vol: &Volume,
    x: &Configuration,
    y: &Configuration,
    duration: f64,
    dt: f64,
    rng: &mut R,
) -> Result<PathBundle> {
    let steps = step_count(duration, dt)?;
    let mut values = Vec::with_capacity(vol.len());
    for s in vol.iter() {
        let (xs, ys) = endpoints(x, y, s)?;
        values.push(exact_bridge(pot, xs, ys, dt, steps, rng)?);
    }
    PathBundle::from_values(pot, vol.clone(), dt, values)
}

fn endpoints(x: &Configuration, y: &Configuration, s: &Site) -> Result<(f64, f64)> {
    match (x.get(s), y.get(s)) {
        (Some(a), Some(b)) => Ok((a, b)),
        _ => Err(Error::coverage(format!("boundary configurations do not cover site {s}"))),
    }
}

/// Bridge expectation together with its sampling diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeEstimate {
    pub estimate: Estimate,
    pub ess: f64,
    pub kind: BridgeKind,
    /// Per-site terminal bandwidths (forward-kernel method only).
    pub bandwidths: Vec<f64>,
}

fn check_inputs(vol: &Volume, x: &Configuration, y: &Configuration, pot: &PotentialSpec) -> Result<()> {
    if vol.is_empty() {
        return Err(Error::setup("volume is empty"));
    }
    if !x.covers(vol) || !y.covers(vol) {
        return Err(Error::coverage("boundary configurations do not cover the volume"));
    }
    if x.space() != pot.state_space() || y.space() != pot.state_space() {
        return Err(Error::setup("configurations and potential use different state spaces"));
    }
    Ok(())
}

fn wrapped(space: StateSpace, d: f64) -> f64 {
    match space {
        StateSpace::Line => d,
        StateSpace::Circle => (d + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI,
    }
}

fn std_dev(xs: &[f64]) -> f64 {
    Estimate::from_samples(xs).stderr * (xs.len() as f64).sqrt()
}

/// Terminal-kernel bandwidths `h_i = c σ_i n^{-1/5}` from forward endpoints.
fn bandwidths(ends: &[Vec<f64>], y: &[f64], space: StateSpace, mc: &McParams) -> Result<Vec<f64>> {
    let n = ends.len() as f64;
    (0..y.len())
        .map(|i| {
            let col: Vec<f64> = ends.iter().map(|e| wrapped(space, e[i] - y[i])).collect();
            let h = mc.bandwidth_scale * std_dev(&col) * n.powf(-0.2);
            if h > 0.0 && h.is_finite() {
                Ok(h)
            } else {
                Err(Error::numerical("degenerate spread of forward endpoints"))
            }
        })
        .collect()
}

fn log_kernel(ends: &[f64], y: &[f64], h: &[f64], space: StateSpace) -> f64 {
    ends.iter()
        .zip(y)
        .zip(h)
        .map(|((e, y), h)| {
            let z = wrapped(space, e - y) / h;
            -0.5 * z * z - h.ln()
        })
        .sum()
}

/// Raw bridge draws: per-replica values and, for the forward-kernel
/// method, per-replica log terminal weights.
struct Draws {
    values: Vec<f64>,
    log_weights: Option<Vec<f64>>,
    kind: BridgeKind,
    bandwidths: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
fn bridge_draws<F>(
    f: F,
    pot: &PotentialSpec,
    vol: &Volume,
    x: &Configuration,
    y: &Configuration,
    t: f64,
    dt: f64,
    mc: &McParams,
    seed: u64,
    force_forward: bool,
) -> Result<Draws>
where
    F: Fn(&PathBundle) -> Result<f64> + Sync,
{
    mc.validate()?;
    check_inputs(vol, x, y, pot)?;
    let kind = if force_forward {
        BridgeKind::ForwardKernel
    } else {
        BridgeKind::for_potential(pot)
    };
    if kind.is_exact() {
        let values = replicas(mc.samples, mc.block_size, seed, "bridge", |rng| {
            f(&sample_bridge_bundle(pot, vol, x, y, t, dt, rng)?)
        })?;
        return Ok(Draws {
            values,
            log_weights: None,
            kind,
            bandwidths: vec![],
        });
    }
    let free = free_drift(vol)?;
    let ys = y.values_on(vol)?;
    let draws = replicas(mc.samples, mc.block_size, seed, "forward-bridge", |rng| {
        let p = simulate_with(&free, pot, vol, x, t, dt, rng)?;
        let ends: Vec<f64> = vol.iter().map(|s| p.lifted(s).map(|v| v[v.len() - 1])).collect::<Result<_>>()?;
        Ok((f(&p)?, ends))
    })?;
    let ends: Vec<Vec<f64>> = draws.iter().map(|d| d.1.clone()).collect();
    let h = bandwidths(&ends, &ys, pot.state_space(), mc)?;
    let log_weights = ends.iter().map(|e| log_kernel(e, &ys, &h, pot.state_space())).collect();
    Ok(Draws {
        values: draws.into_iter().map(|d| d.0).collect(),
        log_weights: Some(log_weights),
        kind,
        bandwidths: h,
    })
}

impl Draws {
    /// Estimate of the mean of `scale(values)`, with the effective sample size.
    fn estimate(&self, mc: &McParams, scale: impl Fn(f64) -> f64) -> Result<(Estimate, f64)> {
        let vals: Vec<f64> = self.values.iter().map(|&v| scale(v)).collect();
        let Some(lw) = &self.log_weights else {
            return Ok((Estimate::from_samples(&vals), vals.len() as f64));
        };
        let pairs: Vec<(f64, f64)> = lw.iter().copied().zip(vals).collect();
        let w = self_normalized(&pairs);
        let floor = mc.ess_threshold * mc.samples as f64;
        if !(w.ess >= floor.max(2.0)) {
            return Err(Error::Precision(format!(
                "effective sample size {:.1} is below the threshold {:.1} (n = {}, bandwidths {:?})",
                w.ess, floor, mc.samples, self.bandwidths
            )));
        }
        Ok((w.estimate, w.ess))
    }
}

/// `E_{P^{xy}}[F]` for the free bridge from `x` at time 0 to `y` at time `t`.
///
/// Uses the exact sampler when one exists (unless `force_forward`), and
/// otherwise forward free simulation reweighted by a Gaussian kernel at `y`.
#[allow(clippy::too_many_arguments)]
pub fn bridge_expectation<F>(
    f: F,
    pot: &PotentialSpec,
    vol: &Volume,
    x: &Configuration,
    y: &Configuration,
    t: f64,
    dt: f64,
    mc: &McParams,
    seed: u64,
    force_forward: bool,
) -> Result<BridgeEstimate>
where
    F: Fn(&PathBundle) -> Result<f64> + Sync,
{
    let draws = bridge_draws(f, pot, vol, x, y, t, dt, mc, seed, force_forward)?;
    let (estimate, ess) = draws.estimate(mc, |v| v)?;
    Ok(BridgeEstimate {
        estimate,
        ess,
        kind: draws.kind,
        bandwidths: draws.bandwidths,
    })
}

fn free_drift(vol: &Volume) -> Result<DriftSpec> {
    let dim = vol.dim().unwrap_or(1);
    DriftSpec::from_builtin(0.0, &BuiltinDrift::Constant { c: 0.0, range: 0 }, dim)
}

/// Estimator used for a density value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DensityMethod {
    BridgeMc,
    EndpointRatio,
}

impl std::fmt::Display for DensityMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DensityMethod::BridgeMc => "bridge-MC",
            DensityMethod::EndpointRatio => "endpoint-ratio",
        })
    }
}

/// Estimate of `f^t_Λ(x, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub value: f64,
    pub stderr: f64,
    pub n: usize,
    pub method: DensityMethod,
    /// Logarithm of `value`, accumulated with a max shift.
    pub log_value: f64,
    pub ess: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bridge: Option<BridgeKind>,
}

impl DensityEstimate {
    pub fn estimate(&self) -> Estimate {
        Estimate::new(self.value, self.stderr, self.n)
    }
}

/// `f̂^t_Λ(x, y) = E_{P^{xy}}[M_{Λ,t}]` by bridge Monte Carlo.
#[allow(clippy::too_many_arguments)]
pub fn density(
    drift: &DriftSpec,
    pot: &PotentialSpec,
    vol: &Volume,
    x: &Configuration,
    y: &Configuration,
    t: f64,
    dt: f64,
    mc: &McParams,
    seed: u64,
) -> Result<DensityEstimate> {
    density_with(drift, pot, vol, x, y, t, dt, mc, seed, false)
}

/// As [`density`], optionally forcing the forward-kernel bridge.
#[allow(clippy::too_many_arguments)]
pub fn density_with(
    drift: &DriftSpec,
    pot: &PotentialSpec,
    vol: &Volume,
    x: &Configuration,
    y: &Configuration,
    t: f64,
    dt: f64,
    mc: &McParams,
    seed: u64,
    force_forward: bool,
) -> Result<DensityEstimate> {
    drift.memory_steps(dt)?;
    if drift.beta == 0.0 {
        check_inputs(vol, x, y, pot)?;
        step_count(t, dt)?;
        return Ok(DensityEstimate {
            value: 1.0,
            stderr: 0.0,
            n: mc.samples,
            method: DensityMethod::BridgeMc,
            log_value: 0.0,
            ess: mc.samples as f64,
            bridge: None,
        });
    }
    let draws = bridge_draws(|p| girsanov_weight(drift, vol, p), pot, vol, x, y, t, dt, mc, seed, force_forward)?;
    let shift = draws.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !shift.is_finite() {
        return Err(Error::numerical("non-finite Girsanov weight"));
    }
    let (est, ess) = draws.estimate(mc, |l| (l - shift).exp())?;
    let scale = shift.exp();
    let value = est.value * scale;
    if !(est.value > 0.0 && value.is_finite()) {
        return Err(Error::numerical(format!("density estimate {value} is not positive and finite")));
    }
    Ok(DensityEstimate {
        value,
        stderr: est.stderr * scale,
        n: est.n,
        method: DensityMethod::BridgeMc,
        log_value: est.value.ln() + shift,
        ess,
        bridge: Some(draws.kind),
    })
}

/// Independent estimate: kernel density of interacting endpoints over free
/// endpoints at `y`, with common noise and a common bandwidth.
#[allow(clippy::too_many_arguments)]
pub fn endpoint_ratio_density(
    drift: &DriftSpec,
    pot: &PotentialSpec,
    vol: &Volume,
    x: &Configuration,
    y: &Configuration,
    t: f64,
    dt: f64,
    mc: &McParams,
    seed: u64,
) -> Result<DensityEstimate> {
    mc.validate()?;
    check_inputs(vol, x, y, pot)?;
    let free = free_drift(vol)?;
    let ys = y.values_on(vol)?;
    let terminal = |p: &PathBundle| -> Result<Vec<f64>> {
        vol.iter().map(|s| p.lifted(s).map(|v| v[v.len() - 1])).collect()
    };
    let draws = replicas(mc.samples, mc.block_size, seed, "endpoint-ratio", |rng| {
        let noise = StreamRng::from_rng(rng);
        let q = simulate_with(drift, pot, vol, x, t, dt, &mut noise.clone())?;
        let p = simulate_with(&free, pot, vol, x, t, dt, &mut noise.clone())?;
        Ok((terminal(&q)?, terminal(&p)?))
    })?;
    let free_ends: Vec<Vec<f64>> = draws.iter().map(|d| d.1.clone()).collect();
    let h = bandwidths(&free_ends, &ys, pot.state_space(), mc)?;
    let space = pot.state_space();
    let a: Vec<f64> = draws.iter().map(|d| log_kernel(&d.0, &ys, &h, space).exp()).collect();
    let b: Vec<f64> = draws.iter().map(|d| log_kernel(&d.1, &ys, &h, space).exp()).collect();
    let (sa, sb): (f64, f64) = (a.iter().sum(), b.iter().sum());
    if !(sb > 0.0) {
        return Err(Error::Precision("no free endpoints near the target".into()));
    }
    let ratio = sa / sb;
    let resid: f64 = a.iter().zip(&b).map(|(a, b)| (a - ratio * b).powi(2)).sum();
    let ess = sb * sb / b.iter().map(|v| v * v).sum::<f64>();
    let floor = mc.ess_threshold * mc.samples as f64;
    if !(ess >= floor.max(2.0)) {
        return Err(Error::Precision(format!(
            "effective sample size {ess:.1} of the free endpoint kernel is below {floor:.1}"
        )));
    }
    Ok(DensityEstimate {
        value: ratio,
        stderr: resid.sqrt() / sb,
        n: mc.samples,
        method: DensityMethod::EndpointRatio,
        log_value: ratio.ln(),
        ess,
        bridge: None,
    })
}
