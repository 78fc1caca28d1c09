//! Free bridges on the simulation grid.

use std::f64::consts::TAU;

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dynamics::{Potential, PotentialSpec};
use crate::error::{Error, Result};

/// How bridges of the free dynamics are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BridgeKind {
    /// Exact Gaussian bridge of the Ornstein-Uhlenbeck process.
    OuExact,
    /// Winding number then Brownian bridge on the circle.
    CircleExact,
    /// Forward free simulation with terminal kernel reweighting.
    ForwardKernel,
}

impl BridgeKind {
    pub fn for_potential(pot: &PotentialSpec) -> Self {
        if pot.potential.quadratic_rate().is_some() {
            BridgeKind::OuExact
        } else if pot.potential == Potential::CircleFlat {
            BridgeKind::CircleExact
        } else {
            BridgeKind::ForwardKernel
        }
    }

    pub fn is_exact(self) -> bool {
        self != BridgeKind::ForwardKernel
    }
}

/// Exact free bridge from `x` (a lifted value) to `y` over `steps` steps of `dt`.
///
/// Returns `steps + 1` lifted values starting at `x`. On the circle the
/// endpoint is `y` plus a sampled multiple of `2π` relative to the lift of `x`.
pub fn exact_bridge<R: Rng + ?Sized>(
    pot: &PotentialSpec,
    x: f64,
    y: f64,
    dt: f64,
    steps: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    match BridgeKind::for_potential(pot) {
        BridgeKind::OuExact => Ok(ou_bridge(pot.potential.quadratic_rate().expect("quadratic"), x, y, dt, steps, rng)),
        BridgeKind::CircleExact => Ok(circle_bridge(x, y, dt, steps, rng)),
        BridgeKind::ForwardKernel => Err(Error::setup(format!(
            "no exact bridge sampler for {:?}",
            pot.potential
        ))),
    }
}

fn ou_var(theta: f64, h: f64) -> f64 {
    -(-2.0 * theta * h).exp_m1() / (2.0 * theta)
}

/// Sequential Gaussian conditioning for `dX = -θ X dt + dB`.
pub fn ou_bridge<R: Rng + ?Sized>(theta: f64, x: f64, y: f64, dt: f64, steps: usize, rng: &mut R) -> Vec<f64> {
    let mut out = Vec::with_capacity(steps + 1);
    out.push(x);
    let rho_h = (-theta * dt).exp();
    let v_h = ou_var(theta, dt);
    let mut cur = x;
    for k in 1..steps {
        let r = (steps - k) as f64 * dt;
        let rho_r = (-theta * r).exp();
        let v_r = ou_var(theta, r);
        let prec = 1.0 / v_h + rho_r * rho_r / v_r;
        let mean = (rho_h * cur / v_h + rho_r * y / v_r) / prec;
        let z: f64 = rng.sample(StandardNormal);
        cur = mean + z / prec.sqrt();
        out.push(cur);
    }
    if steps > 0 {
        out.push(y);
    }
    out
}

/// Brownian bridge on the circle, lifted.
pub fn circle_bridge<R: Rng + ?Sized>(x: f64, y: f64, dt: f64, steps: usize, rng: &mut R) -> Vec<f64> {
    let tau = dt * steps as f64;
    let base = x + (y - x).rem_euclid(TAU);
    let cands: Vec<f64> = (-8..=8).map(|n| base + TAU * n as f64).collect();
    let logw: Vec<f64> = cands.iter().map(|c| -(c - x).powi(2) / (2.0 * tau)).collect();
    let top = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|l| (l - top).exp()).collect();
    let target = cands[WeightedIndex::new(&w).expect("positive weights").sample(rng)];
    let mut out = Vec::with_capacity(steps + 1);
    out.push(x);
    let mut cur = x;
    for k in 1..steps {
        let r = (steps - k) as f64 * dt;
        let mean = cur + dt / (r + dt) * (target - cur);
        let var = dt * r / (r + dt);
        let z: f64 = rng.sample(StandardNormal);
        cur = mean + var.sqrt() * z;
        out.push(cur);
    }
    if steps > 0 {
        out.push(target);
    }
    out
}

/// Mean of the OU bridge at time `s` in `[0, t]`.
pub fn ou_bridge_mean(theta: f64, x: f64, y: f64, s: f64, t: f64) -> f64 {
    let (rs, rr) = ((-theta * s).exp(), (-theta * (t - s)).exp());
    let (vs, vr) = (ou_var(theta, s), ou_var(theta, t - s));
    let prec = 1.0 / vs + rr * rr / vr;
    (rs * x / vs + rr * y / vr) / prec
}
