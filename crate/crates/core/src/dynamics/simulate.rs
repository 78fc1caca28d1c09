//! Euler-Maruyama integration of the finite-volume system.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;

use super::drift::{DriftSpec, PathWindow};
use super::path::{step_count, PathBundle};
use super::potential::PotentialSpec;
use crate::error::{Error, Result};
use crate::lattice::{interior, Configuration, Site, Volume};
use crate::rng::stream;

/// Simulates from `x0` on `[0, t]` with noise drawn from `stream(seed, "simulate", 0)`.
pub fn simulate(
    drift: &DriftSpec,
    pot: &PotentialSpec,
    vol: &Volume,
    x0: &Configuration,
    t: f64,
    dt: f64,
    seed: u64,
) -> Result<PathBundle> {
    simulate_with(drift, pot, vol, x0, t, dt, &mut stream(seed, "simulate", 0))
}

/// Interacting drift on the interior of `vol`, free drift on the boundary layer.
/// Noise is drawn step by step, sites in lattice order.
pub fn simulate_with<R: Rng + ?Sized>(
    drift: &DriftSpec,
    pot: &PotentialSpec,
    vol: &Volume,
    x0: &Configuration,
    t: f64,
    dt: f64,
    rng: &mut R,
) -> Result<PathBundle> {
    if vol.is_empty() {
        return Err(Error::setup("simulation volume is empty"));
    }
    if !x0.covers(vol) {
        return Err(Error::coverage("initial configuration does not cover the volume"));
    }
    if x0.space() != pot.state_space() {
        return Err(Error::setup("initial configuration lives on a different state space"));
    }
    let steps = step_count(t, dt)?;
    let memory_steps = drift.memory_steps(dt)?;
    let n = vol.len();
    let mut values: Vec<Vec<f64>> = vol
        .iter()
        .map(|s| {
            let mut v = Vec::with_capacity(steps + 1);
            v.push(x0.get(s).expect("covered"));
            v
        })
        .collect();
    let position: BTreeMap<&Site, usize> = vol.iter().enumerate().map(|(i, s)| (s, i)).collect();
    let inner = interior(vol, drift.nbhd());
    let interacting: Vec<Option<Vec<usize>>> = vol
        .iter()
        .map(|s| {
            (drift.beta > 0.0 && inner.contains(s)).then(|| {
                drift.nbhd().offsets().iter().map(|o| position[&s.shifted(o)]).collect()
            })
        })
        .collect();
    let sites: Vec<_> = vol.iter().cloned().collect();
    let sq = dt.sqrt();
    let mut next = vec![0.0; n];
    for k in 0..steps {
        let time = k as f64 * dt;
        for (i, slot) in interacting.iter().enumerate() {
            let x = values[i][k];
            let mut a = -0.5 * pot.du(x);
            if let Some(slots) = slot {
                let w = PathWindow::new(&values, slots, drift.nbhd(), k, dt, memory_steps, drift.prehistory);
                a += drift.beta * drift.eval_checked(time, &w, &sites[i])?;
            }
            let z: f64 = rng.sample(StandardNormal);
            next[i] = x + a * dt + sq * z;
            if !next[i].is_finite() || next[i].abs() > 1e12 {
                return Err(Error::numerical(format!(
                    "path at site {} left the finite range at t = {}",
                    sites[i],
                    time + dt
                )));
            }
        }
        for (v, x) in values.iter_mut().zip(&next) {
            v.push(*x);
        }
    }
    PathBundle::from_values(pot, vol.clone(), dt, values)
}
