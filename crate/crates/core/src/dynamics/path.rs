//! Discretised trajectories with compensated increments.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::drift::{DriftSpec, PathWindow};
use super::potential::PotentialSpec;
use crate::error::{Error, Result};
use crate::lattice::{Configuration, Site, StateSpace, Volume};

/// Values `X_i(s_k)` on `s_k = k dt`, `k = 0..=K`, and compensated increments
/// `ΔB̄_i(s_k) = ΔX_i + U'(X_i(s_k)) dt / 2`. Circle paths are stored as a
/// continuous lift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathBundle {
    space: StateSpace,
    sites: Volume,
    dt: f64,
    #[serde(default)]
    start: f64,
    values: Vec<Vec<f64>>,
    increments: Vec<Vec<f64>>,
    #[serde(skip)]
    index: BTreeMap<Site, usize>,
}

impl PathBundle {
    /// Builds a bundle from lifted values (one series per site, in site order).
    pub fn from_values(pot: &PotentialSpec, sites: Volume, dt: f64, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.len() != sites.len() {
            return Err(Error::setup("one value series per site is required"));
        }
        let len = values.first().map_or(1, Vec::len);
        if len == 0 || values.iter().any(|v| v.len() != len) {
            return Err(Error::setup("value series must be nonempty and of equal length"));
        }
        let increments = values
            .iter()
            .map(|v| v.windows(2).map(|w| w[1] - w[0] + 0.5 * pot.du(w[0]) * dt).collect())
            .collect();
        let index = sites.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
        Ok(PathBundle {
            space: pot.state_space(),
            sites,
            dt,
            start: 0.0,
            values,
            increments,
            index,
        })
    }

    /// Shifts the time origin: sample `k` sits at `start + k dt`.
    pub fn starting_at(mut self, start: f64) -> Self {
        self.start = start;
        self
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn space(&self) -> StateSpace {
        self.space
    }

    pub fn sites(&self) -> &Volume {
        &self.sites
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of steps `K`.
    pub fn steps(&self) -> usize {
        self.values.first().map_or(0, |v| v.len() - 1)
    }

    /// Time of the last sample.
    pub fn horizon(&self) -> f64 {
        self.start + self.steps() as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps()).map(|k| self.start + k as f64 * self.dt).collect()
    }

    /// Grid index of time `s`; `s` must be a grid time inside the bundle.
    pub fn step_of(&self, s: f64) -> Result<usize> {
        let k = ((s - self.start) / self.dt).round();
        if k < 0.0 || k > self.steps() as f64 || (self.start + k * self.dt - s).abs() > 1e-9 * self.dt.max(s.abs()) {
            return Err(Error::coverage(format!(
                "time {s} is not a grid time of the path on [{}, {}]",
                self.start,
                self.horizon()
            )));
        }
        Ok(k as usize)
    }

    pub fn index_of(&self, s: &Site) -> Option<usize> {
        self.index.get(s).copied()
    }

    fn idx(&self, s: &Site) -> Result<usize> {
        self.index_of(s)
            .ok_or_else(|| Error::coverage(format!("path bundle does not cover site {s}")))
    }

    /// Lifted values of `s`.
    pub fn lifted(&self, s: &Site) -> Result<&[f64]> {
        Ok(&self.values[self.idx(s)?])
    }

    /// `ΔB̄` of `s`, one entry per step.
    pub fn increments(&self, s: &Site) -> Result<&[f64]> {
        Ok(&self.increments[self.idx(s)?])
    }

    pub fn value(&self, s: &Site, k: usize) -> Result<f64> {
        Ok(self.space.canonical(self.lifted(s)?[k]))
    }

    /// `B̄_s(s_k) - B̄_s(0)`.
    pub fn compensated(&self, s: &Site, k: usize) -> Result<f64> {
        Ok(self.increments(s)?[..k].iter().sum())
    }

    pub fn configuration_at(&self, k: usize) -> Configuration {
        Configuration::new(
            self.space,
            self.sites.iter().zip(&self.values).map(|(s, v)| (s.clone(), v[k])),
        )
    }

    pub fn initial(&self) -> Configuration {
        self.configuration_at(0)
    }

    pub fn terminal(&self) -> Configuration {
        self.configuration_at(self.steps())
    }

    #[cfg(test)]
    pub(crate) fn series(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// Series indices of `site + N` in neighbourhood slot order.
    pub fn slots(&self, site: &Site, drift: &DriftSpec) -> Result<Vec<usize>> {
        drift
            .nbhd()
            .offsets()
            .iter()
            .map(|o| self.idx(&site.shifted(o)))
            .collect()
    }

    /// Evaluates `b_site(s_k)` on this path.
    pub fn drift_at(&self, drift: &DriftSpec, site: &Site, slots: &[usize], k: usize, memory_steps: usize) -> Result<f64> {
        let w = PathWindow::new(&self.values, slots, drift.nbhd(), k, self.dt, memory_steps, drift.prehistory)
            .starting_at(self.start);
        drift.eval_checked(w.time(), &w, site)
    }

    /// Restriction to a subset of sites.
    pub fn restrict(&self, sites: &Volume) -> Result<PathBundle> {
        let mut values = Vec::with_capacity(sites.len());
        let mut increments = Vec::with_capacity(sites.len());
        for s in sites.iter() {
            let i = self.idx(s)?;
            values.push(self.values[i].clone());
            increments.push(self.increments[i].clone());
        }
        let index = sites.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
        Ok(PathBundle {
            space: self.space,
            sites: sites.clone(),
            dt: self.dt,
            start: self.start,
            values,
            increments,
            index,
        })
    }

    /// Rebuilds the site index after deserialisation.
    pub fn reindex(&mut self) {
        self.index = self.sites.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
    }
}

/// Number of steps of size `dt` in `[0, t]`; the step must divide the horizon.
pub fn step_count(t: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::setup(format!("time step must be positive, got {dt}")));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::setup(format!("horizon must be positive, got {t}")));
    }
    let k = (t / dt).round();
    if k < 1.0 || (k * dt - t).abs() > 1e-9 * t {
        return Err(Error::setup(format!("time step {dt} does not divide the horizon {t}")));
    }
    Ok(k as usize)
}
