//! Single-site Metropolis sampling of finite-volume Gibbs measures.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::interaction::Interaction;
use crate::dynamics::PotentialSpec;
use crate::error::{Error, Result};
use crate::lattice::{Configuration, Site, Volume};
use crate::mc::{replicas, Estimate};
use crate::rng::{derive_seed, stream, StreamRng};

/// Chain length controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerParams {
    /// Full sweeps per chain; the final state is the draw.
    pub sweeps: usize,
    /// Minimum number of sweeps accepted as burn-in.
    pub burn_in: usize,
}

impl Default for SamplerParams {
    fn default() -> Self {
        SamplerParams { sweeps: 40, burn_in: 20 }
    }
}

impl SamplerParams {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in == 0 {
            return Err(Error::setup("sampler.burn_in must be positive"));
        }
        if self.sweeps < self.burn_in {
            return Err(Error::setup(format!(
                "sampler.sweeps = {} is below the burn-in threshold {}",
                self.sweeps, self.burn_in
            )));
        }
        Ok(())
    }
}

/// Flat indexed state over `free ∪ fixed` sites.
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub sites: Vec<Site>,
    pub index: BTreeMap<Site, usize>,
    pub free: Vec<usize>,
}

impl Layout {
    pub fn new(free: &Volume, fixed: Option<&Configuration>) -> Self {
        let mut sites: Vec<Site> = free.iter().cloned().collect();
        if let Some(z) = fixed {
            sites.extend(z.domain().iter().filter(|s| !free.contains(s)).cloned());
        }
        let index = sites.iter().enumerate().map(|(k, s)| (s.clone(), k)).collect();
        Layout {
            free: (0..free.len()).collect(),
            sites,
            index,
        }
    }

    pub fn initial(&self, fixed: Option<&Configuration>) -> Vec<f64> {
        self.sites
            .iter()
            .map(|s| fixed.and_then(|z| z.get(s)).unwrap_or(0.0))
            .collect()
    }

    pub fn configuration(&self, pot: &PotentialSpec, values: &[f64], only_free: bool) -> Configuration {
        let n = if only_free { self.free.len() } else { self.sites.len() };
        Configuration::new(pot.state_space(), self.sites[..n].iter().cloned().zip(values[..n].iter().copied()))
    }
}

/// Terms of `phi` compiled against a layout: `(term, value slots)` and, per
/// free slot, the terms touching it.
#[derive(Debug, Clone)]
pub(crate) struct Compiled {
    terms: Vec<(usize, Vec<usize>)>,
    at: Vec<Vec<usize>>,
}

impl Compiled {
    /// Terms meeting the free sites; coverage error when one reaches past the layout.
    pub fn new(phi: &Interaction, layout: &Layout) -> Result<Self> {
        let free_vol: Volume = layout.free.iter().fold(Volume::empty(), |mut v, &k| {
            v.insert(layout.sites[k].clone());
            v
        });
        let mut terms = Vec::new();
        let mut at = vec![Vec::new(); layout.free.len()];
        for (k, t) in phi.terms().iter().enumerate() {
            if !t.support().intersects(&free_vol) {
                continue;
            }
            let slots = t
                .support()
                .iter()
                .map(|s| {
                    layout.index.get(s).copied().ok_or_else(|| {
                        Error::coverage(format!("term {} needs site {s}, which is neither free nor fixed", t.label()))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            for &s in &slots {
                if s < layout.free.len() {
                    at[s].push(terms.len());
                }
            }
            terms.push((k, slots));
        }
        Ok(Compiled { terms, at })
    }

    /// `Σ_{A ∋ slot} φ_A`.
    pub fn local(&self, phi: &Interaction, values: &[f64], slot: usize) -> f64 {
        let mut buf = [0.0; 8];
        self.at[slot]
            .iter()
            .map(|&j| {
                let (k, slots) = &self.terms[j];
                let term = &phi.terms()[*k];
                if slots.len() <= buf.len() {
                    for (b, &s) in buf.iter_mut().zip(slots) {
                        *b = values[s];
                    }
                    term.eval_values(&buf[..slots.len()])
                } else {
                    let v: Vec<f64> = slots.iter().map(|&s| values[s]).collect();
                    term.eval_values(&v)
                }
            })
            .sum()
    }
}

/// Runs `sweeps` single-site Metropolis sweeps over the free slots with
/// independent proposals from `m` and target `e^{-E} dm`, where `local(v, k)`
/// returns every energy contribution depending on slot `k`.
pub(crate) fn metropolis<F>(pot: &PotentialSpec, values: &mut [f64], free: usize, sweeps: usize, rng: &mut StreamRng, local: F) -> Result<usize>
where
    F: Fn(&[f64], usize) -> Result<f64>,
{
    for v in values[..free].iter_mut() {
        *v = pot.sample_one(rng)?;
    }
    let mut accepted = 0;
    for _ in 0..sweeps {
        for k in 0..free {
            let old_v = values[k];
            let old = local(values, k)?;
            values[k] = pot.sample_one(rng)?;
            let new = local(values, k)?;
            if !new.is_finite() {
                return Err(Error::setup(format!("non-finite local energy {new} during Metropolis update")));
            }
            let u: f64 = rng.random();
            if u.ln() < old - new {
                accepted += 1;
            } else {
                values[k] = old_v;
            }
        }
    }
    Ok(accepted)
}

/// Compiles the energy of `ν_{vol,z}` (or the free measure `ν_vol`).
fn compile(phi: &Interaction, vol: &Volume, boundary: Option<&Configuration>) -> Result<(Interaction, Layout, Compiled)> {
    let phi = match boundary {
        None => phi.restricted(vol),
        Some(_) => phi.clone(),
    };
    let fixed = boundary.map(|z| z.restrict(&z.domain().difference(vol)));
    let layout = Layout::new(vol, fixed.as_ref());
    let compiled = Compiled::new(&phi, &layout)?;
    Ok((phi, layout, compiled))
}

fn chain(pot: &PotentialSpec, phi: &Interaction, layout: &Layout, compiled: &Compiled, boundary: Option<&Configuration>, sweeps: usize, rng: &mut StreamRng) -> Result<Configuration> {
    let beta0 = phi.beta0();
    let mut values = layout.initial(boundary);
    metropolis(pot, &mut values, layout.free.len(), sweeps, rng, |v, k| Ok(beta0 * compiled.local(phi, v, k)))?;
    Ok(layout.configuration(pot, &values, true))
}

/// One draw from `ν_{vol,z}`, or from the free-boundary `ν_vol` without `z`.
pub fn sample_gibbs(phi: &Interaction, pot: &PotentialSpec, vol: &Volume, boundary: Option<&Configuration>, params: &SamplerParams, seed: u64) -> Result<Configuration> {
    params.validate()?;
    let (phi, layout, compiled) = compile(phi, vol, boundary)?;
    chain(pot, &phi, &layout, &compiled, boundary, params.sweeps, &mut stream(seed, "gibbs", 0))
}

/// `n` independent draws; chain `c` uses stream `(seed, purpose, c)`.
#[allow(clippy::too_many_arguments)]
pub fn sample_gibbs_many(
    phi: &Interaction,
    pot: &PotentialSpec,
    vol: &Volume,
    boundary: Option<&Configuration>,
    params: &SamplerParams,
    n: usize,
    seed: u64,
    purpose: &str,
) -> Result<Vec<Configuration>> {
    params.validate()?;
    let (phi, layout, compiled) = compile(phi, vol, boundary)?;
    replicas(n, 1, seed, purpose, |rng| chain(pot, &phi, &layout, &compiled, boundary, params.sweeps, rng))
}

/// Two-seed split-chain comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    /// Site-averaged value and square under the configured chain length.
    pub short: [Estimate; 2],
    /// The same under a second seed and twice the chain length.
    pub long: [Estimate; 2],
    pub max_z: f64,
    pub passed: bool,
}

/// Compares `n` chains of the configured length with `n` chains of double
/// length under an independent seed; passes when every z-score is below 4.
pub fn split_chain_check(phi: &Interaction, pot: &PotentialSpec, vol: &Volume, params: &SamplerParams, n: usize, seed: u64) -> Result<ConvergenceReport> {
    let long_params = SamplerParams {
        sweeps: 2 * params.sweeps,
        ..*params
    };
    let stats = |draws: Vec<Configuration>| -> [Estimate; 2] {
        let (mut a, mut b) = (Vec::with_capacity(draws.len()), Vec::with_capacity(draws.len()));
        for x in &draws {
            let k = x.len().max(1) as f64;
            a.push(x.iter().map(|(_, v)| v).sum::<f64>() / k);
            b.push(x.iter().map(|(_, v)| v * v).sum::<f64>() / k);
        }
        [Estimate::from_samples(&a), Estimate::from_samples(&b)]
    };
    let short = stats(sample_gibbs_many(phi, pot, vol, None, params, n, seed, "split/short")?);
    let long = stats(sample_gibbs_many(phi, pot, vol, None, &long_params, n, derive_seed(seed, "split", 1), "split/long")?);
    let max_z = short.iter().zip(&long).map(|(a, b)| a.z_score(b)).fold(0.0, f64::max);
    Ok(ConvergenceReport {
        short,
        long,
        max_z,
        passed: max_z < 4.0,
    })
}

/// `h_vol(x_vol, z_{vol^c}) = Σ_{A ∩ vol ≠ ∅} φ_A(x z)`.
pub fn hamiltonian(phi: &Interaction, vol: &Volume, x_vol: &Configuration, boundary: Option<&Configuration>) -> Result<f64> {
    let x = x_vol.restrict(vol);
    if !x.covers(vol) {
        return Err(Error::coverage("configuration does not cover the volume"));
    }
    let full = match boundary {
        Some(z) => x.concat(&z.restrict(&z.domain().difference(vol)))?,
        None => x,
    };
    let mut h = 0.0;
    for t in phi.terms_meeting(vol) {
        h += t.evaluate(&full)?;
    }
    Ok(h)
}
