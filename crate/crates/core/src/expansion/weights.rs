//! Cluster weights and the polymer sum `f = 1 + Σ_families ∏ K`.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Instance;
use crate::clusters::{ClusterRecord, PolymerSet, SpaceTimeCluster, TimeGrid, Vertex};
use crate::dynamics::{free_kernel, step_count, PathBundle};
use crate::error::{Error, Result};
use crate::girsanov::{exact_bridge, psi, BridgeKind};
use crate::lattice::{Configuration, Site, Volume};
use crate::mc::{replicas, Estimate, McParams};
use crate::rng::StreamRng;

pub const DEFAULT_FAMILY_CAP: usize = 2_000_000;

/// Sampling plan for one cluster weight.
struct Plan {
    slices: usize,
    step: f64,
    steps: usize,
    /// Every vertex whose value is used, sorted; values come from `x`, `y` or `m`.
    vertices: Vec<Vertex>,
    index: BTreeMap<Vertex, usize>,
    time_edges: Vec<(Site, usize)>,
    space_edges: Vec<(Site, usize)>,
    bridge_sites: Volume,
    /// Slices `lo..=hi` carry bridges.
    lo: usize,
    hi: usize,
}

impl Plan {
    fn new(g: &SpaceTimeCluster, inst: &Instance, grid: &TimeGrid) -> Result<Self> {
        let ctx = inst.context()?;
        let steps = step_count(grid.step(), inst.dt)?;
        let mut vertices: BTreeSet<Vertex> = g.footprint(&ctx);
        let mut bridge_sites = Volume::empty();
        let (mut lo, mut hi) = (usize::MAX, 0);
        let mut space_edges = Vec::new();
        for sc in g.space_clusters() {
            let j = sc.slice();
            lo = lo.min(*ctx.read_slices(j).start());
            hi = hi.max(j);
            for k in sc.sites() {
                space_edges.push((k.clone(), j));
                for s in inst.drift.nbhd().around(k).iter() {
                    bridge_sites.insert(s.clone());
                }
            }
        }
        if !space_edges.is_empty() {
            for s in bridge_sites.iter() {
                for l in lo..=hi + 1 {
                    vertices.insert((s.clone(), l));
                }
            }
        }
        let time_edges = g.time_clusters().iter().flat_map(|t| t.edges()).map(|e| (e.site, e.slice)).collect();
        let vertices: Vec<Vertex> = vertices.into_iter().collect();
        let index = vertices.iter().cloned().enumerate().map(|(i, v)| (v, i)).collect();
        Ok(Plan {
            slices: grid.slices(),
            step: grid.step(),
            steps,
            vertices,
            index,
            time_edges,
            space_edges,
            bridge_sites,
            lo,
            hi,
        })
    }
}

fn pin(cfg: &Configuration, s: &Site) -> Result<f64> {
    cfg.get(s)
        .ok_or_else(|| Error::coverage(format!("boundary configuration does not cover site {s}")))
}

/// Monte Carlo estimate of `K^t_Γ(x, y)`.
///
/// Free layers `1..M-1` of the footprint are drawn from `m`; layers `0` and
/// `M` are pinned to `x` and `y`. The integrand is the product of the time
/// factors (`p_T - 1`, and `p_T(·, y) / p_t(x, y) - 1` on the last slice)
/// with `∏ (e^{-Ψ_{k,j}} - 1)` over space edges, evaluated on exact free
/// bridges between the layer values.
pub fn cluster_weight(
    g: &SpaceTimeCluster,
    inst: &Instance,
    x: &Configuration,
    y: &Configuration,
    mc: &McParams,
    seed: u64,
) -> Result<Estimate> {
    mc.validate()?;
    let grid = inst.grid()?;
    let has_space = !g.is_pure_time();
    if has_space && inst.drift.beta == 0.0 {
        return Ok(Estimate::exact(0.0));
    }
    if !g.time_clusters().is_empty() && grid.slices() == 1 {
        // p_T(x, y) / p_t(x, y) - 1 vanishes identically when T = t.
        return Ok(Estimate::exact(0.0));
    }
    if has_space && !BridgeKind::for_potential(&inst.pot).is_exact() {
        return Err(Error::setup(format!(
            "cluster weights need an exact bridge sampler; none is available for {:?}",
            inst.pot.potential
        )));
    }
    let plan = Plan::new(g, inst, &grid)?;
    let mut p_t = BTreeMap::new();
    for (s, j) in &plan.time_edges {
        if *j + 1 == plan.slices {
            p_t.insert(s.clone(), free_kernel(&inst.pot, grid.horizon(), pin(x, s)?, pin(y, s)?)?);
        }
    }
    let pinned: Vec<Option<f64>> = plan
        .vertices
        .iter()
        .map(|(s, l)| match *l {
            0 => pin(x, s).map(Some),
            l if l == plan.slices => pin(y, s).map(Some),
            _ => Ok(None),
        })
        .collect::<Result<_>>()?;
    let purpose = format!("weight/{}", g.key());
    let vals = replicas(mc.samples, mc.block_size, seed, &purpose, |rng| {
        sample_integrand(&plan, inst, &pinned, &p_t, y, rng)
    })?;
    Ok(Estimate::from_samples(&vals))
}

fn sample_integrand(
    plan: &Plan,
    inst: &Instance,
    pinned: &[Option<f64>],
    p_t: &BTreeMap<Site, f64>,
    y: &Configuration,
    rng: &mut StreamRng,
) -> Result<f64> {
    let z: Vec<f64> = pinned
        .iter()
        .map(|p| match p {
            Some(v) => Ok(*v),
            None => inst.pot.sample_one(rng),
        })
        .collect::<Result<_>>()?;
    let at = |s: &Site, l: usize| z[plan.index[&(s.clone(), l)]];
    let mut value = 1.0;
    for (s, j) in &plan.time_edges {
        let tau = if j + 1 < plan.slices {
            free_kernel(&inst.pot, plan.step, at(s, *j), at(s, j + 1))? - 1.0
        } else {
            free_kernel(&inst.pot, plan.step, at(s, *j), pin(y, s)?)? / p_t[s] - 1.0
        };
        value *= tau;
    }
    if plan.space_edges.is_empty() {
        return Ok(value);
    }
    let mut series = Vec::with_capacity(plan.bridge_sites.len());
    for s in plan.bridge_sites.iter() {
        let mut cur = at(s, plan.lo);
        let mut v = Vec::with_capacity((plan.hi + 1 - plan.lo) * plan.steps + 1);
        v.push(cur);
        for j in plan.lo..=plan.hi {
            let b = exact_bridge(&inst.pot, cur, at(s, j + 1), inst.dt, plan.steps, rng)?;
            cur = b[b.len() - 1];
            v.extend_from_slice(&b[1..]);
        }
        series.push(v);
    }
    let bundle =
        PathBundle::from_values(&inst.pot, plan.bridge_sites.clone(), inst.dt, series)?.starting_at(plan.lo as f64 * plan.step);
    for (k, j) in &plan.space_edges {
        let window = (*j as f64 * plan.step, (*j + 1) as f64 * plan.step);
        value *= (-psi(&inst.drift, k, window, &bundle)?).exp_m1();
    }
    Ok(value)
}

/// Weight estimates for every enumerated polymer at fixed `(x, y, t, β)`.
#[derive(Debug, Clone)]
pub struct WeightTable {
    polymers: PolymerSet,
    weights: Vec<Estimate>,
    pub x: Configuration,
    pub y: Configuration,
    pub beta: f64,
}

/// One persisted weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightRow {
    pub key: String,
    pub size: usize,
    pub cluster: ClusterRecord,
    pub value: f64,
    pub stderr: f64,
    pub n: usize,
}

impl WeightTable {
    /// Estimates all weights, in parallel over clusters. Each cluster draws
    /// from its own stream keyed by `seed` and the cluster, so tables at
    /// different β share random numbers cluster by cluster.
    pub fn estimate(inst: &Instance, x: &Configuration, y: &Configuration, mc: &McParams, seed: u64) -> Result<Self> {
        let polymers = inst.polymers()?;
        let weights = polymers
            .clusters()
            .par_iter()
            .map(|g| cluster_weight(g, inst, x, y, mc, seed))
            .collect::<Result<Vec<_>>>()?;
        Ok(WeightTable {
            polymers,
            weights,
            x: x.clone(),
            y: y.clone(),
            beta: inst.drift.beta,
        })
    }

    /// Table with given weights, one per polymer in enumeration order.
    pub fn from_parts(polymers: PolymerSet, weights: Vec<Estimate>, x: Configuration, y: Configuration, beta: f64) -> Result<Self> {
        if weights.len() != polymers.len() {
            return Err(Error::setup(format!(
                "{} weights supplied for {} polymers",
                weights.len(),
                polymers.len()
            )));
        }
        Ok(WeightTable {
            polymers,
            weights,
            x,
            y,
            beta,
        })
    }

    pub fn polymers(&self) -> &PolymerSet {
        &self.polymers
    }

    pub fn weights(&self) -> &[Estimate] {
        &self.weights
    }

    pub fn grid(&self) -> TimeGrid {
        self.polymers.context().grid
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn get(&self, g: &SpaceTimeCluster) -> Option<Estimate> {
        self.polymers.position(g).map(|a| self.weights[a])
    }

    /// Indices of polymers whose weight is not an exact zero.
    pub fn active(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&a| !(self.weights[a].value == 0.0 && self.weights[a].stderr == 0.0))
            .collect()
    }

    pub fn rows(&self) -> Vec<WeightRow> {
        let grid = self.grid();
        self.polymers
            .clusters()
            .iter()
            .zip(&self.weights)
            .map(|(g, w)| WeightRow {
                key: g.key(),
                size: g.size(),
                cluster: g.to_record(&grid),
                value: w.value,
                stderr: w.stderr,
                n: w.n,
            })
            .collect()
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for row in self.rows() {
            serde_json::to_writer(&mut out, &row)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Reads weights written by [`WeightTable::write_jsonl`] for the same polymer set.
    pub fn read_jsonl<R: BufRead>(polymers: PolymerSet, input: R, x: Configuration, y: Configuration, beta: f64) -> Result<Self> {
        let mut weights = vec![None; polymers.len()];
        let nbhd = polymers.context().nbhd.clone();
        for line in input.lines() {
            let line = line.map_err(|e| Error::setup(format!("reading weight table: {e}")))?;
            if line.trim().is_empty() {
                continue;
            }
            let row: WeightRow = serde_json::from_str(&line).map_err(|e| Error::setup(format!("bad weight row: {e}")))?;
            let g = row.cluster.to_cluster(&nbhd)?;
            let a = polymers
                .position(&g)
                .ok_or_else(|| Error::setup(format!("cluster {} is not in the polymer set", row.key)))?;
            weights[a] = Some(Estimate::new(row.value, row.stderr, row.n));
        }
        let weights = weights
            .into_iter()
            .enumerate()
            .map(|(a, w)| w.ok_or_else(|| Error::setup(format!("weight of cluster {} is missing", polymers.get(a).key()))))
            .collect::<Result<Vec<_>>>()?;
        WeightTable::from_parts(polymers, weights, x, y, beta)
    }
}

/// `1 + Σ ∏ K` over families of pairwise compatible polymers with total
/// size at most `kMax`, with first-order error propagation.
pub fn reconstruct_density(table: &WeightTable) -> Result<Estimate> {
    reconstruct_density_capped(table, DEFAULT_FAMILY_CAP)
}

pub fn reconstruct_density_capped(table: &WeightTable, cap: usize) -> Result<Estimate> {
    let active = table.active();
    let ps = table.polymers();
    let k_max = ps.k_max();
    let w: Vec<f64> = active.iter().map(|&a| table.weights[a].value).collect();
    let mut grad = vec![0.0; active.len()];
    let mut total = 1.0;
    let mut families = 0usize;
    let mut chosen: Vec<usize> = Vec::new();
    #[allow(clippy::too_many_arguments)]
    fn visit(
        from: usize,
        budget: usize,
        active: &[usize],
        ps: &PolymerSet,
        w: &[f64],
        chosen: &mut Vec<usize>,
        grad: &mut [f64],
        total: &mut f64,
        families: &mut usize,
        cap: usize,
    ) -> Result<()> {
        for c in from..active.len() {
            let a = active[c];
            let size = ps.size(a);
            if size > budget || chosen.iter().any(|&d| ps.conflicts(active[d], a)) {
                continue;
            }
            *families += 1;
            if *families > cap {
                return Err(Error::Budget { what: "family", cap });
            }
            chosen.push(c);
            let prod: f64 = chosen.iter().map(|&d| w[d]).product();
            *total += prod;
            for (i, &d) in chosen.iter().enumerate() {
                let others: f64 = chosen
                    .iter()
                    .enumerate()
                    .filter(|&(k, _)| k != i)
                    .map(|(_, &e)| w[e])
                    .product();
                grad[d] += others;
            }
            visit(c + 1, budget - size, active, ps, w, chosen, grad, total, families, cap)?;
            chosen.pop();
        }
        Ok(())
    }
    visit(0, k_max, &active, ps, &w, &mut chosen, &mut grad, &mut total, &mut families, cap)?;
    let var: f64 = active
        .iter()
        .zip(&grad)
        .map(|(&a, g)| (g * table.weights[a].stderr).powi(2))
        .sum();
    let n = active.iter().map(|&a| table.weights[a].n).min().unwrap_or(0);
    Ok(Estimate::new(total, var.sqrt(), n))
}
