//! Truncated interaction `Φ^t_Δ` from the log of the polymer sum.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::weights::{WeightTable, DEFAULT_FAMILY_CAP};
use crate::clusters::{esu, ursell_coefficient_for_graph};
use crate::error::{Error, Result};
use crate::lattice::{Site, Volume};
use crate::mc::Estimate;

/// `Φ^t_Δ` estimates keyed by `Δ`, with `log f = -Σ_Δ Φ^t_Δ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionTable {
    pub n_max: usize,
    pub beta: f64,
    pub entries: BTreeMap<Volume, Estimate>,
    /// `Σ_Δ Φ^t_Δ` with errors propagated jointly.
    pub total: Estimate,
    /// Number of connected collections summed.
    pub collections: usize,
}

impl InteractionTable {
    /// `Φ^t_Δ`; exactly zero when no connected collection has trace `Δ`.
    pub fn get(&self, delta: &Volume) -> Estimate {
        self.entries.get(delta).copied().unwrap_or_else(|| Estimate::exact(0.0))
    }

    /// `log f̂ = -Σ Φ`.
    pub fn log_density(&self) -> Estimate {
        Estimate::new(-self.total.value, self.total.stderr, self.total.n)
    }

    /// `exp(-Σ Φ)` with delta-method error.
    pub fn density(&self) -> Estimate {
        let v = (-self.total.value).exp();
        Estimate::new(v, v * self.total.stderr, self.total.n)
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        #[derive(Serialize)]
        struct Row<'a> {
            delta: &'a Volume,
            value: f64,
            stderr: f64,
            n: usize,
        }
        for (delta, e) in &self.entries {
            serde_json::to_writer(
                &mut out,
                &Row {
                    delta,
                    value: e.value,
                    stderr: e.stderr,
                    n: e.n,
                },
            )?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Multiplicity vectors `m_i >= 1` of length `len` with sum at most `max`.
fn multiplicities(len: usize, max: usize, out: &mut Vec<Vec<usize>>) {
    fn go(cur: &mut Vec<usize>, len: usize, left: usize, out: &mut Vec<Vec<usize>>) {
        if cur.len() == len {
            out.push(cur.clone());
            return;
        }
        let remaining_slots = len - cur.len() - 1;
        for m in 1..=left.saturating_sub(remaining_slots) {
            cur.push(m);
            go(cur, len, left - m, out);
            cur.pop();
        }
    }
    if len <= max {
        go(&mut Vec::new(), len, max, out);
    }
}

/// `Φ^t_Δ = -Σ C(Γ_1..Γ_n) ∏ K` over connected multisets with `n <= nMax`,
/// grouped by the union of the members' footprint traces.
pub fn interaction_terms(table: &WeightTable, n_max: usize) -> Result<InteractionTable> {
    interaction_terms_capped(table, n_max, DEFAULT_FAMILY_CAP)
}

pub fn interaction_terms_capped(table: &WeightTable, n_max: usize, cap: usize) -> Result<InteractionTable> {
    if n_max == 0 || n_max > 16 {
        return Err(Error::setup(format!("nMax must lie in 1..=16, got {n_max}")));
    }
    let ps = table.polymers();
    let active = table.active();
    let na = active.len();
    let w: Vec<f64> = active.iter().map(|&a| table.weights()[a].value).collect();
    let se: Vec<f64> = active.iter().map(|&a| table.weights()[a].stderr).collect();
    let adjacency: Vec<Vec<usize>> = (0..na)
        .map(|i| (0..na).filter(|&j| j != i && ps.conflicts(active[i], active[j])).collect())
        .collect();
    let mut mult_cache: BTreeMap<usize, Vec<Vec<usize>>> = BTreeMap::new();
    // Per Δ: value and sparse gradient with respect to active weights.
    let mut acc: BTreeMap<Volume, (f64, BTreeMap<usize, f64>)> = BTreeMap::new();
    let mut collections = 0usize;
    esu(
        &adjacency,
        &vec![1; na],
        n_max,
        |_, _| true,
        |support| {
            let mut delta = Volume::empty();
            for &i in support {
                delta = delta.union(ps.footprint_trace(active[i]));
            }
            let mults = mult_cache.entry(support.len()).or_insert_with(|| {
                let mut out = Vec::new();
                multiplicities(support.len(), n_max, &mut out);
                out
            });
            let entry = acc.entry(delta).or_insert_with(|| (0.0, BTreeMap::new()));
            for m in mults.iter() {
                collections += 1;
                if collections > cap {
                    return Err(Error::Budget {
                        what: "collection",
                        cap,
                    });
                }
                // Expanded conflict graph: copies of one polymer always conflict.
                let owner: Vec<usize> = support.iter().zip(m).flat_map(|(&i, &k)| std::iter::repeat_n(i, k)).collect();
                let n = owner.len();
                let mut adj = vec![0u32; n];
                for a in 0..n {
                    for b in 0..n {
                        if a != b && (owner[a] == owner[b] || ps.conflicts(active[owner[a]], active[owner[b]])) {
                            adj[a] |= 1 << b;
                        }
                    }
                }
                let c = ursell_coefficient_for_graph(&adj, m).to_f64();
                if c == 0.0 {
                    continue;
                }
                let prod: f64 = support.iter().zip(m).map(|(&i, &k)| w[i].powi(k as i32)).product();
                entry.0 -= c * prod;
                for (pos, (&i, &k)) in support.iter().zip(m).enumerate() {
                    let others: f64 = support
                        .iter()
                        .zip(m)
                        .enumerate()
                        .filter(|&(q, _)| q != pos)
                        .map(|(_, (&j, &l))| w[j].powi(l as i32))
                        .product();
                    let d = -c * k as f64 * w[i].powi(k as i32 - 1) * others;
                    *entry.1.entry(i).or_insert(0.0) += d;
                }
            }
            Ok(())
        },
    )?;
    let n = active.iter().map(|&a| table.weights()[a].n).min().unwrap_or(0);
    let mut total_grad = vec![0.0; na];
    let mut total = 0.0;
    let mut entries = BTreeMap::new();
    for (delta, (value, grad)) in acc {
        let mut var = 0.0;
        for (&i, &g) in &grad {
            var += (g * se[i]).powi(2);
            total_grad[i] += g;
        }
        total += value;
        entries.insert(delta, Estimate::new(value, var.sqrt(), n));
    }
    let total_var: f64 = total_grad.iter().zip(&se).map(|(g, s)| (g * s).powi(2)).sum();
    Ok(InteractionTable {
        n_max,
        beta: table.beta,
        entries,
        total: Estimate::new(total, total_var.sqrt(), n),
        collections,
    })
}

/// Per-site sums `Σ_{Δ ∋ i} (|Δ| - 1) ‖Φ_Δ‖` with the norm taken as a
/// maximum over the supplied probe tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummabilityReport {
    pub per_site: BTreeMap<Site, f64>,
    pub sup: f64,
    /// Error of `sup`, from the stderr of each maximising entry.
    pub sup_stderr: f64,
}

pub fn summability_report(tables: &[InteractionTable]) -> SummabilityReport {
    let mut norms: BTreeMap<&Volume, (f64, f64)> = BTreeMap::new();
    for t in tables {
        for (delta, e) in &t.entries {
            let n = norms.entry(delta).or_insert((0.0, 0.0));
            if e.value.abs() > n.0 {
                *n = (e.value.abs(), e.stderr);
            }
        }
    }
    let mut sums: BTreeMap<Site, (f64, f64)> = BTreeMap::new();
    for (delta, (norm, se)) in norms {
        let w = delta.len() as f64 - 1.0;
        for s in delta.iter() {
            let e = sums.entry(s.clone()).or_insert((0.0, 0.0));
            e.0 += w * norm;
            e.1 += (w * se).powi(2);
        }
    }
    let (sup, var) = sums.values().copied().fold((0.0, 0.0), |m, v| if v.0 > m.0 { v } else { m });
    let per_site = sums.into_iter().map(|(s, v)| (s, v.0)).collect();
    SummabilityReport {
        per_site,
        sup,
        sup_stderr: var.sqrt(),
    }
}
