//! Polymer enumeration.
//!
//! Constituents (space clusters per slice, time runs per site) are
//! generated first; polymers are then the connected, internally consistent
//! sets of constituents under footprint overlap, enumerated once each with
//! Wernicke's ESU scheme.

use std::collections::{BTreeMap, BTreeSet};

use super::{ClusterContext, SpaceCluster, SpaceTimeCluster, TimeCluster, Vertex};
use crate::error::{Error, Result};
use crate::lattice::{Neighborhood, Site, Volume};

pub const DEFAULT_CLUSTER_CAP: usize = 200_000;

/// Visits every connected vertex set of weight at most `max_weight` that
/// passes `admissible`, exactly once.
///
/// `admissible(sub, w)` decides whether `w` may join `sub`; it must be
/// monotone (a rejected set has no admissible superset).
pub(crate) fn esu<A, E>(
    adjacency: &[Vec<usize>],
    weight: &[usize],
    max_weight: usize,
    admissible: A,
    mut emit: E,
) -> Result<()>
where
    A: Fn(&[usize], usize) -> bool,
    E: FnMut(&[usize]) -> Result<()>,
{
    let n = adjacency.len();
    for v in 0..n {
        if weight[v] > max_weight || !admissible(&[], v) {
            continue;
        }
        let mut closed = vec![false; n];
        closed[v] = true;
        for &u in &adjacency[v] {
            closed[u] = true;
        }
        let ext: Vec<usize> = adjacency[v].iter().copied().filter(|&u| u > v).collect();
        extend(
            adjacency,
            weight,
            max_weight,
            &admissible,
            &mut emit,
            &mut vec![v],
            weight[v],
            ext,
            &closed,
            v,
        )?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn extend<A, E>(
    adjacency: &[Vec<usize>],
    weight: &[usize],
    max_weight: usize,
    admissible: &A,
    emit: &mut E,
    sub: &mut Vec<usize>,
    sub_weight: usize,
    mut ext: Vec<usize>,
    closed: &[bool],
    root: usize,
) -> Result<()>
where
    A: Fn(&[usize], usize) -> bool,
    E: FnMut(&[usize]) -> Result<()>,
{
    emit(sub)?;
    while let Some(w) = ext.pop() {
        if sub_weight + weight[w] > max_weight || !admissible(sub, w) {
            continue;
        }
        let mut next_ext = ext.clone();
        let mut next_closed = closed.to_vec();
        for &u in &adjacency[w] {
            if !closed[u] {
                next_closed[u] = true;
                if u > root {
                    next_ext.push(u);
                }
            }
        }
        sub.push(w);
        extend(
            adjacency,
            weight,
            max_weight,
            admissible,
            emit,
            sub,
            sub_weight + weight[w],
            next_ext,
            &next_closed,
            root,
        )?;
        sub.pop();
    }
    Ok(())
}

/// All neighbourhood-connected site sets of size at most `k_max` drawn from `sites`.
pub fn connected_space_sets(sites: &Volume, nbhd: &Neighborhood, k_max: usize) -> Vec<BTreeSet<Site>> {
    let v: Vec<&Site> = sites.iter().collect();
    let adjacency: Vec<Vec<usize>> = (0..v.len())
        .map(|a| {
            (0..v.len())
                .filter(|&b| b != a && nbhd.overlaps(v[a], v[b]))
                .collect()
        })
        .collect();
    let mut out = Vec::new();
    esu(&adjacency, &vec![1; v.len()], k_max, |_, _| true, |sub| {
        out.push(sub.iter().map(|&a| v[a].clone()).collect());
        Ok(())
    })
    .expect("emit is infallible");
    out.sort_by(|a: &BTreeSet<Site>, b| a.len().cmp(&b.len()).then(a.cmp(b)));
    out
}

/// Fixed-size bit set over vertex ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Bits(Vec<u64>);

impl Bits {
    fn new(n: usize) -> Self {
        Bits(vec![0; n.div_ceil(64)])
    }

    fn set(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }

    fn intersects(&self, other: &Bits) -> bool {
        self.0.iter().zip(&other.0).any(|(a, b)| a & b != 0)
    }

    fn union_with(&mut self, other: &Bits) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a |= b;
        }
    }
}

enum Part {
    Space(SpaceCluster),
    Time(TimeCluster),
}

/// Enumerated polymers with cached footprints and conflict matrix.
#[derive(Debug, Clone)]
pub struct PolymerSet {
    ctx: ClusterContext,
    k_max: usize,
    clusters: Vec<SpaceTimeCluster>,
    footprint_traces: Vec<Volume>,
    conflict: Vec<Vec<bool>>,
    index: BTreeMap<SpaceTimeCluster, usize>,
}

impl PolymerSet {
    /// All polymers of size at most `k_max` in the context's volume.
    ///
    /// Space clusters live on the neighbourhood interior, time clusters on
    /// every site of the volume.
    pub fn enumerate(ctx: &ClusterContext, k_max: usize, cap: usize) -> Result<Self> {
        if k_max == 0 {
            return Err(Error::setup("kMax must be at least 1"));
        }
        let grid = ctx.grid;
        let m = grid.slices();
        let space_sites = ctx.space_sites();

        // Vertex ids over every site a footprint can touch.
        let mut reach: BTreeSet<Site> = ctx.volume.sites().clone();
        for s in &space_sites {
            reach.extend(ctx.nbhd.around(s).sites().iter().cloned());
        }
        let site_id: BTreeMap<Site, usize> = reach.iter().cloned().enumerate().map(|(a, s)| (s, a)).collect();
        let n_vertices = site_id.len() * (m + 1);
        let vid = |v: &Vertex| site_id[&v.0] * (m + 1) + v.1;

        let mut parts = Vec::new();
        for set in connected_space_sets(&space_sites, &ctx.nbhd, k_max) {
            for j in 0..m {
                parts.push(Part::Space(SpaceCluster::from_parts_unchecked(j, set.clone())));
            }
        }
        for s in &ctx.volume {
            for start in 0..m {
                for len in 1..=k_max.min(m - start) {
                    parts.push(Part::Time(TimeCluster {
                        site: s.clone(),
                        start,
                        len,
                    }));
                }
            }
        }
        if parts.len() > cap {
            return Err(Error::Budget {
                what: "constituent",
                cap,
            });
        }

        let singles: Vec<SpaceTimeCluster> = parts
            .iter()
            .map(|p| match p {
                Part::Space(g) => SpaceTimeCluster::new(vec![g.clone()], vec![]).unwrap(),
                Part::Time(t) => SpaceTimeCluster::new(vec![], vec![t.clone()]).unwrap(),
            })
            .collect();
        let feet: Vec<Bits> = singles
            .iter()
            .map(|g| {
                let mut b = Bits::new(n_vertices);
                for v in g.footprint(ctx) {
                    b.set(vid(&v));
                }
                b
            })
            .collect();
        let weight: Vec<usize> = singles.iter().map(SpaceTimeCluster::size).collect();
        let np = parts.len();
        let adjacency: Vec<Vec<usize>> = (0..np)
            .map(|a| (0..np).filter(|&b| b != a && feet[a].intersects(&feet[b])).collect())
            .collect();
        let consistent = |a: usize, b: usize| match (&parts[a], &parts[b]) {
            (Part::Space(g), Part::Space(h)) => super::space_compatible(g, h, &ctx.nbhd),
            (Part::Time(t), Part::Time(u)) => t.site != u.site || t.end() < u.start || u.end() < t.start,
            _ => true,
        };

        let mut found: Vec<Vec<usize>> = Vec::new();
        esu(
            &adjacency,
            &weight,
            k_max,
            |sub, w| sub.iter().all(|&a| consistent(a, w)),
            |sub| {
                if found.len() >= cap {
                    return Err(Error::Budget { what: "cluster", cap });
                }
                found.push(sub.to_vec());
                Ok(())
            },
        )?;

        let mut polymers: Vec<(SpaceTimeCluster, Bits)> = found
            .into_iter()
            .map(|sub| {
                let mut space = Vec::new();
                let mut time = Vec::new();
                let mut foot = Bits::new(n_vertices);
                for a in sub {
                    match &parts[a] {
                        Part::Space(g) => space.push(g.clone()),
                        Part::Time(t) => time.push(t.clone()),
                    }
                    foot.union_with(&feet[a]);
                }
                (SpaceTimeCluster::new(space, time).unwrap(), foot)
            })
            .collect();
        polymers.sort_by(|a, b| a.0.size().cmp(&b.0.size()).then_with(|| a.0.cmp(&b.0)));

        let n = polymers.len();
        let conflict: Vec<Vec<bool>> = (0..n)
            .map(|a| (0..n).map(|b| polymers[a].1.intersects(&polymers[b].1)).collect())
            .collect();
        let clusters: Vec<SpaceTimeCluster> = polymers.into_iter().map(|p| p.0).collect();
        let footprint_traces = clusters.iter().map(|g| g.footprint_trace(ctx)).collect();
        let index = clusters.iter().cloned().enumerate().map(|(a, g)| (g, a)).collect();
        Ok(PolymerSet {
            ctx: ctx.clone(),
            k_max,
            clusters,
            footprint_traces,
            conflict,
            index,
        })
    }

    pub fn context(&self) -> &ClusterContext {
        &self.ctx
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn clusters(&self) -> &[SpaceTimeCluster] {
        &self.clusters
    }

    pub fn get(&self, a: usize) -> &SpaceTimeCluster {
        &self.clusters[a]
    }

    pub fn position(&self, g: &SpaceTimeCluster) -> Option<usize> {
        self.index.get(g).copied()
    }

    pub fn size(&self, a: usize) -> usize {
        self.clusters[a].size()
    }

    pub fn conflicts(&self, a: usize, b: usize) -> bool {
        self.conflict[a][b]
    }

    pub fn footprint_trace(&self, a: usize) -> &Volume {
        &self.footprint_traces[a]
    }

    /// Number of polymers conflicting with `a`, bucketed by size.
    pub fn conflict_counts_by_size(&self, a: usize) -> Vec<usize> {
        let mut counts = vec![0; self.k_max + 1];
        for b in 0..self.len() {
            if self.conflict[a][b] {
                counts[self.size(b)] += 1;
            }
        }
        counts
    }
}

/// The canonical list of polymers with `|Γ| <= k_max`.
pub fn enumerate_clusters(ctx: &ClusterContext, k_max: usize) -> Result<Vec<SpaceTimeCluster>> {
    Ok(PolymerSet::enumerate(ctx, k_max, DEFAULT_CLUSTER_CAP)?.clusters)
}
