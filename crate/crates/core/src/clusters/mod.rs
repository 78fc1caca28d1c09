//! Space-time cluster combinatorics.
//!
//! The horizon `[0, t]` is cut into `M` slices `I_j = [jT, (j+1)T]`. A
//! temporal edge `(i, I_j)` has vertices `(i, j)` and `(i, j+1)` (layers are
//! indexed by integers, layer `j` sits at time `jT`). Space clusters group
//! same-slice edges whose neighbourhoods overlap; time clusters are runs of
//! consecutive edges at one site. A [`SpaceTimeCluster`] (a polymer) is a
//! nonempty collection of both.
//!
//! Two notions of "where a cluster lives" are used:
//!
//! * the support `[Γ]`: the vertices of its own edges;
//! * the footprint: every pinned vertex whose value the cluster weight
//!   reads. A space edge `(k, I_j)` reads the bridges of all sites in
//!   `k + N` on slice `j` (and on slice `j - 1` when the drift has memory),
//!   hence their pins. The footprint always contains the support.
//!
//! Polymers conflict when they are not non-intersecting or when their
//! footprints meet; with that relation the product expansion of the
//! finite-volume density is an exact identity.

mod enumerate;
mod ursell;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{interior, Neighborhood, Site, Volume};

pub use enumerate::{connected_space_sets, enumerate_clusters, PolymerSet, DEFAULT_CLUSTER_CAP};
pub(crate) use enumerate::esu;
pub use ursell::{connected_signed_sum, ursell_coefficient, ursell_coefficient_for_graph, Rational};

/// A pinned space-time point `(site, layer)`; layer `j` is time `jT`.
pub type Vertex = (Site, usize);

/// Partition of `[0, t]` into `slices` intervals of length `step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    step: f64,
    slices: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, slices: usize) -> Result<Self> {
        if slices == 0 {
            return Err(Error::setup("time grid needs at least one slice"));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::setup("time horizon must be positive and finite"));
        }
        Ok(TimeGrid {
            step: horizon / slices as f64,
            slices,
        })
    }

    /// Grid for intensity `beta`: target step `max(t0, 1/beta)`, slice count
    /// `floor(t / target)` (at least one), step recomputed so `M T = t`.
    pub fn for_intensity(horizon: f64, memory: f64, beta: f64) -> Result<Self> {
        let target = if beta > 0.0 { (1.0 / beta).max(memory) } else { f64::INFINITY };
        let slices = if target.is_finite() {
            ((horizon / target).floor() as usize).max(1)
        } else {
            1
        };
        let grid = TimeGrid::new(horizon, slices)?;
        grid.check_memory(memory)?;
        Ok(grid)
    }

    /// Slice length must be at least the drift memory when there is more than one slice.
    pub fn check_memory(&self, memory: f64) -> Result<()> {
        if self.slices > 1 && self.step + 1e-12 < memory {
            return Err(Error::setup(format!(
                "slice length {} is shorter than the drift memory {}",
                self.step, memory
            )));
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn slices(&self) -> usize {
        self.slices
    }

    pub fn horizon(&self) -> f64 {
        self.step * self.slices as f64
    }
}

/// A unit space-time pair `(i, I_j)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TemporalEdge {
    pub site: Site,
    pub slice: usize,
}

/// Same-slice temporal edges at distinct, neighbourhood-connected sites.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SpaceCluster {
    slice: usize,
    sites: BTreeSet<Site>,
}

impl SpaceCluster {
    /// Validates nonemptiness and connectivity of the neighbourhood-overlap graph.
    pub fn new(slice: usize, sites: impl IntoIterator<Item = Site>, nbhd: &Neighborhood) -> Result<Self> {
        let sites: BTreeSet<Site> = sites.into_iter().collect();
        if sites.is_empty() {
            return Err(Error::setup("space cluster must contain at least one edge"));
        }
        if !overlap_connected(&sites, nbhd) {
            return Err(Error::setup(format!(
                "space cluster at slice {slice} is not neighbourhood-connected"
            )));
        }
        Ok(SpaceCluster { slice, sites })
    }

    pub(crate) fn from_parts_unchecked(slice: usize, sites: BTreeSet<Site>) -> Self {
        SpaceCluster { slice, sites }
    }

    pub fn slice(&self) -> usize {
        self.slice
    }

    pub fn sites(&self) -> &BTreeSet<Site> {
        &self.sites
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn edges(&self) -> impl Iterator<Item = TemporalEdge> + '_ {
        self.sites.iter().map(move |s| TemporalEdge {
            site: s.clone(),
            slice: self.slice,
        })
    }
}

fn overlap_connected(sites: &BTreeSet<Site>, nbhd: &Neighborhood) -> bool {
    let v: Vec<&Site> = sites.iter().collect();
    if v.is_empty() {
        return false;
    }
    let mut seen = vec![false; v.len()];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(a) = stack.pop() {
        for b in 0..v.len() {
            if !seen[b] && nbhd.overlaps(v[a], v[b]) {
                seen[b] = true;
                stack.push(b);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Consecutive edges `(i, I_start), ..., (i, I_{start+len-1})`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TimeCluster {
    site: Site,
    start: usize,
    len: usize,
}

impl TimeCluster {
    pub fn new(site: Site, start: usize, len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::setup("time cluster must contain at least one edge"));
        }
        Ok(TimeCluster { site, start, len })
    }

    pub fn site(&self) -> &Site {
        &self.site
    }

    pub fn start(&self) -> usize {
        self.start
    }

    /// One past the last slice.
    pub fn end(&self) -> usize {
        self.start + self.len
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn slices(&self) -> std::ops::Range<usize> {
        self.start..self.end()
    }

    pub fn edges(&self) -> impl Iterator<Item = TemporalEdge> + '_ {
        self.slices().map(move |j| TemporalEdge {
            site: self.site.clone(),
            slice: j,
        })
    }

    fn vertices(&self) -> impl Iterator<Item = Vertex> + '_ {
        (self.start..=self.end()).map(move |l| (self.site.clone(), l))
    }
}

/// Geometry shared by all clusters of one expansion.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterContext {
    pub volume: Volume,
    pub nbhd: Neighborhood,
    pub grid: TimeGrid,
    /// Whether the drift has memory, so slice `j` also reads slice `j - 1`.
    pub memory: bool,
}

impl ClusterContext {
    pub fn new(volume: Volume, nbhd: Neighborhood, grid: TimeGrid, memory: bool) -> Self {
        ClusterContext {
            volume,
            nbhd,
            grid,
            memory,
        }
    }

    /// Sites carrying a space interaction: the neighbourhood interior.
    pub fn space_sites(&self) -> Volume {
        interior(&self.volume, &self.nbhd)
    }

    /// Slices whose bridges a space edge on slice `j` reads.
    pub fn read_slices(&self, j: usize) -> std::ops::RangeInclusive<usize> {
        let lo = if self.memory { j.saturating_sub(1) } else { j };
        lo..=j
    }
}

/// A polymer: a nonempty collection of space and time clusters.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SpaceTimeCluster {
    space: Vec<SpaceCluster>,
    time: Vec<TimeCluster>,
}

impl SpaceTimeCluster {
    /// Sorts its parts into canonical order.
    pub fn new(mut space: Vec<SpaceCluster>, mut time: Vec<TimeCluster>) -> Result<Self> {
        if space.is_empty() && time.is_empty() {
            return Err(Error::setup("space-time cluster must be nonempty"));
        }
        space.sort();
        space.dedup();
        time.sort();
        time.dedup();
        Ok(SpaceTimeCluster { space, time })
    }

    pub fn space_clusters(&self) -> &[SpaceCluster] {
        &self.space
    }

    pub fn time_clusters(&self) -> &[TimeCluster] {
        &self.time
    }

    pub fn is_pure_space(&self) -> bool {
        self.time.is_empty()
    }

    pub fn is_pure_time(&self) -> bool {
        self.space.is_empty()
    }

    /// `|Γ|`: the total number of temporal edges.
    pub fn size(&self) -> usize {
        self.space.iter().map(SpaceCluster::len).sum::<usize>()
            + self.time.iter().map(TimeCluster::len).sum::<usize>()
    }

    /// Space edges and time edges counted separately.
    pub fn edge_counts(&self) -> (usize, usize) {
        (
            self.space.iter().map(SpaceCluster::len).sum(),
            self.time.iter().map(TimeCluster::len).sum(),
        )
    }

    /// `[Γ]`: all vertices of its temporal edges.
    pub fn support(&self) -> BTreeSet<Vertex> {
        let mut out = BTreeSet::new();
        for g in &self.space {
            for s in &g.sites {
                out.insert((s.clone(), g.slice));
                out.insert((s.clone(), g.slice + 1));
            }
        }
        for tc in &self.time {
            out.extend(tc.vertices());
        }
        out
    }

    /// Every pinned vertex the cluster weight depends on.
    pub fn footprint(&self, ctx: &ClusterContext) -> BTreeSet<Vertex> {
        let mut out = BTreeSet::new();
        for g in &self.space {
            let reach: BTreeSet<Site> = g.sites.iter().flat_map(|k| ctx.nbhd.around(k).sites().clone()).collect();
            for s in &reach {
                for j in ctx.read_slices(g.slice) {
                    out.insert((s.clone(), j));
                    out.insert((s.clone(), j + 1));
                }
            }
        }
        for tc in &self.time {
            out.extend(tc.vertices());
        }
        out
    }

    /// Projection of the footprint on the lattice.
    pub fn footprint_trace(&self, ctx: &ClusterContext) -> Volume {
        self.footprint(ctx).into_iter().map(|(s, _)| s).collect()
    }

    /// `Tr(Γ)`: projection of `[Γ]` on the lattice.
    pub fn trace(&self) -> Volume {
        self.space
            .iter()
            .flat_map(|g| g.sites.iter().cloned())
            .chain(self.time.iter().map(|t| t.site.clone()))
            .collect()
    }

    pub fn edges(&self) -> Vec<TemporalEdge> {
        let mut e: Vec<TemporalEdge> = self
            .space
            .iter()
            .flat_map(|g| g.edges().collect::<Vec<_>>())
            .chain(self.time.iter().flat_map(|t| t.edges().collect::<Vec<_>>()))
            .collect();
        e.sort();
        e
    }

    /// Whether the parts could appear together in one term of the product
    /// expansion: same-slice space clusters compatible, same-site time
    /// clusters vertex-disjoint.
    pub fn is_internally_consistent(&self, nbhd: &Neighborhood) -> bool {
        for (a, g) in self.space.iter().enumerate() {
            for h in &self.space[a + 1..] {
                if g.slice == h.slice && !space_compatible(g, h, nbhd) {
                    return false;
                }
            }
        }
        for (a, t) in self.time.iter().enumerate() {
            for u in &self.time[a + 1..] {
                if t.site == u.site && t.start <= u.end() && u.start <= t.end() {
                    return false;
                }
            }
        }
        true
    }

    /// Whether the parts are linked into one piece through shared footprint vertices.
    pub fn is_linked(&self, ctx: &ClusterContext) -> bool {
        let parts: Vec<BTreeSet<Vertex>> = self
            .space
            .iter()
            .map(|g| SpaceTimeCluster::new(vec![g.clone()], vec![]).unwrap().footprint(ctx))
            .chain(
                self.time
                    .iter()
                    .map(|t| SpaceTimeCluster::new(vec![], vec![t.clone()]).unwrap().footprint(ctx)),
            )
            .collect();
        graph_connected(parts.len(), |a, b| !parts[a].is_disjoint(&parts[b]))
    }

    pub fn to_record(&self, grid: &TimeGrid) -> ClusterRecord {
        ClusterRecord {
            space_clusters: self
                .space
                .iter()
                .map(|g| SpaceClusterRecord {
                    slice: g.slice,
                    sites: g.sites.iter().cloned().collect(),
                })
                .collect(),
            time_clusters: self
                .time
                .iter()
                .map(|t| TimeClusterRecord {
                    site: t.site.clone(),
                    start: t.start,
                    len: t.len,
                })
                .collect(),
            grid: *grid,
        }
    }

    /// Canonical single-line key, used to index persisted tables.
    pub fn key(&self) -> String {
        let mut s = String::new();
        for g in &self.space {
            s.push_str(&format!("S{}[", g.slice));
            let sites: Vec<String> = g.sites.iter().map(|x| x.to_string()).collect();
            s.push_str(&sites.join(" "));
            s.push(']');
        }
        for t in &self.time {
            s.push_str(&format!("T{}[{}..{}]", t.site, t.start, t.end()));
        }
        s
    }
}

/// Persisted form `{spaceClusters, timeClusters, grid}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ClusterRecord {
    pub space_clusters: Vec<SpaceClusterRecord>,
    pub time_clusters: Vec<TimeClusterRecord>,
    pub grid: TimeGrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceClusterRecord {
    pub slice: usize,
    pub sites: Vec<Site>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeClusterRecord {
    pub site: Site,
    pub start: usize,
    pub len: usize,
}

impl ClusterRecord {
    pub fn to_cluster(&self, nbhd: &Neighborhood) -> Result<SpaceTimeCluster> {
        let space = self
            .space_clusters
            .iter()
            .map(|g| SpaceCluster::new(g.slice, g.sites.iter().cloned(), nbhd))
            .collect::<Result<Vec<_>>>()?;
        let time = self
            .time_clusters
            .iter()
            .map(|t| TimeCluster::new(t.site.clone(), t.start, t.len))
            .collect::<Result<Vec<_>>>()?;
        SpaceTimeCluster::new(space, time)
    }
}

/// No edge of `g1` is neighbourhood-connected to an edge of `g2`.
///
/// The relation is only constrained within one slice; clusters on different
/// slices are reported compatible here (cross-slice interplay is handled
/// by footprints in [`conflicts`]).
pub fn space_compatible(g1: &SpaceCluster, g2: &SpaceCluster, nbhd: &Neighborhood) -> bool {
    if g1.slice != g2.slice {
        return true;
    }
    !g1.sites
        .iter()
        .any(|a| g2.sites.iter().any(|b| nbhd.overlaps(a, b)))
}

/// Same-slice space clusters compatible, time clusters sharing no edge,
/// and supports disjoint.
pub fn non_intersecting(g1: &SpaceTimeCluster, g2: &SpaceTimeCluster, nbhd: &Neighborhood) -> bool {
    let spaces_ok = g1
        .space
        .iter()
        .all(|a| g2.space.iter().all(|b| space_compatible(a, b, nbhd)));
    if !spaces_ok {
        return false;
    }
    let times_ok = g1.time.iter().all(|a| {
        g2.time
            .iter()
            .all(|b| a.site != b.site || a.end() <= b.start || b.end() <= a.start)
    });
    times_ok && g1.support().is_disjoint(&g2.support())
}

/// Polymer incompatibility: not non-intersecting, or footprints meet.
pub fn conflicts(g1: &SpaceTimeCluster, g2: &SpaceTimeCluster, ctx: &ClusterContext) -> bool {
    !non_intersecting(g1, g2, &ctx.nbhd) || !g1.footprint(ctx).is_disjoint(&g2.footprint(ctx))
}

/// Whether the conflict graph on `gs` is connected.
pub fn is_connected(gs: &[SpaceTimeCluster], ctx: &ClusterContext) -> bool {
    graph_connected(gs.len(), |a, b| conflicts(&gs[a], &gs[b], ctx))
}

/// Union of the traces.
pub fn trace(gs: &[SpaceTimeCluster]) -> Volume {
    gs.iter().fold(Volume::empty(), |acc, g| acc.union(&g.trace()))
}

pub(crate) fn graph_connected(n: usize, adjacent: impl Fn(usize, usize) -> bool) -> bool {
    if n == 0 {
        return false;
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    let mut count = 1;
    while let Some(a) = stack.pop() {
        for b in 0..n {
            if !seen[b] && adjacent(a, b) {
                seen[b] = true;
                count += 1;
                stack.push(b);
            }
        }
    }
    count == n
}

/// Groups clusters by the footprint trace they contribute to.
pub fn group_by_footprint_trace<'a>(
    gs: impl IntoIterator<Item = &'a SpaceTimeCluster>,
    ctx: &ClusterContext,
) -> BTreeMap<Volume, Vec<&'a SpaceTimeCluster>> {
    let mut out: BTreeMap<Volume, Vec<&SpaceTimeCluster>> = BTreeMap::new();
    for g in gs {
        out.entry(g.footprint_trace(ctx)).or_default().push(g);
    }
    out
}
