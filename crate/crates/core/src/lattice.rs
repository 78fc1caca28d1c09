//! Finite volumes of the integer lattice, neighbourhoods and configurations.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::TAU;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point of the integer lattice.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Site(Vec<i64>);

impl Site {
    pub fn new(coords: Vec<i64>) -> Self {
        assert!(!coords.is_empty(), "lattice dimension must be at least 1");
        Site(coords)
    }

    pub fn d1(x: i64) -> Self {
        Site(vec![x])
    }

    pub fn origin(dim: usize) -> Self {
        Site::new(vec![0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[i64] {
        &self.0
    }

    pub fn is_origin(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    pub fn shifted(&self, offset: &Site) -> Site {
        debug_assert_eq!(self.dim(), offset.dim());
        Site(self.0.iter().zip(&offset.0).map(|(a, b)| a + b).collect())
    }

    pub fn minus(&self, other: &Site) -> Site {
        Site(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    /// Chebyshev distance.
    pub fn distance(&self, other: &Site) -> i64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .max()
            .unwrap_or(0)
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.len() == 1 {
            write!(f, "{}", self.0[0])
        } else {
            write!(f, "(")?;
            for (k, c) in self.0.iter().enumerate() {
                if k > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{c}")?;
            }
            write!(f, ")")
        }
    }
}

/// A finite set of sites. Serialises as a sorted list of coordinate vectors.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Volume(BTreeSet<Site>);

impl Volume {
    pub fn empty() -> Self {
        Volume(BTreeSet::new())
    }

    /// The 1D segment `{lo, ..., hi}`.
    pub fn segment(lo: i64, hi: i64) -> Self {
        Volume((lo..=hi).map(Site::d1).collect())
    }

    /// The box `prod [lo_k, hi_k]`.
    pub fn boxed(bounds: &[(i64, i64)]) -> Self {
        let mut sites = vec![Vec::new()];
        for &(lo, hi) in bounds {
            let mut next = Vec::new();
            for prefix in &sites {
                for c in lo..=hi {
                    let mut s: Vec<i64> = prefix.clone();
                    s.push(c);
                    next.push(s);
                }
            }
            sites = next;
        }
        if bounds.is_empty() {
            return Volume::empty();
        }
        Volume(sites.into_iter().map(Site::new).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, s: &Site) -> bool {
        self.0.contains(s)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Site> {
        self.0.iter()
    }

    pub fn sites(&self) -> &BTreeSet<Site> {
        &self.0
    }

    pub fn insert(&mut self, s: Site) -> bool {
        self.0.insert(s)
    }

    pub fn is_subset(&self, other: &Volume) -> bool {
        self.0.is_subset(&other.0)
    }

    pub fn is_disjoint(&self, other: &Volume) -> bool {
        self.0.is_disjoint(&other.0)
    }

    pub fn intersects(&self, other: &Volume) -> bool {
        !self.is_disjoint(other)
    }

    pub fn union(&self, other: &Volume) -> Volume {
        Volume(self.0.union(&other.0).cloned().collect())
    }

    pub fn intersection(&self, other: &Volume) -> Volume {
        Volume(self.0.intersection(&other.0).cloned().collect())
    }

    pub fn difference(&self, other: &Volume) -> Volume {
        Volume(self.0.difference(&other.0).cloned().collect())
    }

    /// Common dimension of all sites, `None` for the empty volume.
    pub fn dim(&self) -> Option<usize> {
        self.0.iter().next().map(Site::dim)
    }

    /// Largest Chebyshev distance between two sites.
    pub fn diameter(&self) -> i64 {
        let v: Vec<&Site> = self.0.iter().collect();
        let mut d = 0;
        for (a, s) in v.iter().enumerate() {
            for t in &v[a + 1..] {
                d = d.max(s.distance(t));
            }
        }
        d
    }
}

impl FromIterator<Site> for Volume {
    fn from_iter<I: IntoIterator<Item = Site>>(iter: I) -> Self {
        Volume(iter.into_iter().collect())
    }
}

impl<'a> IntoIterator for &'a Volume {
    type Item = &'a Site;
    type IntoIter = std::collections::btree_set::Iter<'a, Site>;
    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

impl fmt::Display for Volume {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, s) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, " ")?;
            }
            write!(f, "{s}")?;
        }
        write!(f, "}}")
    }
}

/// A finite set of offsets around the origin. Always contains the origin.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Site>", into = "Vec<Site>")]
pub struct Neighborhood {
    offsets: Vec<Site>,
    // (i + N) and (j + N) intersect iff i - j lies in N - N.
    differences: BTreeSet<Site>,
}

impl Neighborhood {
    pub fn new(offsets: impl IntoIterator<Item = Site>) -> Result<Self> {
        let set: BTreeSet<Site> = offsets.into_iter().collect();
        let dim = set
            .iter()
            .next()
            .map(Site::dim)
            .ok_or_else(|| Error::setup("neighbourhood must be nonempty"))?;
        if set.iter().any(|s| s.dim() != dim) {
            return Err(Error::setup("neighbourhood offsets have mixed dimensions"));
        }
        if !set.contains(&Site::origin(dim)) {
            return Err(Error::setup("neighbourhood must contain the zero offset"));
        }
        let offsets: Vec<Site> = set.into_iter().collect();
        let mut differences = BTreeSet::new();
        for a in &offsets {
            for b in &offsets {
                differences.insert(a.minus(b));
            }
        }
        Ok(Neighborhood { offsets, differences })
    }

    /// `{0}` in dimension `dim`.
    pub fn origin_only(dim: usize) -> Self {
        Neighborhood::new([Site::origin(dim)]).expect("origin is valid")
    }

    /// All offsets with Chebyshev norm at most `r`.
    pub fn ball(dim: usize, r: i64) -> Self {
        let bounds = vec![(-r, r); dim];
        Neighborhood::new(Volume::boxed(&bounds).0).expect("ball contains origin")
    }

    /// Origin plus the 2·dim unit vectors.
    pub fn nearest(dim: usize) -> Self {
        let mut v = vec![Site::origin(dim)];
        for k in 0..dim {
            for s in [-1, 1] {
                let mut c = vec![0; dim];
                c[k] = s;
                v.push(Site::new(c));
            }
        }
        Neighborhood::new(v).expect("contains origin")
    }

    pub fn dim(&self) -> usize {
        self.offsets[0].dim()
    }

    pub fn offsets(&self) -> &[Site] {
        &self.offsets
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, offset: &Site) -> bool {
        self.offsets.binary_search(offset).is_ok()
    }

    /// Position of `offset` in the sorted offset list.
    pub fn slot(&self, offset: &Site) -> Option<usize> {
        self.offsets.binary_search(offset).ok()
    }

    /// `i + N`.
    pub fn around(&self, site: &Site) -> Volume {
        self.offsets.iter().map(|o| site.shifted(o)).collect()
    }

    /// Whether `(i + N)` and `(j + N)` intersect.
    pub fn overlaps(&self, i: &Site, j: &Site) -> bool {
        self.differences.contains(&i.minus(j))
    }

    /// Largest Chebyshev norm of an offset.
    pub fn radius(&self) -> i64 {
        self.offsets
            .iter()
            .map(|o| o.distance(&Site::origin(o.dim())))
            .max()
            .unwrap_or(0)
    }
}

impl TryFrom<Vec<Site>> for Neighborhood {
    type Error = Error;
    fn try_from(v: Vec<Site>) -> Result<Self> {
        Neighborhood::new(v)
    }
}

impl From<Neighborhood> for Vec<Site> {
    fn from(n: Neighborhood) -> Self {
        n.offsets
    }
}

/// `{i in vol : i + N is contained in vol}`.
pub fn interior(vol: &Volume, nbhd: &Neighborhood) -> Volume {
    vol.iter()
        .filter(|i| nbhd.offsets().iter().all(|o| vol.contains(&i.shifted(o))))
        .cloned()
        .collect()
}

/// Single-spin state space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum StateSpace {
    #[default]
    Line,
    /// `[0, 2π)` with the endpoints identified.
    Circle,
}

impl StateSpace {
    /// Canonical representative: identity on the line, reduction mod 2π on the circle.
    pub fn canonical(self, v: f64) -> f64 {
        match self {
            StateSpace::Line => v,
            StateSpace::Circle => {
                let r = v.rem_euclid(TAU);
                // rem_euclid can round up to exactly TAU for tiny negatives.
                if r >= TAU {
                    0.0
                } else {
                    r
                }
            }
        }
    }
}

/// A (partial) configuration: values on a finite domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    space: StateSpace,
    values: BTreeMap<Site, f64>,
}

impl Configuration {
    pub fn new(space: StateSpace, values: impl IntoIterator<Item = (Site, f64)>) -> Self {
        let values = values
            .into_iter()
            .map(|(s, v)| (s, space.canonical(v)))
            .collect();
        Configuration { space, values }
    }

    pub fn empty(space: StateSpace) -> Self {
        Configuration {
            space,
            values: BTreeMap::new(),
        }
    }

    /// Same value on every site of `vol`.
    pub fn constant(space: StateSpace, vol: &Volume, v: f64) -> Self {
        Configuration::new(space, vol.iter().map(|s| (s.clone(), v)))
    }

    pub fn space(&self) -> StateSpace {
        self.space
    }

    pub fn get(&self, s: &Site) -> Option<f64> {
        self.values.get(s).copied()
    }

    pub fn set(&mut self, s: Site, v: f64) {
        self.values.insert(s, self.space.canonical(v));
    }

    pub fn domain(&self) -> Volume {
        self.values.keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn covers(&self, vol: &Volume) -> bool {
        vol.iter().all(|s| self.values.contains_key(s))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Site, f64)> {
        self.values.iter().map(|(s, v)| (s, *v))
    }

    pub fn restrict(&self, vol: &Volume) -> Configuration {
        Configuration {
            space: self.space,
            values: self
                .values
                .iter()
                .filter(|(s, _)| vol.contains(s))
                .map(|(s, v)| (s.clone(), *v))
                .collect(),
        }
    }

    /// Merges two configurations with disjoint domains.
    pub fn concat(&self, other: &Configuration) -> Result<Configuration> {
        if self.space != other.space {
            return Err(Error::setup("cannot concatenate configurations on different state spaces"));
        }
        let mut values = self.values.clone();
        for (s, v) in &other.values {
            if values.insert(s.clone(), *v).is_some() {
                return Err(Error::DomainConflict(s.to_string()));
            }
        }
        Ok(Configuration {
            space: self.space,
            values,
        })
    }

    /// Values in the iteration order of `vol`; errors on missing sites.
    pub fn values_on(&self, vol: &Volume) -> Result<Vec<f64>> {
        vol.iter()
            .map(|s| {
                self.get(s)
                    .ok_or_else(|| Error::coverage(format!("configuration has no value at site {s}")))
            })
            .collect()
    }
}
