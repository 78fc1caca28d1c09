//! Initial interactions: finite term lists with declared sup-norms.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dynamics::{BoundedFn, PotentialSpec};
use crate::error::{Error, Result};
use crate::lattice::{Configuration, Site, StateSpace, Volume};

type TermFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// One interaction term `φ_A` with its declared `‖φ_A‖_∞`.
///
/// The evaluator receives the values of `A` in sorted site order.
#[derive(Clone)]
pub struct Term {
    label: String,
    support: Volume,
    sup_norm: f64,
    eval: TermFn,
}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Term")
            .field("label", &self.label)
            .field("support", &self.support)
            .field("sup_norm", &self.sup_norm)
            .finish()
    }
}

impl Term {
    pub fn new(
        label: impl Into<String>,
        support: Volume,
        sup_norm: f64,
        eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        let label = label.into();
        if support.is_empty() {
            return Err(Error::setup(format!("term {label} has an empty support")));
        }
        if !(sup_norm >= 0.0 && sup_norm.is_finite()) {
            return Err(Error::setup(format!("term {label} needs a finite nonnegative sup-norm")));
        }
        Ok(Term {
            label,
            support,
            sup_norm,
            eval: Arc::new(eval),
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn support(&self) -> &Volume {
        &self.support
    }

    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }

    pub fn eval_values(&self, values: &[f64]) -> f64 {
        (self.eval)(values)
    }

    /// `φ_A(x)`; coverage error when `x` misses a site of `A`.
    pub fn evaluate(&self, x: &Configuration) -> Result<f64> {
        let v = x
            .values_on(&self.support)
            .map_err(|_| Error::coverage(format!("term {} reaches outside the supplied configuration", self.label)))?;
        Ok(self.eval_values(&v))
    }
}

/// Two-body forms used by the pair template.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairForm {
    /// `J x_i x_j`; unbounded on the line, so the norm must be declared.
    Product,
    /// `J tanh(x_i) tanh(x_j)`.
    Tanh,
    /// `J cos(x_i - x_j)`, the planar rotor coupling.
    Cosine,
}

/// Translation-invariant term families instantiated over a region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TermTemplate {
    /// `φ_{i} = h f(x_i)`.
    Site {
        h: f64,
        link: BoundedFn,
        #[serde(default)]
        sup_norm: Option<f64>,
    },
    /// Pairs `{i, i + d e_k}` along every axis `k`.
    Pair {
        coupling: f64,
        #[serde(default = "one")]
        distance: i64,
        form: PairForm,
        #[serde(default)]
        sup_norm: Option<f64>,
    },
    /// Unit squares of a planar lattice: `J ∏ f(x_c)` over the four corners.
    Plaquette {
        coupling: f64,
        link: BoundedFn,
        #[serde(default)]
        sup_norm: Option<f64>,
    },
}

fn one() -> i64 {
    1
}

impl TermTemplate {
    /// Sup-norm implied by the form, if it is bounded.
    fn natural_norm(&self) -> Option<f64> {
        match self {
            TermTemplate::Site { h, link, .. } => Some(h.abs() * link.sup()),
            TermTemplate::Pair { coupling, form, .. } => match form {
                PairForm::Product => None,
                PairForm::Tanh | PairForm::Cosine => Some(coupling.abs()),
            },
            TermTemplate::Plaquette { coupling, link, .. } => Some(coupling.abs() * link.sup().powi(4)),
        }
    }

    fn declared(&self) -> Option<f64> {
        match self {
            TermTemplate::Site { sup_norm, .. } | TermTemplate::Pair { sup_norm, .. } | TermTemplate::Plaquette { sup_norm, .. } => *sup_norm,
        }
    }

    /// Declared norm, defaulting to the natural one; a declaration below the
    /// natural norm is rejected.
    pub fn sup_norm(&self) -> Result<f64> {
        match (self.declared(), self.natural_norm()) {
            (Some(d), Some(n)) if d < n => Err(Error::setup(format!(
                "declared sup_norm {d} is below the exact sup-norm {n} of {self:?}"
            ))),
            (Some(d), _) if d >= 0.0 && d.is_finite() => Ok(d),
            (Some(d), _) => Err(Error::setup(format!("sup_norm must be finite and nonnegative, got {d}"))),
            (None, Some(n)) => Ok(n),
            (None, None) => Err(Error::setup("product pairs are unbounded: declare sup_norm explicitly")),
        }
    }

    fn instantiate(&self, region: &Volume, out: &mut Vec<Term>) -> Result<()> {
        let norm = self.sup_norm()?;
        let dim = region.dim().unwrap_or(1);
        match *self {
            TermTemplate::Site { h, link, .. } => {
                for s in region.iter() {
                    out.push(Term::new(format!("site{s}"), single(s), norm, move |v| h * link.apply(v[0]))?);
                }
            }
            TermTemplate::Pair {
                coupling,
                distance,
                form,
                ..
            } => {
                if distance < 1 {
                    return Err(Error::setup("pair distance must be at least 1"));
                }
                for s in region.iter() {
                    for axis in 0..dim {
                        let mut c = s.coords().to_vec();
                        c[axis] += distance;
                        let j = Site::new(c);
                        if !region.contains(&j) {
                            continue;
                        }
                        let mut support = single(s);
                        support.insert(j.clone());
                        let f = move |v: &[f64]| match form {
                            PairForm::Product => coupling * v[0] * v[1],
                            PairForm::Tanh => coupling * v[0].tanh() * v[1].tanh(),
                            PairForm::Cosine => coupling * (v[0] - v[1]).cos(),
                        };
                        out.push(Term::new(format!("pair{s}-{j}"), support, norm, f)?);
                    }
                }
            }
            TermTemplate::Plaquette { coupling, link, .. } => {
                if dim != 2 {
                    return Err(Error::setup("plaquette terms need a two-dimensional region"));
                }
                for s in region.iter() {
                    let (a, b) = (s.coords()[0], s.coords()[1]);
                    let corners = [(a, b), (a + 1, b), (a, b + 1), (a + 1, b + 1)].map(|(p, q)| Site::new(vec![p, q]));
                    if corners.iter().all(|c| region.contains(c)) {
                        let support = corners.iter().cloned().fold(Volume::empty(), |mut v, c| {
                            v.insert(c);
                            v
                        });
                        let f = move |v: &[f64]| coupling * v.iter().map(|&x| link.apply(x)).product::<f64>();
                        out.push(Term::new(format!("plaquette{s}"), support, norm, f)?);
                    }
                }
            }
        }
        Ok(())
    }
}

fn single(s: &Site) -> Volume {
    let mut v = Volume::empty();
    v.insert(s.clone());
    v
}

/// Summability constants of an interaction, evaluated from declared norms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summability {
    /// `sup_i Σ_{A∋i} ‖φ_A‖`.
    pub absolute: f64,
    /// `sup_i Σ_{A∋i} (|A| - 1) ‖φ_A‖`.
    pub strong: f64,
    /// Largest `|A|` with a nonzero norm.
    pub max_body: usize,
    /// Largest diameter of a support with a nonzero norm.
    pub max_range: i64,
    /// Strong summability.
    pub a1: bool,
    /// Finite body.
    pub a2: bool,
    /// Finite range.
    pub a3: bool,
}

/// A finite interaction `φ` at inverse temperature `β₀`.
#[derive(Debug, Clone)]
pub struct Interaction {
    beta0: f64,
    terms: Vec<Term>,
    by_site: BTreeMap<Site, Vec<usize>>,
}

impl Interaction {
    pub fn new(beta0: f64, terms: Vec<Term>) -> Result<Self> {
        if !(beta0 >= 0.0 && beta0.is_finite()) {
            return Err(Error::setup(format!("beta0 must be finite and nonnegative, got {beta0}")));
        }
        let mut by_site: BTreeMap<Site, Vec<usize>> = BTreeMap::new();
        for (k, t) in terms.iter().enumerate() {
            for s in t.support.iter() {
                by_site.entry(s.clone()).or_default().push(k);
            }
        }
        Ok(Interaction { beta0, terms, by_site })
    }

    /// `φ ≡ 0`.
    pub fn zero(beta0: f64) -> Result<Self> {
        Self::new(beta0, Vec::new())
    }

    /// Every template term whose support lies in `region`.
    pub fn from_templates(beta0: f64, templates: &[TermTemplate], region: &Volume) -> Result<Self> {
        let mut terms = Vec::new();
        for t in templates {
            t.instantiate(region, &mut terms)?;
        }
        Self::new(beta0, terms)
    }

    pub fn beta0(&self) -> f64 {
        self.beta0
    }

    pub fn with_beta0(&self, beta0: f64) -> Result<Self> {
        Self::new(beta0, self.terms.clone())
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Indices of the terms whose support contains `s`.
    pub fn terms_at(&self, s: &Site) -> &[usize] {
        self.by_site.get(s).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Terms with `A ∩ vol ≠ ∅`.
    pub fn terms_meeting<'a>(&'a self, vol: &'a Volume) -> impl Iterator<Item = &'a Term> + 'a {
        self.terms.iter().filter(move |t| t.support.intersects(vol))
    }

    /// Terms with `A ⊂ vol`: the free-boundary interaction on `vol`.
    pub fn restricted(&self, vol: &Volume) -> Interaction {
        let terms = self.terms.iter().filter(|t| t.support.is_subset(vol)).cloned().collect();
        Self::new(self.beta0, terms).expect("beta0 already validated")
    }

    /// Union of the supports of all terms meeting `vol`.
    pub fn reach(&self, vol: &Volume) -> Volume {
        self.terms_meeting(vol).fold(vol.clone(), |acc, t| acc.union(&t.support))
    }

    /// Per-site `(Σ ‖φ_A‖, Σ (|A| - 1) ‖φ_A‖)`.
    pub fn per_site_sums(&self) -> BTreeMap<Site, (f64, f64)> {
        self.by_site
            .iter()
            .map(|(s, idx)| {
                let abs = idx.iter().map(|&k| self.terms[k].sup_norm).sum();
                let strong = idx
                    .iter()
                    .map(|&k| (self.terms[k].support.len() - 1) as f64 * self.terms[k].sup_norm)
                    .sum();
                (s.clone(), (abs, strong))
            })
            .collect()
    }

    pub fn summability(&self) -> Summability {
        let sums = self.per_site_sums();
        let absolute = sums.values().map(|p| p.0).fold(0.0, f64::max);
        let strong = sums.values().map(|p| p.1).fold(0.0, f64::max);
        let live = self.terms.iter().filter(|t| t.sup_norm > 0.0);
        let max_body = live.clone().map(|t| t.support.len()).max().unwrap_or(0);
        let max_range = live.map(|t| t.support.diameter()).max().unwrap_or(0);
        Summability {
            absolute,
            strong,
            max_body,
            max_range,
            a1: strong.is_finite(),
            a2: true,
            a3: true,
        }
    }

    /// Spot-checks `|φ_A| <= ‖φ_A‖` on a product grid of `points` values per
    /// site spread over `±2σ` of `m` (or the whole circle).
    pub fn validate_norms(&self, pot: &PotentialSpec, points: usize) -> Result<()> {
        let points = points.max(2);
        let grid: Vec<f64> = match pot.state_space() {
            StateSpace::Circle => (0..points).map(|k| TAU * k as f64 / points as f64).collect(),
            StateSpace::Line => {
                let s = pot.stationary_std()?;
                (0..points).map(|k| -2.0 * s + 4.0 * s * k as f64 / (points - 1) as f64).collect()
            }
        };
        for t in &self.terms {
            let n = t.support.len();
            let total = points.checked_pow(n as u32).filter(|&c| c <= 1 << 20).ok_or_else(|| {
                Error::setup(format!("term {} is too large to spot-check", t.label))
            })?;
            let mut v = vec![0.0; n];
            for idx in 0..total {
                let mut r = idx;
                for slot in v.iter_mut() {
                    *slot = grid[r % points];
                    r /= points;
                }
                let val = t.eval_values(&v);
                if !val.is_finite() || val.abs() > t.sup_norm * (1.0 + 1e-12) + 1e-300 {
                    return Err(Error::setup(format!(
                        "term {} takes value {val} at {v:?}, above its declared sup-norm {}",
                        t.label, t.sup_norm
                    )));
                }
            }
        }
        Ok(())
    }
}
