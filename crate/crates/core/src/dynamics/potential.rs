//! Self-potentials `U`, the reference measure `m ∝ e^{-U}` and its sampler.

use std::f64::consts::TAU;
use std::sync::{Arc, OnceLock};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::kernel::SpectralKernel;
use crate::error::{Error, Result};
use crate::lattice::StateSpace;

/// Closed family of self-potentials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Potential {
    /// `U(x) = a x^2` (Ornstein-Uhlenbeck free dynamics with rate `a`).
    Quadratic { a: f64 },
    /// `U(x) = x^4/4 - x^2/2`.
    DoubleWell,
    /// `U(x) = sum_k coeffs[k] x^k`.
    Polynomial { coeffs: Vec<f64> },
    /// `U = 0` on the circle (Brownian rotors).
    CircleFlat,
    /// `U(θ) = k cos θ` on the circle.
    CircleCosine { k: f64 },
}

impl Potential {
    pub fn state_space(&self) -> StateSpace {
        match self {
            Potential::CircleFlat | Potential::CircleCosine { .. } => StateSpace::Circle,
            _ => StateSpace::Line,
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        match self {
            Potential::Quadratic { a } => a * x * x,
            Potential::DoubleWell => 0.25 * x.powi(4) - 0.5 * x * x,
            Potential::Polynomial { coeffs } => coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c),
            Potential::CircleFlat => 0.0,
            Potential::CircleCosine { k } => k * x.cos(),
        }
    }

    /// `U'(x)`.
    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            Potential::Quadratic { a } => 2.0 * a * x,
            Potential::DoubleWell => x.powi(3) - x,
            Potential::Polynomial { coeffs } => coeffs
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (k, c)| acc * x + k as f64 * c),
            Potential::CircleFlat => 0.0,
            Potential::CircleCosine { k } => -k * x.sin(),
        }
    }

    /// `U''(x)`.
    pub fn second_derivative(&self, x: f64) -> f64 {
        match self {
            Potential::Quadratic { a } => 2.0 * a,
            Potential::DoubleWell => 3.0 * x * x - 1.0,
            Potential::Polynomial { coeffs } => coeffs
                .iter()
                .enumerate()
                .skip(2)
                .rev()
                .fold(0.0, |acc, (k, c)| acc * x + (k * (k - 1)) as f64 * c),
            Potential::CircleFlat => 0.0,
            Potential::CircleCosine { k } => -k * x.cos(),
        }
    }

    pub fn quadratic_rate(&self) -> Option<f64> {
        match self {
            Potential::Quadratic { a } => Some(*a),
            Potential::Polynomial { coeffs }
                if coeffs.len() >= 3 && coeffs[1] == 0.0 && coeffs[2] > 0.0 && coeffs[3..].iter().all(|c| *c == 0.0) =>
            {
                Some(coeffs[2])
            }
            _ => None,
        }
    }
}

/// Outcome of the ultracontractivity checks on a finite grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UltracontractivityReport {
    /// `U''` at the largest checked `|x|` is positive on both sides.
    pub convex_at_infinity: bool,
    /// `max (U'' - U'^2/2)` over the check grid.
    pub upper_bound_c: f64,
    pub bounded_above: bool,
    /// Tail integral `int_{|x|>M} 1/U'` stops growing when the range doubles.
    pub integrable_tail: bool,
    pub satisfied: bool,
}

/// A self-potential with its cached numerical companions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub potential: Potential,
    /// Known spectral gap of the free semigroup (1/time), if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap_hint: Option<f64>,
    #[serde(skip)]
    cache: Arc<Cache>,
}

#[derive(Debug, Default)]
struct Cache {
    table: OnceLock<std::result::Result<ReferenceTable, Error>>,
    spectral: OnceLock<std::result::Result<SpectralKernel, Error>>,
}

impl PartialEq for PotentialSpec {
    fn eq(&self, other: &Self) -> bool {
        self.potential == other.potential && self.gap_hint == other.gap_hint
    }
}

impl PotentialSpec {
    pub fn new(potential: Potential) -> Result<Self> {
        match &potential {
            Potential::Quadratic { a } if !(*a > 0.0 && a.is_finite()) => {
                return Err(Error::setup("quadratic potential needs a > 0"));
            }
            Potential::Polynomial { coeffs } if coeffs.iter().any(|c| !c.is_finite()) => {
                return Err(Error::setup("polynomial coefficients must be finite"));
            }
            Potential::CircleCosine { k } if !k.is_finite() => {
                return Err(Error::setup("cosine amplitude must be finite"));
            }
            _ => {}
        }
        let gap_hint = match &potential {
            Potential::Quadratic { a } => Some(*a),
            Potential::CircleFlat => Some(0.5),
            _ => None,
        };
        let spec = PotentialSpec {
            potential,
            gap_hint,
            cache: Arc::default(),
        };
        if spec.state_space() == StateSpace::Line {
            spec.line_range()?;
        }
        Ok(spec)
    }

    /// `U(x) = x^2`.
    pub fn ou() -> Self {
        PotentialSpec::new(Potential::Quadratic { a: 1.0 }).expect("valid")
    }

    pub fn circle_flat() -> Self {
        PotentialSpec::new(Potential::CircleFlat).expect("valid")
    }

    pub fn state_space(&self) -> StateSpace {
        self.potential.state_space()
    }

    pub fn u(&self, x: f64) -> f64 {
        self.potential.value(x)
    }

    pub fn du(&self, x: f64) -> f64 {
        self.potential.derivative(x)
    }

    /// Interval `[-L, L]` outside which `e^{-U}` is below `e^{-40}` of its peak.
    pub(crate) fn line_range(&self) -> Result<f64> {
        let probe: Vec<f64> = (-400..=400).map(|k| k as f64 * 0.05).collect();
        let umin = probe.iter().map(|&x| self.u(x)).fold(f64::INFINITY, f64::min);
        let mut l = 1.0;
        while l < 1e4 {
            if self.u(l) - umin > 40.0 && self.u(-l) - umin > 40.0 && self.du(l) > 0.0 && self.du(-l) < 0.0 {
                return Ok(l);
            }
            l *= 1.25;
        }
        Err(Error::setup(format!(
            "potential {:?} is not normalisable: e^-U does not decay",
            self.potential
        )))
    }

    /// Stationary standard deviation of `m` (circular spread on the circle).
    pub fn stationary_std(&self) -> Result<f64> {
        if let Some(a) = self.potential.quadratic_rate() {
            return Ok((0.5 / a).sqrt());
        }
        let t = self.table()?;
        let mean: f64 = t.integrate(|x| x);
        Ok((t.integrate(|x| (x - mean) * (x - mean))).sqrt())
    }

    pub(crate) fn table(&self) -> Result<&ReferenceTable> {
        self.cache
            .table
            .get_or_init(|| ReferenceTable::build(self))
            .as_ref()
            .map_err(Clone::clone)
    }

    pub(crate) fn spectral(&self) -> Result<&SpectralKernel> {
        self.cache
            .spectral
            .get_or_init(|| SpectralKernel::build(self))
            .as_ref()
            .map_err(Clone::clone)
    }

    /// Density of `m` with respect to Lebesgue measure.
    pub fn reference_density(&self, x: f64) -> Result<f64> {
        if let Some(a) = self.potential.quadratic_rate() {
            return Ok((a / std::f64::consts::PI).sqrt() * (-a * x * x).exp());
        }
        if self.potential == Potential::CircleFlat {
            return Ok(1.0 / TAU);
        }
        let t = self.table()?;
        Ok((-self.u(x) + t.log_norm_shift).exp() / t.z)
    }

    /// One draw from `m`.
    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        if let Some(a) = self.potential.quadratic_rate() {
            let n = Normal::new(0.0, (0.5 / a).sqrt()).expect("positive sd");
            return Ok(n.sample(rng));
        }
        if self.potential == Potential::CircleFlat {
            return Ok(rng.random::<f64>() * TAU);
        }
        Ok(self.table()?.sample(rng.random::<f64>()))
    }

    /// `n` i.i.d. draws from the reference measure.
    pub fn sample_reference<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<f64>> {
        (0..n).map(|_| self.sample_one(rng)).collect()
    }

    /// Ultracontractivity sufficient conditions (1)-(3) checked up to `|x| <= check`.
    pub fn ultracontractivity(&self, check: f64) -> UltracontractivityReport {
        if self.state_space() == StateSpace::Circle {
            return UltracontractivityReport {
                convex_at_infinity: true,
                upper_bound_c: f64::NAN,
                bounded_above: true,
                integrable_tail: true,
                satisfied: true,
            };
        }
        let p = &self.potential;
        let convex_at_infinity = p.second_derivative(check) > 0.0 && p.second_derivative(-check) > 0.0;
        let grid: Vec<f64> = (0..=2000).map(|k| -check + 2.0 * check * k as f64 / 2000.0).collect();
        let upper = grid
            .iter()
            .map(|&x| p.second_derivative(x) - 0.5 * p.derivative(x).powi(2))
            .fold(f64::NEG_INFINITY, f64::max);
        // The supremum is attained inside the grid when the expression falls off at the edges.
        let edge = |x: f64| p.second_derivative(x) - 0.5 * p.derivative(x).powi(2);
        let bounded_above = upper.is_finite() && edge(check) < upper.max(0.0) + 1.0 && edge(-check) < upper.max(0.0) + 1.0;
        let tail = |lo: f64, hi: f64| -> f64 {
            let n = 4000;
            let h = (hi - lo) / n as f64;
            (0..n)
                .map(|k| {
                    let x = lo + (k as f64 + 0.5) * h;
                    h * (1.0 / p.derivative(x).abs() + 1.0 / p.derivative(-x).abs())
                })
                .sum()
        };
        let start = (check / 4.0).max(1.0);
        let (first, second) = (tail(start, check / 2.0), tail(check / 2.0, check));
        let integrable_tail = first.is_finite() && second.is_finite() && second < 0.25 * first.max(1e-300);
        UltracontractivityReport {
            convex_at_infinity,
            upper_bound_c: upper,
            bounded_above,
            integrable_tail,
            satisfied: convex_at_infinity && bounded_above && integrable_tail,
        }
    }
}

/// Tabulated `e^{-U}` with cumulative distribution for inverse-CDF sampling
/// and quadrature against `m`.
#[derive(Debug, Clone)]
pub(crate) struct ReferenceTable {
    pub xs: Vec<f64>,
    pub cdf: Vec<f64>,
    /// Quadrature weights summing to one.
    pub weights: Vec<f64>,
    pub z: f64,
    pub log_norm_shift: f64,
}

impl ReferenceTable {
    fn build(spec: &PotentialSpec) -> Result<Self> {
        let n = 8192;
        let (lo, hi) = match spec.state_space() {
            StateSpace::Circle => (0.0, TAU),
            StateSpace::Line => {
                let l = spec.line_range()?;
                (-l, l)
            }
        };
        let h = (hi - lo) / n as f64;
        let xs: Vec<f64> = (0..=n).map(|k| lo + k as f64 * h).collect();
        let umin = xs.iter().map(|&x| spec.u(x)).fold(f64::INFINITY, f64::min);
        let dens: Vec<f64> = xs.iter().map(|&x| (-(spec.u(x) - umin)).exp()).collect();
        let mut cdf = vec![0.0; n + 1];
        for k in 1..=n {
            cdf[k] = cdf[k - 1] + 0.5 * h * (dens[k] + dens[k - 1]);
        }
        let z = cdf[n];
        if !(z.is_finite() && z > 0.0) {
            return Err(Error::setup("reference measure could not be normalised"));
        }
        cdf.iter_mut().for_each(|c| *c /= z);
        let mut weights: Vec<f64> = dens.iter().map(|d| d * h / z).collect();
        weights[0] *= 0.5;
        weights[n] *= 0.5;
        Ok(ReferenceTable {
            xs,
            cdf,
            weights,
            z,
            log_norm_shift: umin,
        })
    }

    fn sample(&self, u: f64) -> f64 {
        let k = self.cdf.partition_point(|&c| c < u).clamp(1, self.xs.len() - 1);
        let (c0, c1) = (self.cdf[k - 1], self.cdf[k]);
        let frac = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
        self.xs[k - 1] + frac * (self.xs[k] - self.xs[k - 1])
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.xs.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc::Estimate;
    use crate::rng::stream;

    #[test]
    fn derivatives_match_finite_differences() {
        let pots = [
            Potential::Quadratic { a: 1.3 },
            Potential::DoubleWell,
            Potential::Polynomial { coeffs: vec![0.1, -0.2, 0.5, 0.0, 0.3] },
            Potential::CircleCosine { k: 0.7 },
        ];
        for p in &pots {
            for &x in &[-1.7, -0.2, 0.4, 2.1] {
                let h = 1e-5;
                let d = (p.value(x + h) - p.value(x - h)) / (2.0 * h);
                let d2 = (p.derivative(x + h) - p.derivative(x - h)) / (2.0 * h);
                assert!((d - p.derivative(x)).abs() < 1e-6, "{p:?} at {x}");
                assert!((d2 - p.second_derivative(x)).abs() < 1e-5, "{p:?} at {x}");
            }
        }
    }

    #[test]
    fn quadratic_draws_match_half_variance_normal() {
        // m ∝ e^{-x^2} is N(0, 1/2): E X^2 = 1/2, E X^4 = 3/4.
        let spec = PotentialSpec::ou();
        let xs = spec.sample_reference(40_000, &mut stream(1, "t", 0)).unwrap();
        let m1 = Estimate::from_samples(&xs);
        let m2 = Estimate::from_samples(&xs.iter().map(|x| x * x).collect::<Vec<_>>());
        let m4 = Estimate::from_samples(&xs.iter().map(|x| x.powi(4)).collect::<Vec<_>>());
        assert!(m1.value.abs() < 4.0 * m1.stderr);
        assert!((m2.value - 0.5).abs() < 4.0 * m2.stderr);
        assert!((m4.value - 0.75).abs() < 4.0 * m4.stderr);
    }

    #[test]
    fn tabulated_sampler_matches_moments() {
        let spec = PotentialSpec::new(Potential::DoubleWell).unwrap();
        let xs = spec.sample_reference(40_000, &mut stream(2, "t", 0)).unwrap();
        let m1 = Estimate::from_samples(&xs);
        assert!(m1.value.abs() < 4.0 * m1.stderr);
        let m2 = Estimate::from_samples(&xs.iter().map(|x| x * x).collect::<Vec<_>>());
        let exact = spec.table().unwrap().integrate(|x| x * x);
        assert!((m2.value - exact).abs() < 4.0 * m2.stderr, "{} vs {exact}", m2.value);
    }

    #[test]
    fn table_quadrature_reproduces_gaussian_moments() {
        // A negligible quartic term routes x^2 through the table.
        let spec = PotentialSpec::new(Potential::Polynomial { coeffs: vec![0.0, 0.0, 1.0, 0.0, 1e-300] }).unwrap();
        let t = spec.table().unwrap();
        assert!((t.integrate(|_| 1.0) - 1.0).abs() < 1e-10);
        assert!((t.integrate(|x| x * x) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn circle_flat_is_uniform() {
        let spec = PotentialSpec::circle_flat();
        let mut xs = spec.sample_reference(20_000, &mut stream(3, "t", 0)).unwrap();
        assert!(xs.iter().all(|&x| (0.0..TAU).contains(&x)));
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        let ks = xs
            .iter()
            .enumerate()
            .map(|(k, &x)| ((k + 1) as f64 / n - x / TAU).abs().max((x / TAU - k as f64 / n).abs()))
            .fold(0.0, f64::max);
        assert!(ks < 1.63 / n.sqrt(), "KS statistic {ks}");
    }

    #[test]
    fn non_normalisable_potential_is_rejected() {
        assert!(PotentialSpec::new(Potential::Polynomial { coeffs: vec![0.0, 1.0] }).is_err());
        assert!(PotentialSpec::new(Potential::Polynomial { coeffs: vec![0.0, 0.0, -1.0] }).is_err());
        assert!(PotentialSpec::new(Potential::Quadratic { a: 0.0 }).is_err());
    }

    #[test]
    fn ultracontractivity_conditions() {
        let dw = PotentialSpec::new(Potential::DoubleWell).unwrap().ultracontractivity(50.0);
        assert!(dw.satisfied, "{dw:?}");
        // 1/U' = 1/(2x) is not integrable at infinity.
        let ou = PotentialSpec::ou().ultracontractivity(50.0);
        assert!(ou.convex_at_infinity && !ou.integrable_tail && !ou.satisfied);
        assert!(PotentialSpec::circle_flat().ultracontractivity(1.0).satisfied);
    }
}
