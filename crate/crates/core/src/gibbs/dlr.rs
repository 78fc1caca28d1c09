//! DLR consistency checks and single-site conditional laws.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::interaction::Interaction;
use super::sampler::{hamiltonian, sample_gibbs_many, split_chain_check, ConvergenceReport, SamplerParams};
use crate::dynamics::PotentialSpec;
use crate::error::{Error, Result};
use crate::lattice::{Configuration, Site, StateSpace, Volume};
use crate::mc::Estimate;
use crate::rng::derive_seed;

/// Local observables of `x_sub` used by the DLR comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestFunction {
    Mean,
    SecondMoment,
    Tanh,
    Cos,
    Sin,
    /// Average of `x_i x_j` over consecutive sites of the subvolume.
    NeighbourProduct,
}

impl TestFunction {
    pub fn battery(space: StateSpace, sub_len: usize) -> Vec<TestFunction> {
        let mut out = match space {
            StateSpace::Line => vec![TestFunction::Mean, TestFunction::SecondMoment, TestFunction::Tanh],
            StateSpace::Circle => vec![TestFunction::Cos, TestFunction::Sin],
        };
        if sub_len >= 2 && space == StateSpace::Line {
            out.push(TestFunction::NeighbourProduct);
        }
        out
    }

    pub fn apply(&self, values: &[f64]) -> f64 {
        let n = values.len().max(1) as f64;
        let avg = |f: fn(f64) -> f64| values.iter().map(|&v| f(v)).sum::<f64>() / n;
        match self {
            TestFunction::Mean => avg(|v| v),
            TestFunction::SecondMoment => avg(|v| v * v),
            TestFunction::Tanh => avg(f64::tanh),
            TestFunction::Cos => avg(f64::cos),
            TestFunction::Sin => avg(f64::sin),
            TestFunction::NeighbourProduct => {
                let pairs = values.len().saturating_sub(1).max(1) as f64;
                values.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / pairs
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DlrParams {
    pub n_outer: usize,
    pub n_inner: usize,
    pub sampler: SamplerParams,
}

impl Default for DlrParams {
    fn default() -> Self {
        DlrParams {
            n_outer: 400,
            n_inner: 32,
            sampler: SamplerParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DlrLine {
    pub function: TestFunction,
    /// `∫ f dν_big`.
    pub direct: Estimate,
    /// `∫∫ f dν_{sub,z} dν_big(z)`.
    pub two_stage: Estimate,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DlrReport {
    pub lines: Vec<DlrLine>,
    pub max_z: f64,
    pub convergence: ConvergenceReport,
}

/// Compares `ν_big` with its DLR decomposition on `sub` for the default
/// battery of local test functions.
pub fn dlr_test(phi: &Interaction, pot: &PotentialSpec, big: &Volume, sub: &Volume, params: &DlrParams, seed: u64) -> Result<DlrReport> {
    if sub.is_empty() || !sub.is_subset(big) {
        return Err(Error::setup("the DLR subvolume must be a nonempty subset of the outer volume"));
    }
    if params.n_outer < 2 || params.n_inner == 0 {
        return Err(Error::setup("dlr needs n_outer >= 2 and n_inner >= 1"));
    }
    let reach = phi.reach(sub);
    if !reach.is_subset(big) {
        return Err(Error::coverage(format!(
            "terms meeting the subvolume reach {} sites outside the outer volume",
            reach.difference(big).len()
        )));
    }
    let phi_big = phi.restricted(big);
    let convergence = split_chain_check(&phi_big, pot, big, &params.sampler, params.n_outer.min(200), derive_seed(seed, "dlr/split", 0))?;
    let battery = TestFunction::battery(pot.state_space(), sub.len());
    let eval = |x: &Configuration| -> Result<Vec<f64>> {
        let v = x.values_on(sub)?;
        Ok(battery.iter().map(|f| f.apply(&v)).collect())
    };

    let direct_draws = sample_gibbs_many(&phi_big, pot, big, None, &params.sampler, params.n_outer, seed, "dlr/direct")?;
    let outer = sample_gibbs_many(&phi_big, pot, big, None, &params.sampler, params.n_outer, seed, "dlr/outer")?;
    let direct: Vec<Vec<f64>> = direct_draws.iter().map(eval).collect::<Result<_>>()?;
    let mut two_stage: Vec<Vec<f64>> = Vec::with_capacity(outer.len());
    for (k, z) in outer.iter().enumerate() {
        let inner = sample_gibbs_many(&phi_big, pot, sub, Some(z), &params.sampler, params.n_inner, derive_seed(seed, "dlr/inner", k as u64), "dlr/inner")?;
        let mut mean = vec![0.0; battery.len()];
        for x in &inner {
            for (m, v) in mean.iter_mut().zip(eval(x)?) {
                *m += v / inner.len() as f64;
            }
        }
        two_stage.push(mean);
    }
    let column = |rows: &[Vec<f64>], j: usize| Estimate::from_samples(&rows.iter().map(|r| r[j]).collect::<Vec<_>>());
    let lines: Vec<DlrLine> = battery
        .iter()
        .enumerate()
        .map(|(j, &function)| {
            let (d, t) = (column(&direct, j), column(&two_stage, j));
            DlrLine {
                function,
                direct: d,
                two_stage: t,
                z: d.z_score(&t),
            }
        })
        .collect();
    let max_z = lines.iter().map(|l| l.z).fold(0.0, f64::max);
    Ok(DlrReport { lines, max_z, convergence })
}

/// Tabulated CDF of a one-dimensional law.
#[derive(Debug, Clone)]
pub struct QuadratureCdf {
    xs: Vec<f64>,
    cdf: Vec<f64>,
}

impl QuadratureCdf {
    pub fn cdf(&self, x: f64) -> f64 {
        let k = self.xs.partition_point(|&v| v < x);
        if k == 0 {
            return 0.0;
        }
        if k >= self.xs.len() {
            return 1.0;
        }
        let (x0, x1) = (self.xs[k - 1], self.xs[k]);
        let w = (x - x0) / (x1 - x0);
        self.cdf[k - 1] + w * (self.cdf[k] - self.cdf[k - 1])
    }
}

/// Law of `x_site` under `ν_{{site}, z}` by trapezoidal quadrature of
/// `e^{-β₀ h(x, z)} dm(x)`.
pub fn conditional_cdf(phi: &Interaction, pot: &PotentialSpec, site: &Site, boundary: &Configuration) -> Result<QuadratureCdf> {
    const NODES: usize = 20_001;
    let (lo, hi) = match pot.state_space() {
        StateSpace::Circle => (0.0, TAU),
        StateSpace::Line => {
            let l = pot.line_range()?;
            (-l, l)
        }
    };
    let vol = {
        let mut v = Volume::empty();
        v.insert(site.clone());
        v
    };
    let h = (hi - lo) / (NODES - 1) as f64;
    let xs: Vec<f64> = (0..NODES).map(|k| lo + h * k as f64).collect();
    let mut logd = Vec::with_capacity(NODES);
    for &x in &xs {
        let xv = Configuration::new(pot.state_space(), [(site.clone(), x)]);
        let e = hamiltonian(phi, &vol, &xv, Some(boundary))?;
        logd.push(-phi.beta0() * e + pot.reference_density(x)?.ln());
    }
    let shift = logd.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let dens: Vec<f64> = logd.iter().map(|l| (l - shift).exp()).collect();
    let mut cdf = vec![0.0; NODES];
    for k in 1..NODES {
        cdf[k] = cdf[k - 1] + 0.5 * h * (dens[k] + dens[k - 1]);
    }
    let z = cdf[NODES - 1];
    if !(z > 0.0 && z.is_finite()) {
        return Err(Error::numerical("conditional law could not be normalised"));
    }
    cdf.iter_mut().for_each(|c| *c /= z);
    Ok(QuadratureCdf { xs, cdf })
}

/// One-sample Kolmogorov–Smirnov result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsReport {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> KsReport {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let nf = n as f64;
    let d = s
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / nf).max((i + 1) as f64 / nf - f)
        })
        .fold(0.0, f64::max);
    KsReport {
        statistic: d,
        p_value: kolmogorov_pvalue(d, n),
        n,
    }
}

/// Asymptotic Kolmogorov tail with the Stephens small-sample correction.
pub fn kolmogorov_pvalue(d: f64, n: usize) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// KS comparison of `n` Metropolis draws of `ν_{{site}, z}` with quadrature.
pub fn conditional_ks(phi: &Interaction, pot: &PotentialSpec, site: &Site, boundary: &Configuration, n: usize, params: &SamplerParams, seed: u64) -> Result<KsReport> {
    let cdf = conditional_cdf(phi, pot, site, boundary)?;
    let mut vol = Volume::empty();
    vol.insert(site.clone());
    let draws = sample_gibbs_many(phi, pot, &vol, Some(boundary), params, n, seed, "conditional")?;
    let xs: Vec<f64> = draws.iter().map(|x| x.get(site).expect("site is sampled")).collect();
    Ok(ks_test(&xs, |x| cdf.cdf(x)))
}
