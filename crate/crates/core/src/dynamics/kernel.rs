//! Free transition kernel `p_t(x, y)`, a density with respect to `m`.

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::potential::{Potential, PotentialSpec};
use crate::error::{Error, Result};
use crate::lattice::StateSpace;

const LINE_GRID: usize = 600;
const CIRCLE_GRID: usize = 512;

/// `p_t(x, y)` for the free dynamics of `spec`.
pub fn free_kernel(spec: &PotentialSpec, t: f64, x: f64, y: f64) -> Result<f64> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::setup(format!("kernel time must be positive, got {t}")));
    }
    if let Some(a) = spec.potential.quadratic_rate() {
        return Ok(ou_kernel(a, t, x, y));
    }
    if spec.potential == Potential::CircleFlat {
        return Ok(circle_heat_kernel(t, y - x));
    }
    spec.spectral()?.eval(t, x, y)
}

/// Ornstein-Uhlenbeck kernel for `U = a x^2` relative to `N(0, 1/(2a))`.
pub fn ou_kernel(a: f64, t: f64, x: f64, y: f64) -> f64 {
    let rho = (-a * t).exp();
    let one_m = -(-2.0 * a * t).exp_m1();
    let var = 0.5 / a;
    let q = rho * rho * x * x - 2.0 * rho * x * y + rho * rho * y * y;
    (-q / (2.0 * var * one_m)).exp() / one_m.sqrt()
}

/// Heat kernel of `dX = dB` on the circle relative to the uniform law.
pub fn circle_heat_kernel(t: f64, delta: f64) -> f64 {
    if t >= 0.5 {
        let mut sum = 1.0;
        for n in 1..200 {
            let term = (-(n * n) as f64 * t / 2.0).exp();
            if term < 1e-18 {
                break;
            }
            sum += 2.0 * term * (n as f64 * delta).cos();
        }
        sum
    } else {
        let d = delta.rem_euclid(TAU);
        let mut sum = 0.0;
        for k in -6..=6 {
            let z = d + TAU * k as f64;
            sum += (-z * z / (2.0 * t)).exp();
        }
        sum * TAU / (2.0 * PI * t).sqrt()
    }
}

/// Eigen-decomposition of a reversible birth-death discretisation of the
/// generator `L f = f''/2 - U' f'/2`, reflecting at the ends of the
/// interval (periodic on the circle).
#[derive(Debug, Clone)]
pub(crate) struct SpectralKernel {
    nodes: Vec<f64>,
    periodic: bool,
    /// Eigenvalues in decreasing order (the first is zero).
    lambdas: Vec<f64>,
    /// `phi[n][i]`: `n`-th eigenfunction at node `i`, normalised in `L^2(π)`.
    phi: Vec<Vec<f64>>,
}

impl SpectralKernel {
    pub(crate) fn build(spec: &PotentialSpec) -> Result<Self> {
        let periodic = spec.state_space() == StateSpace::Circle;
        let (nodes, h) = if periodic {
            let h = TAU / CIRCLE_GRID as f64;
            ((0..CIRCLE_GRID).map(|i| i as f64 * h).collect::<Vec<_>>(), h)
        } else {
            let l = spec.line_range()?;
            let h = 2.0 * l / (LINE_GRID - 1) as f64;
            ((0..LINE_GRID).map(|i| -l + i as f64 * h).collect(), h)
        };
        let n = nodes.len();
        let u: Vec<f64> = nodes.iter().map(|&x| spec.u(x)).collect();
        let umin = u.iter().copied().fold(f64::INFINITY, f64::min);
        let c = 0.5 / (h * h);
        let mut s = DMatrix::<f64>::zeros(n, n);
        let neighbours = |i: usize| -> [Option<usize>; 2] {
            if periodic {
                [Some((i + n - 1) % n), Some((i + 1) % n)]
            } else {
                [i.checked_sub(1), (i + 1 < n).then_some(i + 1)]
            }
        };
        for i in 0..n {
            for j in neighbours(i).into_iter().flatten() {
                s[(i, j)] = c;
                s[(i, i)] -= c * (-(u[j] - u[i]) / 2.0).exp();
            }
        }
        let eig = SymmetricEigen::new(s);
        let mut pi: Vec<f64> = u.iter().map(|&v| (-(v - umin)).exp()).collect();
        let z: f64 = pi.iter().sum();
        pi.iter_mut().for_each(|p| *p /= z);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let lambdas: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k].min(0.0)).collect();
        if lambdas[0].abs() > 1e-6 * lambdas[n - 1].abs().max(1.0) {
            return Err(Error::numerical(format!(
                "generator grid solve did not produce a zero eigenvalue (top = {:.3e})",
                lambdas[0]
            )));
        }
        let phi: Vec<Vec<f64>> = order
            .iter()
            .map(|&k| (0..n).map(|i| eig.eigenvectors[(i, k)] / pi[i].sqrt()).collect())
            .collect();
        if phi[0].iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical("non-finite eigenfunction in generator grid solve"));
        }
        Ok(SpectralKernel {
            nodes,
            periodic,
            lambdas,
            phi,
        })
    }

    pub(crate) fn gap(&self) -> f64 {
        -self.lambdas[1]
    }

    fn locate(&self, x: f64) -> (usize, usize, f64) {
        let n = self.nodes.len();
        let h = self.nodes[1] - self.nodes[0];
        if self.periodic {
            let s = x.rem_euclid(TAU) / h;
            let i = (s.floor() as usize) % n;
            (i, (i + 1) % n, s - s.floor())
        } else {
            let s = ((x - self.nodes[0]) / h).clamp(0.0, (n - 1) as f64);
            let i = (s.floor() as usize).min(n - 2);
            (i, i + 1, s - i as f64)
        }
    }

    pub(crate) fn eval(&self, t: f64, x: f64, y: f64) -> Result<f64> {
        let (xi, xj, xw) = self.locate(x);
        let (yi, yj, yw) = self.locate(y);
        let mut sum = 0.0;
        for (lam, ph) in self.lambdas.iter().zip(&self.phi) {
            let decay = (lam * t).exp();
            if decay < 1e-17 {
                break;
            }
            let fx = ph[xi] * (1.0 - xw) + ph[xj] * xw;
            let fy = ph[yi] * (1.0 - yw) + ph[yj] * yw;
            sum += decay * fx * fy;
        }
        if !sum.is_finite() {
            return Err(Error::numerical(format!("kernel evaluation overflowed at t = {t}")));
        }
        Ok(sum)
    }
}

/// Spectral gap of the free semigroup: the declared hint or the grid estimate.
pub fn spectral_gap(spec: &PotentialSpec) -> Result<f64> {
    match spec.gap_hint {
        Some(g) => Ok(g),
        None => Ok(spec.spectral()?.gap()),
    }
}

/// Sup-norm distance `||p_T - 1||` on a compact grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupDistance {
    pub value: f64,
    /// Both arguments range over `[-half_width, half_width]` (the whole circle when periodic).
    pub half_width: f64,
    pub points_per_axis: usize,
    pub argmax: (f64, f64),
}

/// Default half-width of the sup grid on the line: one stationary standard deviation.
pub fn default_half_width(spec: &PotentialSpec) -> Result<f64> {
    spec.stationary_std()
}

pub fn kernel_sup_distance(spec: &PotentialSpec, t: f64) -> Result<SupDistance> {
    let hw = match spec.state_space() {
        StateSpace::Line => default_half_width(spec)?,
        StateSpace::Circle => PI,
    };
    kernel_sup_distance_on(spec, t, hw, 81)
}

pub fn kernel_sup_distance_on(spec: &PotentialSpec, t: f64, half_width: f64, points: usize) -> Result<SupDistance> {
    let points = points.max(2);
    let axis: Vec<f64> = match spec.state_space() {
        StateSpace::Line => (0..points)
            .map(|k| -half_width + 2.0 * half_width * k as f64 / (points - 1) as f64)
            .collect(),
        StateSpace::Circle => (0..points).map(|k| TAU * k as f64 / points as f64).collect(),
    };
    let mut best = SupDistance {
        value: 0.0,
        half_width,
        points_per_axis: points,
        argmax: (axis[0], axis[0]),
    };
    for &x in &axis {
        for &y in &axis {
            let d = (free_kernel(spec, t, x, y)? - 1.0).abs();
            if d > best.value {
                best.value = d;
                best.argmax = (x, y);
            }
        }
    }
    Ok(best)
}

/// Least-squares slope of `-log ||p_T - 1||` over `n` equally spaced `T` in `[t_lo, t_hi]`.
pub fn fit_decay_rate(spec: &PotentialSpec, t_lo: f64, t_hi: f64, n: usize) -> Result<f64> {
    let mut pts = Vec::with_capacity(n);
    for k in 0..n {
        let t = t_lo + (t_hi - t_lo) * k as f64 / (n - 1).max(1) as f64;
        let d = kernel_sup_distance(spec, t)?.value;
        if d > 0.0 && d.is_finite() {
            pts.push((t, d.ln()));
        }
    }
    if pts.len() < 2 {
        return Err(Error::numerical("too few positive distances to fit a decay rate"));
    }
    let m = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (mx, my) = (sx / m, sy / m);
    let (num, den) = pts
        .iter()
        .fold((0.0, 0.0), |a, p| (a.0 + (p.0 - mx) * (p.1 - my), a.1 + (p.0 - mx).powi(2)));
    Ok(-num / den)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quartic_gaussian() -> PotentialSpec {
        // Same law as x^2, routed through the grid solver.
        PotentialSpec::new(Potential::Polynomial { coeffs: vec![0.0, 0.0, 1.0, 0.0, 1e-300] }).unwrap()
    }

    #[test]
    fn ou_kernel_tends_to_one() {
        for &(x, y) in &[(0.0, 0.0), (0.5, -0.7), (1.2, 1.1)] {
            assert!((ou_kernel(1.0, 30.0, x, y) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn ou_kernel_is_normalised_and_symmetric() {
        let spec = PotentialSpec::ou();
        let t = spec.table().unwrap();
        for &x in &[-1.0, 0.0, 0.8] {
            let total = t.integrate(|y| ou_kernel(1.0, 0.3, x, y));
            assert!((total - 1.0).abs() < 1e-6, "{total}");
        }
        assert_eq!(ou_kernel(1.0, 0.4, 0.3, -0.9), ou_kernel(1.0, 0.4, -0.9, 0.3));
    }

    #[test]
    fn circle_kernel_forms_agree_and_normalise() {
        for &t in &[0.3, 0.5, 0.8] {
            for &d in &[0.0, 1.0, 3.0] {
                let series: f64 = 1.0 + (1..400).map(|n| 2.0 * (-(n * n) as f64 * t / 2.0).exp() * (n as f64 * d).cos()).sum::<f64>();
                assert!((circle_heat_kernel(t, d) - series).abs() < 1e-9, "t {t} d {d}");
            }
        }
        let n = 2000;
        let mean: f64 = (0..n).map(|k| circle_heat_kernel(0.1, TAU * k as f64 / n as f64)).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 1e-9);
    }

    #[test]
    fn grid_solver_matches_ou_closed_form() {
        let spec = quartic_gaussian();
        let sk = spec.spectral().unwrap();
        assert!((sk.gap() - 1.0).abs() < 0.01, "gap {}", sk.gap());
        for &t in &[0.5, 1.0, 2.0] {
            for &(x, y) in &[(0.0, 0.0), (0.4, -0.3), (-0.7, 0.9)] {
                let num = free_kernel(&spec, t, x, y).unwrap();
                let exact = ou_kernel(1.0, t, x, y);
                assert!((num - exact).abs() < 0.01 * exact.max(1.0), "t {t} ({x},{y}): {num} vs {exact}");
            }
        }
    }

    #[test]
    fn grid_solver_on_circle_matches_heat_kernel() {
        let spec = PotentialSpec::new(Potential::CircleCosine { k: 0.0 }).unwrap();
        for &(t, d) in &[(0.5, 0.3), (1.0, 2.0), (2.0, 3.1)] {
            let num = free_kernel(&spec, t, 1.0, 1.0 + d).unwrap();
            assert!((num - circle_heat_kernel(t, d)).abs() < 1e-3, "t {t}");
        }
        assert!((spec.spectral().unwrap().gap() - 0.5).abs() < 1e-3);
    }

    #[test]
    fn double_well_kernel_is_reversible_and_normalised() {
        let spec = PotentialSpec::new(Potential::DoubleWell).unwrap();
        let a = free_kernel(&spec, 0.7, -0.8, 1.1).unwrap();
        let b = free_kernel(&spec, 0.7, 1.1, -0.8).unwrap();
        assert!((a - b).abs() < 1e-9 * a.max(1.0));
        let table = spec.table().unwrap();
        let total = table.integrate(|y| free_kernel(&spec, 0.7, 0.3, y).unwrap());
        assert!((total - 1.0).abs() < 1e-3, "{total}");
        assert!(spectral_gap(&spec).unwrap() > 0.0);
    }

    #[test]
    fn decay_rates_match_spectral_gaps() {
        let ou = fit_decay_rate(&PotentialSpec::ou(), 1.0, 5.0, 41).unwrap();
        assert!((ou - 1.0).abs() < 0.1, "OU rate {ou}");
        let circle = fit_decay_rate(&PotentialSpec::circle_flat(), 1.0, 5.0, 41).unwrap();
        assert!((circle - 0.5).abs() < 0.05, "circle rate {circle}");
    }

    #[test]
    fn sup_distance_blows_up_at_short_times() {
        let spec = PotentialSpec::ou();
        let short = kernel_sup_distance(&spec, 1e-3).unwrap().value;
        let shorter = kernel_sup_distance(&spec, 1e-4).unwrap().value;
        assert!(short > 10.0 && shorter > 2.0 * short, "{short} {shorter}");
    }
}
