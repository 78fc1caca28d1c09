//! Acceptance suite: one line per criterion, nonzero exit if any fails.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use gibbsdyn::dynamics::{fit_decay_rate, simulate, simulate_with, BoundedFn, BuiltinDrift, DriftSpec, PathBundle, Potential, PotentialSpec};
use gibbsdyn::expansion::{interaction_terms, kp_check, kp_lambda_star, reconstruct_density, weight_bound_fit, Instance, WeightTable};
use gibbsdyn::gibbs::{
    conditional_ks, dlr_test, dobrushin_check, quasilocality_probe, BiSpaceInteraction, ConditionalParams, DlrParams, ExplicitDynamics,
    Interaction, PairForm, SamplerParams, TermTemplate,
};
use gibbsdyn::girsanov::{density, girsanov_weight, psi_terms, DensityMethod};
use gibbsdyn::lattice::{Configuration, Site, StateSpace, Volume};
use gibbsdyn::mc::replicas;
use gibbsdyn::{Estimate, McParams};
use nalgebra::{DMatrix, SymmetricEigen};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn line(vol: &Volume, v: &[f64]) -> Configuration {
    Configuration::new(StateSpace::Line, vol.iter().cloned().zip(v.iter().copied()))
}

fn markov(beta: f64, coupling: f64, field: f64, range: i64) -> DriftSpec {
    DriftSpec::from_builtin(
        beta,
        &BuiltinDrift::Markov {
            coupling,
            field,
            range,
            link: BoundedFn::Tanh,
        },
        1,
    )
    .unwrap()
}

fn free() -> DriftSpec {
    DriftSpec::from_builtin(0.0, &BuiltinDrift::Constant { c: 0.0, range: 0 }, 1).unwrap()
}

fn nn_tanh(beta0: f64, coupling: f64, region: &Volume) -> Interaction {
    let t = TermTemplate::Pair {
        coupling,
        distance: 1,
        form: PairForm::Tanh,
        sup_norm: None,
    };
    Interaction::from_templates(beta0, &[t], region).unwrap()
}

/// `log M` rebuilt from the raw path values for `U = x²` and the tanh Markov drift.
fn log_m_by_hand(path: &PathBundle, beta: f64, coupling: f64, field: f64, range: i64) -> f64 {
    let sites: Vec<Site> = path.sites().iter().cloned().collect();
    let xs: Vec<&[f64]> = sites.iter().map(|s| path.lifted(s).unwrap()).collect();
    let dt = path.dt();
    let n = sites.len() as i64;
    let mut log_m = 0.0;
    for i in range..n - range {
        let i = i as usize;
        for k in 0..path.steps() {
            let xi = xs[i][k];
            let mut b = field * xi.tanh();
            for o in 1..=range as usize {
                b += coupling * ((xs[i - o][k] - xi).tanh() + (xs[i + o][k] - xi).tanh());
            }
            let db = xs[i][k + 1] - xi + xi * dt;
            log_m += beta * b * db - 0.5 * beta * beta * b * b * dt;
        }
    }
    log_m
}

fn girsanov_identity() -> Outcome {
    let (beta, coupling, field) = (0.2, 0.8, 0.5);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for (n, range) in [(1, 0), (2, 0), (3, 1)] {
        let vol = Volume::segment(0, n - 1);
        let drift = markov(beta, coupling, field, range);
        for seed in 0..40 {
            let x0 = line(&vol, &[0.4, -0.3, 0.1][..n as usize]);
            let path = simulate(&free(), &PotentialSpec::ou(), &vol, &x0, 1.0, 0.01, seed).unwrap();
            let sum_psi: f64 = psi_terms(&drift, &vol, (0.0, 1.0), &path).unwrap().iter().map(|t| t.value).sum();
            let hand = log_m_by_hand(&path, beta, coupling, field, range);
            let lib = girsanov_weight(&drift, &vol, &path).unwrap();
            for log_m in [hand, lib] {
                worst = worst.max(((-sum_psi).exp() - log_m.exp()).abs() / log_m.exp());
            }
            count += 1;
        }
    }
    check(worst < 1e-10, format!("{count} paths, max relative error {worst:.2e}"))
}

fn martingale_normalisation() -> Outcome {
    let vol = Volume::segment(0, 0);
    let mut worst = 0.0_f64;
    let mut parts = Vec::new();
    for beta in [0.1, 0.3] {
        let drift = markov(beta, 0.0, 1.0, 0);
        let x0 = line(&vol, &[0.2]);
        let ws = replicas(100_000, 1024, 17, "acceptance/martingale", |rng| {
            let p = simulate_with(&free(), &PotentialSpec::ou(), &vol, &x0, 1.0, 0.01, rng)?;
            Ok(girsanov_weight(&drift, &vol, &p)?.exp())
        })
        .unwrap();
        let e = Estimate::from_samples(&ws);
        let z = (e.value - 1.0).abs() / e.stderr;
        worst = worst.max(z);
        parts.push(format!("β={beta}: {:.5} ± {:.5}", e.value, e.stderr));
    }
    check(worst < 4.0, format!("{} (max z {worst:.2})", parts.join(", ")))
}

/// Ratio of the `N(ρx + βc(1-ρ), v)` and `N(ρx, v)` densities at `y`.
fn shifted_ou_ratio(beta: f64, c: f64, t: f64, x: f64, y: f64) -> f64 {
    let rho = (-t).exp();
    let v = (1.0 - rho * rho) / 2.0;
    let shifted = rho * x + beta * c * (1.0 - rho);
    (-((y - shifted).powi(2) - (y - rho * x).powi(2)) / (2.0 * v)).exp()
}

fn density_oracle() -> Outcome {
    let vol = Volume::segment(0, 0);
    let (beta, c, t) = (0.5, 1.0, 1.0);
    let drift = DriftSpec::from_builtin(beta, &BuiltinDrift::Constant { c, range: 0 }, 1).unwrap();
    let mc = McParams::with_samples(8000);
    let probes = [(0.0, 0.0), (0.5, -0.3), (-0.4, 0.6), (1.0, 1.2), (-0.8, -1.0)];
    let mut worst = 0.0_f64;
    for (i, &(x, y)) in probes.iter().enumerate() {
        let d = density(&drift, &PotentialSpec::ou(), &vol, &line(&vol, &[x]), &line(&vol, &[y]), t, 0.004, &mc, 100 + i as u64).unwrap();
        if d.method != DensityMethod::BridgeMc {
            return Err(format!("probe {i} used {}", d.method));
        }
        worst = worst.max(d.estimate().z_score(&Estimate::exact(shifted_ou_ratio(beta, c, t, x, y))));
    }
    check(worst < 4.0, format!("5 probes, max z {worst:.2}"))
}

fn expansion_identity() -> Outcome {
    let vol = Volume::segment(0, 0);
    let probes = [(0.5, -0.2), (-0.3, 0.4), (0.0, 0.9)];
    let mc = McParams::with_samples(8000);
    let (mut z_rec, mut z_log) = (0.0_f64, 0.0_f64);
    for beta in [0.05, 0.1] {
        let inst = Instance::new(markov(beta, 0.0, 2.0, 0), PotentialSpec::ou(), vol.clone(), 2.0, 0.01, 8).with_slices(2);
        let polymers = inst.polymers().map_err(|e| e.to_string())?.len();
        if polymers != 15 {
            return Err(format!("expected the 15 polymers of one site on two slices, got {polymers}"));
        }
        for (k, &(x, y)) in probes.iter().enumerate() {
            let (x, y) = (line(&vol, &[x]), line(&vol, &[y]));
            let seed = 200 + k as u64;
            let table = WeightTable::estimate(&inst, &x, &y, &mc, seed).unwrap();
            let direct = density(&inst.drift, &inst.pot, &vol, &x, &y, 2.0, 0.01, &mc, seed + 50).unwrap().estimate();
            z_rec = z_rec.max(reconstruct_density(&table).unwrap().z_score(&direct));
            z_log = z_log.max(interaction_terms(&table, 8).unwrap().density().z_score(&direct));
        }
    }
    check(z_rec < 4.0 && z_log < 4.0, format!("β ∈ {{0.05, 0.1}}, 3 probes: max z {z_rec:.2} (sum), {z_log:.2} (exp of -ΣΦ)"))
}

fn weight_decay() -> Outcome {
    let vol = Volume::segment(0, 0);
    // Grid from the intensity: slice length 1/β.
    let inst = Instance::new(markov(0.4, 0.0, 1.0, 0), PotentialSpec::ou(), vol.clone(), 5.0, 0.05, 4);
    let probes = vec![(line(&vol, &[0.5]), line(&vol, &[-0.4])), (line(&vol, &[-1.0]), line(&vol, &[0.8]))];
    let betas = [0.0, 0.05, 0.1, 0.2, 0.4];
    let fits = weight_bound_fit(&betas, &inst, &probes, &McParams::with_samples(4000), 31).map_err(|e| e.to_string())?;
    let se = |k: usize| (fits[k].lambda_hi - fits[k].lambda_lo) / 4.0;
    let monotone = (1..fits.len()).all(|k| fits[k - 1].lambda_hat <= fits[k].lambda_hat + 2.0 * se(k - 1).hypot(se(k)));
    let zero = fits[0].lambda_lo == 0.0;
    let curve: Vec<String> = fits.iter().map(|f| format!("{}:{:.4}(M={})", f.beta, f.lambda_hat, f.slices)).collect();
    check(monotone && zero, format!("λ̂ {}; non-increasing as β decreases: {monotone}; λ̂(0) consistent with 0: {zero}", curve.join(" ")))
}

/// Smallest nonzero eigenvalue of `½(-d² + V)` on a uniform grid.
fn schrodinger_gap(v: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize, periodic: bool) -> f64 {
    let h = (hi - lo) / n as f64;
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        let x = lo + (i as f64 + if periodic { 0.0 } else { 0.5 }) * h;
        a[(i, i)] = 0.5 * (2.0 / (h * h) + v(x));
        let left = if i > 0 { Some(i - 1) } else { periodic.then_some(n - 1) };
        let right = if i + 1 < n { Some(i + 1) } else { periodic.then_some(0) };
        for j in [left, right].into_iter().flatten() {
            a[(i, j)] = -0.5 / (h * h);
        }
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(a).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev[1] - ev[0]
}

fn kernel_ergodicity() -> Outcome {
    // Ground-state transform of ½f'' - ½U'f': potential U'²/4 - U''/2.
    let ou_gap = schrodinger_gap(|x| x * x - 1.0, -8.0, 8.0, 800, false);
    let circle_gap = schrodinger_gap(|_| 0.0, 0.0, 2.0 * std::f64::consts::PI, 400, true);
    let ou = fit_decay_rate(&PotentialSpec::ou(), 1.0, 5.0, 41).map_err(|e| e.to_string())?;
    let circle = fit_decay_rate(&PotentialSpec::new(Potential::CircleFlat).unwrap(), 1.0, 5.0, 41).map_err(|e| e.to_string())?;
    let ok = (ou / ou_gap - 1.0).abs() < 0.1 && (circle / circle_gap - 1.0).abs() < 0.1;
    check(ok, format!("OU rate {ou:.4} vs gap {ou_gap:.4}; circle rate {circle:.4} vs gap {circle_gap:.4}"))
}

fn dobrushin() -> Outcome {
    let region = Volume::segment(-10, 10);
    let mut bad = Vec::new();
    for beta0 in [0.0, 0.1, 0.25, 0.3, 0.49, 0.5, 0.51, 0.75, 1.0] {
        let r = dobrushin_check(&nn_tanh(beta0, 1.0, &region));
        if r.value != 2.0 * beta0 || r.passes != (beta0 < 0.5) {
            bad.push(format!("β₀={beta0}: {} passes={}", r.value, r.passes));
        }
    }
    check(bad.is_empty(), if bad.is_empty() { "value 2β₀ exactly at 9 points, passes iff β₀ < 1/2".into() } else { bad.join("; ") })
}

fn dlr_consistency() -> Outcome {
    let big = Volume::segment(0, 4);
    let params = DlrParams {
        n_outer: 600,
        n_inner: 16,
        sampler: SamplerParams { sweeps: 30, burn_in: 15 },
    };
    let zero = dlr_test(&Interaction::zero(1.0).unwrap(), &PotentialSpec::ou(), &big, &Volume::segment(1, 2), &params, 41).map_err(|e| e.to_string())?;
    let region = Volume::segment(-1, 1);
    let boundary = line(&region, &[1.2, 0.0, -0.7]);
    let ks = conditional_ks(&nn_tanh(0.8, 1.0, &region), &PotentialSpec::ou(), &Site::d1(0), &boundary, 4000, &SamplerParams::default(), 42)
        .map_err(|e| e.to_string())?;
    check(
        zero.max_z < 4.0 && ks.p_value > 0.01,
        format!("φ=0 max z {:.2}; single-site KS D={:.4} p={:.3} (n={})", zero.max_z, ks.statistic, ks.p_value, ks.n),
    )
}

fn kp_criterion() -> Outcome {
    let vol = Volume::segment(0, 3);
    // λ* sees only the conflict structure of the polymers, so two runs with
    // different drift couplings must land in the same bisection bracket.
    let stars: Vec<(f64, f64)> = [0.5, 0.9]
        .iter()
        .map(|&coupling| {
            let inst = Instance::new(markov(0.3, coupling, 0.5, 1), PotentialSpec::ou(), vol.clone(), 3.0, 0.01, 3).with_slices(3);
            kp_lambda_star(&inst.polymers().unwrap(), 40)
        })
        .collect();
    let inst = Instance::new(markov(0.3, 0.5, 0.5, 1), PotentialSpec::ou(), vol, 3.0, 0.01, 3).with_slices(3);
    let ps = inst.polymers().map_err(|e| e.to_string())?;
    let (a, b) = (stars[0], stars[1]);
    let stable = (a.0 - b.0).abs() <= a.1.max(b.1).max(f64::EPSILON);
    let ok = a.0 > 0.0 && stable && kp_check(0.0, &ps).satisfied && !kp_check(1.0, &ps).satisfied;
    check(ok, format!("{} polymers; λ* = {:.6} and {:.6} (bracket {:.1e}); kp(0) passes, kp(1) fails", ps.len(), a.0, b.0, a.1))
}

fn quasilocality() -> Outcome {
    let vol = Volume::segment(-3, 3);
    // Finite-range dynamical interaction: nearest-neighbour terms in x and y.
    let mut dynamics = ExplicitDynamics::new();
    for i in -3..3 {
        dynamics = dynamics.with_term(Volume::segment(i, i + 1), |x, y| 0.15 * (x[0] - y[1]).tanh() * (x[1] - y[0]).tanh() + 0.1 * (y[0] * y[1]).tanh());
    }
    let bsi = BiSpaceInteraction::new(nn_tanh(0.45, 1.0, &vol), Arc::new(dynamics), PotentialSpec::ou(), 0.4, vol.clone()).map_err(|e| e.to_string())?;
    let probes = vec![
        (line(&vol, &[1.2, 1.2, 1.2, 0.3, 1.2, 1.2, 1.2]), line(&vol, &[-1.2, -1.2, -1.2, 0.0, -1.2, -1.2, -1.2])),
        (line(&vol, &[-1.0, 1.0, -1.0, -0.2, -1.0, 1.0, -1.0]), line(&vol, &[1.0, -1.0, 1.0, 0.0, 1.0, -1.0, 1.0])),
    ];
    let deltas: Vec<Volume> = (0..=3).map(|r| Volume::segment(-r, r)).collect();
    let params = ConditionalParams {
        chains: 3000,
        sampler: SamplerParams::default(),
        ess_threshold: 0.05,
    };
    let curve = quasilocality_probe(&bsi, &Volume::segment(0, 0), &deltas, &probes, &params, 51).map_err(|e| e.to_string())?;
    // Terms reach one site past Λ in each direction, and the initial law one more.
    let floor_reached = curve.points[2..].iter().all(|p| p.at_noise_floor);
    let ok = !curve.points[0].at_noise_floor && floor_reached && curve.non_increasing;
    let pts: Vec<String> = curve.points.iter().map(|p| format!("{:.4}±{:.4}", p.sup, p.stderr)).collect();
    check(ok, format!("variation by radius [{}]; floor from radius 2: {floor_reached}; non-increasing: {}", pts.join(", "), curve.non_increasing))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("girsanov identity", girsanov_identity),
        ("martingale normalisation", martingale_normalisation),
        ("density oracle", density_oracle),
        ("expansion identity", expansion_identity),
        ("weight decay", weight_decay),
        ("kernel ergodicity", kernel_ergodicity),
        ("dobrushin checker", dobrushin),
        ("dlr consistency", dlr_consistency),
        ("kp criterion", kp_criterion),
        ("quasilocality", quasilocality),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let took = start.elapsed();
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        failed += outcome.is_err() as usize;
        println!("{tag} criterion {:>2} {name}: {detail} [{}]", k + 1, secs(took));
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}
