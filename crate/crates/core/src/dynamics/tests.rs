use std::sync::Arc;

use super::*;
use crate::error::Error;
use crate::lattice::{Configuration, Neighborhood, Site, StateSpace, Volume};
use crate::mc::{replicas, Estimate};

fn free(dim: usize) -> DriftSpec {
    DriftSpec::from_builtin(0.0, &BuiltinDrift::Constant { c: 0.0, range: 0 }, dim).unwrap()
}

fn ou_terminal_means(x0: f64, t: f64, dt: f64, n: usize, seed: u64) -> Estimate {
    let pot = PotentialSpec::ou();
    let vol = Volume::segment(0, 0);
    let cfg = Configuration::constant(StateSpace::Line, &vol, x0);
    let drift = free(1);
    let xs = replicas(n, 256, seed, "ou-mean", |rng| {
        let p = simulate_with(&drift, &pot, &vol, &cfg, t, dt, rng)?;
        p.value(&Site::d1(0), p.steps())
    })
    .unwrap();
    Estimate::from_samples(&xs)
}

#[test]
fn free_ou_mean_decays_exponentially() {
    // dX = -X dt + dB, so E X(t) = x0 e^{-t}.
    let est = ou_terminal_means(1.5, 1.0, 0.005, 6000, 11);
    let exact = 1.5 * (-1.0f64).exp();
    assert!((est.value - exact).abs() < 4.0 * est.stderr, "{} vs {exact} ± {}", est.value, est.stderr);
}

#[test]
fn euler_mean_error_is_first_order() {
    let exact = 5.0 * (-1.0f64).exp();
    let coarse = ou_terminal_means(5.0, 1.0, 0.2, 40_000, 12);
    let fine = ou_terminal_means(5.0, 1.0, 0.1, 40_000, 13);
    let (ec, ef) = ((coarse.value - exact).abs(), (fine.value - exact).abs());
    assert!(ef < ec, "{ef} !< {ec}");
    let ratio = ec / ef;
    assert!((1.4..3.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn free_sites_are_uncorrelated() {
    let pot = PotentialSpec::ou();
    let vol = Volume::segment(0, 1);
    let cfg = Configuration::constant(StateSpace::Line, &vol, 0.0);
    let drift = free(1);
    let pairs = replicas(5000, 256, 3, "corr", |rng| {
        let p = simulate_with(&drift, &pot, &vol, &cfg, 0.5, 0.01, rng)?;
        Ok((p.value(&Site::d1(0), 50)?, p.value(&Site::d1(1), 50)?))
    })
    .unwrap();
    let n = pairs.len() as f64;
    let (ma, mb) = pairs.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0 / n, a.1 + p.1 / n));
    let cov: f64 = pairs.iter().map(|p| (p.0 - ma) * (p.1 - mb)).sum::<f64>() / n;
    let va: f64 = pairs.iter().map(|p| (p.0 - ma).powi(2)).sum::<f64>() / n;
    let vb: f64 = pairs.iter().map(|p| (p.1 - mb).powi(2)).sum::<f64>() / n;
    let r = cov / (va * vb).sqrt();
    assert!(r.abs() < 4.0 / n.sqrt(), "correlation {r}");
}

#[test]
fn stationary_start_keeps_moments() {
    let pot = PotentialSpec::ou();
    let vol = Volume::segment(0, 0);
    let drift = free(1);
    let xs = replicas(6000, 256, 4, "stat", |rng| {
        let x0 = pot.sample_one(rng)?;
        let cfg = Configuration::constant(StateSpace::Line, &vol, x0);
        let p = simulate_with(&drift, &pot, &vol, &cfg, 1.0, 0.01, rng)?;
        p.value(&Site::d1(0), p.steps())
    })
    .unwrap();
    let m2 = Estimate::from_samples(&xs.iter().map(|x| x * x).collect::<Vec<_>>());
    assert!((m2.value - 0.5).abs() < 4.0 * m2.stderr + 0.003, "{}", m2.value);
}

#[test]
fn simulation_is_reproducible() {
    let pot = PotentialSpec::new(Potential::DoubleWell).unwrap();
    let vol = Volume::segment(0, 3);
    let drift = DriftSpec::from_builtin(
        0.7,
        &BuiltinDrift::Markov {
            coupling: 0.5,
            field: 0.2,
            range: 1,
            link: BoundedFn::Tanh,
        },
        1,
    )
    .unwrap();
    let cfg = Configuration::constant(StateSpace::Line, &vol, 0.3);
    let a = simulate(&drift, &pot, &vol, &cfg, 1.0, 0.01, 99).unwrap();
    let b = simulate(&drift, &pot, &vol, &cfg, 1.0, 0.01, 99).unwrap();
    let c = simulate(&drift, &pot, &vol, &cfg, 1.0, 0.01, 100).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn compensated_increments_follow_left_point_rule() {
    let pot = PotentialSpec::new(Potential::DoubleWell).unwrap();
    let vol = Volume::segment(0, 1);
    let cfg = Configuration::constant(StateSpace::Line, &vol, -0.4);
    let p = simulate(&free(1), &pot, &vol, &cfg, 0.5, 0.01, 5).unwrap();
    let s = Site::d1(1);
    let x = p.lifted(&s).unwrap();
    for (k, inc) in p.increments(&s).unwrap().iter().enumerate() {
        let want = x[k + 1] - x[k] + 0.5 * (x[k].powi(3) - x[k]) * 0.01;
        assert!((inc - want).abs() < 1e-14);
    }
    let total: f64 = p.increments(&s).unwrap().iter().sum();
    assert!((p.compensated(&s, p.steps()).unwrap() - total).abs() < 1e-14);
}

#[test]
fn circle_paths_are_lifted() {
    let pot = PotentialSpec::circle_flat();
    let vol = Volume::segment(0, 0);
    let cfg = Configuration::constant(StateSpace::Circle, &vol, 6.2);
    let p = simulate(&free(1), &pot, &vol, &cfg, 4.0, 0.01, 6).unwrap();
    let s = Site::d1(0);
    let lift = p.lifted(&s).unwrap();
    assert!(lift.windows(2).all(|w| (w[1] - w[0]).abs() < 1.0));
    assert!(lift.iter().any(|x| !(0.0..std::f64::consts::TAU).contains(x)));
    for k in 0..=p.steps() {
        assert!((0.0..std::f64::consts::TAU).contains(&p.value(&s, k).unwrap()));
    }
}

#[test]
fn zero_feedback_reproduces_markov_path() {
    let pot = PotentialSpec::new(Potential::DoubleWell).unwrap();
    let vol = Volume::segment(0, 2);
    let cfg = Configuration::constant(StateSpace::Line, &vol, 0.8);
    let delayed = DriftSpec::from_builtin(
        1.0,
        &BuiltinDrift::DelayedFeedback {
            alpha: 0.0,
            delay: 0.25,
            saturation: 3.0,
        },
        1,
    )
    .unwrap();
    let a = simulate(&delayed, &pot, &vol, &cfg, 2.0, 0.01, 21).unwrap();
    let b = simulate(&free(1), &pot, &vol, &cfg, 2.0, 0.01, 21).unwrap();
    assert_eq!(a.series(), b.series());
}

fn window_value(drift: &DriftSpec, series: &[Vec<f64>], k: usize, dt: f64) -> f64 {
    let slots: Vec<usize> = (0..drift.nbhd().len()).collect();
    let w = PathWindow::new(series, &slots, drift.nbhd(), k, dt, drift.memory_steps(dt).unwrap(), drift.prehistory);
    drift.eval_checked(k as f64 * dt, &w, &Site::d1(0)).unwrap()
}

#[test]
fn delayed_feedback_on_constant_history() {
    let drift = DriftSpec::from_builtin(
        1.0,
        &BuiltinDrift::DelayedFeedback {
            alpha: 0.6,
            delay: 0.5,
            saturation: 2.0,
        },
        1,
    )
    .unwrap();
    assert!((drift.bound() - 1.2).abs() < 1e-15);
    let hist = vec![vec![0.7; 101]];
    assert!((window_value(&drift, &hist, 100, 0.01) - 0.42).abs() < 1e-15);
    assert_eq!(window_value(&drift, &[vec![0.0; 101]], 100, 0.01), 0.0);
    // Saturation caps the feedback.
    assert!((window_value(&drift, &[vec![9.0; 101]], 100, 0.01) - 1.2).abs() < 1e-15);
    // Before the delay has elapsed: frozen pre-history reads x0, truncated reads nothing.
    let early = vec![vec![0.7; 11]];
    assert!((window_value(&drift, &early, 10, 0.01) - 0.42).abs() < 1e-15);
    let truncated = drift.clone().with_prehistory(PreHistory::Truncated);
    assert_eq!(window_value(&truncated, &early, 10, 0.01), 0.0);
}

#[test]
fn resonance_bound_is_the_amplitude() {
    let drift = DriftSpec::from_builtin(1.0, &BuiltinDrift::Resonance { amplitude: 0.8, omega: 1.0 }, 1).unwrap();
    assert_eq!(drift.bound(), 0.8);
    let hist = vec![vec![0.0; 200]];
    let peak = window_value(&drift, &hist, 157, 0.01);
    assert!((peak - 0.8 * 1.57f64.sin()).abs() < 1e-12);
    assert!(BuiltinDrift::Resonance { amplitude: -1.0, omega: 1.0 }.build(1).is_err());
}

#[test]
fn time_memory_respects_triangle_bound() {
    let kernel = MemoryKernel::Exponential { amp: 2.0, rate: 1.5 };
    let builtin = BuiltinDrift::TimeMemory {
        memory: 1.0,
        kernel,
        f: BoundedFn::Clamp { r: 0.5 },
    };
    let drift = DriftSpec::from_builtin(1.0, &builtin, 1).unwrap();
    let e = 2.0 / 1.5;
    assert!((drift.bound() - 0.5 * e).abs() < 1e-15);
    let pot = PotentialSpec::ou();
    let vol = Volume::segment(0, 0);
    let cfg = Configuration::constant(StateSpace::Line, &vol, 2.0);
    let dt = 0.01;
    for seed in 0..5 {
        let p = simulate(&drift, &pot, &vol, &cfg, 3.0, dt, seed).unwrap();
        let x = p.lifted(&Site::d1(0)).unwrap();
        for k in (0..=p.steps()).step_by(7) {
            let b = window_value(&drift, p.series(), k, dt);
            // Oracle: |Σ ∫ε f| <= Σ |∫ε| sup|f| <= F E.
            let oracle: f64 = (k.saturating_sub(100)..k)
                .map(|l| kernel.integral(l as f64 * dt, (l + 1) as f64 * dt).abs() * x[l].clamp(-0.5, 0.5).abs())
                .sum();
            assert!(b.abs() <= oracle + 1e-12 && oracle <= 0.5 * e);
        }
    }
    // A constant positive input saturating f nearly attains F times the window mass.
    let hist = vec![vec![5.0; 101]];
    let b = window_value(&drift, &hist, 100, dt);
    assert!((b - 0.5 * kernel.integral(0.0, 1.0)).abs() < 1e-12);
}

#[test]
fn space_time_drift_is_bounded_and_local() {
    let builtin = BuiltinDrift::SpaceTime {
        memory: 0.5,
        tau: 0.3,
        coupling: 0.4,
        field: 0.1,
        range: 1,
        link: BoundedFn::Sin,
        integrator: Integrator::Sine { freq: 3.0 },
    };
    let drift = DriftSpec::from_builtin(1.0, &builtin, 1).unwrap();
    assert!((drift.bound() - 1.5).abs() < 1e-15);
    let pot = PotentialSpec::ou();
    let vol = Volume::segment(-1, 3);
    let cfg = Configuration::constant(StateSpace::Line, &vol, 0.5);
    let p = simulate(&drift, &pot, &vol, &cfg, 2.0, 0.01, 7).unwrap();
    let ms = drift.memory_steps(0.01).unwrap();
    for site in [Site::d1(0), Site::d1(1), Site::d1(2)] {
        let slots = p.slots(&site, &drift).unwrap();
        for k in 0..=p.steps() {
            assert!(p.drift_at(&drift, &site, &slots, k, ms).unwrap().abs() <= drift.bound());
        }
    }
}

#[test]
fn drift_at_zero_ignores_sites_outside_the_neighbourhood() {
    let drift = DriftSpec::from_builtin(
        1.0,
        &BuiltinDrift::Markov {
            coupling: 1.0,
            field: 0.5,
            range: 1,
            link: BoundedFn::Tanh,
        },
        1,
    )
    .unwrap();
    let pot = PotentialSpec::ou();
    let vol = Volume::segment(0, 5);
    let base = Configuration::new(StateSpace::Line, (0..=5).map(|i| (Site::d1(i), 0.1 * i as f64)));
    let mut moved = base.clone();
    moved.set(Site::d1(4), 3.0);
    moved.set(Site::d1(5), -2.0);
    let site = Site::d1(2);
    let a = simulate(&drift, &pot, &vol, &base, 0.1, 0.1, 1).unwrap();
    let b = simulate(&drift, &pot, &vol, &moved, 0.1, 0.1, 1).unwrap();
    let (sa, sb) = (a.slots(&site, &drift).unwrap(), b.slots(&site, &drift).unwrap());
    assert_eq!(
        a.drift_at(&drift, &site, &sa, 0, 0).unwrap(),
        b.drift_at(&drift, &site, &sb, 0, 0).unwrap()
    );
    assert_eq!(a.value(&site, 1).unwrap(), b.value(&site, 1).unwrap());
}

#[derive(Debug)]
struct Rogue {
    nbhd: Neighborhood,
    overshoot: bool,
}

impl DriftFunctional for Rogue {
    fn name(&self) -> &str {
        "rogue"
    }
    fn neighborhood(&self) -> &Neighborhood {
        &self.nbhd
    }
    fn memory(&self) -> f64 {
        0.0
    }
    fn bound(&self) -> f64 {
        1.0
    }
    fn evaluate(&self, _t: f64, w: &PathWindow<'_>) -> f64 {
        if self.overshoot {
            2.0
        } else {
            w.value(0, 3).unwrap_or(0.0)
        }
    }
}

#[test]
fn rogue_drifts_are_caught() {
    let pot = PotentialSpec::ou();
    let vol = Volume::segment(0, 0);
    let cfg = Configuration::constant(StateSpace::Line, &vol, 0.0);
    for (overshoot, locality) in [(true, false), (false, true)] {
        let drift = DriftSpec::new(
            1.0,
            Arc::new(Rogue {
                nbhd: Neighborhood::origin_only(1),
                overshoot,
            }),
        )
        .unwrap();
        let err = simulate(&drift, &pot, &vol, &cfg, 0.1, 0.01, 1).unwrap_err();
        match err {
            Error::BoundViolation { value, .. } => assert!(!locality && value == 2.0),
            Error::Locality(_) => assert!(locality),
            other => panic!("unexpected {other:?}"),
        }
    }
}

#[test]
fn step_must_divide_memory_and_horizon() {
    let drift = DriftSpec::from_builtin(
        1.0,
        &BuiltinDrift::DelayedFeedback {
            alpha: 1.0,
            delay: 0.25,
            saturation: 1.0,
        },
        1,
    )
    .unwrap();
    assert!(drift.memory_steps(0.03).is_err());
    assert!(drift.memory_steps(0.5).is_err());
    assert_eq!(drift.memory_steps(0.05).unwrap(), 5);
    assert!(step_count(1.0, 0.3).is_err());
    assert_eq!(step_count(1.0, 0.01).unwrap(), 100);
}

#[test]
fn uncovered_start_is_rejected() {
    let pot = PotentialSpec::ou();
    let vol = Volume::segment(0, 2);
    let cfg = Configuration::constant(StateSpace::Line, &Volume::segment(0, 1), 0.0);
    assert!(matches!(
        simulate(&free(1), &pot, &vol, &cfg, 1.0, 0.1, 0),
        Err(Error::Coverage(_))
    ));
}

#[test]
fn catalogue_lists_all_families() {
    let names: Vec<_> = builtin_drifts().into_iter().map(|(n, _)| n).collect();
    for n in ["markov", "resonance", "delayed_feedback", "time_memory", "space_time"] {
        assert!(names.contains(&n));
    }
    let json = serde_json::to_string(&BuiltinDrift::Resonance { amplitude: 1.0, omega: 2.0 }).unwrap();
    let back: BuiltinDrift = serde_json::from_str(&json).unwrap();
    assert_eq!(back, BuiltinDrift::Resonance { amplitude: 1.0, omega: 2.0 });
}
