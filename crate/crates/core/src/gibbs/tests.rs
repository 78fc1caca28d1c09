use std::sync::Arc;

use super::*;
use crate::dynamics::{ou_kernel, BoundedFn, BuiltinDrift, DriftSpec, PotentialSpec};
use crate::error::Error;
use crate::expansion::Instance;
use crate::lattice::{Configuration, Site, StateSpace, Volume};
use crate::mc::{Estimate, McParams};
use crate::rng::stream;

fn cfg(vol: &Volume, v: &[f64]) -> Configuration {
    Configuration::new(StateSpace::Line, vol.iter().cloned().zip(v.iter().copied()))
}

fn one(s: i64) -> Volume {
    Volume::segment(s, s)
}

fn nn(beta0: f64, form: PairForm, norm: Option<f64>, region: &Volume) -> Interaction {
    let t = TermTemplate::Pair {
        coupling: 1.0,
        distance: 1,
        form,
        sup_norm: norm,
    };
    Interaction::from_templates(beta0, &[t], region).unwrap()
}

#[test]
fn hamiltonian_of_nearest_neighbour_products() {
    let vol = Volume::segment(0, 2);
    assert_eq!(hamiltonian(&Interaction::zero(1.0).unwrap(), &vol, &cfg(&vol, &[1.0, 2.0, 3.0]), None).unwrap(), 0.0);
    let region = Volume::segment(-2, 4);
    let phi = nn(1.0, PairForm::Product, Some(4.0), &region);
    let x = [0.3, -1.1, 0.7];
    let z = cfg(&Volume::segment(-2, 4), &[9.0, 0.5, 0.0, 0.0, 0.0, -0.8, 9.0]);
    // Terms meeting {0,1,2}: (-1,0), (0,1), (1,2), (2,3).
    let hand = 0.5 * x[0] + x[0] * x[1] + x[1] * x[2] + x[2] * -0.8;
    let h = hamiltonian(&phi, &vol, &cfg(&vol, &x), Some(&z)).unwrap();
    assert!((h - hand).abs() < 1e-15);
    let mut z2 = z.clone();
    z2.set(Site::d1(-2), -4.0);
    z2.set(Site::d1(4), 7.0);
    assert_eq!(hamiltonian(&phi, &vol, &cfg(&vol, &x), Some(&z2)).unwrap(), h);
    let short = cfg(&Volume::segment(0, 3), &[0.0; 4]);
    assert!(matches!(hamiltonian(&phi, &vol, &cfg(&vol, &x), Some(&short)), Err(Error::Coverage(_))));
}

#[test]
fn hamiltonian_is_additive_and_order_free() {
    let region = Volume::segment(0, 5);
    let phi = nn(1.0, PairForm::Tanh, None, &region);
    let mut rev: Vec<Term> = phi.terms().to_vec();
    rev.reverse();
    let phi_rev = Interaction::new(1.0, rev).unwrap();
    let x = cfg(&region, &[0.1, -0.4, 0.9, 1.3, -0.2, 0.5]);
    let h = hamiltonian(&phi, &region, &x, None).unwrap();
    assert!((h - hamiltonian(&phi_rev, &region, &x, None).unwrap()).abs() < 1e-14);
    // Disjoint-support pieces add up.
    let even: Vec<Term> = phi.terms().iter().step_by(2).cloned().collect();
    let odd: Vec<Term> = phi.terms().iter().skip(1).step_by(2).cloned().collect();
    let sum = hamiltonian(&Interaction::new(1.0, even).unwrap(), &region, &x, None).unwrap()
        + hamiltonian(&Interaction::new(1.0, odd).unwrap(), &region, &x, None).unwrap();
    assert!((h - sum).abs() < 1e-14);
}

#[test]
fn dobrushin_on_nearest_neighbour_pairs() {
    let region = Volume::segment(-5, 5);
    let zero = dobrushin_check(&Interaction::zero(3.0).unwrap());
    assert!(zero.value == 0.0 && zero.passes);
    for (beta0, passes) in [(0.49, true), (0.5, false), (0.25, true), (0.75, false)] {
        let r = dobrushin_check(&nn(beta0, PairForm::Tanh, None, &region));
        assert_eq!(r.value, 2.0 * beta0);
        assert_eq!(r.passes, passes);
    }
    let fields = Interaction::from_templates(
        5.0,
        &[TermTemplate::Site {
            h: 100.0,
            link: BoundedFn::Tanh,
            sup_norm: None,
        }],
        &region,
    )
    .unwrap();
    assert_eq!(dobrushin_check(&fields).value, 0.0);
    let s = fields.summability();
    assert_eq!((s.absolute, s.max_body), (100.0, 1));
}

#[test]
fn declared_norms_are_checked() {
    let region = Volume::segment(0, 3);
    let bare = TermTemplate::Pair {
        coupling: 1.0,
        distance: 1,
        form: PairForm::Product,
        sup_norm: None,
    };
    assert!(Interaction::from_templates(1.0, &[bare], &region).is_err());
    let low = TermTemplate::Pair {
        coupling: 2.0,
        distance: 1,
        form: PairForm::Tanh,
        sup_norm: Some(1.0),
    };
    assert!(Interaction::from_templates(1.0, &[low], &region).is_err());
    let pot = PotentialSpec::ou();
    assert!(nn(1.0, PairForm::Product, Some(0.5), &region).validate_norms(&pot, 5).is_err());
    nn(1.0, PairForm::Product, Some(2.0), &region).validate_norms(&pot, 5).unwrap();
    nn(1.0, PairForm::Cosine, None, &region).validate_norms(&PotentialSpec::circle_flat(), 8).unwrap();
    let plaq = TermTemplate::Plaquette {
        coupling: 0.5,
        link: BoundedFn::Cos,
        sup_norm: None,
    };
    let sq = Interaction::from_templates(1.0, &[plaq], &Volume::boxed(&[(0, 2), (0, 2)])).unwrap();
    assert_eq!(sq.terms().len(), 4);
    assert_eq!(sq.summability().strong, 3.0 * 0.5 * 4.0);
}

#[test]
fn zero_beta_gibbs_is_the_product_reference() {
    let region = Volume::segment(0, 3);
    let phi = nn(0.0, PairForm::Tanh, None, &region);
    let pot = PotentialSpec::ou();
    let draws = sample_gibbs_many(&phi, &pot, &region, None, &SamplerParams::default(), 4000, 1, "t").unwrap();
    let mut refs = stream(2, "ref", 0);
    let r = pot.sample_reference(4000, &mut refs).unwrap();
    for s in region.iter() {
        let v: Vec<f64> = draws.iter().map(|x| x.get(s).unwrap()).collect();
        for p in [1, 2] {
            let a = Estimate::from_samples(&v.iter().map(|x| x.powi(p)).collect::<Vec<_>>());
            let b = Estimate::from_samples(&r.iter().map(|x| x.powi(p)).collect::<Vec<_>>());
            assert!(a.agrees_with(&b, 4.0, 0.0), "site {s} moment {p}: {a:?} vs {b:?}");
        }
    }
}

#[test]
fn single_site_marginal_matches_quadrature() {
    let region = one(0);
    let field = TermTemplate::Site {
        h: 1.5,
        link: BoundedFn::Tanh,
        sup_norm: None,
    };
    let phi = Interaction::from_templates(1.0, &[field], &region).unwrap();
    let pot = PotentialSpec::new(crate::dynamics::Potential::DoubleWell).unwrap();
    let ks = conditional_ks(&phi, &pot, &Site::d1(0), &Configuration::empty(StateSpace::Line), 4000, &SamplerParams::default(), 3).unwrap();
    assert!(ks.p_value > 0.01, "{ks:?}");
    // The wrong law is rejected.
    let other = Interaction::from_templates(
        1.0,
        &[TermTemplate::Site {
            h: -1.5,
            link: BoundedFn::Tanh,
            sup_norm: None,
        }],
        &region,
    )
    .unwrap();
    let cdf = conditional_cdf(&other, &pot, &Site::d1(0), &Configuration::empty(StateSpace::Line)).unwrap();
    let draws = sample_gibbs_many(&phi, &pot, &region, None, &SamplerParams::default(), 4000, 3, "conditional").unwrap();
    let xs: Vec<f64> = draws.iter().map(|x| x.get(&Site::d1(0)).unwrap()).collect();
    assert!(ks_test(&xs, |x| cdf.cdf(x)).p_value < 1e-6);
}

#[test]
fn even_interactions_give_symmetric_marginals() {
    let region = Volume::segment(0, 2);
    let phi = nn(0.6, PairForm::Product, Some(8.0), &region);
    let draws = sample_gibbs_many(&phi, &PotentialSpec::ou(), &region, None, &SamplerParams::default(), 4000, 4, "t").unwrap();
    for s in region.iter() {
        let v: Vec<f64> = draws.iter().map(|x| x.get(s).unwrap()).collect();
        let m = Estimate::from_samples(&v);
        let skew = Estimate::from_samples(&v.iter().map(|x| x.powi(3)).collect::<Vec<_>>());
        assert!(m.value.abs() < 4.0 * m.stderr && skew.value.abs() < 4.0 * skew.stderr, "{m:?} {skew:?}");
    }
}

#[test]
fn sampler_rejects_short_chains_and_is_reproducible() {
    let region = Volume::segment(0, 2);
    let phi = nn(0.3, PairForm::Tanh, None, &region);
    let pot = PotentialSpec::ou();
    let bad = SamplerParams { sweeps: 5, burn_in: 10 };
    assert!(matches!(sample_gibbs(&phi, &pot, &region, None, &bad, 1), Err(Error::Setup(_))));
    let p = SamplerParams::default();
    assert_eq!(sample_gibbs(&phi, &pot, &region, None, &p, 9).unwrap(), sample_gibbs(&phi, &pot, &region, None, &p, 9).unwrap());
    assert!(split_chain_check(&phi, &pot, &region, &p, 400, 5).unwrap().passed);
}

#[test]
fn kolmogorov_tail_values() {
    // Q(λ) = 2 Σ (-1)^{k-1} e^{-2k²λ²}: Q(1) = 0.2699996717, Q(1.358) ≈ 0.05.
    let n = 1_000_000_000;
    let corr = |lam: f64| lam / ((n as f64).sqrt() + 0.12 + 0.11 / (n as f64).sqrt());
    assert!((kolmogorov_pvalue(corr(1.0), n) - 0.2699996717).abs() < 1e-8);
    assert!((kolmogorov_pvalue(corr(1.358), n) - 0.05).abs() < 5e-4);
    assert_eq!(kolmogorov_pvalue(0.0, 10), 1.0);
}

fn dlr_params(n_outer: usize, n_inner: usize) -> DlrParams {
    DlrParams {
        n_outer,
        n_inner,
        sampler: SamplerParams { sweeps: 30, burn_in: 15 },
    }
}

#[test]
fn dlr_without_interaction() {
    let big = Volume::segment(0, 4);
    let r = dlr_test(&Interaction::zero(1.0).unwrap(), &PotentialSpec::ou(), &big, &Volume::segment(1, 2), &dlr_params(400, 16), 1).unwrap();
    assert!(r.max_z < 4.0, "{r:?}");
    assert_eq!(r.lines.len(), 4);
}

#[test]
fn dlr_with_nearest_neighbour_pairs() {
    let big = Volume::segment(0, 4);
    let phi = nn(0.4, PairForm::Tanh, None, &Volume::segment(-3, 7));
    let r = dlr_test(&phi, &PotentialSpec::ou(), &big, &one(2), &dlr_params(600, 16), 2).unwrap();
    assert!(r.max_z < 4.0 && r.convergence.passed, "{r:?}");
    // Rotors with a cosine coupling.
    let rot = nn(0.4, PairForm::Cosine, None, &big);
    let r = dlr_test(&rot, &PotentialSpec::circle_flat(), &big, &one(2), &dlr_params(400, 16), 3).unwrap();
    assert!(r.max_z < 4.0, "{r:?}");
}

#[test]
fn dlr_precision_improves_with_samples() {
    let big = Volume::segment(0, 3);
    let phi = nn(0.4, PairForm::Tanh, None, &big);
    let se = |n| {
        let r = dlr_test(&phi, &PotentialSpec::ou(), &big, &one(1), &dlr_params(n, 8), 4).unwrap();
        r.lines.iter().map(|l| l.direct.combined_stderr(&l.two_stage)).sum::<f64>()
    };
    assert!(se(800) < se(100));
}

#[test]
fn dlr_margin_is_enforced() {
    let phi = nn(0.4, PairForm::Tanh, None, &Volume::segment(-3, 7));
    let r = dlr_test(&phi, &PotentialSpec::ou(), &Volume::segment(0, 4), &one(0), &dlr_params(10, 2), 1);
    assert!(matches!(r, Err(Error::Coverage(_))));
}

#[test]
fn conditional_law_with_boundary_matches_quadrature() {
    let region = Volume::segment(-1, 1);
    let phi = nn(0.8, PairForm::Product, Some(4.0), &region);
    let z = cfg(&Volume::segment(-1, 1), &[1.2, 0.0, 0.7]);
    // The Metropolis weight e^{-β₀ Δh} is unbounded here, so chains need to be longer.
    let long = SamplerParams { sweeps: 200, burn_in: 20 };
    let ks = conditional_ks(&phi, &PotentialSpec::ou(), &Site::d1(0), &z, 4000, &long, 6).unwrap();
    assert!(ks.p_value > 0.01, "{ks:?}");
}

fn bsi(phi: Interaction, dynamic: Arc<dyn DynamicInteraction>, t: f64, vol: Volume) -> BiSpaceInteraction {
    BiSpaceInteraction::new(phi, dynamic, PotentialSpec::ou(), t, vol).unwrap()
}

#[test]
fn bispace_hamiltonian_limits() {
    let vol = Volume::segment(0, 1);
    let b = bsi(Interaction::zero(0.5).unwrap(), Arc::new(NoDynamics), 0.7, vol.clone());
    let (x, y) = (cfg(&vol, &[0.3, -0.5]), cfg(&vol, &[0.1, 0.9]));
    assert_eq!(bispace_hamiltonian(&b, &Volume::empty(), &Volume::empty(), &x, &y).unwrap(), 0.0);
    let h = bispace_hamiltonian(&b, &one(0), &vol, &x, &y).unwrap();
    let hand = -ou_kernel(1.0, 0.7, 0.3, 0.1).ln() - ou_kernel(1.0, 0.7, -0.5, 0.9).ln();
    assert!((h - hand).abs() < 1e-12);
    let late = bsi(Interaction::zero(0.5).unwrap(), Arc::new(NoDynamics), 30.0, vol.clone());
    assert!(bispace_hamiltonian(&late, &vol, &vol, &x, &y).unwrap().abs() < 1e-10);
}

#[test]
fn bispace_full_conditionals_in_y() {
    // exp(-H_{(∅,{0})}) as a function of y_0 is p_t(x_0, ·) e^{-Σ Φ}.
    let vol = one(0);
    let dynamic = ExplicitDynamics::new().with_term(vol.clone(), |x, y| 0.3 * (x[0] * y[0]).tanh());
    let phi = Interaction::from_templates(
        0.7,
        &[TermTemplate::Site {
            h: 1.0,
            link: BoundedFn::Sin,
            sup_norm: None,
        }],
        &vol,
    )
    .unwrap();
    let b = bsi(phi, Arc::new(dynamic), 0.5, vol.clone());
    let x = cfg(&vol, &[0.8]);
    let ys: Vec<f64> = (-400..=400).map(|k| k as f64 * 0.01).collect();
    let lhs: Vec<f64> = ys
        .iter()
        .map(|&y| (-bispace_hamiltonian(&b, &Volume::empty(), &vol, &x, &cfg(&vol, &[y])).unwrap()).exp())
        .collect();
    let rhs: Vec<f64> = ys.iter().map(|&y| ou_kernel(1.0, 0.5, 0.8, y) * (-0.3 * (0.8 * y).tanh()).exp()).collect();
    let (zl, zr): (f64, f64) = (lhs.iter().sum(), rhs.iter().sum());
    for (l, r) in lhs.iter().zip(&rhs) {
        assert!((l / zl - r / zr).abs() < 1e-14);
    }
}

fn cond_params(chains: usize) -> ConditionalParams {
    ConditionalParams {
        chains,
        sampler: SamplerParams { sweeps: 30, burn_in: 15 },
        ess_threshold: 0.05,
    }
}

#[test]
fn free_conditional_density_is_one() {
    let vol = Volume::segment(0, 2);
    let b = bsi(Interaction::zero(0.0).unwrap(), Arc::new(NoDynamics), 0.5, vol.clone());
    let y = cfg(&vol, &[0.4, 0.0, -1.0]);
    for z0 in [-1.0, 0.0, 0.6] {
        let g = conditional_density(&b, &one(1), &cfg(&one(1), &[z0]), &y, &cond_params(4000), 1).unwrap();
        assert!((g.estimate.value - 1.0).abs() < 4.0 * g.estimate.stderr, "{z0}: {:?}", g.estimate);
    }
}

#[test]
fn uncoupled_density_ignores_the_boundary() {
    let vol = Volume::segment(0, 2);
    let b = bsi(Interaction::zero(0.5).unwrap(), Arc::new(NoDynamics), 0.5, vol.clone());
    let z = cfg(&one(1), &[0.3]);
    let g1 = conditional_density(&b, &one(1), &z, &cfg(&vol, &[0.4, 0.0, -1.0]), &cond_params(500), 2).unwrap();
    let g2 = conditional_density(&b, &one(1), &z, &cfg(&vol, &[-2.0, 0.0, 1.5]), &cond_params(500), 2).unwrap();
    assert_eq!(g1.estimate, g2.estimate);
}

/// Two sites, Λ = {0}: quadrature of the two-time law against the
/// decoupled estimator, with dynamical terms on {0}, {1} and {0,1}.
#[test]
fn decoupling_matches_quadrature() {
    let vol = Volume::segment(0, 1);
    let dynamic = ExplicitDynamics::new()
        .with_term(one(0), |x, y| 0.4 * (x[0] * y[0]).tanh())
        .with_term(one(1), |x, y| -0.5 * (x[0] + y[0]).sin())
        .with_term(vol.clone(), |x, y| 0.6 * x[0].tanh() * y[1].tanh() + 0.3 * (x[1] - y[0]).cos());
    let dynamic = Arc::new(dynamic);
    let phi = nn(0.7, PairForm::Tanh, None, &vol);
    let t = 0.6;
    let b = bsi(phi, dynamic.clone(), t, vol.clone());
    let y1 = 0.9;

    // Independent oracle on a grid for m = N(0, 1/2).
    let n = 161;
    let lo = -4.0;
    let h = 8.0 / (n - 1) as f64;
    let g: Vec<f64> = (0..n).map(|k| lo + h * k as f64).collect();
    let w: Vec<f64> = g.iter().map(|&x| h * (-x * x).exp() / std::f64::consts::PI.sqrt()).collect();
    let joint = |z0: f64| -> f64 {
        let mut s = 0.0;
        for (a, &x0) in g.iter().enumerate() {
            for (c, &x1) in g.iter().enumerate() {
                let x = cfg(&vol, &[x0, x1]);
                let y = cfg(&vol, &[z0, y1]);
                let phis: f64 = dynamic.terms(&x, &y).unwrap().values().sum();
                let e = 0.7 * x0.tanh() * x1.tanh() + phis;
                s += w[a] * w[c] * ou_kernel(1.0, t, x0, z0) * ou_kernel(1.0, t, x1, y1) * (-e).exp();
            }
        }
        s
    };
    let zn = 61;
    let zh = 8.0 / (zn - 1) as f64;
    let norm: f64 = (0..zn)
        .map(|k| {
            let z = -4.0 + zh * k as f64;
            zh * (-z * z).exp() / std::f64::consts::PI.sqrt() * joint(z)
        })
        .sum();
    let y_b = cfg(&vol, &[0.0, y1]);
    for z0 in [-0.8, 0.2, 1.1] {
        let oracle = joint(z0) / norm;
        let est = conditional_density(&b, &one(0), &cfg(&one(0), &[z0]), &y_b, &cond_params(20_000), 3).unwrap();
        assert!(
            (est.estimate.value - oracle).abs() < 4.0 * est.estimate.stderr + 2e-3,
            "z0 {z0}: {:?} vs {oracle}",
            est.estimate
        );
    }
}

#[test]
fn conditional_density_is_bounded_below() {
    let vol = Volume::segment(-2, 2);
    let dynamic = ExplicitDynamics::new().with_term(Volume::segment(-1, 0), |x, y| 0.3 * (x[0] - y[1]).tanh());
    let b = bsi(nn(0.4, PairForm::Tanh, None, &vol), Arc::new(dynamic), 0.5, vol.clone());
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for (k, z0) in [-1.5, -0.5, 0.0, 0.5, 1.5].into_iter().enumerate() {
        let y = cfg(&vol, &[0.5 * k as f64 - 1.0, 0.3, z0, -0.4, 0.8]);
        let g = conditional_density(&b, &one(0), &y.restrict(&one(0)), &y, &cond_params(2000), 4).unwrap();
        lo = lo.min(g.estimate.value);
        hi = hi.max(g.estimate.value);
    }
    assert!(lo > 0.05 && hi < 20.0, "{lo} {hi}");
}

#[test]
fn quasilocality_of_a_nearest_neighbour_initial_law() {
    let vol = Volume::segment(-3, 3);
    let b = bsi(nn(0.45, PairForm::Tanh, None, &vol), Arc::new(NoDynamics), 0.4, vol.clone());
    let probes = vec![
        (cfg(&vol, &[1.2, 1.2, 1.2, 0.3, 1.2, 1.2, 1.2]), cfg(&vol, &[-1.2, -1.2, -1.2, 0.0, -1.2, -1.2, -1.2])),
        (cfg(&vol, &[-1.0, 1.0, -1.0, -0.2, -1.0, 1.0, -1.0]), cfg(&vol, &[1.0, -1.0, 1.0, 0.0, 1.0, -1.0, 1.0])),
    ];
    let deltas: Vec<Volume> = (0..=3).map(|r| Volume::segment(-r, r)).collect();
    let curve = quasilocality_probe(&b, &one(0), &deltas, &probes, &cond_params(3000), 8).unwrap();
    assert!(!curve.points[0].at_noise_floor, "{curve:?}");
    assert!(curve.points[2].at_noise_floor && curve.points[3].at_noise_floor, "{curve:?}");
    assert_eq!(curve.points[3].sup, 0.0);
    assert!(curve.non_increasing, "{curve:?}");
}

#[test]
fn expansion_backed_dynamics_is_measurable() {
    let drift = DriftSpec::from_builtin(
        0.3,
        &BuiltinDrift::Markov {
            coupling: 0.5,
            field: 0.5,
            range: 1,
            link: BoundedFn::Tanh,
        },
        1,
    )
    .unwrap();
    let vol = Volume::segment(0, 2);
    let inst = Instance::new(drift, PotentialSpec::ou(), vol.clone(), 1.0, 0.05, 3).with_slices(1);
    let d = ExpansionDynamics {
        instance: inst,
        n_max: 3,
        mc: McParams::with_samples(64),
        seed: 5,
    };
    let (x, y) = (cfg(&vol, &[0.2, -0.4, 0.6]), cfg(&vol, &[0.0, 0.3, 0.1]));
    let a = d.terms(&x, &y).unwrap();
    assert_eq!(a, d.terms(&x, &y).unwrap());
    assert!(!a.is_empty());
    let b = bsi(Interaction::zero(0.2).unwrap(), Arc::new(d), 1.0, vol.clone());
    let g = conditional_density(&b, &one(1), &cfg(&one(1), &[0.1]), &y, &cond_params(40), 1).unwrap();
    assert!(g.estimate.value.is_finite() && g.estimate.value > 0.0);
}

