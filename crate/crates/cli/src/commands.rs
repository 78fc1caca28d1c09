//! Subcommand bodies. Each writes its tables through [`Artifacts`].

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use gibbsdyn::dynamics::{
    fit_decay_rate, kernel_sup_distance, simulate, spectral_gap, BuiltinDrift, DriftSpec,
};
use gibbsdyn::expansion::{
    interaction_terms, kp_check, kp_lambda_star, reconstruct_density, summability_report, weight_bound_fit, WeightRow, WeightTable,
};
use gibbsdyn::gibbs::{
    bispace_hamiltonian, conditional_density, conditional_ks, dlr_test, dobrushin_check, quasilocality_probe, BiSpaceInteraction,
    ConditionalParams, DlrParams, DynamicInteraction, ExpansionDynamics, NoDynamics,
};
use gibbsdyn::girsanov::density;
use gibbsdyn::lattice::{Configuration, Volume};
use gibbsdyn::rng::{derive_seed, stream};
use gibbsdyn::Estimate;
use serde::Serialize;

use crate::config::{DynamicsKind, ExperimentConfig};
use crate::output::{stderr_field, Artifacts, Manifest};
use crate::CliError;

fn volume_label(v: &Volume) -> String {
    v.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(" ")
}

fn free_drift(cfg: &ExperimentConfig) -> Result<DriftSpec, CliError> {
    match cfg.drift {
        Some(_) => cfg.drift_at(cfg.beta),
        None => Ok(DriftSpec::from_builtin(0.0, &BuiltinDrift::Constant { c: 0.0, range: 0 }, cfg.lattice.bounds.len())?),
    }
}

fn probes(cfg: &ExperimentConfig) -> Result<Vec<(Configuration, Configuration)>, CliError> {
    if cfg.probes.is_empty() {
        return Err(CliError::Validation("probes: this subcommand needs at least one [[probes]] entry".into()));
    }
    Ok(cfg.probes.iter().map(|p| (cfg.configuration(&p.x), cfg.configuration(&p.y))).collect())
}

#[derive(Serialize)]
struct PathRow<'a> {
    path: usize,
    step: usize,
    time: f64,
    site: String,
    value: f64,
    stderr: &'static str,
    seed: u64,
    config_hash: &'a str,
}

pub fn simulate_cmd(cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let pot = cfg.pot()?;
    let drift = free_drift(cfg)?;
    let vol = cfg.volume();
    let mut rows = Vec::new();
    for p in 0..cfg.simulate.paths {
        let x0 = match &cfg.simulate.x0 {
            Some(v) => cfg.configuration(v),
            None => {
                let mut rng = stream(cfg.seed, "x0", p as u64);
                let v = pot.sample_reference(vol.len(), &mut rng)?;
                cfg.configuration(&v)
            }
        };
        let path = simulate(&drift, &pot, &vol, &x0, cfg.t, cfg.dt, derive_seed(cfg.seed, "path", p as u64))?;
        let times = path.times();
        for (k, &time) in times.iter().enumerate() {
            for (s, v) in path.configuration_at(k).iter() {
                rows.push(PathRow {
                    path: p,
                    step: k,
                    time,
                    site: s.to_string(),
                    value: v,
                    stderr: "exact",
                    seed: cfg.seed,
                    config_hash: &out.hash,
                });
            }
        }
    }
    let hash = out.hash.clone();
    let rows: Vec<PathRow> = rows.into_iter().map(|r| PathRow { config_hash: &hash, ..r }).collect();
    out.csv("paths.csv", &rows)
}

#[derive(Serialize)]
struct DensityRow<'a> {
    probe: usize,
    beta: f64,
    method: String,
    bridge: String,
    value: f64,
    stderr: String,
    n: usize,
    ess: f64,
    log_value: f64,
    seed: u64,
    config_hash: &'a str,
}

pub fn density_cmd(cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let pot = cfg.pot()?;
    let drift = free_drift(cfg)?;
    let vol = cfg.volume();
    let mut rows = Vec::new();
    for (k, (x, y)) in probes(cfg)?.iter().enumerate() {
        let d = density(&drift, &pot, &vol, x, y, cfg.t, cfg.dt, &cfg.mc, derive_seed(cfg.seed, "density", k as u64))?;
        let est = if drift.beta == 0.0 { Estimate::exact(1.0) } else { d.estimate() };
        rows.push(DensityRow {
            probe: k,
            beta: drift.beta,
            method: d.method.to_string(),
            bridge: d.bridge.map(|b| format!("{b:?}")).unwrap_or_else(|| "none".into()),
            value: d.value,
            stderr: stderr_field(&est),
            n: d.n,
            ess: d.ess,
            log_value: d.log_value,
            seed: cfg.seed,
            config_hash: &out.hash,
        });
    }
    let hash = out.hash.clone();
    let rows: Vec<DensityRow> = rows.into_iter().map(|r| DensityRow { config_hash: &hash, ..r }).collect();
    out.csv("density.csv", &rows)
}

#[derive(Serialize)]
struct WeightLine<'a> {
    beta: f64,
    probe: usize,
    seed: u64,
    config_hash: &'a str,
    #[serde(flatten)]
    row: WeightRow,
}

#[derive(Serialize)]
struct PhiLine<'a> {
    beta: f64,
    probe: usize,
    delta: String,
    size: usize,
    value: f64,
    stderr: f64,
    seed: u64,
    config_hash: &'a str,
}

#[derive(Serialize)]
struct IdentityRow<'a> {
    beta: f64,
    probe: usize,
    slices: usize,
    polymers: usize,
    reconstructed: f64,
    reconstructed_stderr: String,
    direct: f64,
    direct_stderr: String,
    z: f64,
    log_direct: f64,
    minus_sum_phi: f64,
    phi_stderr: String,
    log_residual: f64,
    z_log: f64,
    seed: u64,
    config_hash: &'a str,
}

#[derive(Serialize)]
struct FitRow<'a> {
    beta: f64,
    slices: usize,
    step: f64,
    value: f64,
    stderr: f64,
    lambda_lo: f64,
    lambda_hi: f64,
    c1_hat: f64,
    c2_hat: f64,
    c2_kernel: f64,
    clusters: usize,
    seed: u64,
    config_hash: &'a str,
}

#[derive(Serialize)]
struct SummabilityRow<'a> {
    beta: f64,
    value: f64,
    stderr: f64,
    sites: usize,
    seed: u64,
    config_hash: &'a str,
}

fn z_of(a: f64, sa: f64, b: f64, sb: f64) -> f64 {
    let s = sa.hypot(sb);
    let d = (a - b).abs();
    if s > 0.0 {
        d / s
    } else if d == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

pub fn expand_cmd(cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let pot = cfg.pot()?;
    let vol = cfg.volume();
    let probes = probes(cfg)?;
    let hash = out.hash.clone();
    let (mut weights, mut phis, mut ids, mut summ) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for &beta in &cfg.betas() {
        let inst = cfg.instance(beta)?;
        let slices = inst.grid()?.slices();
        let mut tables = Vec::new();
        for (k, (x, y)) in probes.iter().enumerate() {
            // One seed per probe for every β: common random numbers.
            let table = WeightTable::estimate(&inst, x, y, &cfg.mc, derive_seed(cfg.seed, "expand", k as u64))?;
            for row in table.rows() {
                weights.push(WeightLine {
                    beta,
                    probe: k,
                    seed: cfg.seed,
                    config_hash: &hash,
                    row,
                });
            }
            let rec = reconstruct_density(&table)?;
            let phi = interaction_terms(&table, cfg.truncation.n_max)?;
            for (delta, e) in &phi.entries {
                phis.push(PhiLine {
                    beta,
                    probe: k,
                    delta: volume_label(delta),
                    size: delta.len(),
                    value: e.value,
                    stderr: e.stderr,
                    seed: cfg.seed,
                    config_hash: &hash,
                });
            }
            let d = density(&inst.drift, &pot, &vol, x, y, cfg.t, cfg.dt, &cfg.mc, derive_seed(cfg.seed, "density", k as u64))?;
            let de = if beta == 0.0 { Estimate::exact(1.0) } else { d.estimate() };
            let log_se = if d.value > 0.0 { de.stderr / d.value } else { f64::INFINITY };
            let minus = phi.log_density();
            ids.push(IdentityRow {
                beta,
                probe: k,
                slices,
                polymers: table.len(),
                reconstructed: rec.value,
                reconstructed_stderr: stderr_field(&rec),
                direct: de.value,
                direct_stderr: stderr_field(&de),
                z: rec.z_score(&de),
                log_direct: d.log_value,
                minus_sum_phi: minus.value,
                phi_stderr: stderr_field(&minus),
                log_residual: minus.value - d.log_value,
                z_log: z_of(minus.value, minus.stderr, d.log_value, log_se),
                seed: cfg.seed,
                config_hash: &hash,
            });
            tables.push(phi);
        }
        let s = summability_report(&tables);
        summ.push(SummabilityRow {
            beta,
            value: s.sup,
            stderr: s.sup_stderr,
            sites: s.per_site.len(),
            seed: cfg.seed,
            config_hash: &hash,
        });
    }
    let inst = cfg.instance(cfg.betas()[0])?;
    let fits = weight_bound_fit(&cfg.betas(), &inst, &probes, &cfg.mc, derive_seed(cfg.seed, "expand", 0))?;
    let fit_rows: Vec<FitRow> = fits
        .iter()
        .map(|f| FitRow {
            beta: f.beta,
            slices: f.slices,
            step: f.step,
            value: f.lambda_hat,
            // The lo/hi columns sit two standard errors out.
            stderr: (f.lambda_hi - f.lambda_lo) / 4.0,
            lambda_lo: f.lambda_lo,
            lambda_hi: f.lambda_hi,
            c1_hat: f.c1_hat,
            c2_hat: f.c2_hat,
            c2_kernel: f.c2_kernel,
            clusters: f.clusters,
            seed: cfg.seed,
            config_hash: &hash,
        })
        .collect();
    out.jsonl("weights.jsonl", &weights)?;
    out.jsonl("interaction.jsonl", &phis)?;
    out.csv("identity.csv", &ids)?;
    out.csv("lambda_fit.csv", &fit_rows)?;
    out.csv("summability.csv", &summ)
}

#[derive(Serialize)]
struct KpRow<'a> {
    beta: f64,
    slices: usize,
    polymers: usize,
    lambda: f64,
    satisfied: bool,
    value: f64,
    stderr: &'static str,
    lambda_star: f64,
    bisection_width: f64,
    seed: u64,
    config_hash: &'a str,
}

pub fn kp_cmd(cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let inst = cfg.instance(cfg.beta)?;
    let ps = inst.polymers()?;
    let r = kp_check(cfg.kp.lambda, &ps);
    let (star, width) = kp_lambda_star(&ps, cfg.kp.iterations);
    out.note("kp_satisfied", r.satisfied);
    let hash = out.hash.clone();
    out.csv(
        "kp.csv",
        &[KpRow {
            beta: cfg.beta,
            slices: inst.grid()?.slices(),
            polymers: ps.len(),
            lambda: cfg.kp.lambda,
            satisfied: r.satisfied,
            value: r.worst_ratio,
            stderr: "exact",
            lambda_star: star,
            bisection_width: width,
            seed: cfg.seed,
            config_hash: &hash,
        }],
    )
}

#[derive(Serialize)]
struct DobrushinRow<'a> {
    beta0: f64,
    value: f64,
    stderr: &'static str,
    passes: bool,
    strong_sum: f64,
    absolute_sum: f64,
    max_body: usize,
    max_range: i64,
    a1: bool,
    a2: bool,
    a3: bool,
    seed: u64,
    config_hash: &'a str,
}

pub fn dobrushin_cmd(cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let phi = cfg.interaction_on(&cfg.volume())?;
    phi.validate_norms(&cfg.pot()?, 5)?;
    let r = dobrushin_check(&phi);
    let s = phi.summability();
    let hash = out.hash.clone();
    out.csv(
        "dobrushin.csv",
        &[DobrushinRow {
            beta0: cfg.beta0,
            value: r.value,
            stderr: "exact",
            passes: r.passes,
            strong_sum: s.strong,
            absolute_sum: s.absolute,
            max_body: s.max_body,
            max_range: s.max_range,
            a1: s.a1,
            a2: s.a2,
            a3: s.a3,
            seed: cfg.seed,
            config_hash: &hash,
        }],
    )
}

#[derive(Serialize)]
struct DlrRow<'a> {
    function: String,
    direct: f64,
    direct_stderr: f64,
    value: f64,
    stderr: f64,
    z: f64,
    seed: u64,
    config_hash: &'a str,
}

#[derive(Serialize)]
struct KsRow<'a> {
    site: String,
    value: f64,
    stderr: &'static str,
    p_value: f64,
    n: usize,
    seed: u64,
    config_hash: &'a str,
}

pub fn dlr_cmd(cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let pot = cfg.pot()?;
    let big = cfg.volume();
    let sub = cfg.dlr_sub();
    // Instantiated past the lattice so that a thin margin is detected.
    let phi = cfg.interaction_on(&cfg.enlarged(&big, cfg.interaction_reach()))?;
    let params = DlrParams {
        n_outer: cfg.dlr.n_outer,
        n_inner: cfg.dlr.n_inner,
        sampler: cfg.sampler,
    };
    let r = dlr_test(&phi, &pot, &big, &sub, &params, derive_seed(cfg.seed, "dlr", 0))?;
    out.note("max_z", r.max_z);
    out.note("split_chain_passed", r.convergence.passed);
    let hash = out.hash.clone();
    let rows: Vec<DlrRow> = r
        .lines
        .iter()
        .map(|l| DlrRow {
            function: format!("{:?}", l.function),
            direct: l.direct.value,
            direct_stderr: l.direct.stderr,
            value: l.two_stage.value,
            stderr: l.two_stage.stderr,
            z: l.z,
            seed: cfg.seed,
            config_hash: &hash,
        })
        .collect();
    out.csv("dlr.csv", &rows)?;

    let site = sub.iter().next().expect("nonempty").clone();
    let phi_vol = cfg.interaction_on(&big)?;
    let boundary = Configuration::constant(pot.state_space(), &big, 0.0);
    let ks = conditional_ks(&phi_vol, &pot, &site, &boundary, cfg.dlr.ks_samples, &cfg.sampler, derive_seed(cfg.seed, "ks", 0))?;
    out.csv(
        "ks.csv",
        &[KsRow {
            site: site.to_string(),
            value: ks.statistic,
            stderr: "exact",
            p_value: ks.p_value,
            n: ks.n,
            seed: cfg.seed,
            config_hash: &hash,
        }],
    )
}

fn bispace_of(cfg: &ExperimentConfig) -> Result<BiSpaceInteraction, CliError> {
    let vol = cfg.volume();
    let dynamic: Arc<dyn DynamicInteraction> = match cfg.bispace.dynamics {
        DynamicsKind::None => Arc::new(NoDynamics),
        DynamicsKind::Expansion => Arc::new(ExpansionDynamics {
            instance: cfg.instance(cfg.beta)?,
            n_max: cfg.truncation.n_max,
            mc: cfg.mc,
            seed: derive_seed(cfg.seed, "phi", 0),
        }),
    };
    Ok(BiSpaceInteraction::new(cfg.interaction_on(&vol)?, dynamic, cfg.pot()?, cfg.t, vol)?)
}

fn conditional_params(cfg: &ExperimentConfig) -> ConditionalParams {
    ConditionalParams {
        chains: cfg.bispace.chains,
        sampler: cfg.sampler,
        ess_threshold: cfg.bispace.ess_threshold,
    }
}

#[derive(Serialize)]
struct ConditionalRow<'a> {
    z: f64,
    value: f64,
    stderr: f64,
    ess: f64,
    seed: u64,
    config_hash: &'a str,
}

#[derive(Serialize)]
struct HamiltonianRow<'a> {
    probe: usize,
    value: f64,
    stderr: &'static str,
    seed: u64,
    config_hash: &'a str,
}

pub fn bispace_cmd(cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let bsi = bispace_of(cfg)?;
    let lambda = cfg.lambda();
    let vol = cfg.volume();
    let y = cfg.configuration(&cfg.bispace.y.clone().unwrap_or_else(|| vec![0.0; vol.len()]));
    let hash = out.hash.clone();
    let mut rows = Vec::new();
    for &z in &cfg.bispace.z_grid {
        let zc = Configuration::constant(bsi.pot.state_space(), &lambda, bsi.pot.state_space().canonical(z));
        let g = conditional_density(&bsi, &lambda, &zc, &y, &conditional_params(cfg), derive_seed(cfg.seed, "bispace", 0))?;
        rows.push(ConditionalRow {
            z,
            value: g.estimate.value,
            stderr: g.estimate.stderr,
            ess: g.ess,
            seed: cfg.seed,
            config_hash: &hash,
        });
    }
    out.csv("conditional.csv", &rows)?;
    let mut hrows = Vec::new();
    for (k, p) in cfg.probes.iter().enumerate() {
        let (x, y) = (cfg.configuration(&p.x), cfg.configuration(&p.y));
        hrows.push(HamiltonianRow {
            probe: k,
            value: bispace_hamiltonian(&bsi, &lambda, &lambda, &x, &y)?,
            stderr: "exact",
            seed: cfg.seed,
            config_hash: &hash,
        });
    }
    out.csv("hamiltonian.csv", &hrows)
}

#[derive(Serialize)]
struct QuasiRow<'a> {
    radius: i64,
    delta_size: usize,
    value: f64,
    stderr: f64,
    at_noise_floor: bool,
    seed: u64,
    config_hash: &'a str,
}

pub fn quasilocality_cmd(cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let bsi = bispace_of(cfg)?;
    let lambda = cfg.lambda();
    let vol = cfg.volume();
    let radii = &cfg.quasilocality.radii;
    let deltas: Vec<Volume> = radii.iter().map(|&r| cfg.enlarged(&lambda, r).intersection(&vol)).collect();
    let pairs: Vec<(Configuration, Configuration)> = if cfg.quasilocality.pairs.is_empty() {
        let mut rng = stream(cfg.seed, "quasilocality/probes", 0);
        (0..cfg.quasilocality.random_pairs)
            .map(|_| {
                let a = bsi.pot.sample_reference(vol.len(), &mut rng)?;
                let b = bsi.pot.sample_reference(vol.len(), &mut rng)?;
                Ok((cfg.configuration(&a), cfg.configuration(&b)))
            })
            .collect::<Result<_, CliError>>()?
    } else {
        cfg.quasilocality.pairs.iter().map(|p| (cfg.configuration(&p.a), cfg.configuration(&p.b))).collect()
    };
    let curve = quasilocality_probe(&bsi, &lambda, &deltas, &pairs, &conditional_params(cfg), derive_seed(cfg.seed, "quasilocality", 0))?;
    out.note("non_increasing", curve.non_increasing);
    let hash = out.hash.clone();
    let rows: Vec<QuasiRow> = curve
        .points
        .iter()
        .zip(radii)
        .map(|(p, &r)| QuasiRow {
            radius: r,
            delta_size: p.delta.len(),
            value: p.sup,
            stderr: p.stderr,
            at_noise_floor: p.at_noise_floor,
            seed: cfg.seed,
            config_hash: &hash,
        })
        .collect();
    out.csv("quasilocality.csv", &rows)
}

#[derive(Serialize)]
struct DecayRow<'a> {
    t: f64,
    value: f64,
    stderr: &'static str,
    seed: u64,
    config_hash: &'a str,
}

#[derive(Serialize)]
struct Summary {
    potential: String,
    spectral_gap: f64,
    fitted_decay_rate: f64,
    ultracontractive: bool,
    runs: BTreeMap<String, BTreeMap<String, String>>,
}

/// Worst `|column|` over the rows of a CSV artifact.
fn column_max(path: &Path, column: &str) -> Option<f64> {
    let mut r = csv::Reader::from_path(path).ok()?;
    let idx = r.headers().ok()?.iter().position(|h| h == column)?;
    r.records()
        .filter_map(|rec| rec.ok()?.get(idx)?.parse::<f64>().ok())
        .map(f64::abs)
        .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))))
}

pub fn report_cmd(cfg: &ExperimentConfig, source: &Path, out: &mut Artifacts) -> Result<(), CliError> {
    let pot = cfg.pot()?;
    let r = &cfg.report;
    let hash = out.hash.clone();
    let rows: Vec<DecayRow> = (0..r.points)
        .map(|k| {
            let t = r.t_min + (r.t_max - r.t_min) * k as f64 / (r.points - 1) as f64;
            Ok(DecayRow {
                t,
                value: kernel_sup_distance(&pot, t)?.value,
                stderr: "exact",
                seed: cfg.seed,
                config_hash: &hash,
            })
        })
        .collect::<Result<_, CliError>>()?;
    out.csv("kernel_decay.csv", &rows)?;

    let mut runs = BTreeMap::new();
    if let Ok(entries) = fs::read_dir(source) {
        let mut dirs: Vec<_> = entries.filter_map(|e| e.ok()).map(|e| e.path()).filter(|p| p.join("manifest.txt").exists()).collect();
        dirs.sort();
        for d in dirs {
            let Ok(m) = Manifest::read(&d) else { continue };
            let Ok(sub) = m.get("subcommand") else { continue };
            if sub == "report" {
                continue;
            }
            let mut info: BTreeMap<String, String> = m.entries.iter().filter(|(k, _)| k != "outputs").cloned().collect();
            for (file, col, key) in [
                ("identity.csv", "z", "max_identity_z"),
                ("identity.csv", "log_residual", "max_log_residual"),
                ("dlr.csv", "z", "max_dlr_z"),
                ("lambda_fit.csv", "value", "max_lambda_hat"),
                ("quasilocality.csv", "value", "max_variation"),
            ] {
                if let Some(v) = column_max(&d.join(file), col) {
                    info.insert(key.to_string(), v.to_string());
                }
            }
            runs.insert(sub.to_string(), info);
        }
    }
    let summary = Summary {
        potential: format!("{:?}", cfg.potential),
        spectral_gap: spectral_gap(&pot)?,
        fitted_decay_rate: fit_decay_rate(&pot, r.t_min, r.t_max, r.points)?,
        ultracontractive: pot.ultracontractivity(10.0).satisfied,
        runs,
    };
    out.json("summary.json", &summary)
}
