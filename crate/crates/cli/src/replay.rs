//! Re-runs an artifact directory and compares the outputs.

use std::fs;
use std::path::Path;

use crate::config::ExperimentConfig;
use crate::output::{Manifest, CONFIG};
use crate::{execute, CliError};

/// Outcome of a replay.
#[derive(Debug, Clone, PartialEq)]
pub enum ReplayOutcome {
    /// Every output file is byte-identical.
    Identical { files: usize },
    /// Rerun under another seed; rows whose values differ by more than
    /// `z_max` combined standard errors are flagged.
    Statistical { compared: usize, flagged: Vec<String>, z_max: f64 },
}

/// First differing record of two files, as `(line, left, right)`.
pub fn first_divergence(a: &str, b: &str) -> Option<(usize, String, String)> {
    let (mut la, mut lb) = (a.lines(), b.lines());
    let mut line = 1;
    loop {
        match (la.next(), lb.next()) {
            (None, None) => return None,
            (x, y) if x == y => line += 1,
            (x, y) => {
                return Some((
                    line,
                    x.unwrap_or("<end of file>").to_string(),
                    y.unwrap_or("<end of file>").to_string(),
                ))
            }
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Replay(format!("cannot read {}: {e}", path.display())))
}

/// Value/stderr pairs of each CSV row that has both columns.
fn value_rows(text: &str) -> Vec<(f64, Option<f64>)> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let Ok(h) = r.headers() else { return Vec::new() };
    let (Some(vi), Some(si)) = (h.iter().position(|c| c == "value"), h.iter().position(|c| c == "stderr")) else {
        return Vec::new();
    };
    r.records()
        .filter_map(|rec| {
            let rec = rec.ok()?;
            let v = rec.get(vi)?.parse().ok()?;
            Some((v, rec.get(si)?.parse().ok()))
        })
        .collect()
}

pub fn replay(dir: &Path, seed: Option<u64>, z_max: f64) -> Result<ReplayOutcome, CliError> {
    let manifest = Manifest::read(dir)?;
    let cfg = ExperimentConfig::parse(&read(&dir.join(CONFIG))?)?;
    let recorded_seed: u64 = manifest
        .get("seed")?
        .parse()
        .map_err(|_| CliError::Replay("manifest seed is not an integer".into()))?;
    if cfg.seed != recorded_seed || cfg.hash() != manifest.get("config_hash")? {
        return Err(CliError::Replay(format!(
            "config.toml does not match the manifest (seed {} vs {recorded_seed}, or hash mismatch)",
            cfg.seed
        )));
    }
    let sub = manifest.get("subcommand")?.to_string();
    let source = manifest.get("source").map(Path::new).unwrap_or(dir);
    let tmp = tempfile::tempdir()?;
    let mut rerun = cfg.clone();
    if let Some(s) = seed {
        rerun.seed = s;
    }
    execute(&sub, &rerun, tmp.path(), source)?;
    let outputs = manifest.outputs()?;
    if seed.is_none_or(|s| s == recorded_seed) {
        for name in &outputs {
            let (a, b) = (read(&dir.join(name))?, read(&tmp.path().join(name))?);
            if let Some((line, x, y)) = first_divergence(&a, &b) {
                return Err(CliError::Replay(format!("{name}:{line} differs\n  recorded: {x}\n  replayed: {y}")));
            }
        }
        return Ok(ReplayOutcome::Identical { files: outputs.len() });
    }
    let mut compared = 0;
    let mut flagged = Vec::new();
    for name in outputs.iter().filter(|n| n.ends_with(".csv")) {
        let (a, b) = (read(&dir.join(name))?, read(&tmp.path().join(name))?);
        for (k, ((va, sa), (vb, sb))) in value_rows(&a).into_iter().zip(value_rows(&b)).enumerate() {
            compared += 1;
            let s = sa.unwrap_or(0.0).hypot(sb.unwrap_or(0.0));
            let d = (va - vb).abs();
            let off = if s > 0.0 { d / s > z_max } else { d > 1e-12 * va.abs().max(1.0) };
            if off {
                flagged.push(format!("{name}:{} ({va} vs {vb})", k + 2));
            }
        }
    }
    Ok(ReplayOutcome::Statistical { compared, flagged, z_max })
}
