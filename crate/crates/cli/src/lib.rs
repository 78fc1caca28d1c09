//! Command-line harness: config parsing, subcommands, artifact directories
//! and bitwise replay.

pub mod commands;
pub mod config;
pub mod output;
pub mod replay;

use std::fmt;
use std::path::{Path, PathBuf};

use config::ExperimentConfig;
use output::Artifacts;

/// Failure of a harness run, mapped onto the process exit code.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Numerical(String),
    Precision(String),
    Io(String),
    Replay(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Precision(_) => 4,
            CliError::Io(_) | CliError::Replay(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid input: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Precision(m) => write!(f, "precision not reached: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Replay(m) => write!(f, "replay: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<gibbsdyn::Error> for CliError {
    fn from(e: gibbsdyn::Error) -> Self {
        use gibbsdyn::Error as E;
        let msg = e.to_string();
        match e {
            E::Setup(_) | E::DomainConflict(_) | E::Coverage(_) | E::Budget { .. } => CliError::Validation(msg),
            E::Numerical(_) | E::BoundViolation { .. } | E::Locality(_) => CliError::Numerical(msg),
            E::Precision(_) => CliError::Precision(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Subcommands that produce an artifact directory.
pub const SUBCOMMANDS: [&str; 10] = [
    "simulate",
    "density",
    "expand",
    "kp",
    "dobrushin",
    "dlr",
    "bispace",
    "quasilocality",
    "report",
    "replay",
];

/// Reads and validates a config file, applying a seed override.
pub fn load_config(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = ExperimentConfig::parse(&text)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs one subcommand into `dir`, which is created if needed.
pub fn execute(subcommand: &str, cfg: &ExperimentConfig, dir: &Path, source: &Path) -> Result<PathBuf, CliError> {
    let mut out = Artifacts::create(dir, cfg)?;
    match subcommand {
        "simulate" => commands::simulate_cmd(cfg, &mut out)?,
        "density" => commands::density_cmd(cfg, &mut out)?,
        "expand" => commands::expand_cmd(cfg, &mut out)?,
        "kp" => commands::kp_cmd(cfg, &mut out)?,
        "dobrushin" => commands::dobrushin_cmd(cfg, &mut out)?,
        "dlr" => commands::dlr_cmd(cfg, &mut out)?,
        "bispace" => commands::bispace_cmd(cfg, &mut out)?,
        "quasilocality" => commands::quasilocality_cmd(cfg, &mut out)?,
        "report" => {
            let source = &source.canonicalize().unwrap_or_else(|_| source.to_path_buf());
            out.note("source", source.display());
            commands::report_cmd(cfg, source, &mut out)?
        }
        other => return Err(CliError::Validation(format!("unknown subcommand `{other}`"))),
    }
    out.finish(subcommand)
}

/// Output root: the flag, then the config's `out`, then `runs`.
pub fn output_root(flag: Option<&Path>, cfg: &ExperimentConfig) -> PathBuf {
    flag.map(Path::to_path_buf).or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("runs"))
}
