use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gibbsdyn_cli::replay::{replay, ReplayOutcome};
use gibbsdyn_cli::{execute, load_config, output_root, CliError};

#[derive(Parser)]
#[command(name = "gibbsdyn", version, about = "Gibbsianness of interacting lattice diffusions: experiments and checks")]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output root; each subcommand writes to `<out>/<subcommand>/`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample paths of the interacting dynamics.
    Simulate,
    /// Transition density at the configured probes.
    Density,
    /// Cluster weights, interaction terms, identity check and λ̂ fit.
    Expand,
    /// Polymer convergence criterion and its critical λ.
    Kp,
    /// Uniqueness coefficient of the initial interaction.
    Dobrushin,
    /// Consistency of conditional laws and a single-site KS check.
    Dlr,
    /// Conditional density of the two-time measure.
    Bispace,
    /// Boundary dependence of the conditional density.
    Quasilocality,
    /// Kernel decay curve and a summary of sibling runs.
    Report,
    /// Reruns an artifact directory and compares outputs.
    Replay {
        dir: PathBuf,
        /// Standard-error multiple above which rows are flagged under a new seed.
        #[arg(long, default_value_t = 4.0)]
        z_max: f64,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Density => "density",
            Command::Expand => "expand",
            Command::Kp => "kp",
            Command::Dobrushin => "dobrushin",
            Command::Dlr => "dlr",
            Command::Bispace => "bispace",
            Command::Quasilocality => "quasilocality",
            Command::Report => "report",
            Command::Replay { .. } => "replay",
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Validation(format!("threads: {e}")))?;
    }
    if let Command::Replay { dir, z_max } = &cli.command {
        return match replay(dir, cli.seed, *z_max)? {
            ReplayOutcome::Identical { files } => {
                println!("replay identical: {files} output files match bitwise");
                Ok(())
            }
            ReplayOutcome::Statistical { compared, flagged, z_max } => {
                println!("replay under a different seed: {compared} rows compared, {} beyond {z_max} standard errors", flagged.len());
                for f in flagged {
                    println!("  flagged {f}");
                }
                Ok(())
            }
        };
    }
    let path = cli.config.as_deref().ok_or_else(|| CliError::Validation("--config is required".into()))?;
    let cfg = load_config(path, cli.seed)?;
    let root = output_root(cli.out.as_deref(), &cfg);
    let name = cli.command.name();
    let manifest = execute(name, &cfg, &root.join(name), &root)?;
    println!("{}", manifest.display());
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
