use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use classunc::{execute, CliError, Command, ExperimentConfig, OutputDir};

#[derive(Parser, Debug)]
#[command(name = "classunc", version, about = "Class-uncertainty imbalance experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// Experiment config (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory; must exist. Overrides `output` in the config.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Run a single seed instead of the configured list.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Suppress the summary on stdout.
    #[arg(long, global = true)]
    quiet: bool,

    /// Worker threads for parallel cells (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Cmd {
    /// Generate a synthetic dataset and its manifest.
    Synth,
    /// Train a deep ensemble and write per-class uncertainty.
    Uncertainty,
    /// Train the configured mitigation for every seed.
    Train,
    /// Run an IF1a / IF1b / IF2 / mitigation-compare analysis.
    Analyze,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Synth => Command::Synth,
            Cmd::Uncertainty => Command::Uncertainty,
            Cmd::Train => Command::Train,
            Cmd::Analyze => Command::Analyze,
        }
    }
}

fn real_main(cli: Cli) -> Result<(), CliError> {
    let config_path = cli
        .config
        .ok_or_else(|| CliError::Config("--config PATH is required".into()))?;
    let mut cfg = ExperimentConfig::load(&config_path)?;
    if let Some(seed) = cli.seed {
        cfg.seeds = vec![seed];
    }
    let command = Command::from(cli.command);
    cfg.validate(command)?;
    let out_path = match (cli.out, &cfg.output) {
        (Some(p), _) => p,
        (None, Some(p)) => cfg.resolve(p),
        (None, None) => {
            return Err(CliError::Config(
                "no output directory: pass --out DIR or set `output`".into(),
            ))
        }
    };
    let out = OutputDir::open(&out_path)?;
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(CliError::Config("--jobs must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--jobs: {e}")))?;
    }
    let (result, written) = execute(command, &cfg, &out)?;
    if !cli.quiet {
        for line in &result.summary {
            println!("{line}");
        }
        println!(
            "{}: wrote {} files to {}",
            command.as_str(),
            written.len(),
            out.path().display()
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match real_main(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", e.category());
            ExitCode::FAILURE
        }
    }
}
