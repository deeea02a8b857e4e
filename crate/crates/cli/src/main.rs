use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use coda::{commands, report, sweep, CliError, ExperimentConfig, Overrides, Profile};

#[derive(Parser)]
#[command(name = "coda", version, about = "Online sparse plus low-rank decomposition of compressive streams")]
struct Cli {
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides `data.master_seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for `sweep`.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Default scales.
    #[arg(long, global = true, value_enum)]
    profile: Option<Profile>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write one synthetic stream per s0 in the grid.
    Gen,
    /// Decompose a stored stream and write per-frame results.
    Run {
        dataset: PathBuf,
        /// Measurement count; defaults to the largest grid value.
        #[arg(long)]
        m: Option<usize>,
    },
    /// Phase diagram over the s0 × m grid.
    Sweep,
    /// Render a sweep CSV as text, plus gnuplot matrices with --out.
    Report { csv: PathBuf },
}

fn execute(cli: Cli) -> Result<(), CliError> {
    if cli.jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    if let Command::Report { csv } = &cli.command {
        let (text, written) = report::cmd_report(csv, cli.out.as_deref())?;
        print!("{}", text);
        for p in written {
            eprintln!("wrote {}", p.display());
        }
        return Ok(());
    }
    let overrides = Overrides {
        profile: cli.profile,
        seed: cli.seed,
        out: cli.out.clone(),
    };
    let cfg = ExperimentConfig::load(cli.config.as_deref(), &overrides)?;
    match cli.command {
        Command::Gen => {
            for p in commands::cmd_gen(&cfg)? {
                eprintln!("wrote {}", p.display());
            }
        }
        Command::Run { dataset, m } => {
            let p = commands::cmd_run(&cfg, &dataset, m)?;
            eprintln!("wrote {}", p.display());
        }
        Command::Sweep => {
            let p = sweep::cmd_sweep(&cfg, cli.jobs)?;
            eprintln!("wrote {}", p.display());
        }
        Command::Report { .. } => unreachable!(),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(2),
            };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
