use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use convospat::{run, CliError, Command, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "convospat", version, about = "Tapered process-convolution model for spatio-temporal counts")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate a dataset with known truth
    Simulate(Common),
    /// Fit the global or adaptive model by MCMC
    Fit(Common),
    /// WAIC, LMPL and parameter summaries of a fit
    Assess(Common),
    /// Posterior median spatial correlations of overlapping site pairs
    Correlations(Common),
    /// Parameter summaries and Geweke diagnostics of a fit
    Summarize(Common),
}

#[derive(Args)]
struct Common {
    /// key=value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Weight scheme: global or adaptive (truth for simulate: global, adaptive or boundary)
    #[arg(long)]
    model: Option<String>,
    /// Taper size
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override one configuration key (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Cmd {
    fn split(self) -> (Command, Common) {
        match self {
            Cmd::Simulate(c) => (Command::Simulate, c),
            Cmd::Fit(c) => (Command::Fit, c),
            Cmd::Assess(c) => (Command::Assess, c),
            Cmd::Correlations(c) => (Command::Correlations, c),
            Cmd::Summarize(c) => (Command::Summarize, c),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            let err = CliError::Usage(first.to_string());
            eprintln!("{}", err.report());
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    let (command, c) = cli.command.split();
    let ov = Overrides {
        config: c.config,
        model: c.model,
        m: c.m,
        seed: c.seed,
        out: c.out,
        set: c.set,
    };
    match RunConfig::resolve(command, &ov).and_then(|cfg| run(&cfg)) {
        Ok(outcome) => {
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            if let Some(r) = &outcome.report {
                println!("{r}");
            }
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.report());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
