use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rcmlab_cli::{describe, run, validate, CliError, ConfigFile, Kind, RunOptions};

#[derive(Parser)]
#[command(name = "rcmlab", version, about = "Random conductance model and gradient interface experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Check a config and print it with defaults filled in.
    Validate {
        experiment: Kind,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Print every parameter of an experiment with its default.
    Describe { experiment: Kind },
    #[command(external_subcommand)]
    Run(Vec<String>),
}

#[derive(Parser)]
#[command(name = "rcmlab")]
struct RunCli {
    experiment: Kind,
    #[command(flatten)]
    args: RunArgs,
}

fn load(config: &Option<PathBuf>) -> Result<ConfigFile, CliError> {
    match config {
        Some(p) => ConfigFile::read(p),
        None => Ok(ConfigFile::default()),
    }
}

fn main_inner() -> Result<(), CliError> {
    let cli = Cli::parse();
    match cli.command {
        Command::Describe { experiment } => {
            println!("{}", serde_json::to_string_pretty(&describe(experiment)).expect("json"));
        }
        Command::Validate { experiment, config } => {
            let file = load(&config)?;
            let r = validate(experiment, &file, None)?;
            let v = serde_json::json!({
                "experiment": r.kind.name(),
                "master_seed": r.master_seed,
                "config_hash": r.hash,
                "params": r.params,
            });
            println!("{}", serde_json::to_string_pretty(&v).expect("json"));
        }
        Command::Run(argv) => {
            let rc = RunCli::parse_from(std::iter::once("rcmlab".to_string()).chain(argv));
            let file = load(&rc.args.config)?;
            let out = rc.args.out.or(file.out.clone()).unwrap_or_else(|| PathBuf::from("rcmlab-out").join(rc.experiment.name()));
            let jobs = rc
                .args
                .jobs
                .or(file.jobs)
                .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
            let opts = RunOptions { out: out.clone(), jobs, seed: rc.args.seed };
            let manifest = run(rc.experiment, &file, &opts)?;
            println!("{}", serde_json::to_string_pretty(&manifest["summary"]).expect("json"));
            eprintln!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match main_inner() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
