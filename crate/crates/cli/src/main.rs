use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use timebin_lab::{run_preset, validate_config, CliError, Preset, RunRequest};

#[derive(Parser)]
#[command(
    name = "timebin-lab",
    version,
    about = "Time-bin entanglement simulator and analysis presets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// JSON configuration file, layered over the preset defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration value, e.g. `--set mu=0.1` or `--set scan.points=16`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of simulation work units (does not change results).
    #[arg(long)]
    chunks: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Fringe scan in the interferometric geometry.
    BellScan(RunArgs),
    /// Visibility against mean pair number.
    PowerScan(RunArgs),
    /// Pair-number estimate from TAC side peaks.
    Sidepeak(RunArgs),
    /// Single-run TAC histogram and event export.
    TacHistogram(RunArgs),
    /// Analytic joint distribution and visibility curve.
    AnalyticTables(RunArgs),
    /// Check a configuration file and list violated invariants.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn report(err: &CliError) {
    match err {
        CliError::Core(timebin_core::Error::InvalidConfig(diagnostics)) => {
            eprintln!("error: invalid configuration");
            for d in diagnostics {
                eprintln!("  {d}");
            }
        }
        other => eprintln!("error: {other}"),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (preset, args) = match cli.command {
        Command::Validate { config } => {
            let diagnostics = validate_config(&config)?;
            if diagnostics.is_empty() {
                println!("{}: ok", config.display());
                return Ok(());
            }
            return Err(timebin_core::Error::InvalidConfig(diagnostics).into());
        }
        Command::BellScan(a) => (Preset::BellScan, a),
        Command::PowerScan(a) => (Preset::PowerScan, a),
        Command::Sidepeak(a) => (Preset::Sidepeak, a),
        Command::TacHistogram(a) => (Preset::TacHistogram, a),
        Command::AnalyticTables(a) => (Preset::AnalyticTables, a),
    };
    let request = RunRequest {
        preset,
        config_path: args.config,
        overrides: args.overrides,
        out_dir: args.out,
        seed: args.seed,
        chunks: args.chunks,
    };
    let manifest = run_preset(&request)?;
    println!(
        "{} finished in {:.2} s; wrote {} to {}",
        manifest.preset,
        manifest.duration.as_secs_f64(),
        manifest.files.join(", "),
        manifest.out_dir.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(&e);
            ExitCode::from(e.exit_code())
        }
    }
}
