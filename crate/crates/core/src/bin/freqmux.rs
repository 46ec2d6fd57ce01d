use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Parser};
use freqmux::scenario::{run_scenario, Scenario, ScenarioConfig, DEFAULT_CONFIG};

/// Runs simulation scenarios for the frequency-multiplexed heralded source.
#[derive(Parser, Debug)]
#[command(name = "freqmux", version)]
struct Cli {
    /// Scenario to run. Overrides `scenario` in the config file.
    #[arg(value_enum)]
    scenario: Option<Scenario>,

    /// TOML configuration file. Missing keys take their defaults.
    #[arg(short, long)]
    config: Option<PathBuf>,

    #[arg(long)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(short, long)]
    out: Option<PathBuf>,

    /// Multiplies the quadrature node counts.
    #[arg(long)]
    grid_scale: Option<f64>,

    /// Print the documented default configuration and exit.
    #[arg(long)]
    print_config: bool,

    /// -v for progress, -vv for debug output.
    #[arg(short, long, action = ArgAction::Count)]
    verbose: u8,
}

fn run(cli: Cli) -> freqmux::Result<bool> {
    let mut config = match &cli.config {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::default(),
    };
    if let Some(s) = cli.scenario {
        config.scenario = s;
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = cli.out {
        config.output_dir = out;
    }
    if let Some(g) = cli.grid_scale {
        config.grid_scale = g;
    }
    let report = run_scenario(&config)?;
    print!("{}", report.summary.to_text(config.scenario));
    println!("output: {}", report.output_dir.display());
    Ok(report.summary.all_pass())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    if cli.print_config {
        print!("{DEFAULT_CONFIG}");
        return ExitCode::SUCCESS;
    }
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        // the run completed but some summary checks failed
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
