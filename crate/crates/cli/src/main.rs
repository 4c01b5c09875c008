use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use uav_secrecy::optimizer::SchemeId;
use uav_secrecy_cli::sweep::{SweepParameter, SweepSpec};
use uav_secrecy_cli::{cmd_run, cmd_sweep, cmd_validate, load, CliError, RunOptions, SweepOptions};

#[derive(Parser)]
#[command(name = "uav-secrecy", version, about = "Secure dual-UAV cognitive radio optimizer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario TOML file (built-in default scenario when omitted)
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Outer iteration cap
    #[arg(long)]
    max_outer: Option<usize>,
    /// Seed for the Monte Carlo eavesdropper check on final states
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one scheme and write trajectory, power, schedule and convergence files
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "proposed", value_parser = parse_scheme)]
        scheme: SchemeId,
    },
    /// Solve a grid of scenarios and schemes into sweep.csv
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        parameter: SweepParameter,
        /// Comma-separated values (periods in s, radii in m, thresholds in dBm)
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        values: Option<Vec<f64>>,
        /// Comma-separated schemes
        #[arg(long, value_delimiter = ',', default_value = "proposed", value_parser = parse_scheme)]
        scheme: Vec<SchemeId>,
        /// Also write the per-run files of every point
        #[arg(long)]
        emit_per_point: bool,
        /// Worker threads (0 = one per core)
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
    /// Check a scenario file and its initial point
    Validate {
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn parse_scheme(s: &str) -> Result<SchemeId, String> {
    s.parse::<SchemeId>().map_err(|e| e.to_string())
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { common, scheme } => {
            let s = cmd_run(&RunOptions {
                scenario: common.scenario,
                scheme,
                out: common.out.clone(),
                max_outer: common.max_outer,
                seed: common.seed,
            })?;
            println!(
                "{}: objective {:.6} after {} iterations ({:.2} s), results in {}",
                s.scheme,
                s.final_objective,
                s.iterations,
                s.runtime_s,
                common.out.display()
            );
        }
        Command::Sweep { common, parameter, values, scheme, emit_per_point, workers } => {
            let base = load(common.scenario.as_deref())?;
            let default_values = values.is_none();
            let values = values.unwrap_or_else(|| parameter.default_values());
            let spec = SweepSpec::new(parameter, values, scheme, &base)?;
            let rows = cmd_sweep(
                &spec,
                &SweepOptions {
                    scenario: common.scenario,
                    out: common.out.clone(),
                    max_outer: common.max_outer,
                    seed: common.seed,
                    emit_per_point,
                    workers,
                    default_values,
                },
            )?;
            for r in &rows {
                match (&r.objective, &r.error) {
                    (Some(v), _) => println!("{} = {} {}: {v:.6}", parameter.as_str(), r.parameter_value, r.scheme),
                    (None, Some(e)) => eprintln!("{} = {} {}: {e}", parameter.as_str(), r.parameter_value, r.scheme),
                    (None, None) => {}
                }
            }
            println!("wrote {}", common.out.join("sweep.csv").display());
        }
        Command::Validate { scenario, seed } => {
            let rep = cmd_validate(scenario.as_deref(), seed)?;
            println!("{}", serde_json::to_string_pretty(&rep).expect("report serializes"));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code() as u8)
        }
    }
}
