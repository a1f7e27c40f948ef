use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use ncsim::experiment::{
    default_spec, emit_results, parse_str, pendulum_case_study, run_experiment, validate_theory,
    write_pendulum, write_validation, ExperimentResults, ExperimentSpec, Scenario,
};

#[derive(Parser)]
#[command(name = "ncsim", version, about = "Networked control over a shared wireless hop: MAC protocol experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand)]
enum Command {
    /// One network size, every configured protocol.
    Run,
    /// Every protocol over a range of network sizes.
    Sweep,
    /// Simulated mean AoI against the closed forms; exits 2 on a miss.
    Validate,
    /// Mixed easy/pendulum/hard network with 15 loops.
    Pendulum,
}

#[derive(Args)]
struct Common {
    /// TOML experiment file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory for the CSV files.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Base seed; replication r uses seed + r.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Number of replications.
    #[arg(long, global = true, value_name = "INT")]
    reps: Option<usize>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_name = "INT")]
    jobs: Option<usize>,
}

fn load_spec(scenario: Scenario, common: &Common) -> Result<ExperimentSpec> {
    let mut spec = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            parse_str(&text, Some(scenario)).with_context(|| format!("in {}", path.display()))?
        }
        None => default_spec(scenario),
    };
    if let Some(seed) = common.seed {
        spec.seed = seed;
    }
    if let Some(reps) = common.reps {
        spec.replications = reps;
    }
    spec.validate()?;
    Ok(spec)
}

fn out_dir(spec: &ExperimentSpec, common: &Common) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| spec.out.clone())
        .unwrap_or_else(|| Path::new("results").join(spec.scenario.as_str()))
}

fn print_table(results: &ExperimentResults) {
    println!(
        "{:<14} {:>3} {:>18} {:>26} {:>22}",
        "protocol", "N", "mean AoI", "LQG cost", "nMSE"
    );
    for set in &results.sets {
        let cell = |name: &str| match set.reps.metric(name) {
            Some(m) => format!("{:.4e} ± {:.2e}", m.mean, m.half_width.unwrap_or(0.0)),
            None => "-".into(),
        };
        let aoi = set.reps.metric("mean_aoi").map_or(f64::NAN, |m| m.mean);
        println!("{:<14} {:>3} {:>18.4} {:>26} {:>22}", set.label(), set.n, aoi, cell("lqg_cost"), cell("mean_nmse"));
    }
}

fn report_written(paths: &[PathBuf]) {
    for p in paths {
        eprintln!("wrote {}", p.display());
    }
}

fn run(cli: &Cli) -> Result<ExitCode> {
    let scenario = match cli.command {
        Command::Run => Scenario::Single,
        Command::Sweep => Scenario::Sweep,
        Command::Validate => Scenario::ValidateTheory,
        Command::Pendulum => Scenario::Pendulum,
    };
    let spec = load_spec(scenario, &cli.common)?;
    let dir = out_dir(&spec, &cli.common);
    let jobs = cli.common.jobs;

    match scenario {
        Scenario::Single | Scenario::Sweep => {
            let results = run_experiment(&spec, jobs)?;
            print_table(&results);
            report_written(&emit_results(&results, &dir)?);
            Ok(ExitCode::SUCCESS)
        }
        Scenario::ValidateTheory => {
            let (results, report) = validate_theory(&spec, jobs)?;
            print!("{report}");
            let mut written = emit_results(&results, &dir)?;
            written.push(write_validation(&report, &dir)?);
            report_written(&written);
            Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Scenario::Pendulum => {
            let report = pendulum_case_study(&spec, jobs)?;
            print!("{report}");
            report_written(&write_pendulum(&report, &dir)?);
            let unstable = report
                .cases
                .iter()
                .filter(|c| c.policy.protocol() == ncsim::mac::Protocol::Pmef)
                .any(|c| !c.all_stabilized());
            Ok(if unstable { ExitCode::from(2) } else { ExitCode::SUCCESS })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn flags_override_file_values() {
        let cli = Cli::try_parse_from(["ncsim", "sweep", "--seed", "7", "--reps", "3"]).unwrap();
        let spec = load_spec(Scenario::Sweep, &cli.common).unwrap();
        assert_eq!((spec.seed, spec.replications), (7, 3));
        assert_eq!(out_dir(&spec, &cli.common), Path::new("results/sweep"));
    }
}
