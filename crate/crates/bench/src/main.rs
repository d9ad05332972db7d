use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cardiomech_bench::config::parse_override;
use cardiomech_bench::report::check_csv;
use cardiomech_bench::{emit_report, run_benchmark, BenchConfig, BenchReport, ConfigError, Format};
use clap::{Parser, Subcommand};

/// Cardiac mechanics preconditioner benchmarks.
#[derive(Parser)]
#[command(name = "cardiomech", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a benchmark (preset name or TOML file) and write a report.
    Run {
        config: String,
        /// Override one key, e.g. --set bddc.primal=VE or --set sweep.fe.order=[1,2].
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        #[arg(long, default_value = "csv")]
        format: Format,
    },
    /// Resolve and validate a configuration without running it.
    Verify {
        config: String,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Check that a CSV or JSON report is readable and its averages add up.
    Check { report: PathBuf },
}

fn load(config: &str, set: &[String]) -> Result<BenchConfig, ConfigError> {
    let mut overrides = Vec::new();
    let mut errors = Vec::new();
    for s in set {
        match parse_override(s) {
            Ok(kv) => overrides.push(kv),
            Err(e) => errors.extend(e.errors),
        }
    }
    if !errors.is_empty() {
        return Err(ConfigError { errors });
    }
    BenchConfig::load(config, &overrides)
}

fn check(path: &Path) -> Result<String, String> {
    if path.extension().is_some_and(|e| e == "json") {
        let r = BenchReport::read_json(path).map_err(|e| e.to_string())?;
        let steps: usize = r.runs.iter().map(|r| r.steps.len()).sum();
        Ok(format!("{}: {} runs, {steps} steps, consistent", path.display(), r.runs.len()))
    } else {
        let c = check_csv(path).map_err(|e| e.to_string())?;
        Ok(format!("{}: {} runs, {} rows, consistent", path.display(), c.runs, c.rows))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Verify { config, set } => match load(&config, &set) {
            Ok(c) => {
                println!("{}: {} run(s) valid", c.benchmark(), c.n_runs());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("{e}");
                ExitCode::from(1)
            }
        },
        Command::Run { config, set, out, format } => {
            let config = match load(&config, &set) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::from(1);
                }
            };
            let report = run_benchmark(&config);
            for run in &report.runs {
                match &run.failure {
                    None => println!(
                        "run {} [{}]: {} dofs, {} subdomains, {} steps, {:.2} GMRES per Newton, {:.2} Newton per step",
                        run.index,
                        run.label,
                        run.n_dofs,
                        run.n_subdomains,
                        run.summary.steps,
                        run.summary.mean_gmres,
                        run.summary.mean_newton_per_step
                    ),
                    Some(f) => println!("run {} [{}]: FAILED at step {}: {}", run.index, run.label, f.step, f.message),
                }
            }
            match emit_report(&report, format, &out) {
                Ok(path) => println!("report written to {}", path.display()),
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::from(1);
                }
            }
            if report.any_failed() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            }
        }
        Command::Check { report } => match check(&report) {
            Ok(msg) => {
                println!("{msg}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("{e}");
                ExitCode::from(1)
            }
        },
    }
}
