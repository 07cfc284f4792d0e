use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use multilevel_cli::config::{load_config, RunStatus};
use multilevel_cli::train::{self, Method};
use multilevel_cli::verify::{run_suite, Fault, Hooks};
use multilevel_cli::{bounds_cmd, mt_demo};

#[derive(Parser)]
#[command(name = "multilevel", version, about = "Multilevel entropic regularization: training, solver demos and bounds")]
struct Cli {
    /// Experiment config (or a previous run record to replay).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the sampler seed(s) in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the property suite; exits nonzero if any group fails.
    Verify {
        /// Deliberately break a component to show the suite catches it.
        #[arg(long, value_enum)]
        inject_fault: Option<Fault>,
        /// Run only groups whose name contains this string.
        #[arg(long)]
        only: Option<String>,
    },
    /// Solve a Marginalize-Tilt problem file and compare with grid search.
    MtDemo {
        /// Problem file (defaults to --config).
        problem: Option<PathBuf>,
    },
    /// Train a two-layer net with the two-level Metropolis sampler.
    Train,
    /// Train a two-layer net by sampling the joint Gibbs posterior.
    GibbsTrain,
    /// Evaluate the generalization and excess-risk bounds for an inputs file.
    Bounds {
        /// Inputs file (defaults to --config).
        inputs: Option<PathBuf>,
    },
}

fn input_path(positional: Option<PathBuf>, config: Option<PathBuf>, what: &str) -> Result<PathBuf> {
    positional.or(config).with_context(|| format!("no {what} file given (pass a path or --config)"))
}

fn write_out(out: Option<&Path>, name: &str, text: &str) -> Result<()> {
    if let Some(dir) = out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Verify { inject_fault, only } => {
            let summary = run_suite(&Hooks::with_fault(inject_fault), only.as_deref());
            for g in &summary.groups {
                eprintln!(
                    "{} {:<36} cases {:>6}  worst {:.3e} (tol {:.0e})  {:.2}s {}",
                    if g.passed { "PASS" } else { "FAIL" },
                    g.name,
                    g.cases,
                    g.worst,
                    g.tolerance,
                    g.seconds,
                    g.detail
                );
            }
            let json = serde_json::to_string_pretty(&summary)?;
            println!("{json}");
            write_out(cli.out.as_deref(), "verify.json", &json)?;
            if summary.ok() {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("failed groups: {}", summary.failed_groups.join(", "));
                Ok(ExitCode::FAILURE)
            }
        }
        Command::MtDemo { problem } => {
            let path = input_path(problem, cli.config, "problem")?;
            let report = mt_demo::run_file(&path)?;
            let text = toml::to_string(&report)?;
            print!("{text}");
            write_out(cli.out.as_deref(), "mt_report.toml", &text)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Bounds { inputs } => {
            let path = input_path(inputs, cli.config, "inputs")?;
            let report = bounds_cmd::run_file(&path)?;
            let text = toml::to_string(&report)?;
            print!("{text}");
            write_out(cli.out.as_deref(), "bounds_report.toml", &text)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Train | Command::GibbsTrain => {
            let method = if matches!(cli.command, Command::Train) { Method::Multilevel } else { Method::Gibbs };
            let Some(path) = cli.config else { bail!("{} needs --config", method.command()) };
            let mut config = load_config(&path)?;
            if let Some(seed) = cli.seed {
                config.sampler.seed = Some(seed);
                config.sampler.seeds = None;
            }
            let out = cli
                .out
                .or_else(|| config.out_dir.clone())
                .with_context(|| format!("{} needs --out or out_dir in the config", method.command()))?;
            let records = train::run(&config, method, &out)?;
            let mut code = ExitCode::SUCCESS;
            for r in &records {
                let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
                eprintln!(
                    "seed {}: {:?} after {} iterations, train loss {} (misclassified {}), test loss {} (misclassified {}), outer accept {}, {:.1}s",
                    r.seed,
                    r.status,
                    r.iterations_completed,
                    fmt(r.final_train_loss),
                    fmt(r.final_train_misclassification),
                    fmt(r.final_test_loss),
                    fmt(r.final_test_misclassification),
                    fmt(r.accept_rate_outer),
                    r.wall_time_seconds
                );
                if r.status == RunStatus::Incomplete {
                    code = ExitCode::from(2);
                }
            }
            Ok(code)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
