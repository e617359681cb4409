use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use phasekin_cli::{report, run_analytic, run_checks, run_simulate, simulate, CliError, ScenarioConfig, Shim};

#[derive(Parser)]
#[command(name = "phasekin", version, about = "Phase-space stochastic kinetics scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Scenario JSON.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `outputs.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed (overrides `numerics.seed`).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form tables, fields and residuals.
    Analytic(RunArgs),
    /// Monte Carlo run with estimated fields and checks.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        /// Exit 1 if any check fails.
        #[arg(long)]
        strict: bool,
    },
    /// Property suite; exits 1 on any failure.
    Verify {
        /// Also write `verify.json` here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize `summary.json` files.
    Report {
        /// Summary files or directories holding them.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Also write `report.md` here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(args: &RunArgs) -> Result<(ScenarioConfig, PathBuf), CliError> {
    let mut config = ScenarioConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.numerics.seed = seed;
    }
    let out = args
        .out
        .clone()
        .or_else(|| config.outputs.dir.clone())
        .unwrap_or_else(|| PathBuf::from("phasekin-out"));
    Ok((config, out))
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("PHASEKIN_THREADS") {
        let n: usize = v.parse().with_context(|| format!("PHASEKIN_THREADS={v} is not a count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Analytic(args) => {
            let (config, out) = load(&args)?;
            run_analytic(&config, &out)?;
            println!("analytic outputs written to {}", out.display());
        }
        Command::Simulate { run, strict } => {
            let (config, out) = load(&run)?;
            let summary = run_simulate(&config, &out)?;
            for c in summary["checks"].as_array().into_iter().flatten() {
                let mark = if c["passed"] == serde_json::Value::Bool(true) { "PASS" } else { "FAIL" };
                println!("{mark} {} measured={} tolerance={}", c["name"].as_str().unwrap_or("?"), c["measured"], c["tolerance"]);
            }
            println!("simulation outputs written to {}", out.display());
            let failed = simulate::failures(&summary);
            if strict && failed > 0 {
                return Err(CliError::ChecksFailed(failed));
            }
        }
        Command::Verify { out } => {
            let checks = run_checks(&Shim::default())?;
            let json = serde_json::to_string_pretty(&checks).expect("checks serialize");
            println!("{json}");
            if let Some(dir) = out {
                fs::create_dir_all(&dir)?;
                fs::write(dir.join("verify.json"), format!("{json}\n"))?;
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            if failed > 0 {
                return Err(CliError::ChecksFailed(failed));
            }
        }
        Command::Report { inputs, out } => {
            let text = report::render(&report::collect_summaries(&inputs)?)?;
            print!("{text}");
            if let Some(dir) = out {
                fs::create_dir_all(&dir)?;
                fs::write(dir.join("report.md"), text)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
