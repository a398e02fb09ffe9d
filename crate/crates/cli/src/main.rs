mod manifest;
mod overrides;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use toml::Value;

use crate::manifest::Manifest;
use crate::run::{Command, Failure};

#[derive(Parser)]
#[command(name = "ringdmpc", version, about = "Ring-road DMPC traffic experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run scenarios and write trajectory CSVs and summaries.
    Simulate(RunArgs),
    /// Search the ideal speed per density and build benefit tables.
    Sweep(RunArgs),
    /// Fixed point, policy jacobian and z-roots.
    Stability(RunArgs),
    /// Per-step wall time of the coordinated policy.
    Benchmark(RunArgs),
    /// Print the built-in experiment names.
    ListExperiments,
}

#[derive(Args)]
struct RunArgs {
    /// Built-in experiment name (see list-experiments).
    #[arg(conflicts_with = "config")]
    experiment: Option<String>,
    /// TOML manifest file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output root; artifacts land in <out>/<manifest name>/.
    #[arg(long, env = "RINGDMPC_OUT", default_value = "ringdmpc-out")]
    out: PathBuf,
    /// Noise seed for every scenario.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// key=value applied to every scenario; `sweep.` keys go to sweep specs.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Print the resolved manifest as TOML and exit.
    #[arg(long)]
    dry_run: bool,
}

fn load(args: &RunArgs) -> anyhow::Result<Manifest> {
    let mut root: Value = match (&args.experiment, &args.config) {
        (Some(name), None) => {
            let m = manifest::named(name).ok_or_else(|| anyhow!("unknown experiment `{name}`"))?;
            Value::try_from(m).context("serializing built-in manifest")?
        }
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        _ => return Err(anyhow!("give either an experiment name or --config")),
    };
    if let Some(seed) = args.seed {
        let seed = i64::try_from(seed).context("seed must fit in a signed 64-bit integer")?;
        overrides::apply(&mut root, "noise.seed", &Value::Integer(seed))?;
    }
    for raw in &args.overrides {
        let (key, value) = overrides::parse_assignment(raw)?;
        overrides::apply(&mut root, &key, &value)?;
    }
    Manifest::deserialize(root).context("manifest does not match the schema")
}

fn dispatch(command: Command, args: RunArgs) -> Result<(), Failure> {
    let manifest = load(&args).map_err(Failure::Config)?;
    run::validate(&manifest, command).map_err(Failure::Config)?;
    if args.dry_run {
        print!("{}", toml::to_string(&manifest).map_err(|e| Failure::Runtime(e.into()))?);
        return Ok(());
    }
    if let Some(jobs) = args.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .map_err(|e| Failure::Config(e.into()))?;
    }
    let written = run::execute(&manifest, command, &args.out).map_err(Failure::Runtime)?;
    let report = serde_json::json!({ "experiment": manifest.name, "artifacts": written });
    println!("{report}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Cmd::ListExperiments => {
            for (name, about) in manifest::NAMES {
                println!("{name:<14} {about}");
            }
            return ExitCode::SUCCESS;
        }
        Cmd::Simulate(a) => (Command::Simulate, a),
        Cmd::Sweep(a) => (Command::Sweep, a),
        Cmd::Stability(a) => (Command::Stability, a),
        Cmd::Benchmark(a) => (Command::Benchmark, a),
    };
    match dispatch(command, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.to_json());
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
