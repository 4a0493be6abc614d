//! `modelred`: center-manifold and normal-form reduction of slow/fast SDEs,
//! and the Duffing and SEIR reproduction pipelines.

mod commands;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{CliError, NfArgs, Outcome, RunFlags};
use manifest::RunManifest;

#[derive(Parser)]
#[command(
    name = "modelred",
    version,
    about = "Reduce slow/fast stochastic systems and validate the reductions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Output {
    /// Output directory [default: out/<command>]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Run {
    /// Base seed; falls back to the config file, then MODELRED_SEED
    #[arg(long)]
    seed: Option<u64>,
    /// Number of sample paths (the seed battery size for `seir`)
    #[arg(long)]
    paths: Option<usize>,
    /// Worker threads [default: all cores]; outputs do not depend on it
    #[arg(long)]
    threads: Option<usize>,
    #[command(flatten)]
    output: Output,
}

#[derive(Subcommand)]
enum Command {
    /// Deterministic center manifold and the reduced slow evolution
    Reduce {
        /// System file, or `duffing` / `seir` for a bundled system
        system: String,
        #[arg(long, default_value_t = 6)]
        order: u32,
        #[arg(long, default_value = "manifold")]
        grading: String,
        #[command(flatten)]
        output: Output,
    },
    /// Stochastic normal-form coordinate transform
    Nf {
        /// System file, or `duffing` / `seir` for a bundled system
        system: String,
        #[arg(long, default_value_t = 4)]
        iterations: u32,
        /// Truncation order of the transform
        #[arg(long, default_value_t = 4)]
        order: u32,
        #[arg(long, default_value = "normal_form")]
        grading: String,
        /// Compare against a transform fixture; exits 1 on any difference
        #[arg(long)]
        check: Option<PathBuf>,
        /// Also print and write the averaged stochastic manifold
        #[arg(long)]
        averaged: bool,
        #[command(flatten)]
        output: Output,
    },
    /// Integrate a system or its normal-form slow model
    Simulate {
        /// System file, or `duffing` / `seir` for a bundled system
        system: String,
        /// Simulation config (JSON)
        config: Option<PathBuf>,
        /// Normal-form iterations for `"model": "slow"`
        #[arg(long, default_value_t = 4)]
        iterations: u32,
        #[arg(long, default_value_t = 4)]
        order: u32,
        #[command(flatten)]
        run: Run,
    },
    /// Escape-time and prehistory experiment on the stochastic Duffing oscillator
    Duffing {
        /// Pipeline config (JSON); defaults when omitted
        config: Option<PathBuf>,
        #[command(flatten)]
        run: Run,
    },
    /// Cross-correlation experiment on the stochastic SEIR model
    Seir {
        /// Pipeline config (JSON); defaults when omitted
        config: Option<PathBuf>,
        #[command(flatten)]
        run: Run,
    },
}

fn out_dir(o: &Output, command: &str) -> PathBuf {
    o.out.clone().unwrap_or_else(|| Path::new("out").join(command))
}

fn flags<'a>(r: &Run, out: &'a Path) -> RunFlags<'a> {
    RunFlags {
        seed: r.seed,
        paths: r.paths,
        threads: r.threads,
        out,
    }
}

fn dispatch(cmd: &Command) -> Result<Outcome, CliError> {
    match cmd {
        Command::Reduce {
            system,
            order,
            grading,
            output,
        } => commands::reduce(system, *order, grading, &out_dir(output, "reduce")),
        Command::Nf {
            system,
            iterations,
            order,
            grading,
            check,
            averaged,
            output,
        } => commands::nf(&NfArgs {
            system,
            order: *order,
            iterations: *iterations,
            grading,
            check: check.as_deref(),
            averaged: *averaged,
            out: &out_dir(output, "nf"),
        }),
        Command::Simulate {
            system,
            config,
            iterations,
            order,
            run,
        } => {
            let out = out_dir(&run.output, "simulate");
            commands::simulate(system, config.as_deref(), *iterations, *order, &flags(run, &out))
        }
        Command::Duffing { config, run } => {
            let out = out_dir(&run.output, "duffing");
            commands::duffing(config.as_deref(), &flags(run, &out))
        }
        Command::Seir { config, run } => {
            let out = out_dir(&run.output, "seir");
            commands::seir(config.as_deref(), &flags(run, &out))
        }
    }
}

fn write_manifest(o: &Outcome, started: f64) -> Result<(), CliError> {
    let m = RunManifest {
        command: o.command.to_string(),
        config_hash: manifest::config_hash(&serde_json::json!({ "command": o.command, "input": o.hashed })),
        seed: o.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        started_unix: started,
        finished_unix: manifest::now_unix(),
        outputs: manifest::list_outputs(&o.out)?,
    };
    std::fs::create_dir_all(&o.out)?;
    std::fs::write(o.out.join("manifest.json"), serde_json::to_string_pretty(&m)? + "\n")?;
    Ok(())
}

fn fail(e: &CliError) -> ExitCode {
    let msg = e.to_string().replace('\n', " ");
    eprintln!("{}: {}", e.code(), msg);
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // help and version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            return fail(&CliError::Usage(first.trim_start_matches("error: ").to_string()));
        }
    };
    let started = manifest::now_unix();
    match dispatch(&cli.command).and_then(|o| write_manifest(&o, started)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}
