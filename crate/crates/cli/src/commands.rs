use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use modelred::cm::{reduce_on_manifold, solve_center_manifold};
use modelred::experiments::artifacts::{self, check_fixture, ManifoldRecord, PolyRecord, TransformRecord};
use modelred::experiments::duffing::{duffing_pipeline, DuffingConfig};
use modelred::experiments::seir::{seir_pipeline, SeirConfig};
use modelred::experiments::{Check, ExperimentError};
use modelred::nf::{NfEngine, SlowModelPolicy};
use modelred::sim::{self, EnsembleConfig};
use modelred::system::SlowFastSystem;
use modelred::systems;
use serde::{Deserialize, Serialize};

/// Failure of a command, printed as `CODE: message`.
#[derive(Debug)]
pub enum CliError {
    Experiment(ExperimentError),
    Usage(String),
    /// Fixture check found this many differing terms.
    Mismatch(usize),
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Experiment(e) => e.code(),
            CliError::Usage(_) => "E_USAGE",
            CliError::Mismatch(_) => "E_FIXTURE_MISMATCH",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Mismatch(_) => 1,
            _ => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Experiment(e) => write!(f, "{e}"),
            CliError::Usage(m) => f.write_str(m),
            CliError::Mismatch(n) => write!(f, "{n} term(s) differ from the fixture"),
        }
    }
}

macro_rules! from_via_experiment {
    ($($t:ty),*) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Experiment(e.into())
            }
        })*
    };
}

from_via_experiment!(
    ExperimentError,
    modelred::system::SystemError,
    modelred::cm::CmError,
    modelred::nf::NfError,
    modelred::sim::SimError,
    std::io::Error,
    serde_json::Error
);

/// What a command produced, for the run manifest.
pub struct Outcome {
    pub command: &'static str,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub hashed: serde_json::Value,
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())).into())
}

/// Loads a system file, or one of the bundled systems by name.
pub fn load_system(arg: &str) -> Result<SlowFastSystem, CliError> {
    let path = Path::new(arg);
    if path.exists() {
        return Ok(SlowFastSystem::from_json_str(&read_text(path)?)?);
    }
    match arg {
        "duffing" => Ok(systems::duffing()),
        "seir" | "seir_transformed" => Ok(systems::seir_transformed()),
        _ => Err(std::io::Error::new(std::io::ErrorKind::NotFound, format!("system file `{arg}` not found")).into()),
    }
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    Ok(artifacts::write_json(dir, name, value)?)
}

#[derive(Serialize)]
struct ReduceFile {
    system: String,
    order: u32,
    grading: String,
    manifolds: Vec<ManifoldRecord>,
    /// Slow evolution on the manifold.
    reduced: BTreeMap<String, PolyRecord>,
}

pub fn reduce(system: &str, order: u32, grading: &str, out: &Path) -> Result<Outcome, CliError> {
    let sys = load_system(system)?;
    let det = sys.deterministic();
    let h = solve_center_manifold(&det, det.grading(grading)?, order)?;
    let reduced = reduce_on_manifold(&det, &h, None)?;
    for m in &h {
        println!("{} = {}", sys.reg.name(m.target), m.body);
    }
    for (v, p) in &reduced {
        println!("{}' = {}", sys.reg.name(*v), p);
    }
    let file = ReduceFile {
        system: sys.name.clone(),
        order,
        grading: grading.to_string(),
        manifolds: h.iter().map(|m| ManifoldRecord::of(&sys.reg, m)).collect(),
        reduced: reduced
            .iter()
            .map(|(v, p)| (sys.reg.name(*v).to_string(), PolyRecord::of(p)))
            .collect(),
    };
    write_json(out, "manifolds.json", &file)?;
    Ok(Outcome {
        command: "reduce",
        out: out.to_path_buf(),
        seed: None,
        hashed: serde_json::json!({ "system": sys.to_file(), "order": order, "grading": grading }),
    })
}

pub struct NfArgs<'a> {
    pub system: &'a str,
    pub order: u32,
    pub iterations: u32,
    pub grading: &'a str,
    pub check: Option<&'a Path>,
    pub averaged: bool,
    pub out: &'a Path,
}

pub fn nf(args: &NfArgs<'_>) -> Result<Outcome, CliError> {
    let sys = load_system(args.system)?;
    let eng = NfEngine::new(&sys, sys.grading(args.grading)?.clone(), args.order)?;
    let ct = eng.run(args.iterations)?;
    let name = |v| sys.reg.name(v);
    for (v, p) in &ct.maps {
        println!("{} = {}", name(*v), p);
    }
    for (v, p) in &ct.evolutions {
        println!("{}' = {}", name(*v), p);
    }
    write_json(args.out, "transform.json", &TransformRecord::of(&sys, &ct))?;
    if args.averaged {
        let (avg, unreduced) = eng.averaged_cm(&ct);
        for (m, u) in avg.iter().zip(&unreduced) {
            println!("E[{}] = {}", name(m.target), m.body);
            if !u.is_zero() {
                println!("unreduced moments: {u}");
            }
        }
        let records: Vec<ManifoldRecord> = avg.iter().map(|m| ManifoldRecord::of(&sys.reg, m)).collect();
        write_json(args.out, "averaged.json", &records)?;
    }
    let outcome = Outcome {
        command: "nf",
        out: args.out.to_path_buf(),
        seed: None,
        hashed: serde_json::json!({
            "system": sys.to_file(),
            "order": args.order,
            "iterations": args.iterations,
            "grading": args.grading,
            "averaged": args.averaged,
        }),
    };
    if let Some(path) = args.check {
        let fixture: TransformRecord = serde_json::from_str(&read_text(path)?)?;
        let diffs = check_fixture(&sys, &ct, &fixture)?;
        for d in &diffs {
            println!(
                "mismatch {} {}: expected {}, got {}",
                d.entry, d.term, d.expected, d.actual
            );
        }
        if !diffs.is_empty() {
            return Err(CliError::Mismatch(diffs.len()));
        }
        println!("fixture check passed: {}", path.display());
    }
    Ok(outcome)
}

/// Which equations `simulate` integrates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimModel {
    /// The system's own right-hand sides.
    #[default]
    Full,
    /// The normal-form slow model after `iterations` iterations.
    Slow,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub model: SimModel,
    pub policy: SlowModelPolicy,
    pub dt: f64,
    pub t_max: f64,
    pub record_every: usize,
    pub paths: usize,
    pub seed: u64,
    /// Every right-hand side is divided by this factor.
    pub time_scale: f64,
    /// Initial values by variable name; unlisted variables start at zero.
    pub init: BTreeMap<String, f64>,
    /// Overrides of the system's parameter values.
    pub parameters: BTreeMap<String, f64>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            model: SimModel::Full,
            policy: SlowModelPolicy::Full,
            dt: 1e-3,
            t_max: 10.0,
            record_every: 10,
            paths: 1,
            seed: 0,
            time_scale: 1.0,
            init: BTreeMap::new(),
            parameters: BTreeMap::new(),
        }
    }
}

/// Flags shared by the simulation commands.
pub struct RunFlags<'a> {
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub threads: Option<usize>,
    pub out: &'a Path,
}

/// Reads an optional JSON config. Returns the config and whether it sets
/// `seed` explicitly.
fn read_config<T: for<'de> Deserialize<'de> + Default>(path: Option<&Path>) -> Result<(T, bool), CliError> {
    let Some(path) = path else {
        return Ok((T::default(), false));
    };
    let value: serde_json::Value = serde_json::from_str(&read_text(path)?)?;
    let has_seed = value.get("seed").is_some();
    Ok((serde_json::from_value(value)?, has_seed))
}

/// Seed precedence: flag, then config file, then `MODELRED_SEED`, then the
/// config default.
fn resolve_seed(flag: Option<u64>, from_file: bool, current: u64) -> Result<u64, CliError> {
    if let Some(s) = flag {
        return Ok(s);
    }
    if from_file {
        return Ok(current);
    }
    match std::env::var("MODELRED_SEED") {
        Ok(s) => s
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("MODELRED_SEED is not an unsigned integer: `{s}`"))),
        Err(_) => Ok(current),
    }
}

pub fn simulate(
    system: &str,
    config: Option<&Path>,
    iterations: u32,
    order: u32,
    flags: &RunFlags<'_>,
) -> Result<Outcome, CliError> {
    let sys = load_system(system)?;
    let (mut cfg, has_seed): (SimulateConfig, bool) = read_config(config)?;
    cfg.seed = resolve_seed(flags.seed, has_seed, cfg.seed)?;
    if let Some(p) = flags.paths {
        cfg.paths = p;
    }
    let mut values = sys.parameters.clone();
    for (name, &x) in &cfg.parameters {
        values.insert(sys.var(name)?, x);
    }
    let equations = match cfg.model {
        SimModel::Full => sys
            .slow
            .iter()
            .chain(&sys.fast)
            .map(|v| (*v, sys.rhs[v].clone()))
            .collect::<Vec<_>>(),
        SimModel::Slow => {
            let eng = NfEngine::new(&sys, sys.grading("normal_form")?.clone(), order)?;
            eng.slow_model(&eng.run(iterations)?, cfg.policy)?
        }
    };
    let mut init = vec![0.0; equations.len()];
    for (name, &x) in &cfg.init {
        let v = sys.var(name)?;
        let slot = equations
            .iter()
            .position(|(w, _)| *w == v)
            .ok_or_else(|| CliError::Usage(format!("init: `{name}` is not simulated by this model")))?;
        init[slot] = x;
    }
    let lowered = sim::lower(&sys.reg, &equations, &values, cfg.time_scale)?;
    let ens = EnsembleConfig {
        seed: cfg.seed,
        paths: cfg.paths,
        dt: cfg.dt,
        t_max: cfg.t_max,
        threads: flags.threads,
    };
    let run = sim::integrate(&lowered, &ens, cfg.record_every, &|_| init.clone())?;
    fs::create_dir_all(flags.out)?;
    let width = cfg.paths.saturating_sub(1).to_string().len();
    for p in &run.paths {
        let name = format!("series_path{:0width$}.csv", p.path);
        sim::io::write_series(
            artifacts::create_file(flags.out, &name)?,
            &run.names,
            &p.times,
            &p.states,
        )
        .map_err(ExperimentError::from)?;
    }
    println!(
        "simulated {} path(s) of {} to t = {}; {} diverged",
        cfg.paths,
        sys.name,
        cfg.t_max,
        run.diverged()
    );
    Ok(Outcome {
        command: "simulate",
        out: flags.out.to_path_buf(),
        seed: Some(cfg.seed),
        hashed: serde_json::json!({
            "system": sys.to_file(),
            "config": cfg,
            "iterations": iterations,
            "order": order,
        }),
    })
}

fn print_checks(checks: &[Check]) {
    for c in checks {
        let value = c.value.map_or("undefined".to_string(), |v| format!("{v:.6}"));
        println!(
            "{} {} = {} (band {})",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            value,
            c.band
        );
    }
}

pub fn duffing(config: Option<&Path>, flags: &RunFlags<'_>) -> Result<Outcome, CliError> {
    let (mut cfg, has_seed): (DuffingConfig, bool) = read_config(config)?;
    cfg.seed = resolve_seed(flags.seed, has_seed, cfg.seed)?;
    if let Some(p) = flags.paths {
        cfg.paths = p;
    }
    if flags.threads.is_some() {
        cfg.threads = flags.threads;
    }
    let report = duffing_pipeline(&cfg)?;
    report.write(flags.out)?;
    let s = &report.summary;
    let fmt = |m: Option<f64>, e: Option<f64>| match (m, e) {
        (Some(m), Some(e)) => format!("{m:.2} +- {e:.2}"),
        _ => "undefined".to_string(),
    };
    println!("mean escape time, full:    {}", fmt(s.full.mean, s.full.std_err));
    println!("mean escape time, reduced: {}", fmt(s.reduced.mean, s.reduced.std_err));
    if s.quick {
        println!(
            "quick mode: {} paths, Monte Carlo error is wider than with 10000",
            cfg.paths
        );
    }
    print_checks(&s.checks);
    let mut hashed = serde_json::to_value(&cfg)?;
    // thread count does not change any output
    hashed["threads"] = serde_json::Value::Null;
    Ok(Outcome {
        command: "duffing",
        out: flags.out.to_path_buf(),
        seed: Some(cfg.seed),
        hashed,
    })
}

pub fn seir(config: Option<&Path>, flags: &RunFlags<'_>) -> Result<Outcome, CliError> {
    let (mut cfg, has_seed): (SeirConfig, bool) = read_config(config)?;
    cfg.seed = resolve_seed(flags.seed, has_seed, cfg.seed)?;
    if let Some(p) = flags.paths {
        cfg.battery = p;
    }
    if flags.threads.is_some() {
        cfg.threads = flags.threads;
    }
    let report = seir_pipeline(&cfg)?;
    report.write(flags.out)?;
    let s = &report.summary;
    let f = |v: Option<f64>| v.map_or("undefined".to_string(), |v| format!("{v:.4}"));
    println!(
        "seed realization: cc_naive {} cc_nf {}",
        f(s.naive.whole),
        f(s.nf.whole)
    );
    println!(
        "battery of {}: median cc_naive {} median cc_nf {}, cc_nf > cc_naive in {}",
        s.battery.len(),
        f(s.median_cc_naive),
        f(s.median_cc_nf),
        s.ordered
    );
    print_checks(&s.checks);
    let mut hashed = serde_json::to_value(&cfg)?;
    hashed["threads"] = serde_json::Value::Null;
    Ok(Outcome {
        command: "seir",
        out: flags.out.to_path_buf(),
        seed: Some(cfg.seed),
        hashed,
    })
}
