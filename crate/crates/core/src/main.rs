//! Command-line driver: build spaces, run the inequality suite, estimate
//! operator constants, sweep kernel truncations, run the stochastic
//! checks, and render stored JSON reports as CSV.
//!
//! Exit codes: 0 all assertions passed, 1 assertion failure, 2 usage or
//! configuration error. Output is a single JSON document on stdout,
//! deterministic in (config, seed) and independent of thread count; with
//! `--out` the same document is also written under
//! `out/<command>/<timestamp>-<seed>.json`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use lpjump::harness::{self, SpaceSpec, TrialConfig};
use lpjump::mosco;
use lpjump::semigroup::decompose;
use lpjump::stochastic;
use lpjump::{Error, Field};

/// Master-seed override, lowest priority below the `--seed` flag.
const SEED_ENV: &str = "LPJUMP_SEED";

#[derive(Parser)]
#[command(name = "lpjump", version, about = "Numerical laboratory for jump-type Dirichlet forms")]
struct Cli {
    /// JSON config file for the chosen command.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config and the environment.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Results directory; reports are also printed to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Quadrature tolerance override.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Worker thread count (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Space construction utilities.
    Space {
        #[command(subcommand)]
        command: SpaceCommand,
    },
    /// Run the entrywise inequality suite.
    Check,
    /// Estimate empirical operator constants.
    Estimate,
    /// Kernel-truncation convergence sweep.
    MoscoSweep,
    /// Jump-process simulation reports.
    Simulate,
    /// Render a stored JSON report as CSV tables.
    Report {
        /// The JSON file to render.
        input: PathBuf,
    },
}

#[derive(Subcommand)]
enum SpaceCommand {
    /// Build a space from a spec file and print its JSON form.
    Build,
}

#[derive(Debug, Deserialize)]
struct MoscoConfig {
    space: SpaceSpec,
    radii: Vec<f64>,
    t: f64,
    /// Test profile; defaults to one sine period over the point index.
    field: Option<Vec<f64>>,
    #[serde(default)]
    seed: u64,
}

#[derive(Debug, Deserialize)]
struct SimulateConfig {
    space: SpaceSpec,
    field: Vec<f64>,
    x0: usize,
    horizon: f64,
    n_paths: usize,
    seed: u64,
    /// Intermediate times for the martingale check.
    s_grid: Vec<f64>,
    /// Moment order for the bracket-moment comparison.
    p: f64,
}

#[derive(Serialize)]
struct Envelope<T: Serialize> {
    schema_version: u32,
    command: &'static str,
    seed: u64,
    seed_source: &'static str,
    report: T,
}

#[derive(Serialize)]
struct MoscoRow {
    n: usize,
    r: f64,
    t: f64,
    form_value: f64,
    semigroup_error: f64,
}

#[derive(Serialize)]
struct SimulateReport {
    bracket: stochastic::BracketReport,
    martingale: stochastic::MartingaleReport,
    terminal_law: stochastic::LawReport,
    bdg: stochastic::BdgReport,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        // Ignore failure: the global pool may already exist under tests.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match run(&cli) {
        Ok(all_passed) => {
            if all_passed {
                ExitCode::from(0)
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn read_config_value(cli: &Cli) -> Result<Value, Error> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("this command needs --config <file>".into()))?;
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Config(format!("cannot read config file {}: {e}", path.display()))
    })?;
    Ok(serde_json::from_str(&text)?)
}

/// Resolve the effective seed: flag > environment > config.
fn resolve_seed(cli: &Cli, config_seed: u64) -> (u64, &'static str) {
    if let Some(s) = cli.seed {
        return (s, "cli");
    }
    if let Ok(v) = std::env::var(SEED_ENV) {
        if let Ok(s) = v.parse::<u64>() {
            return (s, "env");
        }
    }
    (config_seed, "config")
}

fn emit<T: Serialize>(cli: &Cli, command: &'static str, envelope: &Envelope<T>) -> Result<(), Error> {
    let json = serde_json::to_string_pretty(envelope)?;
    println!("{json}");
    if let Some(out) = &cli.out {
        let dir = out.join(command);
        std::fs::create_dir_all(&dir)?;
        let stamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        std::fs::write(dir.join(format!("{stamp}-{}.json", envelope.seed)), json)?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<bool, Error> {
    match &cli.command {
        Command::Space {
            command: SpaceCommand::Build,
        } => {
            let spec: SpaceSpec = serde_json::from_value(read_config_value(cli)?)?;
            let space = spec.build()?;
            println!("{}", space.to_json()?);
            Ok(true)
        }
        Command::Check => {
            let mut config: TrialConfig = serde_json::from_value(read_config_value(cli)?)?;
            let (seed, seed_source) = resolve_seed(cli, config.seed);
            config.seed = seed;
            if let Some(t) = cli.tol {
                config.tolerances.quadrature = t;
            }
            let report = harness::run_inequality_suite(&config)?;
            let pass = report.pass;
            emit(
                cli,
                "check",
                &Envelope {
                    schema_version: harness::SCHEMA_VERSION,
                    command: "check",
                    seed,
                    seed_source,
                    report,
                },
            )?;
            Ok(pass)
        }
        Command::Estimate => {
            let mut config: TrialConfig = serde_json::from_value(read_config_value(cli)?)?;
            let (seed, seed_source) = resolve_seed(cli, config.seed);
            config.seed = seed;
            if let Some(t) = cli.tol {
                config.tolerances.quadrature = t;
            }
            if config.operators.is_empty() {
                return Err(Error::Config(
                    "estimate needs a nonempty `operators` list in the config".into(),
                ));
            }
            let mut reports = Vec::new();
            for &op in &config.operators {
                reports.extend(harness::estimate_constant(&config, op)?);
            }
            emit(
                cli,
                "estimate",
                &Envelope {
                    schema_version: harness::SCHEMA_VERSION,
                    command: "estimate",
                    seed,
                    seed_source,
                    report: reports,
                },
            )?;
            Ok(true)
        }
        Command::MoscoSweep => {
            let config: MoscoConfig = serde_json::from_value(read_config_value(cli)?)?;
            let (seed, seed_source) = resolve_seed(cli, config.seed);
            let space = config.space.build()?;
            let n = space.n();
            let f = Field::new(config.field.clone().unwrap_or_else(|| {
                (0..n)
                    .map(|i| (std::f64::consts::TAU * i as f64 / n as f64).sin())
                    .collect()
            }));
            let family = mosco::build_truncation(&space, &config.radii)?;
            let forms = mosco::form_convergence(&family, &f)?;
            let errors = mosco::semigroup_convergence(&family, &f, config.t)?;
            let rows: Vec<MoscoRow> = forms
                .iter()
                .zip(&errors)
                .map(|(&(r, form_value), &(_, semigroup_error))| MoscoRow {
                    n,
                    r,
                    t: config.t,
                    form_value,
                    semigroup_error,
                })
                .collect();
            // The monotonicity the sweep is expected to certify.
            let monotone = forms.windows(2).all(|w| w[1].1 >= w[0].1);
            emit(
                cli,
                "mosco-sweep",
                &Envelope {
                    schema_version: harness::SCHEMA_VERSION,
                    command: "mosco-sweep",
                    seed,
                    seed_source,
                    report: rows,
                },
            )?;
            Ok(monotone)
        }
        Command::Simulate => {
            let config: SimulateConfig = serde_json::from_value(read_config_value(cli)?)?;
            let (seed, seed_source) = resolve_seed(cli, config.seed);
            let space = config.space.build()?;
            let decomp = decompose(&space)?;
            let f = Field::new(config.field.clone());
            let bracket = stochastic::bracket_check(
                &space,
                &decomp,
                &f,
                config.x0,
                config.horizon,
                config.n_paths,
                seed,
            )?;
            let martingale = stochastic::martingale_check(
                &space,
                &decomp,
                &f,
                config.x0,
                config.horizon,
                &config.s_grid,
                config.n_paths,
                seed,
            )?;
            let terminal_law = stochastic::terminal_law_check(
                &space,
                &decomp,
                config.x0,
                config.horizon,
                config.n_paths,
                seed,
            )?;
            let bdg = stochastic::bdg_ratio(
                &space,
                &decomp,
                &f,
                config.p,
                config.x0,
                config.horizon,
                config.n_paths,
                seed,
            )?;
            let pass = bracket.compensator_matches_target
                && bracket.jump_matches_compensator
                && martingale.pass
                && terminal_law.pass
                && bdg.chain_holds
                && bdg.final_bound_holds;
            emit(
                cli,
                "simulate",
                &Envelope {
                    schema_version: harness::SCHEMA_VERSION,
                    command: "simulate",
                    seed,
                    seed_source,
                    report: SimulateReport {
                        bracket,
                        martingale,
                        terminal_law,
                        bdg,
                    },
                },
            )?;
            Ok(pass)
        }
        Command::Report { input } => {
            render_csv(input)?;
            Ok(true)
        }
    }
}

/// Render every array-of-flat-objects found in a stored JSON report as a
/// CSV section named by its path.
fn render_csv(input: &Path) -> Result<(), Error> {
    let text = std::fs::read_to_string(input).map_err(|e| {
        Error::Config(format!("cannot read report file {}: {e}", input.display()))
    })?;
    let value: Value = serde_json::from_str(&text)?;
    let mut sections = Vec::new();
    collect_tables("report", &value, &mut sections);
    if sections.is_empty() {
        return Err(Error::Config("no tabular data found in the report".into()));
    }
    for (name, rows) in sections {
        println!("## {name}");
        let mut keys: Vec<&String> = match rows.first().and_then(Value::as_object) {
            Some(obj) => obj.keys().collect(),
            None => continue,
        };
        keys.sort();
        println!("{}", keys.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(","));
        for row in &rows {
            let obj = row.as_object().expect("checked flat object");
            let cells: Vec<String> = keys
                .iter()
                .map(|k| match obj.get(*k) {
                    Some(Value::String(s)) => s.clone(),
                    Some(v) => v.to_string(),
                    None => String::new(),
                })
                .collect();
            println!("{}", cells.join(","));
        }
        println!();
    }
    Ok(())
}

fn is_flat_object(v: &Value) -> bool {
    v.as_object()
        .map(|o| o.values().all(|x| !x.is_object() && !x.is_array()))
        .unwrap_or(false)
}

fn collect_tables(path: &str, value: &Value, out: &mut Vec<(String, Vec<Value>)>) {
    match value {
        Value::Array(items) if !items.is_empty() && items.iter().all(is_flat_object) => {
            out.push((path.to_string(), items.clone()));
        }
        Value::Array(items) => {
            for (i, item) in items.iter().enumerate() {
                collect_tables(&format!("{path}[{i}]"), item, out);
            }
        }
        Value::Object(map) => {
            for (k, v) in map {
                collect_tables(&format!("{path}.{k}"), v, out);
            }
        }
        _ => {}
    }
}
