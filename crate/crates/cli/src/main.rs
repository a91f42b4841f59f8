use std::fmt::Display;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use zokw::harness::config::{apply_override, ExperimentConfig};
use zokw::harness::{recipes, run_experiment, sweep, ExperimentReport};
use zokw::random_scaling::simulate_pivot_quantiles;
use zokw::Error;

#[derive(Parser)]
#[command(name = "zokw", version, about = "Averaged Kiefer-Wolfowitz experiments with online inference")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        exec: ExecArgs,
    },
    /// Run a JSON array of configs in order
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        exec: ExecArgs,
    },
    /// Run a named recipe shipped with the crate
    Recipe {
        #[arg(required_unless_present = "list")]
        name: Option<String>,
        /// list recipes with their config hashes
        #[arg(long)]
        list: bool,
        /// permit recipes marked long-running
        #[arg(long)]
        allow_long: bool,
        #[command(flatten)]
        exec: ExecArgs,
    },
    /// Simulate the random-scaling pivot and compare with the tabled quantiles
    QuantileCheck {
        #[arg(long, default_value_t = 100_000)]
        paths: usize,
        #[arg(long, default_value_t = 1_000)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Check a config file (object or array) without running it
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

#[derive(Args)]
struct ExecArgs {
    /// base seed, replacing the config's
    #[arg(long)]
    seed: Option<u64>,
    /// worker threads; defaults to the available parallelism
    #[arg(long, env = "ZOKW_WORKERS")]
    workers: Option<usize>,
    #[arg(long, default_value = "results")]
    output_dir: PathBuf,
    /// dotted-key assignment applied after the file is parsed, e.g. schedule.eta0=0.1
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::DuplicateRunId(_) | Error::UnknownRecipe(_) | Error::Json(_) => {
                Failure::Config(e.to_string())
            }
            other => Failure::Runtime(other.to_string()),
        }
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

/// `println!` that treats a closed stdout (e.g. piped into `head`) as the
/// end of the conversation rather than a panic.
fn say(line: impl Display) {
    if let Err(e) = writeln!(io::stdout().lock(), "{line}") {
        if e.kind() == io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        eprintln!("runtime error: {e}");
        std::process::exit(2);
    }
}

fn read_text(path: &Path) -> Outcome<String> {
    fs::read_to_string(path).map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))
}

fn located(path: &Path, e: serde_json::Error) -> Failure {
    Failure::Config(format!("{}: {e}", path.display()))
}

/// Parses a config file holding one object or an array of objects. Without
/// overrides the typed parse runs on the raw text so errors carry line and
/// column; with overrides they name the offending key.
fn load_configs(path: &Path, overrides: &[String], seed: Option<u64>) -> Outcome<Vec<ExperimentConfig>> {
    let text = read_text(path)?;
    let value: Value = serde_json::from_str(&text).map_err(|e| located(path, e))?;
    let is_array = value.is_array();
    let mut cfgs: Vec<ExperimentConfig> = if overrides.is_empty() {
        if is_array {
            serde_json::from_str(&text).map_err(|e| located(path, e))?
        } else {
            vec![serde_json::from_str(&text).map_err(|e| located(path, e))?]
        }
    } else {
        let items = match value {
            Value::Array(items) => items,
            other => vec![other],
        };
        let mut cfgs = Vec::with_capacity(items.len());
        for (i, mut item) in items.into_iter().enumerate() {
            for o in overrides {
                apply_override(&mut item, o)?;
            }
            let cfg = serde_json::from_value(item)
                .map_err(|e| Failure::Config(format!("{} (config #{i}): {e}", path.display())))?;
            cfgs.push(cfg);
        }
        cfgs
    };
    if let Some(s) = seed {
        for c in &mut cfgs {
            c.seed = s;
        }
    }
    Ok(cfgs)
}

fn with_overrides(cfgs: Vec<ExperimentConfig>, overrides: &[String], seed: Option<u64>) -> Outcome<Vec<ExperimentConfig>> {
    cfgs.into_iter()
        .map(|c| {
            let mut v = serde_json::to_value(&c).map_err(|e| Failure::Runtime(e.to_string()))?;
            for o in overrides {
                apply_override(&mut v, o)?;
            }
            let mut c: ExperimentConfig = serde_json::from_value(v)
                .map_err(|e| Failure::Config(format!("{} after overrides: {e}", c.run_id)))?;
            if let Some(s) = seed {
                c.seed = s;
            }
            Ok(c)
        })
        .collect()
}

fn diagnostics(cfgs: &[ExperimentConfig]) -> Vec<String> {
    let many = cfgs.len() > 1;
    cfgs.iter()
        .flat_map(|c| {
            c.problems()
                .into_iter()
                .map(move |p| if many { format!("{}: {p}", c.run_id) } else { p })
        })
        .collect()
}

fn emit(reports: &[ExperimentReport], out: &Path, as_array: bool) -> Outcome<()> {
    let mut summaries = Vec::with_capacity(reports.len());
    for r in reports {
        let dir = r.write_to(out)?;
        if r.aggregates.aborted > 0 {
            eprintln!(
                "warning: {}: {} of {} replications aborted",
                r.run_id, r.aggregates.aborted, r.aggregates.replications
            );
        }
        eprintln!("wrote {}", dir.display());
        summaries.push(r.summary());
    }
    let json = if as_array {
        serde_json::to_string_pretty(&summaries)
    } else {
        serde_json::to_string_pretty(&summaries[0])
    };
    say(json.map_err(|e| Failure::Runtime(e.to_string()))?);
    Ok(())
}

fn execute(cfgs: &[ExperimentConfig], exec: &ExecArgs, as_array: bool) -> Outcome<()> {
    let problems = diagnostics(cfgs);
    if !problems.is_empty() {
        return Err(Error::Config(problems).into());
    }
    if exec.workers == Some(0) {
        return Err(Failure::Config("--workers must be at least 1".into()));
    }
    let reports = if as_array {
        sweep(cfgs, exec.workers)?
    } else {
        vec![run_experiment(&cfgs[0], exec.workers)?]
    };
    if reports.is_empty() {
        say("[]");
        return Ok(());
    }
    emit(&reports, &exec.output_dir, as_array)
}

fn list_recipes() -> Outcome<()> {
    for name in recipes::names() {
        for c in recipes::load(name)? {
            let tag = if c.long_running { "long-running" } else { "desk" };
            say(format_args!("{name}\t{}\t{tag}\t{}", c.run_id, c.hash()));
        }
    }
    Ok(())
}

fn quantile_check(paths: usize, steps: usize, seed: u64) -> Outcome<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = simulate_pivot_quantiles(paths, steps, &mut rng)?;
    say(format_args!("paths={} steps={} seed={seed}", q.paths, q.steps));
    say(format_args!("{:>11} {:>10} {:>8} {:>8}", "probability", "estimate", "tabled", "diff"));
    for ((p, e), t) in q.probabilities.iter().zip(&q.estimates).zip(&q.tabled) {
        say(format_args!("{p:>11} {e:>10.4} {t:>8.3} {:>+8.4}", e - t));
    }
    say(format_args!("median {:.4}", q.median));
    Ok(())
}

fn dispatch(cli: Cli) -> Outcome<()> {
    match cli.command {
        Command::Run { config, exec } => {
            let cfgs = load_configs(&config, &exec.overrides, exec.seed)?;
            if cfgs.len() != 1 {
                return Err(Failure::Config(format!(
                    "{} holds {} configs; use sweep for arrays",
                    config.display(),
                    cfgs.len()
                )));
            }
            execute(&cfgs, &exec, false)
        }
        Command::Sweep { config, exec } => {
            let cfgs = load_configs(&config, &exec.overrides, exec.seed)?;
            execute(&cfgs, &exec, true)
        }
        Command::Recipe {
            name,
            list,
            allow_long,
            exec,
        } => {
            if list {
                return list_recipes();
            }
            let name = name.expect("clap requires a name without --list");
            let cfgs = with_overrides(recipes::load(&name)?, &exec.overrides, exec.seed)?;
            if !allow_long && cfgs.iter().any(|c| c.long_running) {
                return Err(Failure::Config(format!(
                    "recipe {name} is marked long-running; pass --allow-long to run it"
                )));
            }
            execute(&cfgs, &exec, true)
        }
        Command::QuantileCheck { paths, steps, seed } => quantile_check(paths, steps, seed),
        Command::ValidateConfig { config, overrides } => {
            let cfgs = load_configs(&config, &overrides, None)?;
            let problems = diagnostics(&cfgs);
            if !problems.is_empty() {
                return Err(Error::Config(problems).into());
            }
            for c in &cfgs {
                say(format_args!("ok {} {}", c.run_id, c.hash()));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("runtime error: {msg}");
            ExitCode::from(2)
        }
    }
}
