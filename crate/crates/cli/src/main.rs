//! `pitpinn` command-line driver: training, reference solves, comparison
//! and the ablation matrix.
//!
//! Exit codes: 0 success, 1 other failure, 2 invalid input or configuration,
//! 3 non-finite loss, 4 grid mismatch.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::Context;
use clap::{Parser, Subcommand};
use serde::Serialize;

use pitpinn::config::{parse_scenario, parse_train_config, scenario_to_toml, train_config_to_toml, ConfigError};
use pitpinn::metrics::{
    evaluate_network_on_grid, export_csv, export_vtk, import_csv, l2_error, uniform_axes, ErrorReport, FieldSnapshot,
    MetricsError,
};
use pitpinn::physics::BUILTIN_SCENARIOS;
use pitpinn::refsolver::{solve_reference, ReferenceOptions, RefSolverError};
use pitpinn::training::{train_with, TrainError, TrainIo, Variant};
use pitpinn::{NetworkParams, Scenario, TrainConfig};

#[derive(Parser, Debug)]
#[command(name = "pitpinn", version, about = "Phase-field pitting corrosion: PINN training and FD reference")]
struct Cli {
    /// Seed for network initialisation and collocation sampling.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "pitpinn-out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Override the number of training steps.
    #[arg(long, global = true)]
    steps: Option<usize>,
    /// Non-dimensional grid spacing of the reference solver and evaluation grid.
    #[arg(long, global = true, default_value_t = 0.005)]
    resolution: f64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a network on a scenario.
    Train {
        /// Scenario file, or the name of a builtin scenario.
        scenario: String,
        /// Training configuration file.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Solve a scenario with the finite-difference reference solver.
    Reference {
        scenario: String,
        /// Largest allowed time step (non-dimensional).
        #[arg(long, default_value_t = 0.01)]
        dt_max: f64,
    },
    /// Compare the snapshots of two run directories.
    Compare { pinn: PathBuf, reference: PathBuf },
    /// Train several variants with a shared seed and compare each with the reference.
    Ablate {
        scenario: String,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated variant names, or `all`.
        #[arg(long, default_value = "all")]
        variants: String,
        /// Reuse the snapshots of an earlier `reference` run.
        #[arg(long)]
        reference_dir: Option<PathBuf>,
    },
    /// Print a builtin scenario in the scenario file format.
    Scenario { name: String },
}

/// Failure with an exit code.
struct Failure {
    code: u8,
    err: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        let err: anyhow::Error = e.into();
        let code = classify(&err);
        Failure { code, err }
    }
}

fn classify(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<ConfigError>().is_some() {
            return 2;
        }
        if let Some(TrainError::NonFiniteLoss { .. }) = cause.downcast_ref::<TrainError>() {
            return 3;
        }
        if let Some(MetricsError::GridMismatch(_)) = cause.downcast_ref::<MetricsError>() {
            return 4;
        }
        if cause.downcast_ref::<UsageError>().is_some() {
            return 2;
        }
    }
    1
}

/// Bad command-line input (exit code 2).
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Serialize)]
struct RunManifest {
    command: String,
    args: Vec<String>,
    scenario: Option<String>,
    config: Option<String>,
    seed: u64,
    out: String,
    workers: usize,
    steps_override: Option<usize>,
    resolution: f64,
    started_unix: u64,
    finished_unix: Option<u64>,
    build: String,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn build_id() -> String {
    let git = std::process::Command::new("git")
        .args(["rev-parse", "--short", "HEAD"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string());
    match git {
        Some(g) => format!("{} ({g})", env!("CARGO_PKG_VERSION")),
        None => env!("CARGO_PKG_VERSION").to_string(),
    }
}

impl RunManifest {
    fn write(&self, dir: &Path) -> anyhow::Result<()> {
        std::fs::write(dir.join("manifest.toml"), toml::to_string(self)?).context("writing manifest")
    }
}

fn load_scenario(arg: &str) -> Result<Scenario, Failure> {
    let path = Path::new(arg);
    if path.exists() {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {arg}"))?;
        return parse_scenario(&text)
            .with_context(|| arg.to_string())
            .map_err(Failure::from);
    }
    if BUILTIN_SCENARIOS.contains(&arg) {
        return Ok(Scenario::builtin(arg).map_err(anyhow::Error::from)?);
    }
    Err(UsageError(format!(
        "`{arg}` is neither a file nor a builtin scenario ({})",
        BUILTIN_SCENARIOS.join(", ")
    ))
    .into())
}

fn load_config(path: Option<&Path>, dim: usize) -> Result<TrainConfig, Failure> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => "schema_version = 1\n".to_string(),
    };
    let label = path.map(|p| p.display().to_string()).unwrap_or_else(|| "defaults".into());
    Ok(parse_train_config(&text, dim).with_context(|| label)?)
}

/// {0.25, 0.5, 0.75, 1}·t_end without duplicates.
fn default_times(t_end: f64) -> Vec<f64> {
    let mut t: Vec<f64> = [0.25, 0.5, 0.75, 1.0].iter().map(|f| f * t_end).collect();
    t.dedup();
    t
}

fn write_snapshots(dir: &Path, snaps: &[FieldSnapshot]) -> anyhow::Result<()> {
    let sd = dir.join("snapshots");
    std::fs::create_dir_all(&sd)?;
    for (i, s) in snaps.iter().enumerate() {
        export_csv(s, &sd.join(format!("snapshot_{i}.csv")))?;
        export_vtk(s, &sd.join(format!("snapshot_{i}.vtk")))?;
    }
    Ok(())
}

fn read_snapshots(dir: &Path) -> anyhow::Result<Vec<FieldSnapshot>> {
    let sd = if dir.join("snapshots").is_dir() {
        dir.join("snapshots")
    } else {
        dir.to_path_buf()
    };
    let mut out = Vec::new();
    for i in 0.. {
        let p = sd.join(format!("snapshot_{i}.csv"));
        if !p.exists() {
            break;
        }
        out.push(import_csv(&p).with_context(|| format!("reading {}", p.display()))?);
    }
    if out.is_empty() {
        anyhow::bail!("no snapshots found in {}", sd.display());
    }
    Ok(out)
}

fn reference_snapshots(scenario: &Scenario, cli: &Cli, dt_max: f64) -> anyhow::Result<(Vec<FieldSnapshot>, String)> {
    let opts = ReferenceOptions {
        h: cli.resolution,
        dt_max,
        ..ReferenceOptions::default()
    };
    let run = solve_reference(scenario, &default_times(scenario.t_end), &opts).map_err(|e| match e {
        RefSolverError::GridTooCoarse { .. } | RefSolverError::InvalidProblem(_) => UsageError(e.to_string()).into(),
        other => anyhow::Error::from(other),
    })?;
    Ok((run.snapshots.clone(), run.log_text()))
}

fn run(cli: &Cli) -> Result<(), Failure> {
    if let Some(w) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build_global()
            .context("configuring worker threads")?;
    }
    let out = &cli.out;
    let mut manifest = RunManifest {
        command: String::new(),
        args: std::env::args().collect(),
        scenario: None,
        config: None,
        seed: cli.seed,
        out: out.display().to_string(),
        workers: rayon::current_num_threads(),
        steps_override: cli.steps,
        resolution: cli.resolution,
        started_unix: now(),
        finished_unix: None,
        build: build_id(),
    };
    match &cli.command {
        Command::Scenario { name } => {
            let sc = load_scenario(name)?;
            print!("{}", scenario_to_toml(&sc));
            Ok(())
        }
        Command::Train { scenario, config } => {
            manifest.command = "train".into();
            manifest.scenario = Some(scenario.clone());
            manifest.config = config.as_ref().map(|p| p.display().to_string());
            let sc = load_scenario(scenario)?;
            let mut cfg = load_config(config.as_deref(), sc.dim)?;
            if let Some(s) = cli.steps {
                cfg.s_max = s;
            }
            std::fs::create_dir_all(out).context("creating output directory")?;
            manifest.write(out)?;
            std::fs::write(out.join("scenario.toml"), scenario_to_toml(&sc))?;
            std::fs::write(out.join("config.toml"), train_config_to_toml(&cfg))?;
            let io = TrainIo {
                history: Some(out.join("history.csv")),
                checkpoint_dir: Some(out.clone()),
            };
            let res = train_with(&cfg, &sc, cli.seed, &io)?;
            if cfg.s_max > 0 {
                let axes = uniform_axes(&sc, cli.resolution);
                let snaps: Vec<FieldSnapshot> = default_times(sc.t_end)
                    .into_iter()
                    .map(|t| evaluate_network_on_grid(&res.params, &axes, t))
                    .collect();
                write_snapshots(out, &snaps)?;
            }
            if let Some(f) = res.negative_cosine_fraction(cfg.s_max.min(200)) {
                println!("negative AC/CH cosine fraction (first 200 steps): {f:.3}");
            }
            println!("trained {} steps; outputs in {}", cfg.s_max, out.display());
            manifest.finished_unix = Some(now());
            manifest.write(out)?;
            Ok(())
        }
        Command::Reference { scenario, dt_max } => {
            manifest.command = "reference".into();
            manifest.scenario = Some(scenario.clone());
            let sc = load_scenario(scenario)?;
            std::fs::create_dir_all(out).context("creating output directory")?;
            manifest.write(out)?;
            std::fs::write(out.join("scenario.toml"), scenario_to_toml(&sc))?;
            let (snaps, log) = reference_snapshots(&sc, cli, *dt_max)?;
            std::fs::write(out.join("run_log.csv"), log)?;
            write_snapshots(out, &snaps)?;
            println!("{} snapshots written to {}", snaps.len(), out.display());
            manifest.finished_unix = Some(now());
            manifest.write(out)?;
            Ok(())
        }
        Command::Compare { pinn, reference } => {
            manifest.command = "compare".into();
            std::fs::create_dir_all(out).context("creating output directory")?;
            manifest.write(out)?;
            let a = read_snapshots(pinn)?;
            let b = read_snapshots(reference)?;
            let report = ErrorReport::compute(&a, &b)?;
            let text = report.to_text();
            print!("{text}");
            std::fs::write(out.join("report.csv"), &text)?;
            Ok(())
        }
        Command::Ablate {
            scenario,
            config,
            variants,
            reference_dir,
        } => {
            manifest.command = "ablate".into();
            manifest.scenario = Some(scenario.clone());
            manifest.config = config.as_ref().map(|p| p.display().to_string());
            let variants: Vec<Variant> = if variants == "all" {
                Variant::ALL.to_vec()
            } else {
                variants
                    .split(',')
                    .map(|s| s.trim().parse::<Variant>().map_err(UsageError))
                    .collect::<Result<_, _>>()?
            };
            let sc = load_scenario(scenario)?;
            let mut base = load_config(config.as_deref(), sc.dim)?;
            if let Some(s) = cli.steps {
                base.s_max = s;
            }
            std::fs::create_dir_all(out).context("creating output directory")?;
            manifest.write(out)?;
            let reference = match reference_dir {
                Some(d) => read_snapshots(d)?,
                None => reference_snapshots(&sc, cli, 0.01)?.0,
            };
            let last = reference.last().expect("at least one snapshot").clone();
            let mut table = String::from("variant,final_rms_error,wall_time_s\n");
            println!("{:<22}{:>16}{:>14}", "variant", "final RMS", "wall time s");
            for v in variants {
                let cfg = v.apply(&base);
                let t0 = Instant::now();
                let res = train_with(&cfg, &sc, cli.seed, &TrainIo::default())?;
                let wall = t0.elapsed().as_secs_f64();
                let params: &NetworkParams = &res.params;
                let pred = evaluate_network_on_grid(params, &last.axes, last.time);
                let err = l2_error(&pred, &last)?;
                println!("{:<22}{:>16.6e}{:>14.2}", v.name(), err, wall);
                table.push_str(&format!("{},{err:e},{wall:.3}\n", v.name()));
                let vd = out.join(v.name());
                std::fs::create_dir_all(&vd)?;
                params.save(&vd.join("checkpoint_final.txt"))?;
            }
            std::fs::write(out.join("ablation.csv"), table)?;
            manifest.finished_unix = Some(now());
            manifest.write(out)?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}
