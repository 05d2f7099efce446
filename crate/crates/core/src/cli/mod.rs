//! Command-line front end: recipes in, CSV/JSON (plus gnuplot scripts) out.
//!
//! Every subcommand reads a JSON [`Recipe`], applies `--override key=value`
//! pairs and the dedicated flags (flags win), runs its analyses and writes
//! results atomically into the output directory together with a
//! `manifest.json`. Analyses that fail are listed on standard error and make
//! the process exit with a nonzero status; the others still write their files.

mod commands;
pub mod output;
pub mod recipe;

use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

pub use recipe::Recipe;

use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "mfnoise", version, about = "Noisy rate networks and their Gaussian mean-field limit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Recipe file (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Seed of the network runs (overrides `sim.seed`).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (overrides the recipe's `output`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; changes speed only, never results.
    #[arg(long)]
    pub threads: Option<usize>,
    /// `key=value` edits of the recipe: a dotted JSON path or a model parameter name.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Euler–Maruyama ensemble of the finite network.
    SimulateNet {
        #[command(flatten)]
        common: Common,
        /// Total number of neurons.
        #[arg(long)]
        n: Option<usize>,
        /// Time horizon.
        #[arg(long)]
        t: Option<f64>,
        /// Time step.
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Mean-field moment equations.
    SimulateMf {
        #[command(flatten)]
        common: Common,
    },
    /// Attractor census, continuation, codimension-2 search and phase portrait.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Network/mean-field discrepancy against N and its log-log slope.
    Converge {
        #[command(flatten)]
        common: Common,
        /// Comma-separated network sizes.
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
    },
    /// Power spectra of network and mean-field means across parameter values.
    Spectrum {
        #[command(flatten)]
        common: Common,
        /// Comma-separated parameter values (noise by default).
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
    },
    /// Gaussianity and independence tests at the final time.
    Validate {
        #[command(flatten)]
        common: Common,
    },
    /// Wall time of network runs across sizes.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Comma-separated network sizes.
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::SimulateNet { .. } => "simulate-net",
            Command::SimulateMf { .. } => "simulate-mf",
            Command::Sweep { .. } => "sweep",
            Command::Converge { .. } => "converge",
            Command::Spectrum { .. } => "spectrum",
            Command::Validate { .. } => "validate",
            Command::Bench { .. } => "bench",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::SimulateNet { common, .. }
            | Command::SimulateMf { common }
            | Command::Sweep { common }
            | Command::Converge { common, .. }
            | Command::Spectrum { common, .. }
            | Command::Validate { common }
            | Command::Bench { common, .. } => common,
        }
    }
}

/// What a command produced.
#[derive(Debug, Default, Serialize)]
pub struct Report {
    pub files: Vec<PathBuf>,
    /// `(analysis, message)` for every step that failed.
    pub failures: Vec<(String, String)>,
    pub warnings: Vec<String>,
}

impl Report {
    pub(crate) fn attempt<T>(&mut self, step: &str, result: Result<T>) -> Option<T> {
        match result {
            Ok(v) => Some(v),
            Err(e) => {
                self.failures.push((step.to_string(), e.to_string()));
                None
            }
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    seed: u64,
    recipe: &'a Recipe,
    wall_time_s: f64,
    #[serde(flatten)]
    extra: &'a serde_json::Map<String, serde_json::Value>,
    files: &'a [PathBuf],
    failures: &'a [(String, String)],
    warnings: &'a [String],
}

/// Loads the recipe with every override applied, flags last.
pub fn resolve(command: &Command) -> Result<Recipe> {
    let common = command.common();
    let mut overrides = common.overrides.clone();
    if let Some(seed) = common.seed {
        overrides.push(format!("sim.seed={seed}"));
    }
    if let Command::SimulateNet { n, t, dt, .. } = command {
        if let Some(n) = n {
            overrides.push(format!("sim.n_total={n}"));
        }
        if let Some(t) = t {
            overrides.push(format!("sim.t_end={t}"));
        }
        if let Some(dt) = dt {
            overrides.push(format!("sim.dt={dt}"));
        }
    }
    let mut recipe = Recipe::load(&common.config, &overrides)?;
    match command {
        Command::Converge { sizes: Some(s), .. } => {
            recipe.converge = Some(recipe::ConvergeSpec { sizes: s.clone() });
        }
        Command::Bench { sizes: Some(s), .. } => recipe.bench = Some(recipe::BenchSpec { sizes: s.clone() }),
        Command::Spectrum { values: Some(v), .. } => {
            let spec = recipe
                .spectrum
                .as_mut()
                .ok_or_else(|| Error::InvalidConfig("recipe has no `spectrum` section".into()))?;
            spec.values = v.clone();
        }
        _ => {}
    }
    if let Some(sim) = &recipe.sim {
        sim.validate()?;
    }
    Ok(recipe)
}

/// Runs one subcommand end to end and writes its manifest.
pub fn run(cli: &Cli) -> Result<Report> {
    let command = &cli.command;
    let common = command.common();
    if let Some(threads) = common.threads {
        // A pool may already exist (tests, repeated calls); results never depend on it.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build_global();
    }
    let recipe = resolve(command)?;
    let out =
        common.out.clone().or_else(|| recipe.output.clone()).unwrap_or_else(|| PathBuf::from("out").join(&recipe.name));
    std::fs::create_dir_all(&out)?;
    let header = output::Header::new(command.name(), recipe.seed(), &recipe)?;
    let start = Instant::now();
    let mut report = Report::default();
    let mut extra = serde_json::Map::new();
    let ctx = commands::Context { recipe: &recipe, out: &out, header: &header };
    match command {
        Command::SimulateNet { .. } => commands::simulate_net(&ctx, &mut report, &mut extra)?,
        Command::SimulateMf { .. } => commands::simulate_mf(&ctx, &mut report)?,
        Command::Sweep { .. } => commands::sweep(&ctx, &mut report)?,
        Command::Converge { .. } => commands::converge(&ctx, &mut report)?,
        Command::Spectrum { .. } => commands::spectrum(&ctx, &mut report)?,
        Command::Validate { .. } => commands::validate(&ctx, &mut report)?,
        Command::Bench { .. } => commands::bench(&ctx, &mut report)?,
    }
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command: command.name(),
        seed: recipe.seed(),
        recipe: &recipe,
        wall_time_s: start.elapsed().as_secs_f64(),
        extra: &extra,
        files: &report.files,
        failures: &report.failures,
        warnings: &report.warnings,
    };
    output::save_json(&out.join("manifest.json"), &manifest)?;
    Ok(report)
}
