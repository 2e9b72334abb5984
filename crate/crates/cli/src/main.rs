use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Deserialize;

use swaves_core::engine::{SimOptions, Simulation, World};
use swaves_core::output::{emit_outputs, summarize};
use swaves_core::{ConfigError, RunConfig, SimError, Strategy};

const EXIT_RUNTIME: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(name = "swaves-sim", version, about = "Lifecycle-aware VNF placement simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation.
    Simulate(SimulateArgs),
    /// Run the cross product of strategies, alphas, delay limits and seeds.
    Sweep(SweepArgs),
    /// Parse and validate a config, then print the effective values.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides SWAVES_SIM_SEED and `sim.seed`.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    strategy: Option<Strategy>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    log_events: bool,
    /// Write a forecast_t<time>.csv snapshot per simulated second.
    #[arg(long)]
    dump_forecast: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, default_value = "sweep")]
    out: PathBuf,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepSpec {
    #[serde(default)]
    strategies: Vec<Strategy>,
    #[serde(default)]
    alphas: Vec<f64>,
    #[serde(default)]
    d_max_ms: Vec<f64>,
    #[serde(default = "default_seed_start")]
    seed_start: u64,
    #[serde(default)]
    seed_count: u64,
}

fn default_seed_start() -> u64 {
    1
}

#[derive(Debug, Clone)]
struct Cell {
    strategy: Strategy,
    alpha: f64,
    d_max_ms: f64,
    seed: u64,
}

impl Cell {
    fn dir_name(&self) -> String {
        format!("{}_a{}_d{}_s{}", self.strategy, self.alpha, self.d_max_ms, self.seed)
    }
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(c) => Failure::Config(c.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn resolve_seed(flag: Option<u64>, cfg: &RunConfig) -> Result<u64, Failure> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var("SWAVES_SIM_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Failure::Config(format!("SWAVES_SIM_SEED: `{v}` is not an unsigned integer"))),
        Err(_) => Ok(cfg.sim.seed),
    }
}

fn simulate(args: &SimulateArgs) -> Result<(), Failure> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(s) = args.strategy {
        cfg.placement.strategy = s;
    }
    let seed = resolve_seed(args.seed, &cfg)?;
    cfg.sim.seed = seed;
    let world = Arc::new(World::build(&cfg, seed)?);
    let opts = SimOptions {
        log_events: args.log_events,
        dump_forecast: args.dump_forecast,
    };
    let mut sim = Simulation::new(&cfg, world, cfg.placement.strategy, opts);
    sim.run_to_end();
    let metrics = sim.finish();
    emit_outputs(&metrics, &args.out)?;
    let s = summarize(&metrics);
    println!(
        "{} seed={} mean_ratio={:.6} packets={} -> {}",
        s.strategy,
        s.seed,
        s.mean_ratio,
        s.total_packets,
        args.out.display()
    );
    Ok(())
}

fn load_spec(path: &Path) -> Result<SweepSpec, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn run_cell(base: &RunConfig, cell: &Cell, world: &Arc<World>, out: &Path) -> Result<(f64, String), Failure> {
    let mut cfg = base.clone();
    cfg.placement.strategy = cell.strategy;
    cfg.mobility.alpha = cell.alpha;
    cfg.vnf.d_max_ms = cell.d_max_ms;
    cfg.sim.seed = cell.seed;
    cfg.validate()?;
    let mut sim = Simulation::new(&cfg, world.clone(), cell.strategy, SimOptions::default());
    sim.run_to_end();
    let metrics = sim.finish();
    emit_outputs(&metrics, &out.join(cell.dir_name()))?;
    Ok((metrics.mean_ratio(), metrics.trace_hash))
}

fn sweep(args: &SweepArgs) -> Result<bool, Failure> {
    let base = RunConfig::load(&args.config)?;
    let spec = load_spec(&args.spec)?;
    if spec.strategies.is_empty() || spec.alphas.is_empty() || spec.d_max_ms.is_empty() || spec.seed_count == 0 {
        return Err(Failure::Config(format!(
            "{}: sweep spec is empty (needs strategies, alphas, d_max_ms and seed_count > 0)",
            args.spec.display()
        )));
    }
    let seeds: Vec<u64> = (spec.seed_start..spec.seed_start + spec.seed_count).collect();
    let mut cells = Vec::new();
    for &alpha in &spec.alphas {
        for &seed in &seeds {
            for &d_max_ms in &spec.d_max_ms {
                for &strategy in &spec.strategies {
                    cells.push(Cell {
                        strategy,
                        alpha,
                        d_max_ms,
                        seed,
                    });
                }
            }
        }
    }
    fs::create_dir_all(&args.out).map_err(|e| Failure::Runtime(format!("{}: {e}", args.out.display())))?;

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = args.jobs {
        builder = builder.num_threads(j.max(1));
    }
    let pool = builder.build().map_err(|e| Failure::Runtime(e.to_string()))?;

    // The world depends only on alpha and seed; share it across the other axes.
    let worlds: Vec<((u64, u64), Result<Arc<World>, String>)> = pool.install(|| {
        spec.alphas
            .iter()
            .flat_map(|&a| seeds.iter().map(move |&s| (a, s)))
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|(alpha, seed)| {
                let mut cfg = base.clone();
                cfg.mobility.alpha = alpha;
                let w = World::build(&cfg, seed).map(Arc::new).map_err(|e| e.to_string());
                ((alpha.to_bits(), seed), w)
            })
            .collect()
    });
    let world_for = |c: &Cell| {
        &worlds
            .iter()
            .find(|(k, _)| *k == (c.alpha.to_bits(), c.seed))
            .expect("world built for every (alpha, seed)")
            .1
    };

    let results: Vec<Result<(f64, String), String>> = pool.install(|| {
        cells
            .par_iter()
            .map(|c| match world_for(c) {
                Ok(w) => run_cell(&base, c, w, &args.out).map_err(|e| match e {
                    Failure::Config(m) | Failure::Runtime(m) => m,
                }),
                Err(e) => Err(e.clone()),
            })
            .collect()
    });

    let mut index = String::from("cell,strategy,alpha,d_max_ms,seed,status,mean_ratio,trace_hash,dir\n");
    let mut failed = 0;
    for (i, (c, r)) in cells.iter().zip(&results).enumerate() {
        let (status, ratio, hash) = match r {
            Ok((ratio, hash)) => ("ok".to_string(), ratio.to_string(), hash.clone()),
            Err(e) => {
                failed += 1;
                eprintln!("cell {} failed: {e}", c.dir_name());
                (format!("failed: {}", e.replace([',', '\n'], ";")), String::new(), String::new())
            }
        };
        index.push_str(&format!(
            "{i},{},{},{},{},{status},{ratio},{hash},{}\n",
            c.strategy,
            c.alpha,
            c.d_max_ms,
            c.seed,
            c.dir_name()
        ));
    }
    let index_path = args.out.join("sweep_index.csv");
    fs::write(&index_path, index).map_err(|e| Failure::Runtime(format!("{}: {e}", index_path.display())))?;
    println!("{} cells, {failed} failed -> {}", cells.len(), index_path.display());
    Ok(failed == 0)
}

fn validate(args: &ValidateArgs) -> Result<(), Failure> {
    let cfg = RunConfig::load(&args.config)?;
    print!("{}", cfg.to_flat_toml());
    Ok(())
}

fn report(f: Failure) -> ExitCode {
    match f {
        Failure::Config(m) => {
            eprintln!("config error: {m}");
            ExitCode::from(EXIT_CONFIG)
        }
        Failure::Runtime(m) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Validate(a) => validate(a),
        Command::Sweep(a) => match sweep(a) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(EXIT_RUNTIME),
            Err(e) => Err(e),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => report(f),
    }
}
