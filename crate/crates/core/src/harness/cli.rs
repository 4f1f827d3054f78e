use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::consensus::{consensus_step, ConsensusState};
use crate::error::{Error, Result};
use crate::graph::{metropolis_hastings_weights, Graph};
use crate::spectral::{check_assumption1, critical_attention, eigendecompose, BiasGeometry, Sign};

use super::config::SimConfig;
use super::export::{export_csv, export_json, export_sweep_csv};
use super::population::{run_game_batch, run_population_game, summarize, GameRun};
use super::sweep::run_bias_sweep;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "nodalloc", version, about = "Task allocation with biased nonlinear opinion dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON config; keys override the subcommand defaults.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Suppress logs and the stdout summary.
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Staircase bias sweep on a scale-free graph; writes sweep.csv and sweep.json.
    SweepBias {
        #[command(flatten)]
        common: Common,
    },
    /// Repeated population game; writes epochs.csv and summary.json.
    RunGame {
        #[command(flatten)]
        common: Common,
        /// Run this many consecutive seeds in parallel.
        #[arg(long, value_name = "K")]
        batch: Option<usize>,
    },
    /// Spectral report, critical attention and crossing thresholds for one graph.
    CheckGraph {
        #[command(flatten)]
        common: Common,
        /// Graph JSON `{"n":..,"edges":[[i,j],..],"seed":..}`; generated from the config when absent.
        #[arg(long, value_name = "PATH")]
        graph: Option<PathBuf>,
    },
    /// Average consensus on random values; writes consensus.csv.
    ConsensusDemo {
        #[command(flatten)]
        common: Common,
    },
}

fn exit_code(e: &Error) -> i32 {
    if e.is_config() || matches!(e, Error::Io(_)) {
        EXIT_CONFIG
    } else {
        EXIT_NUMERICAL
    }
}

fn init_logging(quiet: bool) {
    let level = if quiet { "error" } else { "info" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
}

fn load(common: &Common, base: SimConfig) -> Result<SimConfig> {
    let mut cfg = match &common.config {
        Some(path) => base.load_over(path)?,
        None => base,
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(epochs) = common.epochs {
        cfg.epochs = epochs;
    }
    if let Some(dir) = &common.out_dir {
        cfg.out_dir = Some(dir.to_string_lossy().into_owned());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cfg: &SimConfig) -> Result<PathBuf> {
    let dir = PathBuf::from(cfg.out_dir.as_deref().unwrap_or("out"));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn say(quiet: bool, line: impl AsRef<str>) {
    if !quiet {
        println!("{}", line.as_ref());
    }
}

fn sweep_bias(common: &Common) -> Result<i32> {
    let cfg = load(common, SimConfig::sweep_default())?;
    let dir = out_dir(&cfg)?;
    let rep = run_bias_sweep(&cfg)?;
    export_sweep_csv(&rep, &dir.join("sweep.csv"))?;
    export_json(&json!({ "config": cfg, "report": rep }), &dir.join("sweep.json"))?;
    say(
        common.quiet,
        format!(
            "graph seed {} ({} attempts): {} crossings, unit-step monotone {}, order {}, max rel dev {:.3}, passed {}",
            rep.graph_seed,
            rep.graph_attempts,
            rep.crossings.len(),
            rep.unit_step_monotone,
            rep.order_matches,
            rep.max_rel_dev,
            rep.passed
        ),
    );
    Ok(EXIT_OK)
}

fn write_run(cfg: &SimConfig, run: &GameRun, dir: &Path, csv_name: &str, quiet: bool) -> Result<i32> {
    export_csv(&run.records, &dir.join(csv_name))?;
    let summary = summarize(cfg, run)?;
    let json_name = csv_name.replace("epochs", "summary").replace(".csv", ".json");
    let error = run.error.as_ref().map(|e| e.to_string());
    export_json(&json!({ "config": cfg, "summary": summary, "error": error }), &dir.join(json_name))?;
    say(
        quiet,
        format!(
            "seed {}: {} epochs, tracking error {:.4} (bound {:.4}), Lyapunov {:.3e} -> {:.3e}{}",
            run.seed,
            summary.epochs_completed,
            summary.final_tracking_error,
            summary.tracking_bound,
            summary.lyapunov_start,
            summary.lyapunov_final,
            if run.aborted() { ", ABORTED" } else { "" }
        ),
    );
    Ok(match &run.error {
        Some(e) => exit_code(e),
        None => EXIT_OK,
    })
}

fn run_game(common: &Common, batch: Option<usize>) -> Result<i32> {
    let cfg = load(common, SimConfig::default())?;
    cfg.payoff.validate_anti_coordination()?;
    let dir = out_dir(&cfg)?;
    match batch {
        None | Some(0) | Some(1) => write_run(&cfg, &run_population_game(&cfg)?, &dir, "epochs.csv", common.quiet),
        Some(k) => {
            let seeds: Vec<u64> = (0..k as u64).map(|i| cfg.seed.wrapping_add(i)).collect();
            let mut code = EXIT_OK;
            for (seed, run) in seeds.iter().zip(run_game_batch(&cfg, &seeds)) {
                let scfg = SimConfig { seed: *seed, ..cfg.clone() };
                let c = write_run(&scfg, &run?, &dir, &format!("epochs_seed{seed}.csv"), common.quiet)?;
                code = code.max(c);
            }
            Ok(code)
        }
    }
}

#[derive(Serialize)]
struct GraphCheck {
    graph: Graph,
    eigenvalues: Vec<f64>,
    lambda_star: f64,
    lambda_2: f64,
    v_star: Vec<f64>,
    u_star: f64,
    u_lambda2: f64,
    u: f64,
    assumption: crate::spectral::AssumptionReport,
    /// `(agent, b)` on the unit sphere, sorted by `b`.
    thresholds: Vec<(usize, f64)>,
    b_max: f64,
}

fn check_graph(common: &Common, graph: Option<&Path>) -> Result<i32> {
    let cfg = load(common, SimConfig::default())?;
    let g = match graph {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str::<Graph>(&text)?
        }
        None => cfg.graph.generate(cfg.n_agents, cfg.seed)?,
    };
    let a = g.adjacency();
    let spec = eigendecompose(&a)?;
    let crit = critical_attention(cfg.d, cfg.alpha, cfg.gamma, &spec)?;
    let params = cfg.nod_params(cfg.u_rule * crit.u_star, 0.0)?;
    let geom = BiasGeometry::for_params(&params, &a, &spec, Sign::Plus)?;
    let report = GraphCheck {
        assumption: check_assumption1(&spec, &geom, cfg.assumption_tol),
        eigenvalues: spec.eigenvalues.clone(),
        lambda_star: spec.lambda_star,
        lambda_2: spec.lambda_2,
        v_star: spec.v_star.iter().copied().collect(),
        u_star: crit.u_star,
        u_lambda2: crit.u_lambda2,
        u: params.u,
        thresholds: geom.thresholds.iter().map(|t| (t.agent, t.b)).collect(),
        b_max: geom.b_max,
        graph: g,
    };
    let text = serde_json::to_string_pretty(&report)?;
    say(common.quiet, &text);
    if cfg.out_dir.is_some() {
        export_json(&report, &out_dir(&cfg)?.join("check.json"))?;
    }
    Ok(EXIT_OK)
}

fn consensus_demo(common: &Common) -> Result<i32> {
    let cfg = load(common, SimConfig::default())?;
    let g = cfg.graph.generate(cfg.n_agents, cfg.seed)?;
    let q = metropolis_hastings_weights(&g);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut s = ConsensusState::new((0..cfg.n_agents).map(|_| rng.random::<f64>()).collect());
    let target = s.mean();
    let dir = out_dir(&cfg)?;
    let mut wtr = csv::Writer::from_path(dir.join("consensus.csv"))?;
    wtr.write_record(["iteration", "mean", "spread"])?;
    let max_iter = cfg.consensus_max_iter();
    loop {
        wtr.write_record([s.iteration.to_string(), s.mean().to_string(), s.spread().to_string()])?;
        if s.spread() < cfg.consensus.tol || s.iteration == max_iter {
            break;
        }
        s = consensus_step(&q, &s);
    }
    wtr.flush()?;
    let converged = s.spread() < cfg.consensus.tol;
    say(
        common.quiet,
        format!(
            "{} agents: spread {:.3e} after {} iterations, mean drift {:.3e}",
            cfg.n_agents,
            s.spread(),
            s.iteration,
            (s.mean() - target).abs()
        ),
    );
    if converged {
        Ok(EXIT_OK)
    } else {
        Err(Error::NotConverged { value: s.mean(), iters: s.iteration, spread: s.spread() })
    }
}

/// Parses `argv` (including the program name) and runs the subcommand.
/// Returns 0 on success, 2 on usage or config errors, 3 on numerical failure.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let common = match &cli.command {
        Command::SweepBias { common }
        | Command::RunGame { common, .. }
        | Command::CheckGraph { common, .. }
        | Command::ConsensusDemo { common } => common.clone(),
    };
    init_logging(common.quiet);
    let result = match &cli.command {
        Command::SweepBias { .. } => sweep_bias(&common),
        Command::RunGame { batch, .. } => run_game(&common, *batch),
        Command::CheckGraph { graph, .. } => check_graph(&common, graph.as_deref()),
        Command::ConsensusDemo { .. } => consensus_demo(&common),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
