use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tla_core::envs::grid::{oracle_solve, oracle_solve_shaped, MacroSet};
use tla_core::harness::aggregate::write_curve_csv;
use tla_core::harness::plot::{line_plot, Quantity};
use tla_core::harness::runner::{evaluate_saved, grid_world, read_config};
use tla_core::harness::sweep::write_sweep_csv;
use tla_core::harness::{aggregate, load_records, run_experiment, sweep, EnvId, ExperimentConfig};
use tla_core::metrics::{summary_table, MetricReport, SeedMetrics};
use tla_core::{Error, Result};

#[derive(Parser)]
#[command(name = "tla", version, about = "Decision-bounded RL experiments with temporally layered agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed of an experiment and print its summary.
    Train(ExperimentArgs),
    /// Re-evaluate the saved final policy of one seed.
    Eval {
        /// Run directory written by `train`.
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        /// Seed of the evaluation start-state stream.
        #[arg(long, default_value_t = 0)]
        eval_seed: u64,
    },
    /// Grid search over tau and p on five seeds.
    Sweep {
        #[command(flatten)]
        experiment: ExperimentArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        taus: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        ps: Vec<f64>,
    },
    /// Aggregate run directories into curve CSVs and SVG plots.
    Plot {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        #[arg(long, default_value = "plots")]
        out: PathBuf,
    },
    /// Exact optimum of a grid world under each agent's action set.
    Oracle {
        #[arg(long)]
        env: EnvId,
        #[arg(long, default_value_t = 4)]
        tau: usize,
        #[arg(long)]
        decision_limit: Option<usize>,
        #[arg(long, default_value_t = 1.0)]
        p: f64,
    },
    /// Summary table of final metrics for run directories.
    Report {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct ExperimentArgs {
    /// TOML experiment file; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    algo: Option<String>,
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Comma list (`0,3,7`) or half-open range (`0..10`).
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    tau: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    j: Option<f64>,
    #[arg(long)]
    decision_limit: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    parallel: Option<usize>,
}

fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let bad = || Error::Parse(format!("bad seed list '{text}'"));
    if let Some((a, b)) = text.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        return Ok((a..b).collect());
    }
    text.split(',').map(|s| s.trim().parse().map_err(|_| bad())).collect()
}

impl ExperimentArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut t = toml::Table::new();
        let mut set = |k: &str, v: toml::Value| {
            t.insert(k.to_string(), v);
        };
        if let Some(v) = &self.env {
            set("env", v.clone().into());
        }
        if let Some(v) = &self.algo {
            set("algo", v.clone().into());
        }
        let seeds = match (&self.seed, &self.seeds) {
            (Some(s), _) => Some(vec![*s]),
            (_, Some(list)) => Some(parse_seeds(list)?),
            _ => None,
        };
        if let Some(seeds) = seeds {
            set("seeds", toml::Value::Array(seeds.into_iter().map(|s| (s as i64).into()).collect()));
        }
        if let Some(v) = self.tau {
            set("tau", (v as i64).into());
        }
        if let Some(v) = self.p {
            set("p", v.into());
        }
        if let Some(v) = self.j {
            set("j", v.into());
        }
        if let Some(v) = self.decision_limit {
            set("decision_limit", (v as i64).into());
        }
        if let Some(v) = &self.out {
            set("out_dir", v.display().to_string().into());
        }
        if let Some(v) = self.parallel {
            set("parallel", (v as i64).into());
        }
        match &self.config {
            Some(path) => ExperimentConfig::load(path, t),
            None => ExperimentConfig::resolve(None, t),
        }
    }
}

fn run_label(dir: &Path) -> Result<String> {
    let cfg = read_config(dir)?;
    Ok(format!("{} ({})", cfg.algo, cfg.env))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => {
            let cfg = args.resolve()?;
            let records = run_experiment(&cfg)?;
            let agg = aggregate(&records)?;
            let dir = cfg.run_dir();
            let mut buf = Vec::new();
            write_curve_csv(&agg.curve, &mut buf)?;
            fs::write(dir.join("curve.csv"), buf).map_err(|e| Error::io(dir.join("curve.csv"), e))?;
            println!("{}", dir.display());
            print!("{}", summary_table(&[(cfg.algo.to_string(), agg.report)]));
        }
        Command::Eval {
            run,
            seed,
            episodes,
            eval_seed,
        } => {
            let traces = evaluate_saved(&run, seed, episodes, eval_seed)?;
            let curve: Vec<f64> = traces.iter().map(|t| t.total_return()).collect();
            let cfg = read_config(&run)?;
            let m = SeedMetrics::from_traces(seed, &traces, &curve, tla_core::harness::runner::auc_bounds(&cfg))?;
            print!("{}", summary_table(&[(cfg.algo.to_string(), MetricReport::from_seeds(vec![m])?)]));
        }
        Command::Sweep { experiment, taus, ps } => {
            let base = experiment.resolve()?;
            let (cells, best) = sweep(&base, &taus, &ps)?;
            let mut buf = Vec::new();
            write_sweep_csv(&cells, &mut buf)?;
            let path = base.out_dir.join(format!("sweep-{}-{}-{}.csv", base.env, base.algo, base.hash()));
            fs::create_dir_all(&base.out_dir).map_err(|e| Error::io(&base.out_dir, e))?;
            fs::write(&path, &buf).map_err(|e| Error::io(&path, e))?;
            print!("{}", String::from_utf8_lossy(&buf));
            let c = &cells[best];
            println!("best: tau={} p={} return={:.2} decisions={:.2}", c.tau, c.p, c.return_mean, c.decisions_mean);
        }
        Command::Plot { runs, out } => {
            fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            let mut series = Vec::new();
            let mut x_label = "environment steps";
            for dir in &runs {
                let agg = aggregate(&load_records(dir)?)?;
                if read_config(dir)?.env.is_grid() {
                    x_label = "episodes";
                }
                let name = dir.file_name().map_or_else(|| "run".into(), |n| n.to_string_lossy().into_owned());
                let mut buf = Vec::new();
                write_curve_csv(&agg.curve, &mut buf)?;
                let path = out.join(format!("{name}.csv"));
                fs::write(&path, buf).map_err(|e| Error::io(&path, e))?;
                series.push((run_label(dir)?, agg.curve));
            }
            write(&out.join("reward.svg"), &line_plot("Average reward during training", x_label, Quantity::Return, &series))?;
            write(&out.join("decisions.svg"), &line_plot("Decisions during training", x_label, Quantity::Decisions, &series))?;
            println!("{}", out.display());
        }
        Command::Oracle {
            env,
            tau,
            decision_limit,
            p,
        } => {
            let mut cfg = ExperimentConfig::defaults(env, tla_core::harness::AlgoId::TlaTab);
            cfg.decision_limit = decision_limit;
            if !env.is_grid() {
                return Err(Error::Config(format!("{env} is not a grid world")));
            }
            let world = grid_world(&cfg);
            println!("{}", world.to_text());
            println!(
                "shortest path {:?}, decision limit {}",
                world.shortest_path_len(),
                world.decision_limit()
            );
            for (name, set) in [
                ("one-step", MacroSet::OneStep),
                ("repeat", MacroSet::Repeat(tau)),
                ("union", MacroSet::Union(tau)),
                ("layered", MacroSet::LayeredWindows(tau)),
            ] {
                let s = oracle_solve(&world, set);
                println!(
                    "{name:<9} return {:>7.1}  decisions {:>3}  reaches goal {}",
                    s.optimal_return, s.min_decisions, s.reaches_goal
                );
            }
            let s = oracle_solve_shaped(&world, MacroSet::LayeredWindows(tau), p);
            println!(
                "layered with fast-step penalty {p}: return {:.1}, decisions {}",
                s.optimal_return, s.min_decisions
            );
        }
        Command::Report { runs } => {
            let mut rows = Vec::new();
            for dir in &runs {
                rows.push((run_label(dir)?, aggregate(&load_records(dir)?)?.report));
            }
            print!("{}", summary_table(&rows));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
