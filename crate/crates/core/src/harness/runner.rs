use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{AlgoId, EnvId, ExperimentConfig};
use crate::deep::{ActorPolicy, Learner, TempoRlAgent, TempoRlPolicy, Td3Agent, TlaAgent, TlaConfig, TlaPolicy};
use crate::envs::classic::{DecisionBound, MountainCar, Pendulum};
use crate::envs::grid::GridWorld;
use crate::error::{Error, Result};
use crate::mdp::{
    run_episode, Agent, DecisionBudget, Environment, Episode, EpisodeTrace, Mode, RngStream,
};
use crate::metrics::{
    action_repetition, episode_mmacs, jerk, SeedMetrics, MOUNTAIN_CAR_AUC_BOUNDS, PENDULUM_AUC_BOUNDS,
};
use crate::neural::Mlp;
use crate::tabular::{train_tabular, TabularAlgo, TabularConfig};

/// One evaluation point of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    /// Environment steps (deep) or episodes (tabular) trained so far.
    pub step: u64,
    pub avg_return: f64,
    pub avg_decisions: f64,
    pub avg_mmacs: f64,
    pub jerk: f64,
    pub repetition_pct: f64,
}

/// Curve CSV row: an evaluation point tagged with its run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CurveRow {
    config_hash: String,
    seed: u64,
    step: u64,
    avg_return: f64,
    avg_decisions: f64,
    avg_mmacs: f64,
    jerk: f64,
    repetition_pct: f64,
}

/// Everything one seed of an experiment produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub config_hash: String,
    pub seed: u64,
    pub curve: Vec<EvalPoint>,
    pub final_metrics: SeedMetrics,
}

impl EvalPoint {
    fn from_traces(step: u64, traces: &[EpisodeTrace]) -> Self {
        let n = traces.len() as f64;
        let mean = |f: &dyn Fn(&EpisodeTrace) -> f64| traces.iter().map(f).sum::<f64>() / n;
        EvalPoint {
            step,
            avg_return: mean(&|t| t.total_return()),
            avg_decisions: mean(&|t| t.decisions() as f64),
            avg_mmacs: mean(&episode_mmacs),
            jerk: mean(&|t| jerk(t).value),
            repetition_pct: mean(&|t| action_repetition(t).value),
        }
    }
}

/// Return range used to normalize the evaluation curve of `cfg`'s task.
///
/// Grids use the per-step agent's failure return (every decision spent one
/// step at a time, then the exhaustion penalty) up to the shortest-path
/// return.
pub fn auc_bounds(cfg: &ExperimentConfig) -> (f64, f64) {
    match cfg.env {
        EnvId::Pendulum => PENDULUM_AUC_BOUNDS,
        EnvId::MountainCar => MOUNTAIN_CAR_AUC_BOUNDS,
        _ => {
            let world = grid_world(cfg);
            let best = world.step_reward() * world.shortest_path_len().unwrap_or(0) as f64;
            let worst = world.step_reward() * world.decision_limit() as f64 + world.exhaustion_penalty();
            (worst.min(best - 1.0), best)
        }
    }
}

pub fn grid_world(cfg: &ExperimentConfig) -> GridWorld {
    let world = match cfg.env {
        EnvId::Straight => GridWorld::straight(),
        EnvId::Slalom => GridWorld::slalom(),
        EnvId::Combined => GridWorld::combined(),
        other => panic!("{other} is not a grid world"),
    };
    match cfg.decision_limit {
        Some(n) => world.with_decision_limit(n),
        None => world,
    }
}

/// Builds a continuous-control environment, wrapped in the decision bound.
pub fn make_env(cfg: &ExperimentConfig) -> Result<Box<dyn Environment>> {
    fn bound<E: Environment + 'static>(e: E, limit: Option<usize>) -> Result<Box<dyn Environment>> {
        Ok(match limit {
            Some(n) => Box::new(DecisionBound::new(e, n)?),
            None => Box::new(DecisionBound::unbounded(e)),
        })
    }
    match cfg.env {
        EnvId::Pendulum => bound(Pendulum::new(), cfg.decision_limit),
        EnvId::MountainCar => bound(MountainCar::new(), cfg.decision_limit),
        other => Err(Error::config(format!("{other} is not a continuous environment"))),
    }
}

fn env_shape(env: &dyn Environment) -> Result<(usize, Vec<f64>)> {
    let a_max = env
        .action_spec()
        .a_max()
        .ok_or_else(|| Error::config("deep agents need a continuous action space"))?
        .to_vec();
    Ok((env.observation_dim(), a_max))
}

fn tla_config(cfg: &ExperimentConfig) -> TlaConfig {
    TlaConfig {
        tau: cfg.tau,
        p: cfg.p,
        j: cfg.j,
        zero_slow_on_fast: cfg.zero_slow_on_fast,
        gate_penalty: cfg.gate_penalty,
        gate_mode: cfg.gate_mode,
        ..TlaConfig::default()
    }
}

pub fn make_learner(cfg: &ExperimentConfig, obs_dim: usize, a_max: &[f64], streams: &RngStream) -> Result<Box<dyn Learner>> {
    let td3 = &cfg.td3;
    Ok(match cfg.algo {
        AlgoId::Td3 => Box::new(Td3Agent::new(obs_dim, a_max, td3, 1, cfg.warmup, streams)?),
        AlgoId::Td3Ea => Box::new(Td3Agent::new(obs_dim, a_max, td3, cfg.tau, cfg.warmup, streams)?),
        AlgoId::Temporl => Box::new(TempoRlAgent::new(obs_dim, a_max, td3, cfg.tau, cfg.warmup, streams)?),
        AlgoId::Tla => Box::new(TlaAgent::new(obs_dim, a_max, td3, &tla_config(cfg), cfg.warmup, streams)?),
        other => return Err(Error::config(format!("{other} is not a deep algorithm"))),
    })
}

/// Rebuilds a frozen policy from networks exported by [`Learner::networks`].
pub fn policy_from_networks(cfg: &ExperimentConfig, mut nets: Vec<(String, Mlp<f32>)>) -> Result<Box<dyn Agent>> {
    let mut take = |name: &str| -> Result<Mlp<f32>> {
        let i = nets
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| Error::config(format!("missing network '{name}'")))?;
        Ok(nets.swap_remove(i).1)
    };
    Ok(match cfg.algo {
        AlgoId::Td3 => Box::new(ActorPolicy::new(take("actor")?, 1)),
        AlgoId::Td3Ea => Box::new(ActorPolicy::new(take("actor")?, cfg.tau)),
        AlgoId::Temporl => Box::new(TempoRlPolicy::new(take("actor")?, take("skip")?)),
        AlgoId::Tla => Box::new(TlaPolicy::new(take("slow")?, take("fast")?, take("gate")?, cfg.tau, cfg.gate_mode)),
        other => return Err(Error::config(format!("{other} has no saved networks"))),
    })
}

fn evaluate(env: &mut dyn Environment, policy: &mut dyn Agent, episodes: usize, rng: &mut crate::mdp::StreamRng) -> Result<Vec<EpisodeTrace>> {
    (0..episodes)
        .map(|_| {
            let budget = env.decision_limit().map(DecisionBudget::new);
            run_episode(env, policy, budget, usize::MAX, rng, Mode::Eval)
        })
        .collect()
}

/// Output of one seed before persistence.
struct SeedOutput {
    curve: Vec<EvalPoint>,
    final_traces: Vec<EpisodeTrace>,
    networks: Vec<(&'static str, Mlp<f32>)>,
}

fn train_deep(cfg: &ExperimentConfig, seed: u64, mut on_point: impl FnMut(&EvalPoint) -> Result<()>) -> Result<SeedOutput> {
    let streams = RngStream::new(seed);
    let mut env = make_env(cfg)?;
    let mut eval_env = make_env(cfg)?;
    let (obs_dim, a_max) = env_shape(env.as_ref())?;
    let mut agent = make_learner(cfg, obs_dim, &a_max, &streams)?;
    let mut train_rng = streams.env();
    let mut eval_rng = streams.eval_env();
    let mut curve = Vec::new();
    let mut final_traces = Vec::new();
    let mut episode: Option<Episode> = None;
    for step in 1..=cfg.max_steps {
        let ep = match episode.take() {
            Some(ep) if !ep.is_finished() => episode.insert(ep),
            _ => {
                let budget = env.decision_limit().map(DecisionBudget::new);
                episode.insert(Episode::begin(&mut env, agent.as_mut(), budget, usize::MAX, &mut train_rng, Mode::Train)?)
            }
        };
        ep.step(&mut env, agent.as_mut())?;
        if step % cfg.eval_frequency == 0 {
            let mut policy = agent.snapshot();
            final_traces = evaluate(eval_env.as_mut(), policy.as_mut(), cfg.eval_episodes, &mut eval_rng)?;
            let point = EvalPoint::from_traces(step, &final_traces);
            on_point(&point)?;
            curve.push(point);
        }
    }
    if final_traces.is_empty() {
        let mut policy = agent.snapshot();
        final_traces = evaluate(eval_env.as_mut(), policy.as_mut(), cfg.eval_episodes, &mut eval_rng)?;
    }
    Ok(SeedOutput {
        curve,
        final_traces,
        networks: agent.networks(),
    })
}

fn train_grid(cfg: &ExperimentConfig, seed: u64) -> Result<SeedOutput> {
    let world = grid_world(cfg);
    let algo = match cfg.algo {
        AlgoId::Qlearn => TabularAlgo::QLearning,
        AlgoId::QlearnEa => TabularAlgo::ExtendedQ { repeat: cfg.tau },
        AlgoId::TlaTab => TabularAlgo::Tla {
            tau: cfg.tau,
            p: cfg.p,
            j: cfg.j,
            gate_penalty: cfg.gate_penalty,
        },
        other => return Err(Error::config(format!("{other} is not a tabular algorithm"))),
    };
    let run = train_tabular(&world, algo, &TabularConfig::with_episodes(cfg.max_steps as usize), seed)?;
    let curve = run
        .curve
        .iter()
        .filter(|e| (e.episode as u64 + 1).is_multiple_of(cfg.eval_frequency))
        .map(|e| EvalPoint {
            step: e.episode as u64 + 1,
            avg_return: e.eval_return,
            avg_decisions: e.eval_decisions as f64,
            avg_mmacs: 0.0,
            jerk: e.eval_jerk,
            repetition_pct: e.eval_repetition_pct,
        })
        .collect();
    Ok(SeedOutput {
        curve,
        final_traces: vec![run.final_eval],
        networks: Vec::new(),
    })
}

fn curve_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("seed_{seed}.curve.csv"))
}

fn partial_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("seed_{seed}.curve.partial.csv"))
}

fn final_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("seed_{seed}.final.csv"))
}

fn network_path(dir: &Path, seed: u64, name: &str) -> PathBuf {
    dir.join(format!("seed_{seed}.{name}.mlp"))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?))
}

/// Trains one seed and writes its record into `dir`.
///
/// The curve is streamed to a `.partial` file and only renamed once the run
/// has finished, so an interrupted run is recognizable and is restarted from
/// scratch by [`run_experiment`].
pub fn run_seed(cfg: &ExperimentConfig, seed: u64, dir: &Path) -> Result<RunRecord> {
    let hash = cfg.hash();
    let partial = partial_path(dir, seed);
    let mut writer = csv::Writer::from_writer(create(&partial)?);
    let row = |p: &EvalPoint| CurveRow {
        config_hash: hash.clone(),
        seed,
        step: p.step,
        avg_return: p.avg_return,
        avg_decisions: p.avg_decisions,
        avg_mmacs: p.avg_mmacs,
        jerk: p.jerk,
        repetition_pct: p.repetition_pct,
    };
    let out = if cfg.env.is_grid() {
        let out = train_grid(cfg, seed)?;
        for p in &out.curve {
            writer.serialize(row(p))?;
        }
        out
    } else {
        train_deep(cfg, seed, |p| {
            writer.serialize(row(p))?;
            writer.flush().map_err(|e| Error::io(&partial, e))?;
            Ok(())
        })?
    };
    writer.flush().map_err(|e| Error::io(&partial, e))?;
    drop(writer);

    let returns: Vec<f64> = out.curve.iter().map(|p| p.avg_return).collect();
    let returns = if returns.is_empty() {
        vec![out.final_traces.iter().map(|t| t.total_return()).sum::<f64>() / out.final_traces.len() as f64]
    } else {
        returns
    };
    let final_metrics = SeedMetrics::from_traces(seed, &out.final_traces, &returns, auc_bounds(cfg))?;
    for (name, net) in &out.networks {
        let path = network_path(dir, seed, name);
        let mut w = create(&path)?;
        net.write_text(&mut w)?;
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    let fpath = final_path(dir, seed);
    let mut w = csv::Writer::from_writer(create(&fpath)?);
    w.serialize(&final_metrics)?;
    w.flush().map_err(|e| Error::io(&fpath, e))?;
    let cpath = curve_path(dir, seed);
    fs::rename(&partial, &cpath).map_err(|e| Error::io(&cpath, e))?;
    Ok(RunRecord {
        config_hash: hash,
        seed,
        curve: out.curve,
        final_metrics,
    })
}

/// Reads a finished seed's record from `dir`, or `None` if it is not complete.
pub fn load_record(dir: &Path, seed: u64) -> Result<Option<RunRecord>> {
    let (cpath, fpath) = (curve_path(dir, seed), final_path(dir, seed));
    if !cpath.exists() || !fpath.exists() {
        return Ok(None);
    }
    let rows: Vec<CurveRow> = csv::Reader::from_reader(open(&cpath)?)
        .deserialize()
        .collect::<std::result::Result<_, _>>()?;
    let finals: Vec<SeedMetrics> = csv::Reader::from_reader(open(&fpath)?)
        .deserialize()
        .collect::<std::result::Result<_, _>>()?;
    let final_metrics = finals
        .into_iter()
        .next()
        .ok_or_else(|| Error::Parse(format!("{} has no rows", fpath.display())))?;
    let config_hash = match rows.first() {
        Some(r) => r.config_hash.clone(),
        None => read_config(dir)?.hash(),
    };
    if rows.iter().any(|r| r.config_hash != config_hash || r.seed != seed) {
        return Err(Error::Parse(format!("{} mixes runs", cpath.display())));
    }
    let curve = rows
        .into_iter()
        .map(|r| EvalPoint {
            step: r.step,
            avg_return: r.avg_return,
            avg_decisions: r.avg_decisions,
            avg_mmacs: r.avg_mmacs,
            jerk: r.jerk,
            repetition_pct: r.repetition_pct,
        })
        .collect();
    Ok(Some(RunRecord {
        config_hash,
        seed,
        curve,
        final_metrics,
    }))
}

pub fn read_config(dir: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::load(&dir.join("config.toml"), toml::Table::new())
}

/// Every finished record in a run directory, ordered by seed.
pub fn load_records(dir: &Path) -> Result<Vec<RunRecord>> {
    let cfg = read_config(dir)?;
    let mut out = Vec::new();
    for &seed in &cfg.seeds {
        if let Some(r) = load_record(dir, seed)? {
            out.push(r);
        }
    }
    Ok(out)
}

/// Runs every seed of `cfg` (at most `cfg.parallel` at a time) and returns
/// the records ordered by seed. Finished seeds already on disk are loaded
/// instead of retrained; interrupted ones are retrained.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    let dir = cfg.run_dir();
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let cpath = dir.join("config.toml");
    let mut merged = cfg.clone();
    if cpath.exists() {
        let previous = read_config(&dir)?;
        for s in previous.seeds {
            if !merged.seeds.contains(&s) {
                merged.seeds.push(s);
            }
        }
        merged.seeds.sort_unstable();
    }
    fs::write(&cpath, merged.to_toml()).map_err(|e| Error::io(&cpath, e))?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallel)
        .build()
        .map_err(|e| Error::config(e.to_string()))?;
    let dir = Arc::new(dir);
    let mut records: Vec<RunRecord> = pool.install(|| {
        cfg.seeds
            .par_iter()
            .map(|&seed| {
                if let Some(r) = load_record(&dir, seed)? {
                    info!("{}: seed {seed} already finished", dir.display());
                    return Ok(r);
                }
                if partial_path(&dir, seed).exists() {
                    warn!("{}: seed {seed} was interrupted, restarting it", dir.display());
                }
                info!("{}: training seed {seed}", dir.display());
                run_seed(cfg, seed, &dir)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    records.sort_by_key(|r| r.seed);
    Ok(records)
}

/// Reloads the saved final policy of `seed` and evaluates it.
pub fn evaluate_saved(dir: &Path, seed: u64, episodes: usize, eval_seed: u64) -> Result<Vec<EpisodeTrace>> {
    let cfg = read_config(dir)?;
    if cfg.env.is_grid() {
        return Err(Error::config("tabular runs keep no policy; their final greedy episode is in the record"));
    }
    let names: &[&str] = match cfg.algo {
        AlgoId::Tla => &["slow", "fast", "gate"],
        AlgoId::Temporl => &["actor", "skip"],
        _ => &["actor"],
    };
    let mut nets = Vec::new();
    for name in names {
        nets.push((name.to_string(), Mlp::read_text(open(&network_path(dir, seed, name))?)?));
    }
    let mut policy = policy_from_networks(&cfg, nets)?;
    let mut env = make_env(&cfg)?;
    evaluate(env.as_mut(), policy.as_mut(), episodes, &mut RngStream::new(eval_seed).eval_env())
}
