use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::deep::{GateMode, Td3Config};
use crate::error::{Error, Result};
use crate::tabular::GatePenalty;

/// Environment variable holding the default output root.
pub const OUT_DIR_VAR: &str = "TLA_OUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvId {
    Straight,
    Slalom,
    Combined,
    Pendulum,
    MountainCar,
}

impl EnvId {
    pub const ALL: [EnvId; 5] = [EnvId::Straight, EnvId::Slalom, EnvId::Combined, EnvId::Pendulum, EnvId::MountainCar];

    pub fn is_grid(self) -> bool {
        matches!(self, EnvId::Straight | EnvId::Slalom | EnvId::Combined)
    }

    pub fn name(self) -> &'static str {
        match self {
            EnvId::Straight => "straight",
            EnvId::Slalom => "slalom",
            EnvId::Combined => "combined",
            EnvId::Pendulum => "pendulum",
            EnvId::MountainCar => "mountain_car",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgoId {
    Qlearn,
    QlearnEa,
    TlaTab,
    Td3,
    Td3Ea,
    Temporl,
    Tla,
}

impl AlgoId {
    pub const ALL: [AlgoId; 7] = [
        AlgoId::Qlearn,
        AlgoId::QlearnEa,
        AlgoId::TlaTab,
        AlgoId::Td3,
        AlgoId::Td3Ea,
        AlgoId::Temporl,
        AlgoId::Tla,
    ];

    pub fn is_tabular(self) -> bool {
        matches!(self, AlgoId::Qlearn | AlgoId::QlearnEa | AlgoId::TlaTab)
    }

    /// Whether `tau` is used (window, repeat factor or maximum skip).
    pub fn uses_tau(self) -> bool {
        !matches!(self, AlgoId::Qlearn | AlgoId::Td3)
    }

    pub fn name(self) -> &'static str {
        match self {
            AlgoId::Qlearn => "qlearn",
            AlgoId::QlearnEa => "qlearn_ea",
            AlgoId::TlaTab => "tla_tab",
            AlgoId::Td3 => "td3",
            AlgoId::Td3Ea => "td3_ea",
            AlgoId::Temporl => "temporl",
            AlgoId::Tla => "tla",
        }
    }
}

macro_rules! parse_by_name {
    ($t:ty, $what:literal) => {
        impl FromStr for $t {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                <$t>::ALL
                    .into_iter()
                    .find(|v| v.name() == s)
                    .ok_or_else(|| Error::config(format!(concat!("unknown ", $what, " '{}'"), s)))
            }
        }

        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }
    };
}

parse_by_name!(EnvId, "environment");
parse_by_name!(AlgoId, "algorithm");

/// Fully resolved experiment description.
///
/// `tau` is the layered window for `tla`/`tla_tab`, the repeat factor for
/// `td3_ea`/`qlearn_ea` and the maximum skip for `temporl`. `max_steps` counts
/// environment steps for deep agents and episodes for tabular ones, and
/// `eval_frequency` uses the same unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvId,
    pub algo: AlgoId,
    pub seeds: Vec<u64>,
    pub tau: usize,
    pub p: f64,
    pub j: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision_limit: Option<usize>,
    pub max_steps: u64,
    pub eval_frequency: u64,
    pub eval_episodes: usize,
    pub warmup: u64,
    pub out_dir: PathBuf,
    pub parallel: usize,
    pub gate_penalty: GatePenalty,
    pub gate_mode: GateMode,
    pub zero_slow_on_fast: bool,
    pub td3: Td3Config,
}

impl ExperimentConfig {
    /// Defaults for an environment/algorithm pair.
    pub fn defaults(env: EnvId, algo: AlgoId) -> Self {
        let out_dir = std::env::var_os(OUT_DIR_VAR).map_or_else(|| PathBuf::from("runs"), PathBuf::from);
        let parallel = std::thread::available_parallelism().map_or(1, |n| n.get());
        let base = ExperimentConfig {
            env,
            algo,
            seeds: (0..10).collect(),
            tau: 6,
            p: 1.0,
            j: 1.0,
            decision_limit: None,
            max_steps: 30_000,
            eval_frequency: 250,
            eval_episodes: 10,
            warmup: 1_000,
            out_dir,
            parallel,
            gate_penalty: GatePenalty::Energy,
            gate_mode: GateMode::Learned,
            zero_slow_on_fast: false,
            td3: Td3Config::default(),
        };
        match env {
            EnvId::Straight | EnvId::Slalom | EnvId::Combined => ExperimentConfig {
                seeds: (0..20).collect(),
                tau: 4,
                j: 0.0,
                max_steps: if env == EnvId::Combined { 5_000 } else { 2_000 },
                eval_frequency: 1,
                eval_episodes: 1,
                warmup: 0,
                ..base
            },
            EnvId::Pendulum => base,
            EnvId::MountainCar => ExperimentConfig {
                tau: 11,
                max_steps: 100_000,
                eval_frequency: 2_500,
                warmup: 10_000,
                ..base
            },
        }
    }

    /// Resolves a config from TOML text layered over the defaults of its
    /// `env`/`algo`, then applies `overrides` (a TOML table, e.g. from CLI
    /// flags) on top.
    pub fn resolve(file: Option<&str>, overrides: toml::Table) -> Result<Self> {
        let mut layered = match file {
            Some(text) => text.parse::<toml::Table>().map_err(|e| Error::Parse(e.to_string()))?,
            None => toml::Table::new(),
        };
        merge(&mut layered, overrides);
        let pick = |key: &str| -> Result<String> {
            layered
                .get(key)
                .and_then(|v| v.as_str())
                .map(str::to_string)
                .ok_or_else(|| Error::config(format!("'{key}' must be given")))
        };
        let env: EnvId = pick("env")?.parse()?;
        let algo: AlgoId = pick("algo")?.parse()?;
        let mut table = toml::Table::try_from(Self::defaults(env, algo)).map_err(|e| Error::Parse(e.to_string()))?;
        merge(&mut table, layered);
        let cfg: ExperimentConfig = table.try_into().map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: toml::Table) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::resolve(Some(&text), overrides)
    }

    pub fn validate(&self) -> Result<()> {
        if self.env.is_grid() != self.algo.is_tabular() {
            return Err(Error::config(format!(
                "algorithm {} cannot run on environment {}",
                self.algo, self.env
            )));
        }
        if self.algo.uses_tau() && self.tau < 2 {
            return Err(Error::config(format!("tau must be >= 2 for {}, got {}", self.algo, self.tau)));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("at least one seed is required"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::config("seeds must be distinct"));
        }
        if self.max_steps == 0 || self.eval_frequency == 0 || self.eval_episodes == 0 || self.parallel == 0 {
            return Err(Error::config("max_steps, eval_frequency, eval_episodes and parallel must be >= 1"));
        }
        if self.decision_limit == Some(0) {
            return Err(Error::config("decision limit must be >= 1"));
        }
        if !(self.p >= 0.0 && self.j >= 0.0) {
            return Err(Error::config("p and j must be >= 0"));
        }
        self.td3.validate()
    }

    /// Hex digest of every setting that influences a single seed's results.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.seeds.clear();
        canonical.out_dir = PathBuf::new();
        canonical.parallel = 1;
        let text = toml::to_string(&canonical).expect("config serializes");
        hex::encode(&Sha256::digest(text.as_bytes())[..8])
    }

    pub fn run_dir(&self) -> PathBuf {
        self.out_dir.join(format!("{}-{}-{}", self.env, self.algo, self.hash()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

fn merge(base: &mut toml::Table, top: toml::Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
