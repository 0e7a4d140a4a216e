use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agent::{DqnConfig, EpsilonSchedule, ValueHead};
use crate::envs::{EnvId, EnvSpec};
use crate::error::{Error, Result};
use crate::grounding::GroundingConfig;
use crate::induction::{InductionConfig, DEFAULT_EMBED_DIM};
use crate::llm_client::ProposerConfig;
use crate::replay::{PerConfig, DEFAULT_CAPACITY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    #[default]
    Dqn,
    C51,
    #[serde(alias = "qr_dqn", alias = "qr-dqn")]
    Qrdqn,
}

impl AgentKind {
    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Dqn => "dqn",
            AgentKind::C51 => "c51",
            AgentKind::Qrdqn => "qrdqn",
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "dqn" => Ok(AgentKind::Dqn),
            "c51" => Ok(AgentKind::C51),
            "qrdqn" => Ok(AgentKind::Qrdqn),
            other => Err(Error::config(format!("unknown agent kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    #[default]
    Uer,
    Per,
    Cer,
    #[serde(alias = "n_step", alias = "n-step")]
    Nstep,
    Nser,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [Strategy::Uer, Strategy::Per, Strategy::Cer, Strategy::Nstep, Strategy::Nser];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Uer => "uer",
            Strategy::Per => "per",
            Strategy::Cer => "cer",
            Strategy::Nstep => "nstep",
            Strategy::Nser => "nser",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "uer" | "uniform" => Ok(Strategy::Uer),
            "per" => Ok(Strategy::Per),
            "cer" => Ok(Strategy::Cer),
            "nstep" => Ok(Strategy::Nstep),
            "nser" => Ok(Strategy::Nser),
            other => Err(Error::config(format!("unknown replay strategy '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentSettings {
    pub hidden_dim: usize,
    pub gamma: f64,
    pub lr: f64,
    pub target_sync_interval: u64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of the step budget over which epsilon decays. Ignored when
    /// `epsilon_decay_steps` is set.
    pub epsilon_fraction: f64,
    pub epsilon_decay_steps: Option<u64>,
    pub atoms: usize,
    pub v_min: f64,
    pub v_max: f64,
    pub quantiles: usize,
    pub kappa: f64,
}

impl Default for AgentSettings {
    fn default() -> Self {
        let d = DqnConfig::default();
        Self {
            hidden_dim: d.hidden_dim,
            gamma: d.gamma,
            lr: d.lr,
            target_sync_interval: d.target_sync_interval,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_fraction: 0.1,
            epsilon_decay_steps: None,
            atoms: 51,
            v_min: -10.0,
            v_max: 10.0,
            quantiles: 51,
            kappa: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReplaySettings {
    pub capacity: usize,
    pub batch_size: usize,
    /// Environment steps collected before the first gradient update.
    pub learning_starts: u64,
    pub per: PerConfig,
    pub n_step: usize,
}

impl Default for ReplaySettings {
    fn default() -> Self {
        Self { capacity: DEFAULT_CAPACITY, batch_size: 64, learning_starts: 500, per: PerConfig::default(), n_step: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NserSettings {
    /// Number of relation prototypes.
    pub k: usize,
    /// Prototype alignment temperature.
    pub beta: f64,
    pub eta: f64,
    pub p: f64,
    /// Proposals per trajectory.
    pub m: usize,
    pub n_sample: usize,
    /// Episodes between induction rounds.
    pub t_induction: u64,
    /// Episodes between launching a round and adopting its result.
    pub adoption_lag: u64,
    /// Trajectories drawn per update before decomposition.
    pub trajectories_per_update: usize,
    pub prototype_steps: usize,
    pub prototype_lr: f64,
    pub embed_dim: usize,
    /// Proposal sets kept for later prototype updates.
    pub retained_sets: usize,
    pub grounding: GroundingConfig,
    pub proposer: ProposerConfig,
}

impl Default for NserSettings {
    fn default() -> Self {
        Self {
            k: 8,
            beta: 1.0,
            eta: 0.5,
            p: 1.0,
            m: 3,
            n_sample: 16,
            t_induction: 50,
            adoption_lag: 1,
            trajectories_per_update: 16,
            prototype_steps: 50,
            prototype_lr: 1e-3,
            embed_dim: DEFAULT_EMBED_DIM,
            retained_sets: 256,
            grounding: GroundingConfig::default(),
            proposer: ProposerConfig::default(),
        }
    }
}

impl NserSettings {
    pub fn induction(&self) -> InductionConfig {
        InductionConfig {
            n_sample: self.n_sample,
            proposals_per_trajectory: self.m,
            prototype_steps: self.prototype_steps,
            embed_dim: self.embed_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.m == 0 || self.n_sample == 0 || self.t_induction == 0 || self.trajectories_per_update == 0 {
            return Err(Error::config("nser: k, m, n_sample, t_induction and trajectories_per_update must be positive"));
        }
        if self.adoption_lag >= self.t_induction {
            return Err(Error::config("nser: adoption_lag must be smaller than t_induction"));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) || !(self.p >= 1.0) || !(self.beta > 0.0) {
            return Err(Error::config("nser: need eta >= 0, p >= 1 and beta > 0"));
        }
        if self.embed_dim == 0 || !(self.prototype_lr > 0.0) || !(self.grounding.lr > 0.0) || self.grounding.hidden_dim == 0 {
            return Err(Error::config("nser: embed_dim, learning rates and predicate width must be positive"));
        }
        self.proposer.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricSettings {
    /// Return threshold; the environment default when absent.
    pub tau: Option<f64>,
    pub window: usize,
    /// Episodes between greedy evaluations; none when absent.
    pub eval_interval: Option<u64>,
    pub eval_episodes: usize,
    /// Stability band for N_conv; 5% of the final value (floor 0.01) when absent.
    pub n_conv_delta: Option<f64>,
}

impl Default for MetricSettings {
    fn default() -> Self {
        Self { tau: None, window: 100, eval_interval: None, eval_episodes: 100, n_conv_delta: None }
    }
}

pub fn default_tau(env: EnvId) -> f64 {
    match env {
        EnvId::FrozenLake => 0.05,
        EnvId::CartPole => 475.0,
        EnvId::Taxi => -200.0,
        EnvId::Acrobot => -150.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Budget {
    Episodes(u64),
    EnvSteps(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvSpec,
    #[serde(default)]
    pub agent_kind: AgentKind,
    #[serde(default)]
    pub strategy: Strategy,
    #[serde(default)]
    pub total_episodes: Option<u64>,
    #[serde(default)]
    pub total_env_steps: Option<u64>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Gradient updates after each episode; the episode length when absent.
    #[serde(default)]
    pub updates_per_episode: Option<usize>,
    #[serde(default)]
    pub agent: AgentSettings,
    #[serde(default)]
    pub replay: ReplaySettings,
    #[serde(default)]
    pub nser: Option<NserSettings>,
    #[serde(default)]
    pub metrics: MetricSettings,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

impl ExperimentConfig {
    pub fn new(env: EnvSpec, strategy: Strategy, budget: Budget) -> Self {
        let (total_episodes, total_env_steps) = match budget {
            Budget::Episodes(n) => (Some(n), None),
            Budget::EnvSteps(n) => (None, Some(n)),
        };
        Self {
            env,
            agent_kind: AgentKind::Dqn,
            strategy,
            total_episodes,
            total_env_steps,
            seeds: default_seeds(),
            updates_per_episode: None,
            agent: AgentSettings::default(),
            replay: ReplaySettings::default(),
            nser: None,
            metrics: MetricSettings::default(),
            output_dir: default_output_dir(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn budget(&self) -> Result<Budget> {
        match (self.total_episodes, self.total_env_steps) {
            (Some(n), None) => Ok(Budget::Episodes(n)),
            (None, Some(n)) => Ok(Budget::EnvSteps(n)),
            _ => Err(Error::config("exactly one of total_episodes and total_env_steps must be set")),
        }
    }

    pub fn tau(&self) -> f64 {
        self.metrics.tau.unwrap_or_else(|| default_tau(self.env.env_id))
    }

    /// NSER settings, defaulted when the block is absent.
    pub fn nser_settings(&self) -> NserSettings {
        self.nser.clone().unwrap_or_default()
    }

    /// Step horizon used to scale the epsilon schedule.
    pub fn nominal_steps(&self) -> u64 {
        match self.budget() {
            Ok(Budget::EnvSteps(n)) => n,
            Ok(Budget::Episodes(n)) => n.saturating_mul(self.env.max_episode_steps as u64),
            Err(_) => 0,
        }
    }

    pub fn dqn_config(&self) -> DqnConfig {
        let a = &self.agent;
        let decay_steps = a
            .epsilon_decay_steps
            .unwrap_or_else(|| ((self.nominal_steps() as f64 * a.epsilon_fraction).round() as u64).max(1));
        let head = match self.agent_kind {
            AgentKind::Dqn => ValueHead::Scalar,
            AgentKind::C51 => ValueHead::Categorical { atoms: a.atoms, v_min: a.v_min, v_max: a.v_max },
            AgentKind::Qrdqn => ValueHead::Quantile { quantiles: a.quantiles, kappa: a.kappa },
        };
        DqnConfig {
            hidden_dim: a.hidden_dim,
            gamma: a.gamma,
            lr: a.lr,
            target_sync_interval: a.target_sync_interval,
            epsilon: EpsilonSchedule { start: a.epsilon_start, end: a.epsilon_end, decay_steps },
            head,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.budget()?;
        if self.seeds.is_empty() {
            return Err(Error::config("seeds must be nonempty"));
        }
        if self.env.max_episode_steps == 0 {
            return Err(Error::config("max_episode_steps must be positive"));
        }
        self.env.build()?;
        if self.updates_per_episode == Some(0) {
            return Err(Error::config("updates_per_episode must be positive"));
        }
        if !(0.0..=1.0).contains(&self.agent.epsilon_fraction) {
            return Err(Error::config("epsilon_fraction must lie in [0, 1]"));
        }
        self.dqn_config().validate()?;
        let r = &self.replay;
        if r.capacity == 0 || r.batch_size == 0 || r.n_step == 0 {
            return Err(Error::config("replay capacity, batch_size and n_step must be positive"));
        }
        if r.per.alpha < 0.0 || !(r.per.epsilon > 0.0) || !(0.0..=1.0).contains(&r.per.beta_start) || !(0.0..=1.0).contains(&r.per.beta_end)
        {
            return Err(Error::config("invalid PER settings"));
        }
        let m = &self.metrics;
        if m.window == 0 || m.eval_episodes == 0 || m.eval_interval == Some(0) {
            return Err(Error::config("metric window, eval_episodes and eval_interval must be positive"));
        }
        if m.n_conv_delta.is_some_and(|d| !(d >= 0.0)) {
            return Err(Error::config("n_conv_delta must be nonnegative"));
        }
        if self.strategy == Strategy::Nser {
            self.nser_settings().validate()?;
        }
        Ok(())
    }
}
