//! Desk-scale episodic environments with a uniform discrete-action interface.
//!
//! Every environment is a pure transition model: [`Environment::reset`] and
//! [`Environment::step`] never mutate the environment itself, so the same
//! instance can be shared by rollouts, evaluation and tests. Episode step
//! limits are enforced by [`rollout`].

mod acrobot;
mod cart_pole;
mod frozen_lake;
mod taxi;

pub use acrobot::Acrobot;
pub use cart_pole::CartPole;
pub use frozen_lake::{Cell, FrozenLake, FrozenLakeAction, TransitionOutcome, DEFAULT_MAP_4X4, DEFAULT_MAP_8X8};
pub use taxi::{taxi_decode, taxi_encode, Taxi, TaxiAction, TaxiState, IN_TAXI, TAXI_LOCATIONS, TAXI_STATE_COUNT};

use std::borrow::Cow;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::Input;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvId {
    #[serde(alias = "frozen_lake")]
    FrozenLake,
    Taxi,
    #[serde(alias = "cart_pole")]
    CartPole,
    Acrobot,
}

impl EnvId {
    pub fn name(self) -> &'static str {
        match self {
            EnvId::FrozenLake => "frozenlake",
            EnvId::Taxi => "taxi",
            EnvId::CartPole => "cartpole",
            EnvId::Acrobot => "acrobot",
        }
    }

    pub fn default_max_episode_steps(self) -> usize {
        match self {
            EnvId::FrozenLake => 100,
            EnvId::Taxi => 200,
            EnvId::CartPole | EnvId::Acrobot => 500,
        }
    }
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for EnvId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "frozenlake" | "frozenlakev1" => Ok(EnvId::FrozenLake),
            "taxi" | "taxiv3" => Ok(EnvId::Taxi),
            "cartpole" | "cartpolev1" => Ok(EnvId::CartPole),
            "acrobot" | "acrobotv1" => Ok(EnvId::Acrobot),
            other => Err(Error::config(format!("unknown environment '{other}'"))),
        }
    }
}

/// Environment-specific knobs. Fields that do not apply to the chosen
/// environment are ignored.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvParams {
    /// FrozenLake: slippery ice (intended move with probability 1/3).
    #[serde(default)]
    pub slippery: bool,
    /// FrozenLake: newline-delimited character grid (S, F, H, G).
    #[serde(default)]
    pub map: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub env_id: EnvId,
    pub max_episode_steps: usize,
    #[serde(default)]
    pub params: EnvParams,
}

impl EnvSpec {
    pub fn new(env_id: EnvId) -> Self {
        Self { env_id, max_episode_steps: env_id.default_max_episode_steps(), params: EnvParams::default() }
    }

    pub fn frozen_lake(slippery: bool) -> Self {
        let mut spec = Self::new(EnvId::FrozenLake);
        spec.params.slippery = slippery;
        spec
    }

    pub fn build(&self) -> Result<Environment> {
        Environment::new(self)
    }
}

/// An environment state.
///
/// Tabular states keep only their index; the one-hot feature vector is
/// materialized on demand so that large replay buffers stay compact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum State {
    Discrete { index: usize, size: usize },
    Continuous(Vec<f64>),
}

impl State {
    pub fn discrete(index: usize, size: usize) -> Self {
        debug_assert!(index < size);
        State::Discrete { index, size }
    }

    pub fn discrete_index(&self) -> Option<usize> {
        match self {
            State::Discrete { index, .. } => Some(*index),
            State::Continuous(_) => None,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            State::Discrete { size, .. } => *size,
            State::Continuous(v) => v.len(),
        }
    }

    /// Raw feature vector: one-hot for tabular states, physical quantities
    /// otherwise.
    pub fn features(&self) -> Cow<'_, [f64]> {
        match self {
            State::Discrete { index, size } => {
                let mut v = vec![0.0; *size];
                v[*index] = 1.0;
                Cow::Owned(v)
            }
            State::Continuous(v) => Cow::Borrowed(v),
        }
    }

    pub fn continuous(&self) -> Option<&[f64]> {
        match self {
            State::Continuous(v) => Some(v),
            State::Discrete { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: State,
    pub action: usize,
    pub reward: f64,
    pub next_state: State,
    pub terminated: bool,
    pub truncated: bool,
}

impl Transition {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TerminalOutcome {
    Success,
    Failure,
    Timeout,
}

impl fmt::Display for TerminalOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TerminalOutcome::Success => "success",
            TerminalOutcome::Failure => "failure",
            TerminalOutcome::Timeout => "timeout",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TrajId(pub u64);

impl fmt::Display for TrajId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One complete episode plus its metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub traj_id: TrajId,
    pub env_id: EnvId,
    pub transitions: Vec<Transition>,
    pub episode_return: f64,
    pub terminal_outcome: TerminalOutcome,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// States `s_0 .. s_T`, i.e. every transition's state followed by the
    /// final landing state.
    pub fn states(&self) -> impl Iterator<Item = &State> {
        self.transitions
            .iter()
            .map(|t| &t.state)
            .chain(self.transitions.last().map(|t| &t.next_state))
    }
}

/// A validated, ready-to-run environment.
#[derive(Debug, Clone)]
pub enum Environment {
    FrozenLake(FrozenLake),
    Taxi(Taxi),
    CartPole(CartPole),
    Acrobot(Acrobot),
}

impl Environment {
    pub fn new(spec: &EnvSpec) -> Result<Self> {
        if spec.max_episode_steps == 0 {
            return Err(Error::config("max_episode_steps must be at least 1"));
        }
        Ok(match spec.env_id {
            EnvId::FrozenLake => {
                let map = spec.params.map.as_deref().unwrap_or(DEFAULT_MAP_4X4);
                Environment::FrozenLake(FrozenLake::from_map(map, spec.params.slippery)?)
            }
            EnvId::Taxi => Environment::Taxi(Taxi::new()),
            EnvId::CartPole => Environment::CartPole(CartPole::default()),
            EnvId::Acrobot => Environment::Acrobot(Acrobot::default()),
        })
    }

    pub fn env_id(&self) -> EnvId {
        match self {
            Environment::FrozenLake(_) => EnvId::FrozenLake,
            Environment::Taxi(_) => EnvId::Taxi,
            Environment::CartPole(_) => EnvId::CartPole,
            Environment::Acrobot(_) => EnvId::Acrobot,
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            Environment::FrozenLake(e) => e.state_count(),
            Environment::Taxi(_) => TAXI_STATE_COUNT,
            Environment::CartPole(_) | Environment::Acrobot(_) => 4,
        }
    }

    pub fn action_count(&self) -> usize {
        match self {
            Environment::FrozenLake(_) => 4,
            Environment::Taxi(_) => 6,
            Environment::CartPole(_) => 2,
            Environment::Acrobot(_) => 3,
        }
    }

    pub fn is_tabular(&self) -> bool {
        matches!(self, Environment::FrozenLake(_) | Environment::Taxi(_))
    }

    /// Initial state, deterministic in `seed`.
    pub fn reset(&self, seed: u64) -> State {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.reset_with(&mut rng)
    }

    pub fn reset_with<R: Rng + ?Sized>(&self, rng: &mut R) -> State {
        match self {
            Environment::FrozenLake(e) => State::discrete(e.start(), e.state_count()),
            Environment::Taxi(e) => State::discrete(e.sample_initial(rng), TAXI_STATE_COUNT),
            Environment::CartPole(e) => State::Continuous(e.sample_initial(rng).to_vec()),
            Environment::Acrobot(e) => State::Continuous(e.sample_initial(rng).to_vec()),
        }
    }

    /// Advance one step. `truncated` is always false here; step limits are
    /// applied by [`rollout`].
    pub fn step<R: Rng + ?Sized>(&self, state: &State, action: usize, rng: &mut R) -> Result<Transition> {
        if action >= self.action_count() {
            return Err(Error::contract(format!(
                "action {action} out of range for {} ({} actions)",
                self.env_id(),
                self.action_count()
            )));
        }
        let (next_state, reward, terminated) = match self {
            Environment::FrozenLake(e) => {
                let s = self.expect_discrete(state, e.state_count())?;
                let (next, reward, terminated) = e.sample_step(s, action, rng);
                (State::discrete(next, e.state_count()), reward, terminated)
            }
            Environment::Taxi(e) => {
                let s = self.expect_discrete(state, TAXI_STATE_COUNT)?;
                let (next, reward, terminated) = e.step_index(s, action);
                (State::discrete(next, TAXI_STATE_COUNT), reward, terminated)
            }
            Environment::CartPole(e) => {
                let s = self.expect_continuous(state)?;
                let (next, reward, terminated) = e.step_state(s, action);
                (State::Continuous(next.to_vec()), reward, terminated)
            }
            Environment::Acrobot(e) => {
                let s = self.expect_continuous(state)?;
                let (next, reward, terminated) = e.step_state(s, action);
                (State::Continuous(next.to_vec()), reward, terminated)
            }
        };
        Ok(Transition { state: state.clone(), action, reward, next_state, terminated, truncated: false })
    }

    fn expect_discrete(&self, state: &State, size: usize) -> Result<usize> {
        match state {
            State::Discrete { index, size: s } if *s == size && *index < size => Ok(*index),
            _ => Err(Error::contract(format!("invalid state for {}: {state:?}", self.env_id()))),
        }
    }

    fn expect_continuous(&self, state: &State) -> Result<[f64; 4]> {
        match state {
            State::Continuous(v) if v.len() == 4 && v.iter().all(|x| x.is_finite()) => Ok([v[0], v[1], v[2], v[3]]),
            _ => Err(Error::contract(format!("invalid state for {}: {state:?}", self.env_id()))),
        }
    }

    /// Classify how an episode ended. Reaching the environment's own step
    /// limit counts as success for survival tasks (CartPole).
    pub fn classify(&self, last: &Transition, hit_episode_limit: bool) -> TerminalOutcome {
        match self {
            Environment::FrozenLake(_) | Environment::Taxi(_) | Environment::Acrobot(_) => {
                if last.terminated {
                    if matches!(self, Environment::FrozenLake(_)) && last.reward <= 0.0 {
                        TerminalOutcome::Failure
                    } else {
                        TerminalOutcome::Success
                    }
                } else {
                    TerminalOutcome::Timeout
                }
            }
            Environment::CartPole(_) => {
                if last.terminated {
                    TerminalOutcome::Failure
                } else if hit_episode_limit {
                    TerminalOutcome::Success
                } else {
                    TerminalOutcome::Timeout
                }
            }
        }
    }

    /// Network input encoding: one-hot for tabular states, continuous
    /// features min-max scaled into [-1, 1] using documented bounds.
    pub fn encoder(&self) -> StateEncoder {
        match self {
            Environment::FrozenLake(_) | Environment::Taxi(_) => StateEncoder::OneHot { dim: self.state_dim() },
            Environment::CartPole(_) => StateEncoder::Scaled { bounds: cart_pole::FEATURE_BOUNDS.to_vec() },
            Environment::Acrobot(_) => StateEncoder::Scaled { bounds: acrobot::FEATURE_BOUNDS.to_vec() },
        }
    }
}

/// Maps states to network inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StateEncoder {
    OneHot { dim: usize },
    Scaled { bounds: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum EncodedState {
    OneHot { index: usize, dim: usize },
    Dense(Vec<f64>),
}

impl EncodedState {
    pub fn as_input(&self) -> Input<'_> {
        match self {
            EncodedState::OneHot { index, dim } => Input::OneHot { index: *index, dim: *dim },
            EncodedState::Dense(v) => Input::Dense(v),
        }
    }

    /// Add this encoding, times `scale`, into `acc`.
    pub fn add_to(&self, acc: &mut [f64], scale: f64) {
        match self {
            EncodedState::OneHot { index, .. } => acc[*index] += scale,
            EncodedState::Dense(v) => acc.iter_mut().zip(v).for_each(|(a, x)| *a += scale * x),
        }
    }
}

impl StateEncoder {
    pub fn dim(&self) -> usize {
        match self {
            StateEncoder::OneHot { dim } => *dim,
            StateEncoder::Scaled { bounds } => bounds.len(),
        }
    }

    pub fn encode(&self, state: &State) -> EncodedState {
        match (self, state) {
            (StateEncoder::OneHot { dim }, State::Discrete { index, .. }) => EncodedState::OneHot { index: *index, dim: *dim },
            (StateEncoder::Scaled { bounds }, State::Continuous(v)) => EncodedState::Dense(scale(v, bounds)),
            (_, s) => EncodedState::Dense(s.features().into_owned()),
        }
    }

    pub fn encode_dense(&self, state: &State) -> Vec<f64> {
        match self.encode(state) {
            EncodedState::Dense(v) => v,
            EncodedState::OneHot { index, dim } => {
                let mut v = vec![0.0; dim];
                v[index] = 1.0;
                v
            }
        }
    }
}

fn scale(values: &[f64], bounds: &[(f64, f64)]) -> Vec<f64> {
    values
        .iter()
        .zip(bounds)
        .map(|(&x, &(lo, hi))| (2.0 * (x - lo) / (hi - lo) - 1.0).clamp(-1.0, 1.0))
        .collect()
}

/// Run one episode with `policy`, stopping at termination, the
/// environment's episode limit, or `max_steps`, whichever comes first.
pub fn rollout<P, R>(
    env: &Environment,
    spec: &EnvSpec,
    traj_id: TrajId,
    mut policy: P,
    max_steps: usize,
    initial: State,
    rng: &mut R,
) -> Result<Trajectory>
where
    P: FnMut(&State) -> usize,
    R: Rng + ?Sized,
{
    if max_steps == 0 {
        return Err(Error::contract("rollout needs max_steps >= 1"));
    }
    let cap = max_steps.min(spec.max_episode_steps);
    let mut transitions = Vec::new();
    let mut state = initial;
    let mut episode_return = 0.0;
    loop {
        let action = policy(&state);
        let mut t = env.step(&state, action, rng)?;
        episode_return += t.reward;
        let at_cap = transitions.len() + 1 >= cap;
        // Termination wins over truncation on the final step.
        t.truncated = at_cap && !t.terminated;
        let done = t.done();
        state = t.next_state.clone();
        transitions.push(t);
        if done {
            break;
        }
    }
    let last = transitions.last().expect("at least one step");
    let hit_limit = transitions.len() >= spec.max_episode_steps;
    let terminal_outcome = env.classify(last, hit_limit);
    Ok(Trajectory { traj_id, env_id: env.env_id(), transitions, episode_return, terminal_outcome })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_hot_features_sum_to_one() {
        let s = State::discrete(3, 16);
        let f = s.features();
        assert_eq!(f.iter().sum::<f64>(), 1.0);
        assert_eq!(f[3], 1.0);
    }

    #[test]
    fn out_of_range_action_is_contract_violation() {
        let env = EnvSpec::frozen_lake(false).build().unwrap();
        let s = env.reset(0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(env.step(&s, 4, &mut rng), Err(Error::Contract(_))));
    }

    #[test]
    fn max_steps_one_truncates() {
        let spec = EnvSpec::new(EnvId::CartPole);
        let env = spec.build().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s0 = env.reset(1);
        let traj = rollout(&env, &spec, TrajId(0), |_| 0, 1, s0, &mut rng).unwrap();
        assert_eq!(traj.len(), 1);
        assert!(traj.transitions[0].truncated);
        assert_eq!(traj.terminal_outcome, TerminalOutcome::Timeout);
    }

    #[test]
    fn env_id_parses_gym_names() {
        assert_eq!("FrozenLake-v1".parse::<EnvId>().unwrap(), EnvId::FrozenLake);
        assert_eq!("Taxi-v3".parse::<EnvId>().unwrap(), EnvId::Taxi);
        assert!("Pong".parse::<EnvId>().is_err());
    }

    #[test]
    fn zero_episode_limit_rejected() {
        let mut spec = EnvSpec::new(EnvId::Taxi);
        spec.max_episode_steps = 0;
        assert!(matches!(spec.build(), Err(Error::Config(_))));
    }
}
