//! Value-based learner: DQN with optional categorical (C51) and quantile
//! (QR-DQN) heads, epsilon-greedy exploration and a periodically synced
//! target network.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{State, StateEncoder, Transition};
use crate::error::{Error, Result};
use crate::neural::checkpoint::{load_mlp, save_mlp};
use crate::neural::{argmax, softmax, Activations, AdamConfig, AdamState, Gradients, Mlp};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_steps: u64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self { start: 1.0, end: 0.05, decay_steps: 10_000 }
    }
}

impl EpsilonSchedule {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |x: f64| (0.0..=1.0).contains(&x);
        if !in_unit(self.start) || !in_unit(self.end) || self.start < self.end || self.decay_steps == 0 {
            return Err(Error::config(format!("invalid epsilon schedule {self:?}")));
        }
        Ok(())
    }

    /// Linear interpolation from `start` to `end` over `decay_steps`, then
    /// constant.
    pub fn value(&self, steps_done: u64) -> f64 {
        if steps_done >= self.decay_steps {
            return self.end;
        }
        let frac = steps_done as f64 / self.decay_steps as f64;
        self.start + (self.end - self.start) * frac
    }
}

/// Output parameterization of the Q-network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ValueHead {
    /// One scalar Q-value per action, squared TD loss.
    Scalar,
    /// Categorical return distribution on a fixed support.
    Categorical { atoms: usize, v_min: f64, v_max: f64 },
    /// Quantile regression with the quantile Huber loss.
    Quantile { quantiles: usize, kappa: f64 },
}

impl ValueHead {
    fn outputs_per_action(&self) -> usize {
        match self {
            ValueHead::Scalar => 1,
            ValueHead::Categorical { atoms, .. } => *atoms,
            ValueHead::Quantile { quantiles, .. } => *quantiles,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            ValueHead::Scalar => Ok(()),
            ValueHead::Categorical { atoms, v_min, v_max } => {
                if atoms == 0 || !(v_min <= v_max) || (atoms > 1 && v_min == v_max) {
                    Err(Error::config(format!("invalid categorical head {self:?}")))
                } else {
                    Ok(())
                }
            }
            ValueHead::Quantile { quantiles, kappa } => {
                if quantiles == 0 || !(kappa > 0.0) {
                    Err(Error::config(format!("invalid quantile head {self:?}")))
                } else {
                    Ok(())
                }
            }
        }
    }

    fn support(&self) -> Vec<f64> {
        match *self {
            ValueHead::Categorical { atoms, v_min, v_max } => {
                if atoms == 1 {
                    return vec![v_min];
                }
                let dz = (v_max - v_min) / (atoms - 1) as f64;
                (0..atoms).map(|i| v_min + dz * i as f64).collect()
            }
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DqnConfig {
    pub hidden_dim: usize,
    pub gamma: f64,
    pub lr: f64,
    pub target_sync_interval: u64,
    pub epsilon: EpsilonSchedule,
    pub head: ValueHead,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 64,
            gamma: 0.99,
            lr: 1e-3,
            target_sync_interval: 1000,
            epsilon: EpsilonSchedule::default(),
            head: ValueHead::Scalar,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config(format!("gamma must lie in [0, 1), got {}", self.gamma)));
        }
        if self.hidden_dim == 0 || self.target_sync_interval == 0 || !(self.lr > 0.0) {
            return Err(Error::config("hidden_dim, target_sync_interval and lr must be positive"));
        }
        self.epsilon.validate()?;
        self.head.validate()
    }
}

/// One TD learning sample. One-step transitions use `discount = gamma`;
/// n-step samples carry the aggregated reward and `gamma^m`.
#[derive(Debug, Clone, Copy)]
pub struct TdSample<'a> {
    pub state: &'a State,
    pub action: usize,
    pub reward: f64,
    pub next_state: &'a State,
    pub discount: f64,
    pub terminal: bool,
}

impl<'a> TdSample<'a> {
    pub fn from_transition(t: &'a Transition, gamma: f64) -> Self {
        Self {
            state: &t.state,
            action: t.action,
            reward: t.reward,
            next_state: &t.next_state,
            discount: gamma,
            terminal: t.terminated,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateOutcome {
    /// Loss before the optimizer step.
    pub loss: f64,
    /// Per-sample TD error `y - Q(s, a)` (expected-value form for
    /// distributional heads).
    pub td_errors: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DqnAgent {
    online: Mlp,
    target: Mlp,
    adam: AdamState,
    config: DqnConfig,
    encoder: StateEncoder,
    action_count: usize,
    steps_done: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct AgentMetadata {
    config: DqnConfig,
    encoder: StateEncoder,
    action_count: usize,
    steps_done: u64,
    epsilon: f64,
    adam: AdamState,
}

impl DqnAgent {
    pub fn new<R: Rng + ?Sized>(encoder: StateEncoder, action_count: usize, config: DqnConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        if action_count < 2 {
            return Err(Error::config("agents need at least two actions"));
        }
        let outputs = action_count * config.head.outputs_per_action();
        let online = Mlp::new(encoder.dim(), config.hidden_dim, outputs, rng);
        let target = online.clone();
        let adam = AdamState::new(online.num_params(), AdamConfig::with_lr(config.lr));
        Ok(Self { online, target, adam, config, encoder, action_count, steps_done: 0 })
    }

    /// Build from an explicit network (tests and checkpoints).
    pub fn from_network(encoder: StateEncoder, action_count: usize, config: DqnConfig, online: Mlp) -> Result<Self> {
        config.validate()?;
        if online.input_dim() != encoder.dim() || online.output_dim() != action_count * config.head.outputs_per_action() {
            return Err(Error::contract("network shape does not match encoder and action count"));
        }
        let adam = AdamState::new(online.num_params(), AdamConfig::with_lr(config.lr));
        Ok(Self { target: online.clone(), online, adam, config, encoder, action_count, steps_done: 0 })
    }

    pub fn config(&self) -> &DqnConfig {
        &self.config
    }
    pub fn online(&self) -> &Mlp {
        &self.online
    }
    pub fn target(&self) -> &Mlp {
        &self.target
    }
    pub fn steps_done(&self) -> u64 {
        self.steps_done
    }
    pub fn set_steps_done(&mut self, steps: u64) {
        self.steps_done = steps;
    }
    pub fn action_count(&self) -> usize {
        self.action_count
    }
    pub fn gamma(&self) -> f64 {
        self.config.gamma
    }
    pub fn encoder(&self) -> &StateEncoder {
        &self.encoder
    }

    pub fn epsilon(&self) -> f64 {
        self.config.epsilon.value(self.steps_done)
    }

    /// Count one environment step; syncs the target network whenever the
    /// step count hits a multiple of the sync interval. Returns whether a
    /// sync happened.
    pub fn record_env_step(&mut self) -> bool {
        self.steps_done += 1;
        if self.steps_done.is_multiple_of(self.config.target_sync_interval) {
            self.sync_target();
            true
        } else {
            false
        }
    }

    pub fn sync_target(&mut self) {
        self.target.copy_from(&self.online);
    }

    fn action_values(&self, act: &Activations) -> Vec<f64> {
        head_values(&self.config.head, &act.output, self.action_count)
    }

    pub fn q_values(&self, state: &State) -> Vec<f64> {
        self.values_with(&self.online, state)
    }

    pub fn target_q_values(&self, state: &State) -> Vec<f64> {
        self.values_with(&self.target, state)
    }

    fn values_with(&self, net: &Mlp, state: &State) -> Vec<f64> {
        let enc = self.encoder.encode(state);
        let mut act = Activations::default();
        net.forward_into(enc.as_input(), &mut act);
        self.action_values(&act)
    }

    pub fn greedy_action(&self, state: &State) -> usize {
        argmax(&self.q_values(state))
    }

    /// Epsilon-greedy action at the current step count.
    pub fn select_action<R: Rng + ?Sized>(&self, state: &State, rng: &mut R) -> usize {
        let eps = self.epsilon();
        if rng.random::<f64>() < eps {
            rng.random_range(0..self.action_count)
        } else {
            self.greedy_action(state)
        }
    }

    /// `y_i = r_i + gamma * (1 - terminated_i) * max_a Q_target(s'_i, a)`.
    pub fn td_targets(&self, batch: &[&Transition]) -> Vec<f64> {
        batch
            .iter()
            .map(|t| self.td_target(&TdSample::from_transition(t, self.config.gamma)))
            .collect()
    }

    pub fn td_target(&self, s: &TdSample) -> f64 {
        if s.terminal {
            return s.reward;
        }
        let q_next = self.target_q_values(s.next_state);
        s.reward + s.discount * q_next.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// One Adam step on the online network over one-step transitions.
    pub fn dqn_update(&mut self, batch: &[&Transition], weights: Option<&[f64]>) -> Result<UpdateOutcome> {
        let gamma = self.config.gamma;
        let samples: Vec<TdSample> = batch.iter().map(|t| TdSample::from_transition(t, gamma)).collect();
        self.update(&samples, weights)
    }

    /// One optimizer step on generic TD samples, dispatching on the head.
    pub fn update(&mut self, samples: &[TdSample], weights: Option<&[f64]>) -> Result<UpdateOutcome> {
        if samples.is_empty() {
            return Err(Error::contract("update needs a nonempty batch"));
        }
        if let Some(w) = weights {
            if w.len() != samples.len() {
                return Err(Error::contract("weights length must equal batch length"));
            }
            if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(Error::contract("weights must be finite and nonnegative"));
            }
        }
        for s in samples {
            if s.action >= self.action_count {
                return Err(Error::contract(format!("action {} out of range", s.action)));
            }
        }
        let (loss, td_errors, grads) = match self.config.head {
            ValueHead::Scalar => self.scalar_loss_and_grad(samples, weights),
            ValueHead::Categorical { .. } => self.categorical_loss_and_grad(samples, weights),
            ValueHead::Quantile { .. } => self.quantile_loss_and_grad(samples, weights),
        };
        if !loss.is_finite() {
            return Err(Error::Training(format!("non-finite loss {loss}")));
        }
        self.adam.step(self.online.params_mut(), &grads.params)?;
        Ok(UpdateOutcome { loss, td_errors })
    }

    /// Mean of `w_i * (Q(s_i, a_i) - y_i)^2`.
    fn scalar_loss_and_grad(&self, samples: &[TdSample], weights: Option<&[f64]>) -> (f64, Vec<f64>, Gradients) {
        let n = samples.len() as f64;
        let mut grads = Gradients { params: vec![0.0; self.online.num_params()], input: Vec::new() };
        let mut act = Activations::default();
        let mut upstream = vec![0.0; self.online.output_dim()];
        let mut loss = 0.0;
        let mut td_errors = Vec::with_capacity(samples.len());
        for (i, s) in samples.iter().enumerate() {
            let w = weights.map_or(1.0, |w| w[i]);
            let y = self.td_target(s);
            let enc = self.encoder.encode(s.state);
            self.online.forward_into(enc.as_input(), &mut act);
            let q = act.output[s.action];
            let err = q - y;
            td_errors.push(y - q);
            loss += w * err * err;
            upstream.iter_mut().for_each(|u| *u = 0.0);
            upstream[s.action] = 2.0 * w * err / n;
            self.online
                .backward_into(enc.as_input(), &act, &upstream, &mut grads)
                .expect("shapes validated");
        }
        (loss / n, td_errors, grads)
    }

    fn categorical_loss_and_grad(&self, samples: &[TdSample], weights: Option<&[f64]>) -> (f64, Vec<f64>, Gradients) {
        let atoms = self.config.head.outputs_per_action();
        let support = self.config.head.support();
        let n = samples.len() as f64;
        let mut grads = Gradients { params: vec![0.0; self.online.num_params()], input: Vec::new() };
        let mut act = Activations::default();
        let mut upstream = vec![0.0; self.online.output_dim()];
        let mut loss = 0.0;
        let mut td_errors = Vec::with_capacity(samples.len());
        for (i, s) in samples.iter().enumerate() {
            let w = weights.map_or(1.0, |w| w[i]);
            let target = self.categorical_target(s);
            let enc = self.encoder.encode(s.state);
            self.online.forward_into(enc.as_input(), &mut act);
            let logits = &act.output[s.action * atoms..(s.action + 1) * atoms];
            let p = softmax(logits);
            let q: f64 = p.iter().zip(&support).map(|(p, z)| p * z).sum();
            let y: f64 = target.iter().zip(&support).map(|(m, z)| m * z).sum();
            td_errors.push(y - q);
            loss += -w * target.iter().zip(&p).map(|(m, p)| m * p.max(1e-300).ln()).sum::<f64>();
            upstream.iter_mut().for_each(|u| *u = 0.0);
            for j in 0..atoms {
                upstream[s.action * atoms + j] = w * (p[j] - target[j]) / n;
            }
            self.online
                .backward_into(enc.as_input(), &act, &upstream, &mut grads)
                .expect("shapes validated");
        }
        (loss / n, td_errors, grads)
    }

    /// Projected target distribution on the fixed support.
    pub fn categorical_target(&self, s: &TdSample) -> Vec<f64> {
        let ValueHead::Categorical { atoms, v_min, v_max } = self.config.head else {
            panic!("categorical_target requires a categorical head");
        };
        let support = self.config.head.support();
        let next_probs: Vec<f64> = if s.terminal {
            Vec::new()
        } else {
            let enc = self.encoder.encode(s.next_state);
            let mut act = Activations::default();
            self.target.forward_into(enc.as_input(), &mut act);
            let values = head_values(&self.config.head, &act.output, self.action_count);
            let best = argmax(&values);
            softmax(&act.output[best * atoms..(best + 1) * atoms])
        };
        project_categorical(&support, v_min, v_max, s.reward, s.discount, s.terminal, &next_probs)
    }

    fn quantile_loss_and_grad(&self, samples: &[TdSample], weights: Option<&[f64]>) -> (f64, Vec<f64>, Gradients) {
        let ValueHead::Quantile { quantiles: nq, kappa } = self.config.head else { unreachable!() };
        let n = samples.len() as f64;
        let mut grads = Gradients { params: vec![0.0; self.online.num_params()], input: Vec::new() };
        let mut act = Activations::default();
        let mut upstream = vec![0.0; self.online.output_dim()];
        let mut loss = 0.0;
        let mut td_errors = Vec::with_capacity(samples.len());
        for (i, s) in samples.iter().enumerate() {
            let w = weights.map_or(1.0, |w| w[i]);
            let targets = self.quantile_targets(s);
            let enc = self.encoder.encode(s.state);
            self.online.forward_into(enc.as_input(), &mut act);
            let theta = &act.output[s.action * nq..(s.action + 1) * nq];
            let q = theta.iter().sum::<f64>() / nq as f64;
            let y = targets.iter().sum::<f64>() / nq as f64;
            td_errors.push(y - q);
            upstream.iter_mut().for_each(|u| *u = 0.0);
            for (qi, &th) in theta.iter().enumerate() {
                let tau_hat = (2 * qi + 1) as f64 / (2 * nq) as f64;
                let mut d_theta = 0.0;
                for &t in &targets {
                    let u = t - th;
                    let indicator = if u < 0.0 { 1.0 } else { 0.0 };
                    let scale = (tau_hat - indicator).abs();
                    let (huber, d_huber) = if u.abs() <= kappa {
                        (0.5 * u * u, u)
                    } else {
                        (kappa * (u.abs() - 0.5 * kappa), kappa * u.signum())
                    };
                    loss += w * scale * huber / kappa / nq as f64;
                    // d/dtheta of rho(t - theta) = -rho'(u).
                    d_theta -= scale * d_huber / kappa / nq as f64;
                }
                upstream[s.action * nq + qi] = w * d_theta / n;
            }
            self.online
                .backward_into(enc.as_input(), &act, &upstream, &mut grads)
                .expect("shapes validated");
        }
        (loss / n, td_errors, grads)
    }

    pub fn quantile_targets(&self, s: &TdSample) -> Vec<f64> {
        let nq = self.config.head.outputs_per_action();
        if s.terminal {
            return vec![s.reward; nq];
        }
        let enc = self.encoder.encode(s.next_state);
        let mut act = Activations::default();
        self.target.forward_into(enc.as_input(), &mut act);
        let values = head_values(&self.config.head, &act.output, self.action_count);
        let best = argmax(&values);
        act.output[best * nq..(best + 1) * nq].iter().map(|th| s.reward + s.discount * th).collect()
    }

    /// Persist networks plus a JSON metadata record into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        save_mlp(&self.online, &dir.join("online.bin"))?;
        save_mlp(&self.target, &dir.join("target.bin"))?;
        let meta = AgentMetadata {
            config: self.config.clone(),
            encoder: self.encoder.clone(),
            action_count: self.action_count,
            steps_done: self.steps_done,
            epsilon: self.epsilon(),
            adam: self.adam.clone(),
        };
        std::fs::write(dir.join("agent.json"), serde_json::to_string_pretty(&meta)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta: AgentMetadata = serde_json::from_str(&std::fs::read_to_string(dir.join("agent.json"))?)?;
        let online = load_mlp(&dir.join("online.bin"))?;
        let target = load_mlp(&dir.join("target.bin"))?;
        let mut agent = Self::from_network(meta.encoder, meta.action_count, meta.config, online)?;
        if !target.same_shape(&agent.online) || meta.adam.first_moment.len() != agent.online.num_params() {
            return Err(Error::Parse("checkpoint networks disagree in shape".into()));
        }
        agent.target = target;
        agent.adam = meta.adam;
        agent.steps_done = meta.steps_done;
        Ok(agent)
    }
}

/// Per-action expected values from raw network outputs.
fn head_values(head: &ValueHead, out: &[f64], action_count: usize) -> Vec<f64> {
    match *head {
        ValueHead::Scalar => out.to_vec(),
        ValueHead::Categorical { atoms, .. } => {
            let support = head.support();
            (0..action_count)
                .map(|a| {
                    let p = softmax(&out[a * atoms..(a + 1) * atoms]);
                    p.iter().zip(&support).map(|(p, z)| p * z).sum()
                })
                .collect()
        }
        ValueHead::Quantile { quantiles, .. } => (0..action_count)
            .map(|a| out[a * quantiles..(a + 1) * quantiles].iter().sum::<f64>() / quantiles as f64)
            .collect(),
    }
}

/// Project `reward + discount * z` (or a point mass at `reward` for terminal
/// samples) onto the support by linear interpolation between neighbouring
/// atoms.
pub fn project_categorical(
    support: &[f64],
    v_min: f64,
    v_max: f64,
    reward: f64,
    discount: f64,
    terminal: bool,
    next_probs: &[f64],
) -> Vec<f64> {
    let atoms = support.len();
    let mut m = vec![0.0; atoms];
    let mut place = |value: f64, mass: f64| {
        if atoms == 1 {
            m[0] += mass;
            return;
        }
        let dz = (v_max - v_min) / (atoms - 1) as f64;
        let tz = value.clamp(v_min, v_max);
        let b = (tz - v_min) / dz;
        let l = b.floor() as usize;
        let u = b.ceil() as usize;
        if l == u {
            m[l] += mass;
        } else {
            m[l] += mass * (u as f64 - b);
            m[u] += mass * (b - l as f64);
        }
    };
    if terminal {
        place(reward, 1.0);
    } else {
        for (z, p) in support.iter().zip(next_probs) {
            place(reward + discount * z, *p);
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn discrete(i: usize) -> State {
        State::discrete(i, 3)
    }

    fn agent_with_q(q: [f64; 3]) -> DqnAgent {
        // One-hot input of size 1 feeding one hidden unit that is always 1.
        let net = Mlp::from_parts(1, 1, 3, &[0.0], &[1.0], &q, &[0.0, 0.0, 0.0]).unwrap();
        let cfg = DqnConfig { epsilon: EpsilonSchedule { start: 0.0, end: 0.0, decay_steps: 1 }, ..Default::default() };
        DqnAgent::from_network(StateEncoder::OneHot { dim: 1 }, 3, cfg, net).unwrap()
    }

    #[test]
    fn greedy_picks_argmax() {
        let agent = agent_with_q([1.0, 3.0, 2.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(agent.select_action(&State::discrete(0, 1), &mut rng), 1);
    }

    #[test]
    fn epsilon_midpoint_is_half() {
        let s = EpsilonSchedule { start: 1.0, end: 0.0, decay_steps: 1000 };
        assert_eq!(s.value(500), 0.5);
        assert_eq!(s.value(5000), 0.0);
        assert_eq!(s.value(0), 1.0);
    }

    #[test]
    fn td_target_arithmetic() {
        let agent = agent_with_q([2.0, 1.0, 0.5]);
        let s = State::discrete(0, 1);
        let t = Transition { state: s.clone(), action: 0, reward: 1.0, next_state: s.clone(), terminated: false, truncated: false };
        let y = agent.td_targets(&[&t]);
        assert!((y[0] - 2.98).abs() < 1e-12);
        let term = Transition { reward: -1.0, terminated: true, ..t.clone() };
        assert_eq!(agent.td_targets(&[&term]), vec![-1.0]);
    }

    #[test]
    fn gamma_zero_is_myopic() {
        let net = Mlp::from_parts(1, 1, 3, &[0.0], &[1.0], &[5.0, 6.0, 7.0], &[0.0; 3]).unwrap();
        let cfg = DqnConfig { gamma: 0.0, ..Default::default() };
        let agent = DqnAgent::from_network(StateEncoder::OneHot { dim: 1 }, 3, cfg, net).unwrap();
        let s = State::discrete(0, 1);
        let ts: Vec<Transition> = (0..4)
            .map(|i| Transition { state: s.clone(), action: 0, reward: i as f64, next_state: s.clone(), terminated: false, truncated: false })
            .collect();
        let refs: Vec<&Transition> = ts.iter().collect();
        assert_eq!(agent.td_targets(&refs), vec![0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn sync_copies_online_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut agent = DqnAgent::new(StateEncoder::OneHot { dim: 3 }, 2, DqnConfig::default(), &mut rng).unwrap();
        let init = agent.target().clone();
        let s = discrete(1);
        let t = Transition { state: s.clone(), action: 1, reward: 1.0, next_state: discrete(2), terminated: true, truncated: false };
        agent.dqn_update(&[&t], None).unwrap();
        assert_eq!(agent.target(), &init);
        assert_ne!(agent.online(), &init);
        agent.sync_target();
        assert_eq!(agent.target(), agent.online());
        for i in 0..3 {
            assert_eq!(agent.q_values(&discrete(i)), agent.target_q_values(&discrete(i)));
        }
        let snapshot = agent.target().clone();
        agent.sync_target();
        assert_eq!(agent.target(), &snapshot);
    }

    #[test]
    fn record_env_step_syncs_on_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = DqnConfig { target_sync_interval: 3, ..Default::default() };
        let mut agent = DqnAgent::new(StateEncoder::OneHot { dim: 3 }, 2, cfg, &mut rng).unwrap();
        let synced: Vec<bool> = (0..6).map(|_| agent.record_env_step()).collect();
        assert_eq!(synced, vec![false, false, true, false, false, true]);
    }

    #[test]
    fn fixed_point_batch_has_zero_loss_and_no_change() {
        let mut agent = agent_with_q([0.0, 0.0, 0.0]);
        let s = State::discrete(0, 1);
        let t = Transition { state: s.clone(), action: 2, reward: 0.0, next_state: s, terminated: false, truncated: false };
        let before = agent.online().clone();
        let out = agent.dqn_update(&[&t], None).unwrap();
        assert_eq!(out.loss, 0.0);
        assert_eq!(agent.online(), &before);
    }

    #[test]
    fn unit_weights_match_unweighted_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let base = DqnAgent::new(StateEncoder::OneHot { dim: 3 }, 2, DqnConfig::default(), &mut rng).unwrap();
        let ts: Vec<Transition> = (0..3)
            .map(|i| Transition { state: discrete(i), action: i % 2, reward: i as f64 * 0.5, next_state: discrete((i + 1) % 3), terminated: i == 2, truncated: false })
            .collect();
        let refs: Vec<&Transition> = ts.iter().collect();
        let mut a = base.clone();
        let mut b = base;
        let la = a.dqn_update(&refs, None).unwrap();
        let lb = b.dqn_update(&refs, Some(&[1.0, 1.0, 1.0])).unwrap();
        assert_eq!(la, lb);
        assert_eq!(a.online(), b.online());
    }

    #[test]
    fn single_hidden_unit_loss_by_hand() {
        // Q(s, .) = w2 * relu(w1 * 1 + b1) + b2 with input one-hot of size 1.
        let (w1, b1) = (0.5, 0.25);
        let w2 = [2.0, -1.0];
        let b2 = [0.1, 0.2];
        let net = Mlp::from_parts(1, 1, 2, &[w1], &[b1], &w2, &b2).unwrap();
        let cfg = DqnConfig { gamma: 0.9, ..Default::default() };
        let mut agent = DqnAgent::from_network(StateEncoder::OneHot { dim: 1 }, 2, cfg, net).unwrap();
        let s = State::discrete(0, 1);
        let t = Transition { state: s.clone(), action: 0, reward: 1.0, next_state: s, terminated: false, truncated: false };
        let h = w1 + b1;
        let q = [w2[0] * h + b2[0], w2[1] * h + b2[1]];
        let y = 1.0 + 0.9 * q[0].max(q[1]);
        let expected = (q[0] - y) * (q[0] - y);
        let out = agent.dqn_update(&[&t], None).unwrap();
        assert!((out.loss - expected).abs() < 1e-12);
        assert!((out.td_errors[0] - (y - q[0])).abs() < 1e-12);
    }

    #[test]
    fn invalid_weights_rejected() {
        let mut agent = agent_with_q([0.0; 3]);
        let s = State::discrete(0, 1);
        let t = Transition { state: s.clone(), action: 0, reward: 0.0, next_state: s, terminated: true, truncated: false };
        assert!(agent.dqn_update(&[&t], Some(&[-1.0])).is_err());
        assert!(agent.dqn_update(&[&t], Some(&[1.0, 1.0])).is_err());
        assert!(agent.dqn_update(&[], None).is_err());
    }

    #[test]
    fn invalid_gamma_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = DqnConfig { gamma: 1.0, ..Default::default() };
        assert!(DqnAgent::new(StateEncoder::OneHot { dim: 2 }, 2, cfg, &mut rng).is_err());
    }

    #[test]
    fn projection_sums_to_one() {
        let head = ValueHead::Categorical { atoms: 51, v_min: -10.0, v_max: 10.0 };
        let support = head.support();
        let probs = softmax(&(0..51).map(|i| (i as f64 * 0.37).sin()).collect::<Vec<_>>());
        for (r, g) in [(0.3, 0.99), (50.0, 0.9), (-50.0, 0.5), (0.0, 0.0)] {
            let m = project_categorical(&support, -10.0, 10.0, r, g, false, &probs);
            assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(m.iter().all(|&x| x >= 0.0));
        }
        let m = project_categorical(&support, -10.0, 10.0, 1.25, 0.9, true, &[]);
        assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let mean: f64 = m.iter().zip(&support).map(|(m, z)| m * z).sum();
        assert!((mean - 1.25).abs() < 1e-12);
    }

    #[test]
    fn single_atom_categorical_collapses() {
        let m = project_categorical(&[0.0], 0.0, 0.0, 3.0, 0.9, false, &[1.0]);
        assert_eq!(m, vec![1.0]);
    }

    #[test]
    fn checkpoint_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut agent = DqnAgent::new(StateEncoder::OneHot { dim: 3 }, 2, DqnConfig::default(), &mut rng).unwrap();
        let t = Transition { state: discrete(0), action: 1, reward: 1.0, next_state: discrete(1), terminated: false, truncated: false };
        agent.dqn_update(&[&t], None).unwrap();
        agent.record_env_step();
        let dir = tempfile::tempdir().unwrap();
        agent.save(dir.path()).unwrap();
        let loaded = DqnAgent::load(dir.path()).unwrap();
        assert_eq!(loaded.online(), agent.online());
        assert_eq!(loaded.target(), agent.target());
        assert_eq!(loaded.steps_done(), 1);
        assert_eq!(loaded.epsilon(), agent.epsilon());
    }
}
