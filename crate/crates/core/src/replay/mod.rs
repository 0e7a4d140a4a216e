//! Trajectory-granular replay with FIFO eviction and transition-level
//! sampling strategies (uniform, prioritized, combined, n-step).

mod sum_tree;

use std::collections::{BTreeMap, VecDeque};
use std::io::{BufRead, Write};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use sum_tree::SumTree;

use crate::envs::{State, TerminalOutcome, TrajId, Trajectory, Transition};
use crate::error::{Error, Result};

pub const DEFAULT_CAPACITY: usize = 1_000_000;

/// Address of one stored transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TransitionId {
    pub traj_id: TrajId,
    pub step: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledBatch {
    pub transitions: Vec<Transition>,
    pub source_ids: Vec<TransitionId>,
    pub importance_weights: Vec<f64>,
}

impl SampledBatch {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }
    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }
    pub fn refs(&self) -> Vec<&Transition> {
        self.transitions.iter().collect()
    }
    pub fn has_unit_weights(&self) -> bool {
        self.importance_weights.iter().all(|&w| w == 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub traj_id: TrajId,
    pub episode_return: f64,
    pub length: usize,
    pub terminal_outcome: TerminalOutcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerConfig {
    pub alpha: f64,
    pub beta_start: f64,
    pub beta_end: f64,
    pub epsilon: f64,
}

impl Default for PerConfig {
    fn default() -> Self {
        Self { alpha: 0.6, beta_start: 0.4, beta_end: 1.0, epsilon: 1e-6 }
    }
}

impl PerConfig {
    /// Linear anneal of the importance exponent over training progress in [0, 1].
    pub fn beta_at(&self, progress: f64) -> f64 {
        self.beta_start + (self.beta_end - self.beta_start) * progress.clamp(0.0, 1.0)
    }
}

/// n-step aggregate for one start transition.
#[derive(Debug, Clone, PartialEq)]
pub struct NStep {
    pub reward: f64,
    pub landing_state: State,
    pub discount: f64,
    pub terminal: bool,
    pub steps: usize,
}

#[derive(Debug, Clone)]
struct PerState {
    alpha: f64,
    epsilon: f64,
    raw: Vec<f64>,
    tree: SumTree,
    max_priority: f64,
}

impl PerState {
    fn transformed(&self, raw: f64) -> f64 {
        (raw + self.epsilon).powf(self.alpha)
    }
}

/// Read-only view of the buffer contents at one moment.
#[derive(Debug, Clone)]
pub struct BufferSnapshot {
    pub trajectories: Vec<Arc<Trajectory>>,
    pub version: u64,
}

impl BufferSnapshot {
    pub fn transition_count(&self) -> usize {
        self.trajectories.iter().map(|t| t.len()).sum()
    }
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    trajectories: VecDeque<Arc<Trajectory>>,
    /// Global id of each stored trajectory's first transition.
    starts: VecDeque<u64>,
    next_global: u64,
    stored: usize,
    per: Option<PerState>,
    structure_scores: BTreeMap<TrajId, f64>,
    version: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("replay capacity must be positive"));
        }
        Ok(Self {
            capacity,
            trajectories: VecDeque::new(),
            starts: VecDeque::new(),
            next_global: 0,
            stored: 0,
            per: None,
            structure_scores: BTreeMap::new(),
            version: 0,
        })
    }

    /// Buffer that also tracks per-transition priorities.
    pub fn with_priorities(capacity: usize, config: PerConfig) -> Result<Self> {
        let mut buf = Self::new(capacity)?;
        if !(config.alpha >= 0.0 && config.epsilon > 0.0) {
            return Err(Error::config("PER alpha must be nonnegative and epsilon positive"));
        }
        buf.per = Some(PerState {
            alpha: config.alpha,
            epsilon: config.epsilon,
            raw: vec![0.0; capacity],
            tree: SumTree::new(capacity),
            max_priority: 1.0,
        });
        Ok(buf)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }
    pub fn len_transitions(&self) -> usize {
        self.stored
    }
    pub fn len_trajectories(&self) -> usize {
        self.trajectories.len()
    }
    pub fn is_empty(&self) -> bool {
        self.stored == 0
    }
    /// Increments on every push (and hence every eviction).
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn trajectories(&self) -> impl DoubleEndedIterator<Item = &Arc<Trajectory>> + ExactSizeIterator {
        self.trajectories.iter()
    }

    pub fn snapshot(&self) -> BufferSnapshot {
        BufferSnapshot { trajectories: self.trajectories.iter().cloned().collect(), version: self.version }
    }

    fn position(&self, id: TrajId) -> Option<usize> {
        let pos = self.trajectories.partition_point(|t| t.traj_id < id);
        (pos < self.trajectories.len() && self.trajectories[pos].traj_id == id).then_some(pos)
    }

    pub fn get(&self, id: TrajId) -> Option<&Arc<Trajectory>> {
        self.position(id).map(|p| &self.trajectories[p])
    }

    pub fn contains(&self, id: TrajId) -> bool {
        self.position(id).is_some()
    }

    pub fn metadata(&self, id: TrajId) -> Option<TrajectoryMeta> {
        self.get(id).map(|t| TrajectoryMeta {
            traj_id: t.traj_id,
            episode_return: t.episode_return,
            length: t.len(),
            terminal_outcome: t.terminal_outcome,
        })
    }

    pub fn latest(&self) -> Option<&Arc<Trajectory>> {
        self.trajectories.back()
    }

    /// Store a trajectory, evicting whole oldest trajectories until the
    /// transition count fits the capacity. Returns the evicted ids.
    pub fn push_trajectory(&mut self, traj: Trajectory) -> Result<Vec<TrajId>> {
        if traj.is_empty() {
            return Err(Error::contract("cannot store an empty trajectory"));
        }
        if traj.len() > self.capacity {
            return Err(Error::contract(format!(
                "trajectory of {} transitions exceeds capacity {}",
                traj.len(),
                self.capacity
            )));
        }
        if let Some(last) = self.trajectories.back() {
            if traj.traj_id <= last.traj_id {
                return Err(Error::contract(format!(
                    "trajectory ids must increase ({} after {})",
                    traj.traj_id, last.traj_id
                )));
            }
        }
        let mut evicted = Vec::new();
        while self.stored + traj.len() > self.capacity {
            let old = self.trajectories.pop_front().expect("stored > 0");
            let start = self.starts.pop_front().expect("parallel deques");
            self.stored -= old.len();
            if let Some(per) = &mut self.per {
                for g in start..start + old.len() as u64 {
                    let slot = (g % self.capacity as u64) as usize;
                    per.raw[slot] = 0.0;
                    per.tree.set(slot, 0.0);
                }
            }
            self.structure_scores.remove(&old.traj_id);
            evicted.push(old.traj_id);
        }
        let start = self.next_global;
        if let Some(per) = &mut self.per {
            let p = per.max_priority;
            let value = per.transformed(p);
            for g in start..start + traj.len() as u64 {
                let slot = (g % self.capacity as u64) as usize;
                per.raw[slot] = p;
                per.tree.set(slot, value);
            }
        }
        self.next_global += traj.len() as u64;
        self.stored += traj.len();
        self.starts.push_back(start);
        self.trajectories.push_back(Arc::new(traj));
        self.version += 1;
        Ok(evicted)
    }

    fn first_global(&self) -> u64 {
        self.starts.front().copied().unwrap_or(self.next_global)
    }

    fn locate(&self, global: u64) -> (usize, usize) {
        let pos = self.starts.partition_point(|&s| s <= global) - 1;
        (pos, (global - self.starts[pos]) as usize)
    }

    fn global_of(&self, id: TransitionId) -> Result<u64> {
        let pos = self
            .position(id.traj_id)
            .ok_or_else(|| Error::contract(format!("trajectory {} is not stored", id.traj_id)))?;
        if id.step >= self.trajectories[pos].len() {
            return Err(Error::contract(format!("step {} outside trajectory {}", id.step, id.traj_id)));
        }
        Ok(self.starts[pos] + id.step as u64)
    }

    fn emit(&self, globals: &[u64], weights: Vec<f64>) -> SampledBatch {
        let mut transitions = Vec::with_capacity(globals.len());
        let mut source_ids = Vec::with_capacity(globals.len());
        for &g in globals {
            let (pos, step) = self.locate(g);
            let t = &self.trajectories[pos];
            transitions.push(t.transitions[step].clone());
            source_ids.push(TransitionId { traj_id: t.traj_id, step });
        }
        SampledBatch { transitions, source_ids, importance_weights: weights }
    }

    fn uniform_globals<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<u64> {
        let first = self.first_global();
        (0..n).map(|_| first + rng.random_range(0..self.stored as u64)).collect()
    }

    /// i.i.d. uniform draws (with replacement) over stored transitions.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<SampledBatch> {
        if self.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        let globals = self.uniform_globals(batch_size, rng);
        Ok(self.emit(&globals, vec![1.0; batch_size]))
    }

    /// The most recently stored transition plus `batch_size - 1` uniform draws.
    pub fn sample_cer<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<SampledBatch> {
        if self.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        if batch_size == 0 {
            return Ok(self.emit(&[], Vec::new()));
        }
        let mut globals = vec![self.next_global - 1];
        globals.extend(self.uniform_globals(batch_size - 1, rng));
        Ok(self.emit(&globals, vec![1.0; batch_size]))
    }

    /// Prioritized draws with `P(i) ∝ (|δ_i| + ε)^alpha`; importance weights
    /// `(N P(i))^-beta` divided by the batch maximum.
    pub fn sample_per<R: Rng + ?Sized>(&mut self, batch_size: usize, alpha: f64, beta: f64, rng: &mut R) -> Result<SampledBatch> {
        if self.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        if !(alpha >= 0.0 && beta >= 0.0) {
            return Err(Error::contract("PER exponents must be nonnegative"));
        }
        self.set_per_alpha(alpha)?;
        let n = self.stored as f64;
        let per = self.per.as_ref().expect("checked by set_per_alpha");
        let total = per.tree.total();
        let mut globals = Vec::with_capacity(batch_size);
        let mut weights = Vec::with_capacity(batch_size);
        let first = self.first_global();
        let cap = self.capacity as u64;
        for _ in 0..batch_size {
            let slot = per.tree.find(rng.random::<f64>() * total) as u64;
            // Map the ring slot back to the global id in [first, next_global).
            let global = first + (slot + cap - first % cap) % cap;
            let prob = per.tree.get(slot as usize) / total;
            globals.push(global);
            weights.push((n * prob).powf(-beta));
        }
        let max_w = weights.iter().copied().fold(0.0, f64::max);
        if max_w > 0.0 && max_w.is_finite() {
            weights.iter_mut().for_each(|w| *w /= max_w);
        }
        Ok(self.emit(&globals, weights))
    }

    fn set_per_alpha(&mut self, alpha: f64) -> Result<()> {
        let first = self.first_global();
        let cap = self.capacity as u64;
        let per = self
            .per
            .as_mut()
            .ok_or_else(|| Error::contract("buffer was created without priorities"))?;
        if per.alpha != alpha {
            per.alpha = alpha;
            for g in first..self.next_global {
                let slot = (g % cap) as usize;
                let v = per.transformed(per.raw[slot]);
                per.tree.set(slot, v);
            }
        }
        Ok(())
    }

    /// Set each addressed transition's priority to `|δ|`. Stale addresses
    /// (already evicted) are ignored.
    pub fn update_priorities(&mut self, ids: &[TransitionId], td_errors: &[f64]) -> Result<()> {
        if ids.len() != td_errors.len() {
            return Err(Error::contract("ids and td_errors must have equal length"));
        }
        if self.per.is_none() {
            return Err(Error::contract("buffer was created without priorities"));
        }
        for (id, delta) in ids.iter().zip(td_errors) {
            if !delta.is_finite() {
                return Err(Error::Training(format!("non-finite TD error {delta}")));
            }
            let Ok(g) = self.global_of(*id) else { continue };
            let slot = (g % self.capacity as u64) as usize;
            let per = self.per.as_mut().expect("checked above");
            let p = delta.abs();
            per.raw[slot] = p;
            per.max_priority = per.max_priority.max(p);
            let v = per.transformed(p);
            per.tree.set(slot, v);
        }
        Ok(())
    }

    pub fn priority(&self, id: TransitionId) -> Option<f64> {
        let g = self.global_of(id).ok()?;
        self.per.as_ref().map(|p| p.raw[(g % self.capacity as u64) as usize])
    }

    /// Aggregate up to `n` rewards from `(traj_id, step)`, stopping at the
    /// end of the stored episode.
    pub fn compute_nstep(&self, id: TransitionId, n: usize, gamma: f64) -> Result<NStep> {
        if n == 0 {
            return Err(Error::contract("n-step horizon must be at least 1"));
        }
        let traj = self
            .get(id.traj_id)
            .ok_or_else(|| Error::contract(format!("trajectory {} is not stored", id.traj_id)))?;
        nstep_from(traj, id.step, n, gamma)
    }

    pub fn structure_score(&self, id: TrajId) -> Option<f64> {
        self.structure_scores.get(&id).copied()
    }

    pub fn set_structure_score(&mut self, id: TrajId, w: f64) -> Result<()> {
        if !(w.is_finite() && w >= 0.0) {
            return Err(Error::contract(format!("structure score {w} must be finite and nonnegative")));
        }
        if !self.contains(id) {
            return Err(Error::contract(format!("trajectory {id} is not stored")));
        }
        self.structure_scores.insert(id, w);
        Ok(())
    }

    pub fn structure_scores(&self) -> &BTreeMap<TrajId, f64> {
        &self.structure_scores
    }

    /// One JSON trajectory per line.
    pub fn dump_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for t in &self.trajectories {
            serde_json::to_writer(&mut w, t.as_ref())?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Rebuild a buffer from a dump; priorities start at the default maximum.
    pub fn restore_jsonl<R: BufRead>(capacity: usize, per: Option<PerConfig>, r: R) -> Result<Self> {
        let mut buf = match per {
            Some(cfg) => Self::with_priorities(capacity, cfg)?,
            None => Self::new(capacity)?,
        };
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let traj: Trajectory =
                serde_json::from_str(&line).map_err(|e| Error::Parse(format!("dump line {}: {e}", i + 1)))?;
            buf.push_trajectory(traj)?;
        }
        Ok(buf)
    }
}

/// n-step aggregate computed directly on a trajectory.
pub fn nstep_from(traj: &Trajectory, step: usize, n: usize, gamma: f64) -> Result<NStep> {
    if step >= traj.len() {
        return Err(Error::contract(format!("step {step} outside trajectory {}", traj.traj_id)));
    }
    let m = n.min(traj.len() - step);
    let mut reward = 0.0;
    let mut discount = 1.0;
    for t in &traj.transitions[step..step + m] {
        reward += discount * t.reward;
        discount *= gamma;
    }
    let last = &traj.transitions[step + m - 1];
    Ok(NStep { reward, landing_state: last.next_state.clone(), discount, terminal: last.terminated, steps: m })
}
