//! Structure-aware trajectory scores, the knowledge-guided replay
//! distribution and trajectory-to-transition decomposition.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{StateEncoder, TrajId, Trajectory};
use crate::error::{Error, Result};
use crate::grounding::{trajectory_embedding, PredicateRegistry, SymbolicRule};
use crate::replay::{ReplayBuffer, SampledBatch, TransitionId};

/// `w(tau) = sum_k mu_k(tau)^p` over the given rules; 0 for an empty set.
pub fn score_trajectory(
    traj: &Trajectory,
    rules: &[&SymbolicRule],
    registry: &PredicateRegistry,
    encoder: &StateEncoder,
    p_exponent: f64,
) -> Result<f64> {
    if rules.is_empty() {
        return Ok(0.0);
    }
    let emb = trajectory_embedding(traj, encoder);
    score_embedding(&emb, rules, registry, p_exponent)
}

pub fn score_embedding(emb: &[f64], rules: &[&SymbolicRule], registry: &PredicateRegistry, p_exponent: f64) -> Result<f64> {
    if !(p_exponent >= 1.0) {
        return Err(Error::config(format!("score exponent must be at least 1, got {p_exponent}")));
    }
    let mut w = 0.0;
    for r in rules {
        w += registry.rule_satisfaction(r, emb)?.powf(p_exponent);
    }
    Ok(w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub entries: BTreeMap<TrajId, f64>,
    pub p_exponent: f64,
    pub generation: u64,
}

impl ScoreTable {
    pub fn new(p_exponent: f64) -> Self {
        Self { entries: BTreeMap::new(), p_exponent, generation: 0 }
    }

    pub fn from_scores(scores: impl IntoIterator<Item = (TrajId, f64)>) -> Self {
        Self { entries: scores.into_iter().collect(), p_exponent: 1.0, generation: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayDistribution {
    ids: Vec<TrajId>,
    probs: Vec<f64>,
    cumulative: Vec<f64>,
    pub eta: f64,
    pub generation: u64,
    /// Buffer version the distribution was computed against, if any.
    pub buffer_version: Option<u64>,
}

impl ReplayDistribution {
    fn from_weights(ids: Vec<TrajId>, probs: Vec<f64>, eta: f64, generation: u64) -> Self {
        let mut acc = 0.0;
        let cumulative = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Self { ids, probs, cumulative, eta, generation, buffer_version: None }
    }

    pub fn uniform(ids: Vec<TrajId>) -> Self {
        let n = ids.len();
        Self::from_weights(ids, vec![1.0 / n as f64; n], 0.0, 0)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }
    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
    pub fn ids(&self) -> &[TrajId] {
        &self.ids
    }
    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn probability(&self, id: TrajId) -> Option<f64> {
        self.ids.binary_search(&id).ok().map(|i| self.probs[i])
    }

    pub fn as_map(&self) -> BTreeMap<TrajId, f64> {
        self.ids.iter().copied().zip(self.probs.iter().copied()).collect()
    }

    pub fn entropy(&self) -> f64 {
        -self.probs.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
    }

    /// Index drawn by inverting the cumulative distribution.
    pub fn draw_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().expect("nonempty distribution");
        let u = rng.random::<f64>() * total;
        self.cumulative.partition_point(|&c| c <= u).min(self.ids.len() - 1)
    }

    /// Restrict to ids accepted by `keep`, renormalizing.
    pub fn restricted(&self, keep: impl Fn(TrajId) -> bool) -> Option<Self> {
        let (ids, probs): (Vec<TrajId>, Vec<f64>) =
            self.ids.iter().zip(&self.probs).filter(|(id, _)| keep(**id)).map(|(i, p)| (*i, *p)).unzip();
        let total: f64 = probs.iter().sum();
        if ids.is_empty() || !(total > 0.0) {
            return None;
        }
        let probs = probs.into_iter().map(|p| p / total).collect();
        Some(Self::from_weights(ids, probs, self.eta, self.generation))
    }
}

/// `p(tau) = softmax(eta * w(tau))` with max subtraction.
pub fn replay_distribution(scores: &ScoreTable, eta: f64) -> Result<ReplayDistribution> {
    if scores.entries.is_empty() {
        return Err(Error::EmptyBuffer);
    }
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(Error::config(format!("eta must be finite and nonnegative, got {eta}")));
    }
    let ids: Vec<TrajId> = scores.entries.keys().copied().collect();
    let max = scores.entries.values().fold(f64::NEG_INFINITY, |m, &w| m.max(eta * w));
    let exps: Vec<f64> = scores.entries.values().map(|&w| (eta * w - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let probs = exps.into_iter().map(|e| e / total).collect();
    Ok(ReplayDistribution::from_weights(ids, probs, eta, scores.generation))
}

/// Distribution over every trajectory currently in `buf`, using its stored
/// structure scores (missing scores count as 0).
pub fn buffer_distribution(buf: &ReplayBuffer, eta: f64, generation: u64) -> Result<ReplayDistribution> {
    let table = ScoreTable {
        entries: buf
            .trajectories()
            .map(|t| (t.traj_id, buf.structure_score(t.traj_id).unwrap_or(0.0)))
            .collect(),
        p_exponent: 1.0,
        generation,
    };
    let mut dist = replay_distribution(&table, eta)?;
    dist.buffer_version = Some(buf.version());
    Ok(dist)
}

/// `b` trajectories drawn with replacement from `dist`. Entries evicted
/// since the distribution was built are dropped with renormalization; if
/// nothing survives, sampling falls back to uniform.
pub fn sample_trajectories<R: Rng + ?Sized>(
    dist: &ReplayDistribution,
    buf: &ReplayBuffer,
    b: usize,
    rng: &mut R,
) -> Result<Vec<Arc<Trajectory>>> {
    if b == 0 {
        return Ok(Vec::new());
    }
    if buf.is_empty() {
        return Err(Error::EmptyBuffer);
    }
    let fresh;
    let active = if dist.buffer_version == Some(buf.version()) {
        dist
    } else {
        fresh = match dist.restricted(|id| buf.contains(id)) {
            Some(d) => d,
            None => {
                log::warn!("replay distribution is stale; sampling uniformly");
                ReplayDistribution::uniform(buf.trajectories().map(|t| t.traj_id).collect())
            }
        };
        &fresh
    };
    Ok((0..b)
        .map(|_| {
            let id = active.ids[active.draw_index(rng)];
            buf.get(id).expect("restricted to stored ids").clone()
        })
        .collect())
}

/// Pool every transition of `trajs` and draw `batch_size` uniformly with
/// replacement. Importance weights are all 1.
pub fn decompose_to_transitions<R: Rng + ?Sized>(trajs: &[Arc<Trajectory>], batch_size: usize, rng: &mut R) -> Result<SampledBatch> {
    let total: usize = trajs.iter().map(|t| t.len()).sum();
    if total == 0 {
        return Err(Error::contract("cannot decompose an empty trajectory pool"));
    }
    let mut ends = Vec::with_capacity(trajs.len());
    let mut acc = 0;
    for t in trajs {
        acc += t.len();
        ends.push(acc);
    }
    let mut batch = SampledBatch {
        transitions: Vec::with_capacity(batch_size),
        source_ids: Vec::with_capacity(batch_size),
        importance_weights: vec![1.0; batch_size],
    };
    for _ in 0..batch_size {
        let g = rng.random_range(0..total);
        let ti = ends.partition_point(|&e| e <= g);
        let start = if ti == 0 { 0 } else { ends[ti - 1] };
        let step = g - start;
        batch.transitions.push(trajs[ti].transitions[step].clone());
        batch.source_ids.push(TransitionId { traj_id: trajs[ti].traj_id, step });
    }
    Ok(batch)
}

/// Summary of one distribution refresh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistributionDiagnostics {
    pub generation: u64,
    pub min_w: f64,
    pub max_w: f64,
    pub mean_w: f64,
    pub entropy: f64,
}

pub fn diagnostics(scores: &ScoreTable, dist: &ReplayDistribution) -> DistributionDiagnostics {
    let n = scores.entries.len().max(1) as f64;
    let (mut lo, mut hi, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
    for &w in scores.entries.values() {
        lo = lo.min(w);
        hi = hi.max(w);
        sum += w;
    }
    DistributionDiagnostics { generation: scores.generation, min_w: lo, max_w: hi, mean_w: sum / n, entropy: dist.entropy() }
}
