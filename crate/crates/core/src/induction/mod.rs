//! Trajectory serialization, linguistic proposals and their alignment to
//! learnable relation prototypes.

mod embed;
mod prototypes;
mod serialize;

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use embed::{dot, embed_text, hash_token, tokenize, DEFAULT_EMBED_DIM};
pub use prototypes::{PrototypeBank, RelationAssignment};
pub use serialize::{serialize, SerializedTrajectory, TokenKind};

use crate::envs::{EnvSpec, TrajId, Trajectory};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalSet {
    pub traj_id: TrajId,
    pub proposals: Vec<String>,
    pub proposer_id: String,
    /// Induction round that produced the set.
    pub timestamp: u64,
}

impl ProposalSet {
    pub fn embeddings(&self, d: usize) -> Vec<Vec<f64>> {
        self.proposals.iter().map(|u| embed_text(u, d)).collect()
    }
}

/// Source of candidate rule texts for a serialized trajectory.
pub trait Proposer: Send {
    fn id(&self) -> &str;

    /// Up to `m` proposals. An empty result means nothing usable came back.
    fn propose(&mut self, x: &SerializedTrajectory, m: usize) -> Result<Vec<String>>;

    /// One result per input, in input order.
    fn propose_batch(&mut self, xs: &[SerializedTrajectory], m: usize) -> Vec<Result<Vec<String>>> {
        xs.iter().map(|x| self.propose(x, m)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InductionConfig {
    pub n_sample: usize,
    pub proposals_per_trajectory: usize,
    pub prototype_steps: usize,
    pub embed_dim: usize,
}

impl Default for InductionConfig {
    fn default() -> Self {
        Self { n_sample: 16, proposals_per_trajectory: 3, prototype_steps: 50, embed_dim: DEFAULT_EMBED_DIM }
    }
}

#[derive(Debug, Clone, Default)]
pub struct InductionOutcome {
    pub proposal_sets: Vec<ProposalSet>,
    pub assignments: Vec<RelationAssignment>,
    pub objective_trace: Vec<f64>,
    /// Trajectories whose query failed or returned nothing usable.
    pub skipped: Vec<TrajId>,
}

/// Half highest-return trajectories (most recent first on ties), half
/// uniform over the rest, returned in id order.
pub fn stratified_sample<R: Rng + ?Sized>(trajs: &[Arc<Trajectory>], n: usize, rng: &mut R) -> Vec<Arc<Trajectory>> {
    let n = n.min(trajs.len());
    let mut order: Vec<usize> = (0..trajs.len()).collect();
    order.sort_by(|&a, &b| {
        trajs[b]
            .episode_return
            .total_cmp(&trajs[a].episode_return)
            .then(trajs[b].traj_id.cmp(&trajs[a].traj_id))
    });
    let n_top = n.div_ceil(2);
    let mut picked: Vec<usize> = order[..n_top].to_vec();
    let rest = &order[n_top..];
    for i in rand::seq::index::sample(rng, rest.len(), n - n_top) {
        picked.push(rest[i]);
    }
    picked.sort_by_key(|&i| trajs[i].traj_id);
    picked.into_iter().map(|i| trajs[i].clone()).collect()
}

/// One induction round over a buffer snapshot: sample, serialize, query
/// the proposer, ascend the prototype objective over the new sets plus
/// `retained` ones, and assign every newly proposed trajectory.
pub fn induce<R: Rng + ?Sized>(
    snapshot: &[Arc<Trajectory>],
    spec: &EnvSpec,
    proposer: &mut dyn Proposer,
    bank: &mut PrototypeBank,
    cfg: &InductionConfig,
    retained: &[ProposalSet],
    round: u64,
    rng: &mut R,
) -> Result<InductionOutcome> {
    if snapshot.is_empty() {
        return Err(Error::EmptyBuffer);
    }
    if cfg.proposals_per_trajectory == 0 {
        return Err(Error::config("proposals_per_trajectory must be at least 1"));
    }
    let sampled = stratified_sample(snapshot, cfg.n_sample, rng);
    let mut out = InductionOutcome::default();
    let mut failures = 0;
    let mut last_err = None;
    let xs = sampled.iter().map(|t| serialize(t, spec)).collect::<Result<Vec<_>>>()?;
    let results = proposer.propose_batch(&xs, cfg.proposals_per_trajectory);
    for (traj, result) in sampled.iter().zip(results) {
        match result {
            Ok(mut proposals) => {
                proposals.retain(|p| !p.trim().is_empty());
                proposals.truncate(cfg.proposals_per_trajectory);
                if proposals.is_empty() {
                    log::info!("trajectory {} produced no usable proposals", traj.traj_id);
                    out.skipped.push(traj.traj_id);
                } else {
                    out.proposal_sets.push(ProposalSet {
                        traj_id: traj.traj_id,
                        proposals,
                        proposer_id: proposer.id().to_string(),
                        timestamp: round,
                    });
                }
            }
            Err(e @ Error::Config(_)) => return Err(e),
            Err(e) => {
                log::warn!("proposer failed on trajectory {}: {e}", traj.traj_id);
                failures += 1;
                out.skipped.push(traj.traj_id);
                last_err = Some(e);
            }
        }
    }
    if failures == sampled.len() {
        return Err(Error::Proposer(format!(
            "all {failures} proposer queries failed; last error: {}",
            last_err.map_or_else(String::new, |e| e.to_string())
        )));
    }
    let d = bank.dim();
    let new_embeddings: Vec<Vec<Vec<f64>>> = out.proposal_sets.iter().map(|p| p.embeddings(d)).collect();
    let mut all = new_embeddings.clone();
    all.extend(retained.iter().map(|p| p.embeddings(d)));
    out.objective_trace = bank.update(&all, cfg.prototype_steps)?;
    for (set, emb) in out.proposal_sets.iter().zip(&new_embeddings) {
        out.assignments.push(bank.soft_assign(set.traj_id, emb)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{EnvId, State, TerminalOutcome, Transition};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct Fixed;
    impl Proposer for Fixed {
        fn id(&self) -> &str {
            "fixed"
        }
        fn propose(&mut self, _: &SerializedTrajectory, _: usize) -> Result<Vec<String>> {
            Ok(vec!["IF action(toward_goal) THEN outcome(success)".into()])
        }
    }

    struct Failing;
    impl Proposer for Failing {
        fn id(&self) -> &str {
            "failing"
        }
        fn propose(&mut self, _: &SerializedTrajectory, _: usize) -> Result<Vec<String>> {
            Err(Error::Proposer("down".into()))
        }
    }

    fn traj(id: u64, ret: f64) -> Arc<Trajectory> {
        Arc::new(Trajectory {
            traj_id: TrajId(id),
            env_id: EnvId::FrozenLake,
            transitions: vec![Transition {
                state: State::discrete(0, 16),
                action: 2,
                reward: ret,
                next_state: State::discrete(1, 16),
                terminated: false,
                truncated: true,
            }],
            episode_return: ret,
            terminal_outcome: TerminalOutcome::Timeout,
        })
    }

    #[test]
    fn stratified_keeps_top_half() {
        let trajs: Vec<_> = (0..10).map(|i| traj(i, i as f64)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let picked = stratified_sample(&trajs, 4, &mut rng);
        let ids: Vec<u64> = picked.iter().map(|t| t.traj_id.0).collect();
        assert!(ids.contains(&9) && ids.contains(&8));
        assert_eq!(ids.len(), 4);
        assert!(ids.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(stratified_sample(&trajs, 50, &mut rng).len(), 10);
    }

    #[test]
    fn fixed_proposer_shares_one_relation() {
        let trajs: Vec<_> = (0..6).map(|i| traj(i, 0.0)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut bank = PrototypeBank::new(16, 64, 1.0, 1e-3, &mut rng).unwrap();
        let out = induce(&trajs, &EnvSpec::frozen_lake(true), &mut Fixed, &mut bank, &InductionConfig::default(), &[], 0, &mut rng)
            .unwrap();
        assert_eq!(out.assignments.len(), 6);
        assert!(out.assignments.iter().all(|a| a.hard == out.assignments[0].hard));
    }

    #[test]
    fn all_failures_abort() {
        let trajs = vec![traj(0, 0.0)];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut bank = PrototypeBank::new(4, 8, 1.0, 1e-3, &mut rng).unwrap();
        let err = induce(&trajs, &EnvSpec::frozen_lake(true), &mut Failing, &mut bank, &InductionConfig::default(), &[], 0, &mut rng)
            .unwrap_err();
        assert!(matches!(err, Error::Proposer(_)));
    }
}
