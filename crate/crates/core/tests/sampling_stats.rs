use std::sync::Arc;

use nser_core::agent::{DqnAgent, DqnConfig, EpsilonSchedule};
use nser_core::envs::{EnvId, State, StateEncoder, TerminalOutcome, TrajId, Trajectory, Transition};
use nser_core::replay::{PerConfig, ReplayBuffer, TransitionId};
use nser_core::sampling::{decompose_to_transitions, replay_distribution, sample_trajectories, ScoreTable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn chi_square_p(counts: &[u64], probs: &[f64]) -> f64 {
    let n: u64 = counts.iter().sum();
    let stat: f64 = counts
        .iter()
        .zip(probs)
        .map(|(&c, &p)| {
            let e = p * n as f64;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    let dof = (counts.len() - 1) as f64;
    1.0 - ChiSquared::new(dof).unwrap().cdf(stat)
}

fn traj(id: u64, len: usize) -> Trajectory {
    let transitions = (0..len)
        .map(|i| Transition {
            state: State::discrete(i % 16, 16),
            action: i % 4,
            reward: 0.0,
            next_state: State::discrete((i + 1) % 16, 16),
            terminated: i + 1 == len,
            truncated: false,
        })
        .collect();
    Trajectory {
        traj_id: TrajId(id),
        env_id: EnvId::FrozenLake,
        transitions,
        episode_return: 0.0,
        terminal_outcome: TerminalOutcome::Failure,
    }
}

fn table(ws: &[f64]) -> ScoreTable {
    ScoreTable::from_scores(ws.iter().enumerate().map(|(i, &w)| (TrajId(i as u64), w)))
}

#[test]
fn distribution_sums_to_one_and_is_shift_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let n = rng.random_range(1..200);
        let ws: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..4.0)).collect();
        let eta = rng.random_range(0.0..3.0);
        let c = rng.random_range(-50.0..50.0);
        let p = replay_distribution(&table(&ws), eta).unwrap();
        let shifted: Vec<f64> = ws.iter().map(|w| w + c).collect();
        let q = replay_distribution(&table(&shifted), eta).unwrap();
        assert!((p.probabilities().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for (a, b) in p.probabilities().iter().zip(q.probabilities()) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }
}

#[test]
fn zero_eta_is_uniform() {
    let p = replay_distribution(&table(&[0.0, 3.0, 1.5, 10.0]), 0.0).unwrap();
    assert!(p.probabilities().iter().all(|&x| (x - 0.25).abs() < 1e-15));
}

#[test]
fn scores_mass_matches_closed_form() {
    let ws = [0.0, 1.0, 2.0];
    let p = replay_distribution(&table(&ws), 1.0).unwrap();
    let z: f64 = ws.iter().map(|w: &f64| w.exp()).sum();
    for (w, q) in ws.iter().zip(p.probabilities()) {
        assert!((q - w.exp() / z).abs() < 1e-15);
    }
}

#[test]
fn draw_frequencies_pass_chi_square() {
    let ws = [0.1, 0.9, 0.4, 2.0, 1.2, 0.0];
    let p = replay_distribution(&table(&ws), 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut counts = vec![0u64; ws.len()];
    for _ in 0..100_000 {
        counts[p.draw_index(&mut rng)] += 1;
    }
    let pv = chi_square_p(&counts, p.probabilities());
    assert!(pv > 0.01, "p-value {pv}");
}

#[test]
fn trajectory_sampling_follows_distribution() {
    let mut buf = ReplayBuffer::new(1000).unwrap();
    for i in 0..4 {
        buf.push_trajectory(traj(i, 3)).unwrap();
    }
    let ws = [0.0, 1.0, 2.0, 3.0];
    let p = replay_distribution(&table(&ws), 0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let drawn = sample_trajectories(&p, &buf, 100_000, &mut rng).unwrap();
    let mut counts = vec![0u64; 4];
    for t in drawn {
        counts[t.traj_id.0 as usize] += 1;
    }
    assert!(chi_square_p(&counts, p.probabilities()) > 0.01);
}

#[test]
fn decomposition_is_uniform_over_pooled_transitions() {
    let trajs = vec![Arc::new(traj(0, 1)), Arc::new(traj(1, 3)), Arc::new(traj(2, 6))];
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let batch = decompose_to_transitions(&trajs, 100_000, &mut rng).unwrap();
    assert!(batch.has_unit_weights());
    let mut counts = vec![0u64; 3];
    for id in &batch.source_ids {
        counts[id.traj_id.0 as usize] += 1;
    }
    assert!(chi_square_p(&counts, &[0.1, 0.3, 0.6]) > 0.01);
}

fn per_buffer(priorities: &[f64]) -> ReplayBuffer {
    let mut buf = ReplayBuffer::with_priorities(1024, PerConfig::default()).unwrap();
    buf.push_trajectory(traj(0, priorities.len())).unwrap();
    let ids: Vec<TransitionId> = (0..priorities.len()).map(|step| TransitionId { traj_id: TrajId(0), step }).collect();
    buf.update_priorities(&ids, priorities).unwrap();
    buf
}

fn per_counts(buf: &mut ReplayBuffer, alpha: f64, n: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut counts = vec![0u64; buf.len_transitions()];
    for _ in 0..n / 1000 {
        let batch = buf.sample_per(1000, alpha, 0.4, &mut rng).unwrap();
        for id in batch.source_ids {
            counts[id.step] += 1;
        }
    }
    counts
}

#[test]
fn per_frequencies_follow_priority_power() {
    let pri = [0.5, 2.0, 0.1, 4.0, 1.0, 0.0, 3.0];
    let eps = PerConfig::default().epsilon;
    for alpha in [0.6, 1.0] {
        let mut buf = per_buffer(&pri);
        let counts = per_counts(&mut buf, alpha, 100_000);
        let mass: Vec<f64> = pri.iter().map(|p| (p + eps).powf(alpha)).collect();
        let z: f64 = mass.iter().sum();
        let probs: Vec<f64> = mass.iter().map(|m| m / z).collect();
        let pv = chi_square_p(&counts, &probs);
        assert!(pv > 0.01, "alpha {alpha}: p-value {pv}");
    }
}

#[test]
fn per_alpha_zero_is_uniform() {
    let pri = [0.5, 2.0, 0.1, 4.0, 1.0, 0.0, 3.0];
    let mut buf = per_buffer(&pri);
    let counts = per_counts(&mut buf, 0.0, 100_000);
    let probs = vec![1.0 / pri.len() as f64; pri.len()];
    assert!(chi_square_p(&counts, &probs) > 0.01);
}

#[test]
fn per_weights_are_normalized_by_batch_max() {
    let mut buf = per_buffer(&[1.0, 4.0, 0.25]);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let batch = buf.sample_per(64, 1.0, 1.0, &mut rng).unwrap();
    let max = batch.importance_weights.iter().copied().fold(0.0, f64::max);
    assert_eq!(max, 1.0);
    assert!(batch.importance_weights.iter().all(|&w| w > 0.0 && w <= 1.0));
}

#[test]
fn full_exploration_picks_actions_uniformly() {
    let mut config = DqnConfig::default();
    config.epsilon = EpsilonSchedule { start: 1.0, end: 1.0, decay_steps: 1 };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let agent = DqnAgent::new(StateEncoder::OneHot { dim: 16 }, 4, config, &mut rng).unwrap();
    let s = State::discrete(0, 16);
    let mut counts = vec![0u64; 4];
    for _ in 0..100_000 {
        counts[agent.select_action(&s, &mut rng)] += 1;
    }
    assert!(chi_square_p(&counts, &[0.25; 4]) > 0.01);
}
