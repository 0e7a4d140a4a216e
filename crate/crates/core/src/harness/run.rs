use std::collections::BTreeMap;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{AgentKind, Budget, ExperimentConfig, NserSettings, Strategy};
use super::metrics::{compute_auc, default_n_conv_delta, full_window_averages, mean_std, n_conv, steps_to_tau, Milestone};
use crate::agent::{DqnAgent, TdSample};
use crate::envs::{rollout, EnvId, EnvSpec, Environment, StateEncoder, TerminalOutcome, TrajId, Trajectory};
use crate::error::{Error, Result};
use crate::grounding::{
    grounding_examples, live_rules, reconcile_rules, rules_from_proposals, train_predicates, PredicateRegistry,
    RuleLogRecord, SymbolicRule, Vocabulary,
};
use crate::induction::{induce, PrototypeBank, ProposalSet, Proposer};
use crate::llm_client::build_proposer;
use crate::replay::ReplayBuffer;
use crate::sampling::{
    buffer_distribution, decompose_to_transitions, sample_trajectories, score_trajectory, DistributionDiagnostics,
    ReplayDistribution,
};

const STREAM_INIT: u64 = 0;
const STREAM_ENV: u64 = 1;
const STREAM_POLICY: u64 = 2;
const STREAM_REPLAY: u64 = 3;
const STREAM_PROTOTYPES: u64 = 4;
const STREAM_EVAL: u64 = 1 << 20;
const STREAM_INDUCTION: u64 = 1 << 30;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// One row of the training curve, written after every episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: u64,
    pub episode: u64,
    pub episode_return: f64,
    pub moving_avg_return: f64,
    /// Mean pre-update loss over the episode's updates; NaN without updates.
    pub loss: f64,
    pub epsilon: f64,
    pub distribution_entropy: Option<f64>,
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub episode: u64,
    pub step: u64,
    pub mean_return: f64,
    pub std_return: f64,
    pub success_rate: f64,
}

/// Replay distribution summary recorded whenever a rule generation is adopted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionRecord {
    pub episode: u64,
    pub step: u64,
    pub rules: usize,
    #[serde(flatten)]
    pub diagnostics: DistributionDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub env: EnvId,
    pub agent_kind: AgentKind,
    pub strategy: Strategy,
    pub seed: u64,
    pub episodes: u64,
    pub total_env_steps: u64,
    pub final_return_mean: f64,
    pub final_return_std: f64,
    pub final_success_rate: f64,
    pub auc: f64,
    pub tau: f64,
    pub window: usize,
    pub steps_to_tau: Milestone,
    pub n_conv: Milestone,
    pub n_conv_delta: f64,
    pub n_conv_definition: String,
    pub evaluations: Vec<EvalPoint>,
    pub proposer_id: Option<String>,
    pub rule_generations: u64,
    pub failed_inductions: u64,
    pub wall_clock_total: f64,
    pub induction_seconds: f64,
    /// Wall-clock seconds when the threshold was first met.
    pub time_to_tau: Option<f64>,
}

pub const N_CONV_DEFINITION: &str = "earliest step after which the full-window moving-average return stays within \
                                     n_conv_delta of its final value (stability-window definition)";

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub result: RunResult,
    pub records: Vec<MetricsRecord>,
    pub rule_log: Vec<RuleLogRecord>,
    pub distributions: Vec<DistributionRecord>,
    pub proposal_sets: Vec<ProposalSet>,
}

pub fn run_experiment(cfg: &ExperimentConfig, seed: u64) -> Result<RunOutput> {
    run_experiment_with(cfg, seed, None)
}

/// As [`run_experiment`], with an optional proposer replacing the configured one.
pub fn run_experiment_with(cfg: &ExperimentConfig, seed: u64, proposer: Option<Box<dyn Proposer>>) -> Result<RunOutput> {
    cfg.validate()?;
    let started = Instant::now();
    let budget = cfg.budget()?;
    let env = cfg.env.build()?;
    let encoder = env.encoder();
    let mut agent = DqnAgent::new(encoder.clone(), env.action_count(), cfg.dqn_config(), &mut stream(seed, STREAM_INIT))?;
    let mut buf = match cfg.strategy {
        Strategy::Per => ReplayBuffer::with_priorities(cfg.replay.capacity, cfg.replay.per)?,
        _ => ReplayBuffer::new(cfg.replay.capacity)?,
    };
    let mut nser = match cfg.strategy {
        Strategy::Nser => Some(NserLoop::new(cfg, seed, &encoder, proposer)?),
        _ => None,
    };

    let mut env_rng = stream(seed, STREAM_ENV);
    let mut policy_rng = stream(seed, STREAM_POLICY);
    let mut replay_rng = stream(seed, STREAM_REPLAY);
    let nominal = cfg.nominal_steps().max(1) as f64;
    let mut records: Vec<MetricsRecord> = Vec::new();
    let mut returns: Vec<f64> = Vec::new();
    let mut evaluations = Vec::new();
    let (mut steps, mut episode) = (0u64, 0u64);

    loop {
        let max_steps = match budget {
            Budget::Episodes(n) if episode >= n => break,
            Budget::EnvSteps(n) if steps >= n => break,
            Budget::EnvSteps(n) => (n - steps) as usize,
            Budget::Episodes(_) => usize::MAX,
        };
        let initial = env.reset_with(&mut env_rng);
        let traj = rollout(
            &env,
            &cfg.env,
            TrajId(episode),
            |s| {
                let a = agent.select_action(s, &mut policy_rng);
                agent.record_env_step();
                a
            },
            max_steps,
            initial,
            &mut env_rng,
        )?;
        let len = traj.len();
        let ret = traj.episode_return;
        steps += len as u64;
        episode += 1;
        buf.push_trajectory(traj)?;
        if let Some(n) = nser.as_mut() {
            n.after_push(&mut buf, episode, steps)?;
        }

        let mut loss_sum = 0.0;
        let mut updates = 0usize;
        if steps >= cfg.replay.learning_starts {
            let u = cfg.updates_per_episode.unwrap_or(len);
            for _ in 0..u {
                let progress = steps as f64 / nominal;
                loss_sum += update_once(cfg, &mut agent, &mut buf, nser.as_ref(), progress, &mut replay_rng)?;
                updates += 1;
            }
        }

        returns.push(ret);
        let w = cfg.metrics.window.min(returns.len());
        let moving = returns[returns.len() - w..].iter().sum::<f64>() / w as f64;
        records.push(MetricsRecord {
            step: steps,
            episode,
            episode_return: ret,
            moving_avg_return: moving,
            loss: if updates == 0 { f64::NAN } else { loss_sum / updates as f64 },
            epsilon: agent.epsilon(),
            distribution_entropy: nser.as_ref().and_then(|n| n.dist.as_ref()).map(ReplayDistribution::entropy),
            wall_clock_seconds: started.elapsed().as_secs_f64(),
        });

        if cfg.metrics.eval_interval.is_some_and(|k| episode % k == 0) {
            let eval_id = evaluations.len() as u64;
            evaluations.push(evaluate(&agent, &env, &cfg.env, cfg.metrics.eval_episodes, seed, eval_id, episode, steps)?);
        }
    }

    let mut nser_summary = None;
    if let Some(n) = nser {
        nser_summary = Some(n.finish()?);
    }
    let final_eval = evaluate(&agent, &env, &cfg.env, cfg.metrics.eval_episodes, seed, u32::MAX as u64, episode, steps)?;

    let curve: Vec<(u64, f64)> = records.iter().map(|r| (r.step, r.episode_return)).collect();
    let auc_points: Vec<(f64, f64)> = records.iter().map(|r| (r.step as f64, r.moving_avg_return)).collect();
    let tau = cfg.tau();
    let window = cfg.metrics.window;
    let to_tau = steps_to_tau(&curve, tau, window);
    let final_avg = full_window_averages(&curve, window).last().map_or(0.0, |p| p.1);
    let delta = cfg.metrics.n_conv_delta.unwrap_or_else(|| default_n_conv_delta(final_avg));
    let time_to_tau = to_tau.step().and_then(|s| records.iter().find(|r| r.step == s)).map(|r| r.wall_clock_seconds);

    let (proposer_id, generations, failed, induction_seconds, rule_log, distributions, proposal_sets) = match nser_summary {
        Some(s) => (Some(s.proposer_id), s.generations, s.failed, s.seconds, s.rule_log, s.distributions, s.proposal_sets),
        None => (None, 0, 0, 0.0, Vec::new(), Vec::new(), Vec::new()),
    };
    let result = RunResult {
        env: cfg.env.env_id,
        agent_kind: cfg.agent_kind,
        strategy: cfg.strategy,
        seed,
        episodes: episode,
        total_env_steps: steps,
        final_return_mean: final_eval.mean_return,
        final_return_std: final_eval.std_return,
        final_success_rate: final_eval.success_rate,
        auc: compute_auc(&auc_points)?,
        tau,
        window,
        steps_to_tau: to_tau,
        n_conv: n_conv(&curve, delta, window),
        n_conv_delta: delta,
        n_conv_definition: N_CONV_DEFINITION.to_string(),
        evaluations,
        proposer_id,
        rule_generations: generations,
        failed_inductions: failed,
        wall_clock_total: started.elapsed().as_secs_f64(),
        induction_seconds,
        time_to_tau,
    };
    Ok(RunOutput { result, records, rule_log, distributions, proposal_sets })
}

fn update_once(
    cfg: &ExperimentConfig,
    agent: &mut DqnAgent,
    buf: &mut ReplayBuffer,
    nser: Option<&NserLoop>,
    progress: f64,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let bs = cfg.replay.batch_size;
    let out = match cfg.strategy {
        Strategy::Uer => agent.dqn_update(&buf.sample_uniform(bs, rng)?.refs(), None)?,
        Strategy::Cer => agent.dqn_update(&buf.sample_cer(bs, rng)?.refs(), None)?,
        Strategy::Per => {
            let per = cfg.replay.per;
            let batch = buf.sample_per(bs, per.alpha, per.beta_at(progress), rng)?;
            let out = agent.dqn_update(&batch.refs(), Some(&batch.importance_weights))?;
            buf.update_priorities(&batch.source_ids, &out.td_errors)?;
            out
        }
        Strategy::Nstep => {
            let batch = buf.sample_uniform(bs, rng)?;
            let gamma = agent.gamma();
            let agg = batch
                .source_ids
                .iter()
                .map(|&id| buf.compute_nstep(id, cfg.replay.n_step, gamma))
                .collect::<Result<Vec<_>>>()?;
            let samples: Vec<TdSample> = batch
                .transitions
                .iter()
                .zip(&agg)
                .map(|(t, n)| TdSample {
                    state: &t.state,
                    action: t.action,
                    reward: n.reward,
                    next_state: &n.landing_state,
                    discount: n.discount,
                    terminal: n.terminal,
                })
                .collect();
            agent.update(&samples, None)?
        }
        Strategy::Nser => {
            let n = nser.expect("nser state exists for the nser strategy");
            let dist = n.dist.as_ref().ok_or(Error::EmptyBuffer)?;
            let trajs = sample_trajectories(dist, buf, n.settings.trajectories_per_update, rng)?;
            agent.dqn_update(&decompose_to_transitions(&trajs, bs, rng)?.refs(), None)?
        }
    };
    Ok(out.loss)
}

/// Greedy-policy evaluation on its own random stream.
#[allow(clippy::too_many_arguments)]
fn evaluate(
    agent: &DqnAgent,
    env: &Environment,
    spec: &EnvSpec,
    episodes: usize,
    seed: u64,
    eval_id: u64,
    episode: u64,
    step: u64,
) -> Result<EvalPoint> {
    let mut rng = stream(seed, STREAM_EVAL + eval_id);
    let mut rets = Vec::with_capacity(episodes);
    let mut wins = 0usize;
    for i in 0..episodes {
        let initial = env.reset_with(&mut rng);
        let t = rollout(env, spec, TrajId(i as u64), |s| agent.greedy_action(s), usize::MAX, initial, &mut rng)?;
        wins += usize::from(t.terminal_outcome == TerminalOutcome::Success);
        rets.push(t.episode_return);
    }
    let (mean, std) = mean_std(&rets);
    Ok(EvalPoint { episode, step, mean_return: mean, std_return: std, success_rate: wins as f64 / episodes.max(1) as f64 })
}

/// Learned structure published to the sampler as one unit.
#[derive(Clone)]
struct Knowledge {
    rules: Vec<SymbolicRule>,
    registry: PredicateRegistry,
    bank: PrototypeBank,
}

struct RoundInput {
    snapshot: Vec<Arc<Trajectory>>,
    knowledge: Knowledge,
    retained: Vec<ProposalSet>,
    round: u64,
    seed: u64,
    settings: NserSettings,
    spec: EnvSpec,
    vocab: Vocabulary,
    encoder: StateEncoder,
}

struct RoundOutput {
    knowledge: Knowledge,
    new_sets: Vec<ProposalSet>,
    log: Vec<RuleLogRecord>,
}

struct Pending {
    adopt_at: u64,
    handle: JoinHandle<(Box<dyn Proposer>, Result<RoundOutput>, f64)>,
}

struct NserSummary {
    proposer_id: String,
    generations: u64,
    failed: u64,
    seconds: f64,
    rule_log: Vec<RuleLogRecord>,
    distributions: Vec<DistributionRecord>,
    proposal_sets: Vec<ProposalSet>,
}

struct NserLoop {
    settings: NserSettings,
    seed: u64,
    spec: EnvSpec,
    vocab: Vocabulary,
    encoder: StateEncoder,
    proposer: Option<Box<dyn Proposer>>,
    proposer_id: String,
    knowledge: Knowledge,
    generation: u64,
    retained: Vec<ProposalSet>,
    pending: Option<Pending>,
    rounds_launched: u64,
    dist: Option<ReplayDistribution>,
    failed: u64,
    seconds: f64,
    rule_log: Vec<RuleLogRecord>,
    distributions: Vec<DistributionRecord>,
    proposal_sets: Vec<ProposalSet>,
}

impl NserLoop {
    fn new(cfg: &ExperimentConfig, seed: u64, encoder: &StateEncoder, proposer: Option<Box<dyn Proposer>>) -> Result<Self> {
        let settings = cfg.nser_settings();
        let env_id = cfg.env.env_id;
        let vocab = Vocabulary::for_env(env_id);
        let proposer = match proposer {
            Some(p) => p,
            None => build_proposer(&settings.proposer, env_id, &vocab)?,
        };
        let bank = PrototypeBank::new(
            settings.k,
            settings.embed_dim,
            settings.beta,
            settings.prototype_lr,
            &mut stream(seed, STREAM_PROTOTYPES),
        )?;
        let registry = PredicateRegistry::new(encoder.dim(), settings.grounding.hidden_dim, settings.grounding.lr, seed);
        Ok(Self {
            proposer_id: proposer.id().to_string(),
            proposer: Some(proposer),
            settings,
            seed,
            spec: cfg.env.clone(),
            vocab,
            encoder: encoder.clone(),
            knowledge: Knowledge { rules: Vec::new(), registry, bank },
            generation: 0,
            retained: Vec::new(),
            pending: None,
            rounds_launched: 0,
            dist: None,
            failed: 0,
            seconds: 0.0,
            rule_log: Vec::new(),
            distributions: Vec::new(),
            proposal_sets: Vec::new(),
        })
    }

    fn live(&self) -> Vec<&SymbolicRule> {
        live_rules(&self.knowledge.rules).collect()
    }

    fn score(&self, traj: &Trajectory) -> Result<f64> {
        score_trajectory(traj, &self.live(), &self.knowledge.registry, &self.encoder, self.settings.p)
    }

    /// Score the new trajectory, adopt or launch induction rounds on
    /// schedule, and refresh the replay distribution.
    fn after_push(&mut self, buf: &mut ReplayBuffer, episode: u64, step: u64) -> Result<()> {
        let latest = buf.latest().expect("just pushed").clone();
        let w = self.score(&latest)?;
        buf.set_structure_score(latest.traj_id, w)?;

        let mut adopted = false;
        if self.pending.as_ref().is_some_and(|p| p.adopt_at == episode) {
            adopted = self.adopt(buf)?;
        }
        if episode.is_multiple_of(self.settings.t_induction) {
            self.launch(buf, episode);
        }
        let dist = buffer_distribution(buf, self.settings.eta, self.generation)?;
        if adopted {
            let scores = crate::sampling::ScoreTable {
                entries: buf.structure_scores().clone(),
                p_exponent: self.settings.p,
                generation: self.generation,
            };
            self.distributions.push(DistributionRecord {
                episode,
                step,
                rules: self.live().len(),
                diagnostics: crate::sampling::diagnostics(&scores, &dist),
            });
        }
        self.dist = Some(dist);
        Ok(())
    }

    fn launch(&mut self, buf: &ReplayBuffer, episode: u64) {
        let proposer = self.proposer.take().expect("no round in flight");
        let input = RoundInput {
            snapshot: buf.snapshot().trajectories,
            knowledge: self.knowledge.clone(),
            retained: self.retained.clone(),
            round: self.rounds_launched,
            seed: self.seed,
            settings: self.settings.clone(),
            spec: self.spec.clone(),
            vocab: self.vocab.clone(),
            encoder: self.encoder.clone(),
        };
        self.rounds_launched += 1;
        let handle = std::thread::spawn(move || {
            let mut proposer = proposer;
            let t0 = Instant::now();
            let out = induction_round(input, proposer.as_mut());
            (proposer, out, t0.elapsed().as_secs_f64())
        });
        let adopt_at = episode + self.settings.adoption_lag;
        self.pending = Some(Pending { adopt_at, handle });
    }

    /// Join the in-flight round. Returns whether a new generation was published.
    fn adopt(&mut self, buf: &mut ReplayBuffer) -> Result<bool> {
        let pending = self.pending.take().expect("checked by caller");
        let (proposer, out, secs) =
            pending.handle.join().map_err(|_| Error::Training("induction worker panicked".into()))?;
        self.proposer = Some(proposer);
        self.seconds += secs;
        let out = match out {
            Ok(o) => o,
            Err(e @ Error::Config(_)) => return Err(e),
            Err(e) => {
                log::warn!("induction round failed; keeping generation {}: {e}", self.generation);
                self.failed += 1;
                return Ok(false);
            }
        };
        self.knowledge = out.knowledge;
        self.generation += 1;
        self.retained.extend(out.new_sets.iter().cloned());
        let excess = self.retained.len().saturating_sub(self.settings.retained_sets);
        self.retained.drain(..excess);
        self.proposal_sets.extend(out.new_sets);
        self.rule_log.extend(out.log);
        let ids: Vec<TrajId> = buf.trajectories().map(|t| t.traj_id).collect();
        for id in ids {
            let w = self.score(buf.get(id).expect("listed above"))?;
            buf.set_structure_score(id, w)?;
        }
        log::info!("adopted rule generation {} with {} live rules", self.generation, self.live().len());
        Ok(true)
    }

    fn finish(mut self) -> Result<NserSummary> {
        if let Some(p) = self.pending.take() {
            let (_, _, secs) = p.handle.join().map_err(|_| Error::Training("induction worker panicked".into()))?;
            self.seconds += secs;
        }
        Ok(NserSummary {
            proposer_id: self.proposer_id,
            generations: self.generation,
            failed: self.failed,
            seconds: self.seconds,
            rule_log: self.rule_log,
            distributions: self.distributions,
            proposal_sets: self.proposal_sets,
        })
    }
}

/// Induction followed by grounding on a private copy of the knowledge.
fn induction_round(input: RoundInput, proposer: &mut dyn Proposer) -> Result<RoundOutput> {
    let RoundInput { snapshot, mut knowledge, retained, round, seed, settings, spec, vocab, encoder } = input;
    let mut rng = stream(seed, STREAM_INDUCTION + round);
    let outcome = induce(&snapshot, &spec, proposer, &mut knowledge.bank, &settings.induction(), &retained, round, &mut rng)?;
    let (incoming, parse_failures) = rules_from_proposals(&outcome.proposal_sets, &knowledge.bank, &vocab);
    if parse_failures > 0 {
        log::info!("round {round}: {parse_failures} proposals did not parse");
    }
    knowledge.rules = reconcile_rules(&knowledge.rules, &incoming);
    let live: Vec<SymbolicRule> = live_rules(&knowledge.rules).cloned().collect();
    for r in &live {
        knowledge.registry.register_rule(r);
    }
    let skip = snapshot.len().saturating_sub(settings.grounding.max_snapshot);
    let recent: Vec<&Trajectory> = snapshot[skip..].iter().map(|t| t.as_ref()).collect();
    let hard: BTreeMap<TrajId, usize> = outcome.assignments.iter().map(|a| (a.traj_id, a.hard)).collect();
    let examples = grounding_examples(&live, &recent, &hard, settings.grounding.scope, &encoder);
    let trace = train_predicates(&mut knowledge.registry, &examples, settings.grounding.n_symbolic)?;
    if let (Some(first), Some(last)) = (trace.first(), trace.last()) {
        log::debug!("round {round}: grounding loss {first:.4} -> {last:.4}");
    }
    let log = knowledge.rules.iter().map(|r| RuleLogRecord::from_rule(round, r)).collect();
    Ok(RoundOutput { knowledge, new_sets: outcome.proposal_sets, log })
}
