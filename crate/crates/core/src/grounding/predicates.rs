use std::collections::BTreeMap;
use std::hash::Hasher;

use fnv::FnvHasher;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::grammar::{RuleAtom, SymbolicRule};
use crate::envs::{StateEncoder, TerminalOutcome, Trajectory};
use crate::error::{Error, Result};
use crate::neural::{sigmoid, Activations, AdamConfig, AdamState, Gradients, Input, Mlp};

pub const DEFAULT_PREDICATE_HIDDEN: usize = 32;

/// Mean of the encoded states `s_0 .. s_T`.
pub fn trajectory_embedding(traj: &Trajectory, encoder: &StateEncoder) -> Vec<f64> {
    let mut acc = vec![0.0; encoder.dim()];
    let mut n = 0usize;
    for s in traj.states() {
        encoder.encode(s).add_to(&mut acc, 1.0);
        n += 1;
    }
    if n > 0 {
        acc.iter_mut().for_each(|x| *x /= n as f64);
    }
    acc
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredicateScorer {
    pub predicate_name: String,
    pub net: Mlp,
    adam: AdamState,
}

impl PredicateScorer {
    pub fn logit(&self, emb: &[f64]) -> f64 {
        let mut act = Activations::default();
        self.net.forward_into(Input::Dense(emb), &mut act);
        act.output[0]
    }
}

/// `mu_P = sigmoid(E_P(emb))`, complemented for negated atoms.
pub fn predicate_satisfaction(scorer: &PredicateScorer, atom: &RuleAtom, emb: &[f64]) -> f64 {
    let mu = sigmoid(scorer.logit(emb));
    if atom.is_negated() {
        1.0 - mu
    } else {
        mu
    }
}

/// One scorer per predicate key, shared by every rule that mentions it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredicateRegistry {
    input_dim: usize,
    hidden_dim: usize,
    lr: f64,
    seed: u64,
    scorers: BTreeMap<String, PredicateScorer>,
}

impl PredicateRegistry {
    pub fn new(input_dim: usize, hidden_dim: usize, lr: f64, seed: u64) -> Self {
        Self { input_dim, hidden_dim, lr, seed, scorers: BTreeMap::new() }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// Create the scorer for `key` if missing. The first layer is random
    /// (seeded by registry seed and key); the output layer starts at zero so
    /// every fresh predicate reports exactly 0.5.
    pub fn register(&mut self, key: &str) -> &mut PredicateScorer {
        let (input, hidden, lr, seed) = (self.input_dim, self.hidden_dim, self.lr, self.seed);
        self.scorers.entry(key.to_string()).or_insert_with(|| {
            let mut h = FnvHasher::default();
            h.write(key.as_bytes());
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ h.finish());
            let mut net = Mlp::new(input, hidden, 1, &mut rng);
            net.w2_mut().iter_mut().for_each(|w| *w = 0.0);
            net.b2_mut().iter_mut().for_each(|b| *b = 0.0);
            let adam = AdamState::new(net.num_params(), AdamConfig::with_lr(lr));
            PredicateScorer { predicate_name: key.to_string(), net, adam }
        })
    }

    pub fn register_rule(&mut self, rule: &SymbolicRule) {
        for c in &rule.conditions {
            self.register(&c.key());
        }
    }

    pub fn get(&self, key: &str) -> Option<&PredicateScorer> {
        self.scorers.get(key)
    }

    pub fn get_mut(&mut self, key: &str) -> Option<&mut PredicateScorer> {
        self.scorers.get_mut(key)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.scorers.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.scorers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scorers.is_empty()
    }

    fn scorer(&self, atom: &RuleAtom) -> Result<&PredicateScorer> {
        self.scorers
            .get(&atom.key())
            .ok_or_else(|| Error::config(format!("predicate {} is not registered", atom.key())))
    }

    /// Degree of every condition, in rule order.
    pub fn condition_degrees(&self, rule: &SymbolicRule, emb: &[f64]) -> Result<Vec<f64>> {
        if emb.len() != self.input_dim {
            return Err(Error::contract(format!("embedding has {} dims, scorers expect {}", emb.len(), self.input_dim)));
        }
        rule.conditions
            .iter()
            .map(|c| Ok(predicate_satisfaction(self.scorer(c)?, c, emb)))
            .collect()
    }

    /// Product t-norm over the rule's conditions.
    pub fn rule_satisfaction(&self, rule: &SymbolicRule, emb: &[f64]) -> Result<f64> {
        Ok(t_norm(&self.condition_degrees(rule, emb)?))
    }
}

pub fn t_norm(degrees: &[f64]) -> f64 {
    degrees.iter().product()
}

/// `d t_norm / d logit_l` for each condition given its base sigmoid value
/// and polarity.
pub fn t_norm_logit_gradient(base: &[f64], negated: &[bool]) -> Vec<f64> {
    let degrees: Vec<f64> = base.iter().zip(negated).map(|(&m, &n)| if n { 1.0 - m } else { m }).collect();
    (0..base.len())
        .map(|l| {
            let others: f64 = degrees.iter().enumerate().filter(|(j, _)| *j != l).map(|(_, d)| d).product();
            let sign = if negated[l] { -1.0 } else { 1.0 };
            others * sign * base[l] * (1.0 - base[l])
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingScope {
    /// Every rule is fit on the whole (capped) snapshot.
    WholeSnapshot,
    /// Each rule only sees trajectories hard-assigned to its relation.
    AssignedOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GroundingConfig {
    pub n_symbolic: usize,
    pub scope: TrainingScope,
    /// Most recent trajectories used for predicate training.
    pub max_snapshot: usize,
    pub hidden_dim: usize,
    pub lr: f64,
}

impl Default for GroundingConfig {
    fn default() -> Self {
        Self {
            n_symbolic: 200,
            scope: TrainingScope::WholeSnapshot,
            max_snapshot: 256,
            hidden_dim: DEFAULT_PREDICATE_HIDDEN,
            lr: 1e-3,
        }
    }
}

/// One labelled example for a rule.
#[derive(Debug, Clone)]
pub struct GroundingExample {
    pub embedding: Vec<f64>,
    pub label: f64,
}

/// `y = 1` iff the return beats the snapshot median or the episode
/// succeeded; inverted for rules that predict failure.
pub fn success_labels(trajs: &[&Trajectory]) -> Vec<f64> {
    let mut returns: Vec<f64> = trajs.iter().map(|t| t.episode_return).collect();
    returns.sort_by(f64::total_cmp);
    let median = if returns.is_empty() {
        0.0
    } else if returns.len() % 2 == 1 {
        returns[returns.len() / 2]
    } else {
        0.5 * (returns[returns.len() / 2 - 1] + returns[returns.len() / 2])
    };
    trajs
        .iter()
        .map(|t| if t.episode_return > median || t.terminal_outcome == TerminalOutcome::Success { 1.0 } else { 0.0 })
        .collect()
}

const PROB_FLOOR: f64 = 1e-12;

/// Mean binary cross-entropy of the rules over their examples, plus the
/// gradient w.r.t. every involved scorer's parameters.
pub fn grounding_loss_and_grads(
    registry: &PredicateRegistry,
    rules: &[(&SymbolicRule, Vec<GroundingExample>)],
) -> Result<(f64, BTreeMap<String, Vec<f64>>)> {
    let mut grads: BTreeMap<String, Gradients> = BTreeMap::new();
    let mut loss = 0.0;
    let count: usize = rules.iter().map(|(_, e)| e.len()).sum();
    if count == 0 {
        return Ok((0.0, BTreeMap::new()));
    }
    let n = count as f64;
    let mut act = Activations::default();
    let mut acts: Vec<Activations> = Vec::new();
    for (rule, examples) in rules {
        let scorers: Vec<&PredicateScorer> = rule.conditions.iter().map(|c| registry.scorer(c)).collect::<Result<_>>()?;
        let negated: Vec<bool> = rule.conditions.iter().map(RuleAtom::is_negated).collect();
        for ex in examples {
            acts.clear();
            let mut base = Vec::with_capacity(scorers.len());
            for s in &scorers {
                s.net.forward_into(Input::Dense(&ex.embedding), &mut act);
                base.push(sigmoid(act.output[0]));
                acts.push(act.clone());
            }
            let degrees: Vec<f64> = base.iter().zip(&negated).map(|(&m, &ng)| if ng { 1.0 - m } else { m }).collect();
            let mu = t_norm(&degrees).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
            let y = ex.label;
            loss -= y * mu.ln() + (1.0 - y) * (1.0 - mu).ln();
            let d_mu = (mu - y) / (mu * (1.0 - mu)) / n;
            let d_logits = t_norm_logit_gradient(&base, &negated);
            for ((s, a), dl) in scorers.iter().zip(&acts).zip(d_logits) {
                let g = grads.entry(s.predicate_name.clone()).or_insert_with(|| Gradients::zeros_like(&s.net));
                s.net.backward_into(Input::Dense(&ex.embedding), a, &[d_mu * dl], g)?;
            }
        }
    }
    Ok((loss / n, grads.into_iter().map(|(k, g)| (k, g.params)).collect()))
}

/// Build per-rule example sets from a snapshot according to `scope`.
pub fn grounding_examples<'a>(
    rules: &'a [SymbolicRule],
    trajs: &[&Trajectory],
    hard_assignments: &BTreeMap<crate::envs::TrajId, usize>,
    scope: TrainingScope,
    encoder: &StateEncoder,
) -> Vec<(&'a SymbolicRule, Vec<GroundingExample>)> {
    let labels = success_labels(trajs);
    let embeddings: Vec<Vec<f64>> = trajs.iter().map(|t| trajectory_embedding(t, encoder)).collect();
    let mut out = Vec::new();
    for rule in rules {
        let flip = rule.predicts_failure();
        let examples: Vec<GroundingExample> = trajs
            .iter()
            .enumerate()
            .filter(|(_, t)| match scope {
                TrainingScope::WholeSnapshot => true,
                TrainingScope::AssignedOnly => hard_assignments.get(&t.traj_id) == Some(&rule.relation_id),
            })
            .map(|(i, _)| GroundingExample {
                embedding: embeddings[i].clone(),
                label: if flip { 1.0 - labels[i] } else { labels[i] },
            })
            .collect();
        if examples.is_empty() {
            log::debug!("relation {} has no assigned trajectories; skipped", rule.relation_id);
            continue;
        }
        out.push((rule, examples));
    }
    out
}

/// Full-batch Adam descent on the grounding loss for `n_symbolic`
/// iterations. Returns the loss before each step.
pub fn train_predicates(
    registry: &mut PredicateRegistry,
    rules: &[(&SymbolicRule, Vec<GroundingExample>)],
    n_symbolic: usize,
) -> Result<Vec<f64>> {
    for (rule, _) in rules {
        registry.register_rule(rule);
    }
    let mut trace = Vec::with_capacity(n_symbolic);
    for _ in 0..n_symbolic {
        let (loss, grads) = grounding_loss_and_grads(registry, rules)?;
        if !loss.is_finite() {
            return Err(Error::Training(format!("non-finite grounding loss {loss}")));
        }
        trace.push(loss);
        for (key, g) in grads {
            let scorer = registry.get_mut(&key).expect("registered above");
            let PredicateScorer { net, adam, .. } = scorer;
            adam.step(net.params_mut(), &g)?;
        }
    }
    Ok(trace)
}
