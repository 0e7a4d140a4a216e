//! Rule parsing, learnable predicate scorers, product t-norm satisfaction
//! and the rule lifecycle.

mod grammar;
mod predicates;

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

pub use grammar::{
    parse_atom, parse_rule, strip_list_marker, Polarity, RuleAtom, RuleStatus, SymbolicRule, Vocabulary, MAX_CONDITIONS,
};
pub use predicates::{
    grounding_examples, grounding_loss_and_grads, predicate_satisfaction, success_labels, t_norm, t_norm_logit_gradient,
    train_predicates, trajectory_embedding, GroundingConfig, GroundingExample, PredicateRegistry, PredicateScorer,
    TrainingScope, DEFAULT_PREDICATE_HIDDEN,
};

use crate::error::Result;
use crate::induction::{embed_text, PrototypeBank, ProposalSet};

pub const RETIRE_AFTER_MISSING: u32 = 3;

/// Parse every proposal, bind each parsed rule to its best-aligned
/// prototype and keep the best-aligned rule per relation. Returns the rules
/// in relation order and the number of proposals that failed to parse.
pub fn rules_from_proposals(sets: &[ProposalSet], bank: &PrototypeBank, vocab: &Vocabulary) -> (Vec<SymbolicRule>, usize) {
    let mut best: BTreeMap<usize, (f64, SymbolicRule)> = BTreeMap::new();
    let mut failures = 0;
    for set in sets {
        for text in &set.proposals {
            let (k, score) = bank.nearest(&embed_text(text, bank.dim()));
            match parse_rule(text, k, vocab) {
                Ok(rule) => {
                    let better = best.get(&k).is_none_or(|(s, _)| score > *s);
                    if better {
                        best.insert(k, (score, rule));
                    }
                }
                Err(e) => {
                    log::info!("discarding proposal for trajectory {}: {e}", set.traj_id);
                    failures += 1;
                }
            }
        }
    }
    (best.into_values().map(|(_, r)| r).collect(), failures)
}

/// Merge one induction's rules into the existing set.
///
/// New relation: Added. Different logic: Revised with version + 1.
/// Identical in two consecutive inductions: Active. Absent from
/// [`RETIRE_AFTER_MISSING`] consecutive inductions: Retired.
pub fn reconcile_rules(existing: &[SymbolicRule], incoming: &[SymbolicRule]) -> Vec<SymbolicRule> {
    let mut by_id: BTreeMap<usize, SymbolicRule> = existing.iter().map(|r| (r.relation_id, r.clone())).collect();
    let incoming_ids: BTreeMap<usize, &SymbolicRule> = incoming.iter().map(|r| (r.relation_id, r)).collect();
    for (id, rule) in by_id.iter_mut() {
        if !incoming_ids.contains_key(id) && rule.status != RuleStatus::Retired {
            rule.missing_rounds += 1;
            if rule.missing_rounds >= RETIRE_AFTER_MISSING {
                rule.status = RuleStatus::Retired;
            }
        }
    }
    for (id, new) in incoming_ids {
        let merged = match by_id.get(&id) {
            None => SymbolicRule { status: RuleStatus::Added, version: 1, missing_rounds: 0, ..new.clone() },
            Some(old) if old.status == RuleStatus::Retired => {
                SymbolicRule { status: RuleStatus::Added, version: old.version + 1, missing_rounds: 0, ..new.clone() }
            }
            Some(old) if old.same_logic(new) => {
                SymbolicRule { status: RuleStatus::Active, missing_rounds: 0, ..old.clone() }
            }
            Some(old) => SymbolicRule { status: RuleStatus::Revised, version: old.version + 1, missing_rounds: 0, ..new.clone() },
        };
        by_id.insert(id, merged);
    }
    by_id.into_values().collect()
}

pub fn live_rules(rules: &[SymbolicRule]) -> impl Iterator<Item = &SymbolicRule> {
    rules.iter().filter(|r| r.status != RuleStatus::Retired)
}

/// One line of the rule evolution log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleLogRecord {
    pub epoch: u64,
    pub relation_id: usize,
    pub status: RuleStatus,
    pub version: u32,
    pub text: String,
    pub fol: String,
}

impl RuleLogRecord {
    pub fn from_rule(epoch: u64, rule: &SymbolicRule) -> Self {
        Self {
            epoch,
            relation_id: rule.relation_id,
            status: rule.status,
            version: rule.version,
            text: rule.source_text.clone(),
            fol: rule.fol_text(),
        }
    }
}

pub fn write_rule_log<W: Write>(records: &[RuleLogRecord], mut w: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
