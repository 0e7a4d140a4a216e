use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::envs::{EnvId, TerminalOutcome};
use crate::error::{Error, Result};
use crate::grounding::{parse_rule, Vocabulary};
use crate::induction::{Proposer, SerializedTrajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StubKind {
    /// Offered first for failed or timed-out episodes.
    Hazard,
    /// Offered first for successful episodes.
    Goal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StubRule {
    pub kind: StubKind,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StubRuleTable {
    pub entries: BTreeMap<EnvId, Vec<StubRule>>,
}

fn rules(items: &[(StubKind, &str)]) -> Vec<StubRule> {
    items.iter().map(|(kind, text)| StubRule { kind: *kind, text: text.to_string() }).collect()
}

impl Default for StubRuleTable {
    fn default() -> Self {
        use StubKind::{Goal, Hazard};
        let mut entries = BTreeMap::new();
        entries.insert(
            EnvId::FrozenLake,
            rules(&[
                (Hazard, "IF NOT at(cell_adjacent_hole) AND action(toward_goal) THEN outcome(success)"),
                (Hazard, "IF at(cell_adjacent_hole) AND action(toward_hole) THEN outcome(failure)"),
                (Goal, "IF at(near_goal) AND action(toward_goal) THEN outcome(success)"),
                (Goal, "IF action(toward_goal) AND NOT visits(repeated_cell) THEN outcome(success)"),
            ]),
        );
        entries.insert(
            EnvId::Taxi,
            rules(&[
                (Hazard, "IF action(illegal_pickup) AND NOT passenger(in_taxi) THEN outcome(failure)"),
                (Hazard, "IF visits(repeated_cell) AND NOT passenger(in_taxi) THEN outcome(timeout)"),
                (Goal, "IF passenger(in_taxi) AND action(toward_destination) THEN outcome(success)"),
                (Goal, "IF taxi(at_passenger) AND action(pickup) THEN outcome(success)"),
            ]),
        );
        entries.insert(
            EnvId::CartPole,
            rules(&[
                (Hazard, "IF pole_angle(large) AND action(push_away_from_lean) THEN outcome(failure)"),
                (Hazard, "IF cart_position(near_edge) AND cart_velocity(high) THEN outcome(failure)"),
                (Goal, "IF pole_angle(small) AND action(push_toward_lean) THEN outcome(success)"),
                (Goal, "IF cart_position(centered) AND pole_velocity(low) THEN outcome(success)"),
            ]),
        );
        entries.insert(
            EnvId::Acrobot,
            rules(&[
                (Hazard, "IF action(torque_against_swing) AND swing(energy_low) THEN outcome(timeout)"),
                (Goal, "IF swing(energy_high) AND action(torque_with_swing) THEN outcome(success)"),
                (Goal, "IF tip_height(high) THEN outcome(success)"),
            ]),
        );
        Self { entries }
    }
}

/// Deterministic proposer backed by a fixed rule table.
#[derive(Debug, Clone)]
pub struct StubProposer {
    table: StubRuleTable,
}

impl StubProposer {
    /// Every entry for `env` must parse under `vocab`.
    pub fn new(table: StubRuleTable, env: EnvId, vocab: &Vocabulary) -> Result<Self> {
        let entries = table
            .entries
            .get(&env)
            .ok_or_else(|| Error::config(format!("stub table has no entry for {}", env.name())))?;
        for r in entries {
            parse_rule(&r.text, 0, vocab).map_err(|e| Error::config(format!("stub rule {:?} is invalid: {e}", r.text)))?;
        }
        Ok(Self { table })
    }

    /// Table order, with the kind matching the episode outcome moved first.
    pub fn ordered(&self, env: EnvId, outcome: TerminalOutcome) -> Result<Vec<String>> {
        let entries = self
            .table
            .entries
            .get(&env)
            .ok_or_else(|| Error::config(format!("stub table has no entry for {}", env.name())))?;
        let first = match outcome {
            TerminalOutcome::Success => StubKind::Goal,
            TerminalOutcome::Failure | TerminalOutcome::Timeout => StubKind::Hazard,
        };
        let (mut lead, rest): (Vec<&StubRule>, Vec<&StubRule>) = entries.iter().partition(|r| r.kind == first);
        lead.extend(rest);
        Ok(lead.into_iter().map(|r| r.text.clone()).collect())
    }
}

impl Proposer for StubProposer {
    fn id(&self) -> &str {
        "stub"
    }

    fn propose(&mut self, x: &SerializedTrajectory, m: usize) -> Result<Vec<String>> {
        let mut out = self.ordered(x.env_id, x.outcome)?;
        out.truncate(m);
        Ok(out)
    }
}
