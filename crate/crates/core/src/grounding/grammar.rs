use std::fmt;

use serde::{Deserialize, Serialize};

use crate::envs::EnvId;
use crate::error::{Error, Result};

pub const MAX_CONDITIONS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negated,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RuleAtom {
    pub predicate_name: String,
    pub args: Vec<String>,
    pub polarity: Polarity,
}

impl RuleAtom {
    pub fn positive(name: &str, args: &[&str]) -> Self {
        Self { predicate_name: name.into(), args: args.iter().map(|a| a.to_string()).collect(), polarity: Polarity::Positive }
    }

    pub fn negated(name: &str, args: &[&str]) -> Self {
        Self { polarity: Polarity::Negated, ..Self::positive(name, args) }
    }

    /// `name(arg,...)` without polarity; the registry key.
    pub fn key(&self) -> String {
        format!("{}({})", self.predicate_name, self.args.join(","))
    }

    pub fn is_negated(&self) -> bool {
        self.polarity == Polarity::Negated
    }
}

impl fmt::Display for RuleAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_negated() {
            f.write_str("NOT ")?;
        }
        f.write_str(&self.key())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RuleStatus {
    Added,
    Revised,
    Active,
    Retired,
}

impl fmt::Display for RuleStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RuleStatus::Added => "ADDED",
            RuleStatus::Revised => "REVISED",
            RuleStatus::Active => "ACTIVE",
            RuleStatus::Retired => "RETIRED",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolicRule {
    pub relation_id: usize,
    pub conditions: Vec<RuleAtom>,
    pub outcome: RuleAtom,
    pub status: RuleStatus,
    pub version: u32,
    pub source_text: String,
    /// Consecutive inductions in which the relation was absent.
    #[serde(default)]
    pub missing_rounds: u32,
}

impl SymbolicRule {
    /// Same conditions and outcome, ignoring bookkeeping fields.
    pub fn same_logic(&self, other: &SymbolicRule) -> bool {
        self.conditions == other.conditions && self.outcome == other.outcome
    }

    /// Whether satisfying the rule predicts a bad episode.
    pub fn predicts_failure(&self) -> bool {
        let o = &self.outcome;
        let bad = o.predicate_name == "outcome" && o.args.iter().any(|a| a == "failure" || a == "timeout");
        let good = o.predicate_name == "outcome" && o.args.iter().any(|a| a == "success");
        (bad && !o.is_negated()) || (good && o.is_negated())
    }

    pub fn grammar_text(&self) -> String {
        let conds: Vec<String> = self.conditions.iter().map(|c| c.to_string()).collect();
        format!("IF {} THEN {}", conds.join(" AND "), self.outcome)
    }

    pub fn fol_text(&self) -> String {
        let lit = |a: &RuleAtom| if a.is_negated() { format!("¬{}", a.key()) } else { a.key() };
        let conds: Vec<String> = self.conditions.iter().map(lit).collect();
        format!("∀τ: {} ⇒ {}", conds.join(" ∧ "), lit(&self.outcome))
    }
}

/// The atoms a proposal may mention for one environment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub atoms: Vec<String>,
}

const OUTCOMES: [&str; 3] = ["outcome(success)", "outcome(failure)", "outcome(timeout)"];

impl Vocabulary {
    pub fn new(atoms: Vec<String>) -> Result<Self> {
        for a in &atoms {
            let atom = parse_atom(a)?;
            if atom.is_negated() || atom.key() != *a {
                return Err(Error::config(format!("vocabulary entry {a:?} is not a canonical atom")));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        if let Some(dup) = atoms.iter().find(|a| !seen.insert(a.as_str())) {
            return Err(Error::config(format!("duplicate vocabulary atom {dup}")));
        }
        Ok(Self { atoms })
    }

    pub fn for_env(env: EnvId) -> Self {
        let specific: &[&str] = match env {
            EnvId::FrozenLake => &[
                "at(start)",
                "at(frozen)",
                "at(cell_adjacent_hole)",
                "at(near_goal)",
                "at(hole)",
                "at(goal)",
                "action(toward_goal)",
                "action(toward_hole)",
                "action(away_from_goal)",
                "visits(repeated_cell)",
            ],
            EnvId::Taxi => &[
                "passenger(waiting)",
                "passenger(in_taxi)",
                "passenger(delivered)",
                "taxi(at_passenger)",
                "taxi(at_destination)",
                "action(pickup)",
                "action(dropoff)",
                "action(illegal_pickup)",
                "action(illegal_dropoff)",
                "action(toward_passenger)",
                "action(toward_destination)",
                "visits(repeated_cell)",
            ],
            EnvId::CartPole => &[
                "pole_angle(small)",
                "pole_angle(large)",
                "pole_velocity(low)",
                "pole_velocity(high)",
                "cart_position(centered)",
                "cart_position(near_edge)",
                "cart_velocity(low)",
                "cart_velocity(high)",
                "action(push_toward_lean)",
                "action(push_away_from_lean)",
            ],
            EnvId::Acrobot => &[
                "tip_height(low)",
                "tip_height(high)",
                "swing(energy_high)",
                "swing(energy_low)",
                "joint_velocity(low)",
                "joint_velocity(high)",
                "action(torque_with_swing)",
                "action(torque_against_swing)",
                "action(torque_zero)",
            ],
        };
        let atoms = specific.iter().chain(OUTCOMES.iter()).map(|s| s.to_string()).collect();
        Self { atoms }
    }

    pub fn contains(&self, key: &str) -> bool {
        self.atoms.iter().any(|a| a == key)
    }
}

fn strip_keyword<'a>(s: &'a str, kw: &str) -> Option<&'a str> {
    let head = s.get(..kw.len())?;
    if head.eq_ignore_ascii_case(kw) {
        let rest = &s[kw.len()..];
        if rest.is_empty() || rest.starts_with(char::is_whitespace) {
            return Some(rest.trim_start());
        }
    }
    None
}

/// Parse `[NOT] name(arg[,arg])`.
pub fn parse_atom(s: &str) -> Result<RuleAtom> {
    let s = s.trim();
    let (polarity, body) = match strip_keyword(s, "NOT") {
        Some(rest) => (Polarity::Negated, rest),
        None => (Polarity::Positive, s),
    };
    let open = body.find('(').ok_or_else(|| Error::Parse(format!("atom {body:?} lacks an argument list")))?;
    if !body.ends_with(')') {
        return Err(Error::Parse(format!("atom {body:?} is not closed")));
    }
    let name = body[..open].trim();
    let valid_ident = |t: &str| !t.is_empty() && t.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
    if !valid_ident(name) || name.starts_with(|c: char| c.is_ascii_digit()) {
        return Err(Error::Parse(format!("bad predicate name {name:?}")));
    }
    let inner = &body[open + 1..body.len() - 1];
    let args: Vec<String> = inner.split(',').map(|a| a.trim().to_string()).collect();
    if args.iter().any(|a| !valid_ident(a)) {
        return Err(Error::Parse(format!("bad argument list in {body:?}")));
    }
    Ok(RuleAtom { predicate_name: name.to_string(), args, polarity })
}

/// Split on whole-word, case-insensitive `sep`.
fn split_keyword<'a>(s: &'a str, sep: &str) -> Vec<&'a str> {
    let lower = s.to_ascii_lowercase();
    let sep = format!(" {} ", sep.to_ascii_lowercase());
    let mut parts = Vec::new();
    let mut start = 0;
    let padded = lower.replace(['\t', '\n'], " ");
    let mut search = 0;
    while let Some(pos) = padded[search..].find(&sep) {
        let at = search + pos;
        parts.push(&s[start..at]);
        start = at + sep.len();
        search = start;
    }
    parts.push(&s[start..]);
    parts
}

/// Bullet or numbering prefixes that chat models commonly add.
pub fn strip_list_marker(line: &str) -> &str {
    let t = line.trim();
    let t = t.trim_start_matches(['-', '*', '•']).trim_start();
    let digits = t.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits > 0 {
        let rest = &t[digits..];
        if let Some(r) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
            return r.trim_start();
        }
    }
    t
}

#[derive(Deserialize)]
struct JsonRule {
    #[serde(alias = "conditions", rename = "if")]
    conditions: Vec<String>,
    #[serde(alias = "outcome", rename = "then")]
    outcome: String,
}

/// Parse one proposal under `IF atom [AND atom]* THEN atom` (or its JSON
/// form `{"if": [...], "then": "..."}`) and check every atom against
/// `vocab`. Conditions beyond the fourth are dropped.
pub fn parse_rule(proposal: &str, relation_id: usize, vocab: &Vocabulary) -> Result<SymbolicRule> {
    let text = strip_list_marker(proposal).trim_end_matches('.').trim();
    let (conditions, outcome) = if text.starts_with('{') {
        let j: JsonRule = serde_json::from_str(text).map_err(|e| Error::Parse(format!("bad JSON rule: {e}")))?;
        let conds = j.conditions.iter().map(|c| parse_atom(c)).collect::<Result<Vec<_>>>()?;
        (conds, parse_atom(&j.outcome)?)
    } else {
        let body = strip_keyword(text, "IF").ok_or_else(|| Error::Parse(format!("proposal lacks IF: {text:?}")))?;
        let padded = format!(" {body}");
        let halves = split_keyword(&padded, "THEN");
        if halves.len() != 2 {
            return Err(Error::Parse(format!("proposal needs exactly one THEN: {text:?}")));
        }
        let cond_text = format!(" {} ", halves[0].trim());
        let conds = split_keyword(&cond_text, "AND")
            .into_iter()
            .map(parse_atom)
            .collect::<Result<Vec<_>>>()?;
        (conds, parse_atom(halves[1])?)
    };
    if conditions.is_empty() {
        return Err(Error::Parse("rule has no conditions".into()));
    }
    for atom in conditions.iter().chain(std::iter::once(&outcome)) {
        if !vocab.contains(&atom.key()) {
            return Err(Error::Parse(format!("unknown atom {}", atom.key())));
        }
    }
    let mut conditions = conditions;
    conditions.truncate(MAX_CONDITIONS);
    Ok(SymbolicRule {
        relation_id,
        conditions,
        outcome,
        status: RuleStatus::Added,
        version: 1,
        source_text: proposal.trim().to_string(),
        missing_rounds: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Vocabulary {
        Vocabulary::for_env(EnvId::FrozenLake)
    }

    #[test]
    fn parses_conjunction() {
        let r = parse_rule("IF at(cell_adjacent_hole) AND action(toward_hole) THEN outcome(failure)", 3, &vocab()).unwrap();
        assert_eq!(r.conditions.len(), 2);
        assert_eq!(r.outcome, RuleAtom::positive("outcome", &["failure"]));
        assert_eq!(r.relation_id, 3);
        assert!(r.predicts_failure());
    }

    #[test]
    fn negation_and_case() {
        let r = parse_rule("if NOT at(cell_adjacent_hole) and action(toward_goal) then outcome(success)", 0, &vocab()).unwrap();
        assert_eq!(r.conditions[0], RuleAtom::negated("at", &["cell_adjacent_hole"]));
        assert!(!r.predicts_failure());
        assert_eq!(r.grammar_text(), "IF NOT at(cell_adjacent_hole) AND action(toward_goal) THEN outcome(success)");
    }

    #[test]
    fn unknown_atom_named() {
        let err = parse_rule("IF at(lava) THEN outcome(failure)", 0, &vocab()).unwrap_err();
        assert!(err.to_string().contains("at(lava)"));
    }

    #[test]
    fn prose_rejected() {
        assert!(matches!(parse_rule("Avoid the holes and head for the goal.", 0, &vocab()), Err(Error::Parse(_))));
    }

    #[test]
    fn json_form_and_truncation() {
        let r = parse_rule(
            r#"{"if": ["at(frozen)", "at(start)", "NOT at(hole)", "action(toward_goal)", "at(near_goal)"], "then": "outcome(success)"}"#,
            1,
            &vocab(),
        )
        .unwrap();
        assert_eq!(r.conditions.len(), 4);
        assert_eq!(r.conditions[2], RuleAtom::negated("at", &["hole"]));
    }

    #[test]
    fn list_markers_tolerated() {
        assert!(parse_rule("2. IF at(goal) THEN outcome(success)", 0, &vocab()).is_ok());
        assert!(parse_rule("- IF at(goal) THEN outcome(success).", 0, &vocab()).is_ok());
    }

    #[test]
    fn fol_rendering() {
        let r = parse_rule("IF NOT at(hole) THEN outcome(success)", 0, &vocab()).unwrap();
        assert_eq!(r.fol_text(), "∀τ: ¬at(hole) ⇒ outcome(success)");
    }

    #[test]
    fn default_vocabularies_are_canonical() {
        for env in [EnvId::FrozenLake, EnvId::Taxi, EnvId::CartPole, EnvId::Acrobot] {
            Vocabulary::new(Vocabulary::for_env(env).atoms).unwrap();
        }
    }
}
