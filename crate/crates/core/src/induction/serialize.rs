use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::envs::{
    taxi_decode, Acrobot, EnvId, EnvSpec, Environment, FrozenLakeAction, State, TaxiAction, TerminalOutcome, TrajId, Trajectory,
    IN_TAXI,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenKind {
    State,
    Action,
    Reward,
}

impl TokenKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TokenKind::State => "state",
            TokenKind::Action => "action",
            TokenKind::Reward => "reward",
        }
    }
}

/// Textual rendering of a trajectory: `s_0, a_0, r_0, s_1, ..., s_T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SerializedTrajectory {
    pub traj_id: TrajId,
    pub env_id: EnvId,
    pub outcome: TerminalOutcome,
    pub episode_return: f64,
    pub text: String,
    pub tokens: Vec<(TokenKind, String)>,
}

impl SerializedTrajectory {
    pub fn count(&self, kind: TokenKind) -> usize {
        self.tokens.iter().filter(|(k, _)| *k == kind).count()
    }
}

const STATION_NAMES: [&str; 4] = ["red", "green", "yellow", "blue"];

pub fn serialize(traj: &Trajectory, spec: &EnvSpec) -> Result<SerializedTrajectory> {
    if traj.is_empty() {
        return Err(Error::contract("cannot serialize an empty trajectory"));
    }
    if traj.env_id != spec.env_id {
        return Err(Error::config(format!(
            "trajectory from {} serialized with a {} spec",
            traj.env_id.name(),
            spec.env_id.name()
        )));
    }
    let env = spec.build()?;
    let mut tokens = Vec::with_capacity(3 * traj.len() + 1);
    for t in &traj.transitions {
        tokens.push((TokenKind::State, state_label(&env, &t.state)?));
        tokens.push((TokenKind::Action, action_label(&env, t.action)?));
        tokens.push((TokenKind::Reward, format!("{}", t.reward)));
    }
    let last = &traj.transitions[traj.len() - 1].next_state;
    tokens.push((TokenKind::State, state_label(&env, last)?));

    let mut text = String::new();
    let _ = writeln!(text, "environment: {}", traj.env_id.name());
    let mut step = 0;
    for (kind, label) in &tokens {
        match kind {
            TokenKind::State => {
                let _ = write!(text, "t={step} state={label}");
            }
            TokenKind::Action => {
                let _ = write!(text, " action={label}");
            }
            TokenKind::Reward => {
                let _ = writeln!(text, " reward={label}");
                step += 1;
            }
        }
    }
    text.push('\n');
    let _ = writeln!(text, "episode_return={} outcome={}", traj.episode_return, traj.terminal_outcome);
    Ok(SerializedTrajectory {
        traj_id: traj.traj_id,
        env_id: traj.env_id,
        outcome: traj.terminal_outcome,
        episode_return: traj.episode_return,
        text,
        tokens,
    })
}

fn state_label(env: &Environment, state: &State) -> Result<String> {
    match (env, state) {
        (Environment::FrozenLake(lake), State::Discrete { index, .. }) if *index < lake.state_count() => {
            let (r, c) = lake.coords(*index);
            Ok(format!("cell({r},{c}):{}", lake.cell(*index).label()))
        }
        (Environment::Taxi(_), State::Discrete { index, .. }) => {
            let s = taxi_decode(*index)?;
            let passenger = if s.passenger == IN_TAXI { "in_taxi" } else { STATION_NAMES[s.passenger] };
            Ok(format!(
                "taxi({},{}):passenger={}:destination={}",
                s.row, s.col, passenger, STATION_NAMES[s.destination]
            ))
        }
        (Environment::CartPole(_), State::Continuous(v)) if v.len() == 4 => Ok(binned(&[
            ("cart_position", v[0], &[(-1.2, "far_left"), (-0.4, "left"), (0.4, "center"), (1.2, "right")], "far_right"),
            ("cart_velocity", v[1], &[(-1.0, "fast_left"), (-0.2, "left"), (0.2, "still"), (1.0, "right")], "fast_right"),
            ("pole_angle", v[2], &[(-0.1, "leaning_left"), (-0.02, "slightly_left"), (0.02, "upright"), (0.1, "slightly_right")], "leaning_right"),
            ("pole_velocity", v[3], &[(-1.0, "falling_left"), (-0.2, "drifting_left"), (0.2, "steady"), (1.0, "drifting_right")], "falling_right"),
        ])),
        (Environment::Acrobot(_), State::Continuous(v)) if v.len() == 4 => {
            let height = Acrobot::tip_height(v);
            let mut s = binned(&[
                ("theta1", v[0], &[(-1.5, "back"), (-0.3, "left"), (0.3, "down"), (1.5, "right")], "up"),
                ("theta2", v[1], &[(-1.5, "folded_back"), (-0.3, "bent_left"), (0.3, "straight"), (1.5, "bent_right")], "folded"),
                ("theta1_velocity", v[2], &[(-3.0, "fast_neg"), (-0.5, "neg"), (0.5, "still"), (3.0, "pos")], "fast_pos"),
                ("theta2_velocity", v[3], &[(-6.0, "fast_neg"), (-1.0, "neg"), (1.0, "still"), (6.0, "pos")], "fast_pos"),
            ]);
            let _ = write!(s, ",tip_height={height:.3}({})", if height > 0.5 { "high" } else if height > -0.5 { "middle" } else { "low" });
            Ok(s)
        }
        _ => Err(Error::contract(format!("state {state:?} does not belong to {}", env.env_id().name()))),
    }
}

type Bins<'a> = &'a [(f64, &'a str)];

fn binned(fields: &[(&str, f64, Bins, &str)]) -> String {
    let mut out = String::new();
    for (i, (name, value, bins, top)) in fields.iter().enumerate() {
        let label = bins.iter().find(|(edge, _)| value < edge).map_or(*top, |(_, l)| l);
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{name}={value:.3}({label})");
    }
    out
}

fn action_label(env: &Environment, action: usize) -> Result<String> {
    let label = match env {
        Environment::FrozenLake(_) => FrozenLakeAction::from_index(action).map(|a| a.label()),
        Environment::Taxi(_) => TaxiAction::from_index(action).map(|a| a.label()),
        Environment::CartPole(_) => ["push_left", "push_right"].get(action).copied(),
        Environment::Acrobot(_) => ["torque_negative", "torque_zero", "torque_positive"].get(action).copied(),
    };
    label
        .map(str::to_string)
        .ok_or_else(|| Error::contract(format!("action {action} invalid for {}", env.env_id().name())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::Transition;

    fn lake_traj() -> Trajectory {
        let t = |s, a, r, n, term| Transition {
            state: State::discrete(s, 16),
            action: a,
            reward: r,
            next_state: State::discrete(n, 16),
            terminated: term,
            truncated: false,
        };
        Trajectory {
            traj_id: TrajId(7),
            env_id: EnvId::FrozenLake,
            transitions: vec![t(0, 2, 0.0, 1, false), t(1, 1, 0.0, 5, true)],
            episode_return: 0.0,
            terminal_outcome: TerminalOutcome::Failure,
        }
    }

    #[test]
    fn frozen_lake_tokens() {
        let x = serialize(&lake_traj(), &EnvSpec::frozen_lake(false)).unwrap();
        assert_eq!(x.tokens[0], (TokenKind::State, "cell(0,0):start".to_string()));
        assert_eq!(x.tokens[1], (TokenKind::Action, "right".to_string()));
        assert_eq!(x.tokens[2], (TokenKind::Reward, "0".to_string()));
        assert_eq!(x.tokens.last().unwrap().1, "cell(1,1):hole");
        assert_eq!(x.count(TokenKind::State), 3);
        assert_eq!(x.count(TokenKind::Action), 2);
        assert_eq!(x.count(TokenKind::Reward), 2);
        assert!(x.text.contains("outcome=failure"));
    }

    #[test]
    fn wrong_env_rejected() {
        assert!(matches!(serialize(&lake_traj(), &EnvSpec::new(EnvId::Taxi)), Err(Error::Config(_))));
    }

    #[test]
    fn cart_pole_bins_and_decimals() {
        let s = State::Continuous(vec![0.0, 0.5, -0.2, 0.0]);
        let env = EnvSpec::new(EnvId::CartPole).build().unwrap();
        let label = state_label(&env, &s).unwrap();
        assert_eq!(
            label,
            "cart_position=0.000(center),cart_velocity=0.500(right),pole_angle=-0.200(leaning_left),pole_velocity=0.000(steady)"
        );
    }
}
