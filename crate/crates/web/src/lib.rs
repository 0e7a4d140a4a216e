//! wasm-bindgen surface for the static demo page in `www/`.
//!
//! Each export is a thin wrapper over a plain function so the logic can be
//! tested natively.

use nser_core::envs::{rollout, Cell, EnvId, EnvSpec, Environment, FrozenLakeAction, TerminalOutcome, TrajId};
use nser_core::grounding::{parse_rule, t_norm, SymbolicRule, Vocabulary};
use nser_core::sampling::{replay_distribution, ScoreTable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use wasm_bindgen::prelude::*;

fn table(scores: &[f64]) -> ScoreTable {
    ScoreTable::from_scores(scores.iter().enumerate().map(|(i, &w)| (TrajId(i as u64), w)))
}

pub fn probabilities(scores: &[f64], eta: f64) -> nser_core::Result<Vec<f64>> {
    Ok(replay_distribution(&table(scores), eta)?.probabilities().to_vec())
}

pub fn draw_counts(scores: &[f64], eta: f64, draws: u32, seed: u32) -> nser_core::Result<Vec<u32>> {
    let dist = replay_distribution(&table(scores), eta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.into());
    let mut counts = vec![0u32; dist.len()];
    for _ in 0..draws {
        counts[dist.draw_index(&mut rng)] += 1;
    }
    Ok(counts)
}

fn lake_rule(text: &str) -> nser_core::Result<SymbolicRule> {
    parse_rule(text, 0, &Vocabulary::for_env(EnvId::FrozenLake))
}

pub fn structure(text: &str) -> nser_core::Result<serde_json::Value> {
    let rule = lake_rule(text)?;
    Ok(json!({
        "grammar": rule.grammar_text(),
        "fol": rule.fol_text(),
        "conditions": rule.conditions.iter().map(|c| json!({"key": c.key(), "negated": c.is_negated()})).collect::<Vec<_>>(),
        "outcome": rule.outcome.to_string(),
        "predicts_failure": rule.predicts_failure(),
    }))
}

/// Satisfaction of a rule given one base degree per condition, in order.
pub fn satisfaction(text: &str, degrees: &[f64]) -> nser_core::Result<f64> {
    let rule = lake_rule(text)?;
    if degrees.len() != rule.conditions.len() {
        return Err(nser_core::Error::Config(format!(
            "rule has {} conditions but {} degrees were given",
            rule.conditions.len(),
            degrees.len()
        )));
    }
    let lit: Vec<f64> = rule
        .conditions
        .iter()
        .zip(degrees)
        .map(|(c, &d)| {
            let d = d.clamp(0.0, 1.0);
            if c.is_negated() {
                1.0 - d
            } else {
                d
            }
        })
        .collect();
    Ok(t_norm(&lit))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Visitation {
    pub nrow: usize,
    pub ncol: usize,
    pub cells: Vec<String>,
    pub visits: Vec<u32>,
    pub success: u32,
    pub failure: u32,
    pub timeout: u32,
}

/// Rolls out a policy that, with probability `goal_bias`, takes the move
/// closest to the goal that does not enter a hole, and otherwise acts
/// uniformly at random.
pub fn visitation(slippery: bool, goal_bias: f64, episodes: u32, seed: u32) -> nser_core::Result<Visitation> {
    let spec = EnvSpec::frozen_lake(slippery);
    let env = spec.build()?;
    let Environment::FrozenLake(lake) = &env else { unreachable!() };
    let mut policy_rng = ChaCha8Rng::seed_from_u64(seed.into());
    let mut env_rng = ChaCha8Rng::seed_from_u64(u64::from(seed) ^ 0x9e37_79b9);
    let mut out = Visitation {
        nrow: lake.nrow(),
        ncol: lake.ncol(),
        cells: (0..lake.state_count()).map(|s| lake.cell(s).label().to_string()).collect(),
        visits: vec![0; lake.state_count()],
        success: 0,
        failure: 0,
        timeout: 0,
    };
    let bias = goal_bias.clamp(0.0, 1.0);
    for ep in 0..episodes {
        let traj = rollout(
            &env,
            &spec,
            TrajId(ep.into()),
            |s| {
                let s = s.discrete_index().unwrap_or(0);
                if policy_rng.random::<f64>() < bias {
                    (0..4)
                        .min_by_key(|&a| {
                            let n = lake.move_from(s, FrozenLakeAction::from_index(a).unwrap());
                            (lake.cell(n) == Cell::Hole, lake.goal_distance(n))
                        })
                        .unwrap()
                } else {
                    policy_rng.random_range(0..4)
                }
            },
            spec.max_episode_steps,
            env.reset(0),
            &mut env_rng,
        )?;
        for s in traj.states() {
            if let Some(i) = s.discrete_index() {
                out.visits[i] += 1;
            }
        }
        match traj.terminal_outcome {
            TerminalOutcome::Success => out.success += 1,
            TerminalOutcome::Failure => out.failure += 1,
            TerminalOutcome::Timeout => out.timeout += 1,
        }
    }
    Ok(out)
}

fn js_err(e: nser_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub fn replay_probabilities(scores: Vec<f64>, eta: f64) -> Result<Vec<f64>, JsError> {
    probabilities(&scores, eta).map_err(js_err)
}

#[wasm_bindgen]
pub fn replay_draw_counts(scores: Vec<f64>, eta: f64, draws: u32, seed: u32) -> Result<Vec<u32>, JsError> {
    draw_counts(&scores, eta, draws, seed).map_err(js_err)
}

#[wasm_bindgen]
pub fn rule_vocabulary() -> Vec<String> {
    Vocabulary::for_env(EnvId::FrozenLake).atoms
}

#[wasm_bindgen]
pub fn rule_structure(text: &str) -> Result<String, JsError> {
    structure(text).map(|v| v.to_string()).map_err(js_err)
}

#[wasm_bindgen]
pub fn rule_satisfaction(text: &str, degrees: Vec<f64>) -> Result<f64, JsError> {
    satisfaction(text, &degrees).map_err(js_err)
}

#[wasm_bindgen]
pub fn frozenlake_visitation(slippery: bool, goal_bias: f64, episodes: u32, seed: u32) -> Result<String, JsError> {
    let v = visitation(slippery, goal_bias, episodes, seed).map_err(js_err)?;
    Ok(json!({
        "nrow": v.nrow,
        "ncol": v.ncol,
        "cells": v.cells,
        "visits": v.visits,
        "success": v.success,
        "failure": v.failure,
        "timeout": v.timeout,
    })
    .to_string())
}
