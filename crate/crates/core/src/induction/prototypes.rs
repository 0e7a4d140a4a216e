use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::embed::dot;
use crate::envs::TrajId;
use crate::error::{Error, Result};
use crate::neural::{argmax, log_sum_exp, softmax, AdamConfig, AdamState};

/// K learnable relation prototypes in the text-embedding space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeBank {
    k: usize,
    d: usize,
    pub beta: f64,
    /// Row-major `k × d`.
    params: Vec<f64>,
    adam: AdamState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationAssignment {
    pub traj_id: TrajId,
    pub soft: Vec<f64>,
    pub hard: usize,
}

impl PrototypeBank {
    /// Unit-norm Gaussian directions.
    pub fn new<R: Rng + ?Sized>(k: usize, d: usize, beta: f64, lr: f64, rng: &mut R) -> Result<Self> {
        if k == 0 || d == 0 {
            return Err(Error::config("prototype bank needs K >= 1 and d >= 1"));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::config(format!("beta must be finite and nonnegative, got {beta}")));
        }
        let mut params = Vec::with_capacity(k * d);
        for _ in 0..k {
            let mut row: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            row.iter_mut().for_each(|x| *x /= norm);
            params.extend(row);
        }
        Ok(Self { k, d, beta, adam: AdamState::new(k * d, AdamConfig::with_lr(lr)), params })
    }

    pub fn from_prototypes(prototypes: &[Vec<f64>], beta: f64, lr: f64) -> Result<Self> {
        let k = prototypes.len();
        let d = prototypes.first().map_or(0, Vec::len);
        if k == 0 || d == 0 || prototypes.iter().any(|p| p.len() != d) {
            return Err(Error::contract("prototypes must be a nonempty rectangular set"));
        }
        if prototypes.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::contract("prototypes must be finite"));
        }
        let params = prototypes.concat();
        Ok(Self { k, d, beta, adam: AdamState::new(k * d, AdamConfig::with_lr(lr)), params })
    }

    pub fn k(&self) -> usize {
        self.k
    }
    pub fn dim(&self) -> usize {
        self.d
    }
    pub fn prototype(&self, k: usize) -> &[f64] {
        &self.params[k * self.d..(k + 1) * self.d]
    }
    pub fn params(&self) -> &[f64] {
        &self.params
    }
    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// `s_k = max_u <phi(u), c_k>` and the maximizing proposal per prototype
    /// (lowest index on ties).
    pub fn alignment(&self, embeddings: &[Vec<f64>]) -> (Vec<f64>, Vec<usize>) {
        let mut scores = vec![f64::NEG_INFINITY; self.k];
        let mut arg = vec![0; self.k];
        for k in 0..self.k {
            let c = self.prototype(k);
            for (m, e) in embeddings.iter().enumerate() {
                let s = dot(e, c);
                if s > scores[k] {
                    scores[k] = s;
                    arg[k] = m;
                }
            }
        }
        (scores, arg)
    }

    /// Prototype whose direction best matches a single embedding, with the
    /// cosine score.
    pub fn nearest(&self, embedding: &[f64]) -> (usize, f64) {
        let scores: Vec<f64> = (0..self.k)
            .map(|k| {
                let c = self.prototype(k);
                let norm = dot(c, c).sqrt() * dot(embedding, embedding).sqrt();
                if norm > 0.0 {
                    dot(embedding, c) / norm
                } else {
                    0.0
                }
            })
            .collect();
        let best = argmax(&scores);
        (best, scores[best])
    }

    pub fn soft_assign(&self, traj_id: TrajId, embeddings: &[Vec<f64>]) -> Result<RelationAssignment> {
        if embeddings.is_empty() {
            return Err(Error::contract("soft assignment needs at least one proposal"));
        }
        let (s, _) = self.alignment(embeddings);
        let logits: Vec<f64> = s.iter().map(|x| self.beta * x).collect();
        let soft = softmax(&logits);
        let hard = argmax(&soft);
        Ok(RelationAssignment { traj_id, soft, hard })
    }

    /// `J(c) = sum_tau logsumexp_k(beta * s_k(tau))`.
    pub fn objective(&self, sets: &[Vec<Vec<f64>>]) -> f64 {
        sets.iter()
            .filter(|e| !e.is_empty())
            .map(|e| {
                let (s, _) = self.alignment(e);
                log_sum_exp(&s.iter().map(|x| self.beta * x).collect::<Vec<_>>())
            })
            .sum()
    }

    /// Gradient of `J` w.r.t. the flat prototype parameters, using the
    /// argmax proposal as the subgradient of the inner max.
    pub fn gradient(&self, sets: &[Vec<Vec<f64>>]) -> Vec<f64> {
        let mut grad = vec![0.0; self.params.len()];
        for e in sets.iter().filter(|e| !e.is_empty()) {
            let (s, arg) = self.alignment(e);
            let q = softmax(&s.iter().map(|x| self.beta * x).collect::<Vec<_>>());
            for k in 0..self.k {
                let scale = self.beta * q[k];
                let u = &e[arg[k]];
                for (g, x) in grad[k * self.d..(k + 1) * self.d].iter_mut().zip(u) {
                    *g += scale * x;
                }
            }
        }
        grad
    }

    /// Full-batch Adam ascent on `J` for `steps` iterations. Returns the
    /// objective before each step followed by the final value.
    pub fn update(&mut self, sets: &[Vec<Vec<f64>>], steps: usize) -> Result<Vec<f64>> {
        if sets.iter().all(|e| e.is_empty()) {
            log::warn!("prototype update skipped: no proposals");
            return Ok(Vec::new());
        }
        let mut trace = Vec::with_capacity(steps + 1);
        for _ in 0..steps {
            trace.push(self.objective(sets));
            let neg: Vec<f64> = self.gradient(sets).into_iter().map(|g| -g).collect();
            self.adam.step(&mut self.params, &neg)?;
        }
        trace.push(self.objective(sets));
        Ok(trace)
    }
}
