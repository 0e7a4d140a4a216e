use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Network input: a dense vector or a one-hot index (no dense vector is
/// built for tabular states).
#[derive(Debug, Clone, Copy)]
pub enum Input<'a> {
    Dense(&'a [f64]),
    OneHot { index: usize, dim: usize },
}

impl Input<'_> {
    pub fn dim(&self) -> usize {
        match self {
            Input::Dense(x) => x.len(),
            Input::OneHot { dim, .. } => *dim,
        }
    }
}

/// Two-layer perceptron `w2 · relu(w1 · x + b1) + b2`.
///
/// All parameters live in one flat buffer laid out as `w1` (row-major,
/// hidden × input), `b1`, `w2` (row-major, output × hidden), `b2`, which lets
/// optimizers and checkpoints treat the network as a single slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    input_dim: usize,
    hidden_dim: usize,
    output_dim: usize,
    params: Vec<f64>,
}

/// Gradients with the same flat layout as [`Mlp`] parameters, plus the
/// gradient with respect to the input (dense inputs only).
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub params: Vec<f64>,
    pub input: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self { params: vec![0.0; net.num_params()], input: vec![0.0; net.input_dim] }
    }

    pub fn clear(&mut self) {
        self.params.iter_mut().for_each(|g| *g = 0.0);
        self.input.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().chain(&self.input).all(|g| g.is_finite())
    }
}

/// Cached activations of one forward pass.
#[derive(Debug, Clone, Default)]
pub struct Activations {
    pub pre_hidden: Vec<f64>,
    pub hidden: Vec<f64>,
    pub output: Vec<f64>,
}

impl Mlp {
    pub fn param_count(input_dim: usize, hidden_dim: usize, output_dim: usize) -> usize {
        hidden_dim * input_dim + hidden_dim + output_dim * hidden_dim + output_dim
    }

    pub fn zeros(input_dim: usize, hidden_dim: usize, output_dim: usize) -> Self {
        assert!(input_dim > 0 && hidden_dim > 0 && output_dim > 0, "layer sizes must be positive");
        Self { input_dim, hidden_dim, output_dim, params: vec![0.0; Self::param_count(input_dim, hidden_dim, output_dim)] }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(input_dim: usize, hidden_dim: usize, output_dim: usize, rng: &mut R) -> Self {
        let mut net = Self::zeros(input_dim, hidden_dim, output_dim);
        let a1 = (6.0 / (input_dim + hidden_dim) as f64).sqrt();
        net.w1_mut().iter_mut().for_each(|w| *w = rng.random_range(-a1..a1));
        let a2 = (6.0 / (hidden_dim + output_dim) as f64).sqrt();
        net.w2_mut().iter_mut().for_each(|w| *w = rng.random_range(-a2..a2));
        net
    }

    pub fn from_parts(
        input_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
        w1: &[f64],
        b1: &[f64],
        w2: &[f64],
        b2: &[f64],
    ) -> Result<Self> {
        if w1.len() != hidden_dim * input_dim
            || b1.len() != hidden_dim
            || w2.len() != output_dim * hidden_dim
            || b2.len() != output_dim
        {
            return Err(Error::contract("mlp parameter shapes do not match declared dimensions"));
        }
        let params: Vec<f64> = w1.iter().chain(b1).chain(w2).chain(b2).copied().collect();
        Self::from_flat(input_dim, hidden_dim, output_dim, params)
    }

    pub fn from_flat(input_dim: usize, hidden_dim: usize, output_dim: usize, params: Vec<f64>) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 || output_dim == 0 {
            return Err(Error::contract("mlp layer sizes must be positive"));
        }
        if params.len() != Self::param_count(input_dim, hidden_dim, output_dim) {
            return Err(Error::contract(format!(
                "expected {} parameters, got {}",
                Self::param_count(input_dim, hidden_dim, output_dim),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::contract("mlp parameters must be finite"));
        }
        Ok(Self { input_dim, hidden_dim, output_dim, params })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }
    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }
    pub fn output_dim(&self) -> usize {
        self.output_dim
    }
    pub fn num_params(&self) -> usize {
        self.params.len()
    }
    pub fn params(&self) -> &[f64] {
        &self.params
    }
    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn offsets(&self) -> [usize; 4] {
        let w1 = self.hidden_dim * self.input_dim;
        let b1 = w1 + self.hidden_dim;
        let w2 = b1 + self.output_dim * self.hidden_dim;
        [w1, b1, w2, w2 + self.output_dim]
    }

    pub fn w1(&self) -> &[f64] {
        &self.params[..self.offsets()[0]]
    }
    pub fn b1(&self) -> &[f64] {
        let o = self.offsets();
        &self.params[o[0]..o[1]]
    }
    pub fn w2(&self) -> &[f64] {
        let o = self.offsets();
        &self.params[o[1]..o[2]]
    }
    pub fn b2(&self) -> &[f64] {
        let o = self.offsets();
        &self.params[o[2]..o[3]]
    }
    pub fn w1_mut(&mut self) -> &mut [f64] {
        let o = self.offsets();
        &mut self.params[..o[0]]
    }
    pub fn b1_mut(&mut self) -> &mut [f64] {
        let o = self.offsets();
        &mut self.params[o[0]..o[1]]
    }
    pub fn w2_mut(&mut self) -> &mut [f64] {
        let o = self.offsets();
        &mut self.params[o[1]..o[2]]
    }
    pub fn b2_mut(&mut self) -> &mut [f64] {
        let o = self.offsets();
        &mut self.params[o[2]..o[3]]
    }

    fn check_input(&self, x: &Input) -> Result<()> {
        if x.dim() != self.input_dim {
            return Err(Error::contract(format!("input has length {}, network expects {}", x.dim(), self.input_dim)));
        }
        if let Input::OneHot { index, dim } = x {
            if index >= dim {
                return Err(Error::contract(format!("one-hot index {index} out of range {dim}")));
            }
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_input(Input::Dense(x))?.output)
    }

    pub fn forward_input(&self, x: Input) -> Result<Activations> {
        self.check_input(&x)?;
        let mut act = Activations::default();
        self.forward_into(x, &mut act);
        Ok(act)
    }

    /// Forward pass reusing `act`'s buffers. The input must already be
    /// validated.
    pub(crate) fn forward_into(&self, x: Input, act: &mut Activations) {
        let (h, n_in, n_out) = (self.hidden_dim, self.input_dim, self.output_dim);
        let w1 = self.w1();
        act.pre_hidden.clear();
        act.pre_hidden.extend_from_slice(self.b1());
        match x {
            Input::Dense(x) => {
                for (j, pre) in act.pre_hidden.iter_mut().enumerate() {
                    let row = &w1[j * n_in..(j + 1) * n_in];
                    *pre += row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>();
                }
            }
            Input::OneHot { index, .. } => {
                for (j, pre) in act.pre_hidden.iter_mut().enumerate() {
                    *pre += w1[j * n_in + index];
                }
            }
        }
        act.hidden.clear();
        act.hidden.extend(act.pre_hidden.iter().map(|&z| z.max(0.0)));
        let w2 = self.w2();
        act.output.clear();
        act.output.extend_from_slice(self.b2());
        for (k, out) in act.output.iter_mut().enumerate().take(n_out) {
            let row = &w2[k * h..(k + 1) * h];
            *out += row.iter().zip(&act.hidden).map(|(w, a)| w * a).sum::<f64>();
        }
    }

    /// Exact gradients of `output · upstream` with respect to every
    /// parameter and the input.
    pub fn backward(&self, x: &[f64], upstream: &[f64]) -> Result<Gradients> {
        let act = self.forward_input(Input::Dense(x))?;
        let mut grads = Gradients::zeros_like(self);
        self.backward_into(Input::Dense(x), &act, upstream, &mut grads)?;
        Ok(grads)
    }

    /// Accumulate (add) gradients of `output · upstream` into `grads`, using
    /// activations from a prior forward pass on the same input.
    pub fn backward_into(&self, x: Input, act: &Activations, upstream: &[f64], grads: &mut Gradients) -> Result<()> {
        if upstream.len() != self.output_dim {
            return Err(Error::contract(format!(
                "upstream has length {}, network output is {}",
                upstream.len(),
                self.output_dim
            )));
        }
        self.check_input(&x)?;
        let (h, n_in) = (self.hidden_dim, self.input_dim);
        let o = self.offsets();
        let w2 = self.w2();
        let (g_w1, rest) = grads.params.split_at_mut(o[0]);
        let (g_b1, rest) = rest.split_at_mut(h);
        let (g_w2, g_b2) = rest.split_at_mut(o[2] - o[1]);

        let mut d_hidden = vec![0.0; h];
        for (k, &u) in upstream.iter().enumerate() {
            if u == 0.0 {
                continue;
            }
            g_b2[k] += u;
            let row = &w2[k * h..(k + 1) * h];
            let g_row = &mut g_w2[k * h..(k + 1) * h];
            for j in 0..h {
                g_row[j] += u * act.hidden[j];
                d_hidden[j] += u * row[j];
            }
        }
        let w1 = self.w1();
        for j in 0..h {
            // ReLU derivative; dead units pass no gradient.
            if act.pre_hidden[j] <= 0.0 {
                continue;
            }
            let d = d_hidden[j];
            if d == 0.0 {
                continue;
            }
            g_b1[j] += d;
            match x {
                Input::Dense(x) => {
                    let g_row = &mut g_w1[j * n_in..(j + 1) * n_in];
                    for (g, xi) in g_row.iter_mut().zip(x) {
                        *g += d * xi;
                    }
                    if grads.input.len() == n_in {
                        let row = &w1[j * n_in..(j + 1) * n_in];
                        for (gi, w) in grads.input.iter_mut().zip(row) {
                            *gi += d * w;
                        }
                    }
                }
                Input::OneHot { index, .. } => {
                    g_w1[j * n_in + index] += d;
                    if grads.input.len() == n_in {
                        let row = &w1[j * n_in..(j + 1) * n_in];
                        for (gi, w) in grads.input.iter_mut().zip(row) {
                            *gi += d * w;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Copy all parameters from `other` (same shape).
    pub fn copy_from(&mut self, other: &Mlp) {
        assert_eq!(self.params.len(), other.params.len(), "shape mismatch in copy_from");
        self.params.copy_from_slice(&other.params);
    }

    pub fn same_shape(&self, other: &Mlp) -> bool {
        self.input_dim == other.input_dim && self.hidden_dim == other.hidden_dim && self.output_dim == other.output_dim
    }
}
