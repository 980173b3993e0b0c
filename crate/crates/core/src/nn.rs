//! Dense layers, activations, losses and optimizers shared by the forecaster
//! and the actor-critic. Parameters are plain `Vec<f64>` so that whole models
//! flatten into a single vector for optimizers and checkpoints.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fully-connected layer `y = Wx + b` with `W` stored row-major (out × in).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub input: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    /// Glorot-uniform weights in ±√(6/(in+out)), zero bias.
    pub fn glorot<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let weights = (0..in_dim * out_dim)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        Self {
            in_dim,
            out_dim,
            weights,
            bias: vec![0.0; out_dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut layer = Self::zeros(dim, dim);
        for i in 0..dim {
            layer.weights[i * dim + i] = 1.0;
        }
        layer
    }

    pub fn param_count(&self) -> usize {
        self.in_dim * self.out_dim + self.out_dim
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.in_dim {
            return Err(Error::ShapeMismatch {
                context: "dense input",
                expected: self.in_dim,
                got: x.len(),
            });
        }
        Ok(self.forward_unchecked(x))
    }

    pub(crate) fn forward_unchecked(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.in_dim)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + b)
            .collect()
    }

    pub fn backward(&self, x: &[f64], upstream: &[f64]) -> Result<DenseGrads> {
        if x.len() != self.in_dim {
            return Err(Error::ShapeMismatch {
                context: "dense input",
                expected: self.in_dim,
                got: x.len(),
            });
        }
        if upstream.len() != self.out_dim {
            return Err(Error::ShapeMismatch {
                context: "dense upstream",
                expected: self.out_dim,
                got: upstream.len(),
            });
        }
        let mut weights = vec![0.0; self.weights.len()];
        let mut input = vec![0.0; self.in_dim];
        for (o, &u) in upstream.iter().enumerate() {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let grow = &mut weights[o * self.in_dim..(o + 1) * self.in_dim];
            for i in 0..self.in_dim {
                grow[i] = u * x[i];
                input[i] += row[i] * u;
            }
        }
        Ok(DenseGrads {
            weights,
            bias: upstream.to_vec(),
            input,
        })
    }

    pub fn write_flat(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.weights);
        out.extend_from_slice(&self.bias);
    }

    /// Reads this layer's parameters from the front of `src`, returning the rest.
    pub fn read_flat<'a>(&mut self, src: &'a [f64]) -> &'a [f64] {
        let (w, rest) = src.split_at(self.weights.len());
        let (b, rest) = rest.split_at(self.bias.len());
        self.weights.copy_from_slice(w);
        self.bias.copy_from_slice(b);
        rest
    }
}

impl DenseGrads {
    pub fn write_flat(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.weights);
        out.extend_from_slice(&self.bias);
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn tanh(x: f64) -> f64 {
    x.tanh()
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(v: &[f64]) -> Vec<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub const CE_EPSILON: f64 = 1e-12;

/// Weighted cross-entropy `−w_y · ln(p_y + 1e−12)` on softmax outputs.
///
/// Returns the loss and its exact gradient with respect to the logits that
/// produced `probs`.
pub fn weighted_cross_entropy(
    probs: &[f64],
    label: usize,
    class_weights: &[f64],
) -> Result<(f64, Vec<f64>)> {
    if label >= probs.len() {
        return Err(Error::InvalidLabel(label));
    }
    if class_weights.len() != probs.len() {
        return Err(Error::ShapeMismatch {
            context: "class weights",
            expected: probs.len(),
            got: class_weights.len(),
        });
    }
    let w = class_weights[label];
    let p = probs[label];
    let loss = -w * (p + CE_EPSILON).ln();
    let scale = -w * p / (p + CE_EPSILON);
    let grad = probs
        .iter()
        .enumerate()
        .map(|(j, &pj)| scale * (if j == label { 1.0 } else { 0.0 } - pj))
        .collect();
    Ok((loss, grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Applied,
    SkippedNonFinite,
}

fn check_step(params: &[f64], grads: &[f64], state_len: usize) -> Result<bool> {
    if params.len() != grads.len() || params.len() != state_len {
        return Err(Error::ShapeMismatch {
            context: "optimizer step",
            expected: state_len,
            got: grads.len().min(params.len()),
        });
    }
    Ok(grads.iter().all(|g| g.is_finite()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rmsprop {
    pub lr: f64,
    pub decay: f64,
    pub eps: f64,
    pub square_avg: Vec<f64>,
    pub skipped: u64,
}

impl Rmsprop {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Self {
            lr,
            decay: 0.99,
            eps: 1e-8,
            square_avg: vec![0.0; n_params],
            skipped: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<StepOutcome> {
        if !check_step(params, grads, self.square_avg.len())? {
            self.skipped += 1;
            return Ok(StepOutcome::SkippedNonFinite);
        }
        for ((p, &g), s) in params.iter_mut().zip(grads).zip(&mut self.square_avg) {
            *s = self.decay * *s + (1.0 - self.decay) * g * g;
            *p -= self.lr * g / (s.sqrt() + self.eps);
        }
        Ok(StepOutcome::Applied)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub skipped: u64,
}

impl Adam {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
            skipped: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<StepOutcome> {
        if !check_step(params, grads, self.m.len())? {
            self.skipped += 1;
            return Ok(StepOutcome::SkippedNonFinite);
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(StepOutcome::Applied)
    }
}

/// Trainable-parameter inventory split into quantum angles and classical weights.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCount {
    pub quantum: usize,
    pub classical: usize,
}

impl ParamCount {
    pub fn total(&self) -> usize {
        self.quantum + self.classical
    }

    pub fn dense(layer: &DenseLayer) -> Self {
        Self {
            quantum: 0,
            classical: layer.param_count(),
        }
    }

    pub fn vqc(spec: &crate::quantum::VqcSpec) -> Self {
        Self {
            quantum: spec.param_count(),
            classical: 0,
        }
    }
}

impl std::ops::Add for ParamCount {
    type Output = ParamCount;
    fn add(self, rhs: Self) -> Self {
        Self {
            quantum: self.quantum + rhs.quantum,
            classical: self.classical + rhs.classical,
        }
    }
}

impl std::iter::Sum for ParamCount {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), |a, b| a + b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::central_gradient;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dense_identity_and_zero_upstream() {
        let layer = DenseLayer::identity(3);
        assert_eq!(layer.forward(&[1.0, -2.0, 0.5]).unwrap(), vec![1.0, -2.0, 0.5]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layer = DenseLayer::glorot(4, 2, &mut rng);
        let g = layer.backward(&[1.0, 2.0, 3.0, 4.0], &[0.0, 0.0]).unwrap();
        assert!(g.weights.iter().chain(&g.bias).chain(&g.input).all(|&v| v == 0.0));
        assert!(layer.forward(&[1.0]).is_err());
    }

    #[test]
    fn dense_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut layer = DenseLayer::glorot(10, 8, &mut rng);
        layer.bias.iter_mut().for_each(|b| *b = rng.random_range(-1.0..1.0));
        let x: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
        let up: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g = layer.backward(&x, &up).unwrap();

        let mut flat = Vec::new();
        layer.write_flat(&mut flat);
        let loss_of_params = |p: &[f64]| {
            let mut l = layer.clone();
            l.read_flat(p);
            l.forward(&x).unwrap().iter().zip(&up).map(|(a, b)| a * b).sum::<f64>()
        };
        let fd = central_gradient(loss_of_params, &flat, 1e-5);
        let mut analytic = Vec::new();
        g.write_flat(&mut analytic);
        for (a, b) in analytic.iter().zip(&fd) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }

        let loss_of_x =
            |xv: &[f64]| layer.forward(xv).unwrap().iter().zip(&up).map(|(a, b)| a * b).sum::<f64>();
        let fd_x = central_gradient(loss_of_x, &x, 1e-5);
        for (a, b) in g.input.iter().zip(&fd_x) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn activation_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_eq!(tanh(0.0), 0.0);
        assert_eq!(softmax(&[0.0, 0.0]), vec![0.5, 0.5]);
        let s = softmax(&[1000.0, 0.0]);
        assert!(s.iter().all(|v| v.is_finite()));
        assert!((s[0] - 1.0).abs() < 1e-12 && s[1] < 1e-300);
        assert!(sigmoid(-800.0).is_finite() && sigmoid(800.0) == 1.0);
    }

    #[test]
    fn cross_entropy_examples() {
        let (loss, _) = weighted_cross_entropy(&[1.0, 0.0], 0, &[1.0, 1.0]).unwrap();
        assert!(loss.abs() < 1e-11);
        let (loss, _) = weighted_cross_entropy(&[0.5, 0.5], 1, &[1.0, 2.0]).unwrap();
        assert!((loss - 2.0 * std::f64::consts::LN_2).abs() < 1e-11);
        assert!(matches!(
            weighted_cross_entropy(&[0.5, 0.5], 2, &[1.0, 1.0]),
            Err(Error::InvalidLabel(2))
        ));
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        let logits = [0.3, -1.2];
        let weights = [0.7, 1.9];
        for label in 0..2 {
            let (_, grad) = weighted_cross_entropy(&softmax(&logits), label, &weights).unwrap();
            let fd = central_gradient(
                |z| weighted_cross_entropy(&softmax(z), label, &weights).unwrap().0,
                &logits,
                1e-5,
            );
            for (a, b) in grad.iter().zip(&fd) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn optimizers_leave_params_on_zero_gradient_or_zero_lr() {
        let mut p = vec![0.5, -1.0];
        let mut rms = Rmsprop::new(2, 5e-3);
        rms.step(&mut p, &[0.0, 0.0]).unwrap();
        assert_eq!(p, vec![0.5, -1.0]);
        let mut adam = Adam::new(2, 1e-5);
        adam.step(&mut p, &[0.0, 0.0]).unwrap();
        assert_eq!(p, vec![0.5, -1.0]);

        let mut rms = Rmsprop::new(2, 0.0);
        let mut adam = Adam::new(2, 0.0);
        rms.step(&mut p, &[0.3, -2.0]).unwrap();
        adam.step(&mut p, &[0.3, -2.0]).unwrap();
        assert_eq!(p, vec![0.5, -1.0]);
    }

    #[test]
    fn constant_gradient_moves_against_sign() {
        let mut p = vec![0.0, 0.0];
        let mut rms = Rmsprop::new(2, 5e-3);
        let mut adam = Adam::new(2, 1e-3);
        let mut q = p.clone();
        for _ in 0..100 {
            rms.step(&mut p, &[1.0, -1.0]).unwrap();
            adam.step(&mut q, &[1.0, -1.0]).unwrap();
        }
        assert!(p[0] < 0.0 && p[1] > 0.0);
        assert!(q[0] < 0.0 && q[1] > 0.0);
    }

    #[test]
    fn rmsprop_quadratic_bowl() {
        // Scalar recurrence for f(w) = w²: at lr = 1e−3 the iterate settles at |w| = 5e−4.
        let mut w = vec![1.0];
        let mut rms = Rmsprop::new(1, 1e-3);
        for _ in 0..10_000 {
            let g = [2.0 * w[0]];
            rms.step(&mut w, &g).unwrap();
        }
        assert!(w[0].abs() < 1e-3, "{}", w[0]);
    }

    #[test]
    fn non_finite_gradients_are_skipped() {
        let mut p = vec![1.0];
        let mut adam = Adam::new(1, 0.1);
        assert_eq!(adam.step(&mut p, &[f64::NAN]).unwrap(), StepOutcome::SkippedNonFinite);
        assert_eq!(p, vec![1.0]);
        assert_eq!(adam.skipped, 1);
        assert_eq!(adam.t, 0);
        assert!(adam.step(&mut p, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn param_counts() {
        let layer = DenseLayer::zeros(10, 8);
        assert_eq!(ParamCount::dense(&layer).classical, 88);
        let spec = crate::quantum::VqcSpec::new(8, 8, 2).unwrap();
        assert_eq!(ParamCount::vqc(&spec).quantum, 16);
    }
}
