//! Dense tanh network with an identity head, mean-squared-error backpropagation and Adam.

use serde::{Deserialize, Serialize};

use crate::num::Real;
use crate::rng::NoiseStream;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MlpError {
    #[error("expected {expected} inputs, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid layer sizes {0:?}")]
    Layers(Vec<usize>),
    #[error("batch is empty or inconsistent")]
    Batch,
}

/// One affine layer. `weights` is row-major, `outputs x inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<T>,
    pub biases: Vec<T>,
}

impl<T: Real> Layer<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![T::zero(); inputs * outputs],
            biases: vec![T::zero(); outputs],
        }
    }

    fn affine(&self, x: &[T], out: &mut Vec<T>) {
        out.clear();
        for o in 0..self.outputs {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            let mut acc = self.biases[o];
            for (w, v) in row.iter().zip(x) {
                acc += *w * *v;
            }
            out.push(acc);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp<T> {
    pub layers: Vec<Layer<T>>,
}

impl<T: Real> Mlp<T> {
    pub fn zeros(sizes: &[usize]) -> Result<Self, MlpError> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(MlpError::Layers(sizes.to_vec()));
        }
        Ok(Self {
            layers: sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect(),
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(sizes: &[usize], rng: &mut NoiseStream) -> Result<Self, MlpError> {
        let mut m = Self::zeros(sizes)?;
        for l in &mut m.layers {
            let limit = (6.0 / (l.inputs + l.outputs) as f64).sqrt();
            for w in &mut l.weights {
                *w = T::lit(rng.uniform(-limit, limit));
            }
        }
        Ok(m)
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].inputs];
        s.extend(self.layers.iter().map(|l| l.outputs));
        s
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.biases).all(|v| v.is_finite()))
    }

    /// Raw network output (no clamping).
    pub fn forward(&self, x: &[T]) -> Result<Vec<T>, MlpError> {
        if x.len() != self.input_len() {
            return Err(MlpError::Dimension {
                expected: self.input_len(),
                got: x.len(),
            });
        }
        let mut a = x.to_vec();
        let mut z = Vec::new();
        let last = self.layers.len() - 1;
        for (k, l) in self.layers.iter().enumerate() {
            l.affine(&a, &mut z);
            if k < last {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            std::mem::swap(&mut a, &mut z);
        }
        Ok(a)
    }

    /// Output clamped to `[-1, 1]`, as used when driving.
    pub fn predict(&self, x: &[T]) -> Result<Vec<T>, MlpError> {
        let one = T::one();
        Ok(self
            .forward(x)?
            .into_iter()
            .map(|v| v.clamp_to(-one, one))
            .collect())
    }

    /// Mean squared error over the batch and all outputs, and its exact gradient.
    /// Rows are accumulated in order, so the result is deterministic.
    pub fn backward(&self, xs: &[&[T]], ys: &[&[T]]) -> Result<(Mlp<T>, T), MlpError> {
        let out_len = self.layers.last().map_or(0, |l| l.outputs);
        if xs.is_empty() || xs.len() != ys.len() || ys.iter().any(|y| y.len() != out_len) {
            return Err(MlpError::Batch);
        }
        let mut grad = Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Layer::zeros(l.inputs, l.outputs))
                .collect(),
        };
        let scale = T::one() / T::lit((xs.len() * out_len) as f64);
        let two = T::lit(2.0);
        let last = self.layers.len() - 1;
        let mut loss = T::zero();
        let mut acts: Vec<Vec<T>> = Vec::with_capacity(self.layers.len() + 1);
        for (x, y) in xs.iter().zip(ys) {
            if x.len() != self.input_len() {
                return Err(MlpError::Dimension {
                    expected: self.input_len(),
                    got: x.len(),
                });
            }
            acts.clear();
            acts.push(x.to_vec());
            for (k, l) in self.layers.iter().enumerate() {
                let mut z = Vec::with_capacity(l.outputs);
                l.affine(&acts[k], &mut z);
                if k < last {
                    z.iter_mut().for_each(|v| *v = v.tanh());
                }
                acts.push(z);
            }
            let out = &acts[last + 1];
            let mut delta: Vec<T> = out
                .iter()
                .zip(y.iter())
                .map(|(p, t)| {
                    let e = *p - *t;
                    loss += e * e * scale;
                    two * e * scale
                })
                .collect();
            for k in (0..self.layers.len()).rev() {
                let l = &self.layers[k];
                let g = &mut grad.layers[k];
                let input = &acts[k];
                for o in 0..l.outputs {
                    g.biases[o] += delta[o];
                    let row = &mut g.weights[o * l.inputs..(o + 1) * l.inputs];
                    for (gw, a) in row.iter_mut().zip(input) {
                        *gw += delta[o] * *a;
                    }
                }
                if k > 0 {
                    // back through the weights, then through tanh of the previous layer
                    let mut prev = vec![T::zero(); l.inputs];
                    for o in 0..l.outputs {
                        let row = &l.weights[o * l.inputs..(o + 1) * l.inputs];
                        for (p, w) in prev.iter_mut().zip(row) {
                            *p += delta[o] * *w;
                        }
                    }
                    for (p, a) in prev.iter_mut().zip(input) {
                        *p *= T::one() - *a * *a;
                    }
                    delta = prev;
                }
            }
        }
        Ok((grad, loss))
    }

    /// Mean squared error without gradients.
    pub fn loss(&self, xs: &[&[T]], ys: &[&[T]]) -> Result<T, MlpError> {
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(MlpError::Batch);
        }
        let mut total = T::zero();
        let mut count = 0usize;
        for (x, y) in xs.iter().zip(ys) {
            for (p, t) in self.forward(x)?.iter().zip(y.iter()) {
                total += (*p - *t) * (*p - *t);
                count += 1;
            }
        }
        Ok(total / T::lit(count as f64))
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    fn params(&self) -> impl Iterator<Item = &T> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.biases.iter()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam moments, flattened in parameter order.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub step: u64,
}

impl<T: Real> Adam<T> {
    pub fn new(model: &Mlp<T>, config: AdamConfig) -> Self {
        let n = model.parameter_count();
        Self {
            config,
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            step: 0,
        }
    }

    pub fn step(&mut self, model: &mut Mlp<T>, grad: &Mlp<T>) {
        debug_assert_eq!(model.parameter_count(), self.m.len());
        self.step += 1;
        let c = self.config;
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let one = T::one();
        let bc1 = one - b1.powi(self.step as i32);
        let bc2 = one - b2.powi(self.step as i32);
        let (lr, eps) = (T::lit(c.lr), T::lit(c.eps));
        for (((p, g), m), v) in model
            .params_mut()
            .zip(grad.params())
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = b1 * *m + (one - b1) * *g;
            *v = b2 * *v + (one - b2) * *g * *g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Channel;

    #[test]
    fn zero_model_outputs_zero() {
        let m = Mlp::<f64>::zeros(&[37, 64, 32, 16, 2]).unwrap();
        assert_eq!(m.forward(&[0.3; 37]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(
            m.forward(&[0.3; 36]),
            Err(MlpError::Dimension {
                expected: 37,
                got: 36
            })
        );
        assert!(Mlp::<f64>::zeros(&[3]).is_err());
    }

    #[test]
    fn identity_layer() {
        let mut m = Mlp::<f64>::zeros(&[2, 2]).unwrap();
        m.layers[0].weights = vec![1.0, 0.0, 0.0, 1.0];
        assert_eq!(m.forward(&[0.25, -3.0]).unwrap(), vec![0.25, -3.0]);
        assert_eq!(m.predict(&[0.25, -3.0]).unwrap(), vec![0.25, -1.0]);
    }

    #[test]
    fn works_in_single_precision() {
        let m = Mlp::<f32>::init(&[4, 3, 2], &mut NoiseStream::new(1, Channel::Training)).unwrap();
        let x = [0.1f32, 0.2, 0.3, 0.4];
        let (g, loss) = m.backward(&[&x], &[&[0.0, 0.0]]).unwrap();
        assert!(loss >= 0.0 && g.is_finite());
    }

    #[test]
    fn perfect_prediction_has_zero_gradient() {
        let m = Mlp::<f64>::init(&[5, 4, 2], &mut NoiseStream::new(3, Channel::Training)).unwrap();
        let x = [0.1, 0.5, 0.2, 0.9, 0.0];
        let y = m.forward(&x).unwrap();
        let (g, loss) = m.backward(&[&x], &[&y]).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.params().all(|v| *v == 0.0));
    }

    #[test]
    fn adam_zero_gradient_is_a_no_op() {
        let mut m = Mlp::<f64>::init(&[3, 2], &mut NoiseStream::new(3, Channel::Training)).unwrap();
        let before = m.clone();
        let zero = Mlp::<f64>::zeros(&[3, 2]).unwrap();
        let mut adam = Adam::new(&m, AdamConfig::default());
        adam.step(&mut m, &zero);
        assert_eq!(m, before);
        assert_eq!(adam.step, 1);
    }

    #[test]
    fn adam_first_step_moves_each_coordinate_by_lr() {
        let mut m = Mlp::<f64>::zeros(&[2, 2]).unwrap();
        let mut g = Mlp::<f64>::zeros(&[2, 2]).unwrap();
        g.layers[0].weights = vec![3.0, -0.02, 0.0, 1e3];
        g.layers[0].biases = vec![-5.0, 0.5];
        let mut adam = Adam::new(&m, AdamConfig::default());
        adam.step(&mut m, &g);
        // m_hat = g and v_hat = g^2 after correction, so the step is lr * g / (|g| + eps)
        let expect = |g: f64| -1e-3 * g / (g.abs() + 1e-8);
        for (p, g) in m.params().zip(g.params()) {
            assert!((p - expect(*g)).abs() < 1e-15, "{p} vs {}", expect(*g));
        }
    }
}
