//! Small fully connected network (ReLU hidden layers, linear output) trained
//! with Adam on a squared error restricted to one output per sample.
//!
//! Parameters live in one flat vector. Each layer stores its weight matrix
//! (row-major, `out x in`) followed by its bias vector.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Hidden widths used for the Q-networks.
pub const HIDDEN_WIDTHS: [usize; 3] = [8, 64, 128];
/// Length of the encoded environment state.
pub const STATE_WIDTH: usize = 4;

const CHECKPOINT_FORMAT: &str = "rebuild-mlp";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("expected input of length {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("architecture mismatch: {0:?} vs {1:?}")]
    ArchitectureMismatch(Vec<usize>, Vec<usize>),
    #[error("network needs at least an input and an output layer, got {0:?}")]
    BadWidths(Vec<usize>),
    #[error("action {action} outside output width {width}")]
    ActionOutOfRange { action: usize, width: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    widths: Vec<usize>,
    params: Vec<f64>,
}

/// One training example: the loss only looks at output `action`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: Vec<f64>,
    pub action: usize,
    pub target: f64,
}

fn param_count(widths: &[usize]) -> usize {
    widths.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
}

impl Network {
    /// All parameters zero.
    pub fn zeros(widths: &[usize]) -> Result<Self, NeuralError> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(NeuralError::BadWidths(widths.to_vec()));
        }
        Ok(Network {
            widths: widths.to_vec(),
            params: vec![0.0; param_count(widths)],
        })
    }

    /// He-uniform weights (limit `sqrt(6 / fan_in)`), zero biases.
    pub fn new(widths: &[usize], seed: u64) -> Result<Self, NeuralError> {
        let mut net = Self::zeros(widths)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut offset = 0;
        for w in widths.windows(2) {
            let (fan_in, out) = (w[0], w[1]);
            let limit = (6.0 / fan_in as f64).sqrt();
            for p in &mut net.params[offset..offset + fan_in * out] {
                *p = rng.gen_range(-limit..limit);
            }
            offset += fan_in * out + out;
        }
        Ok(net)
    }

    /// Q-network for a given action-space size.
    pub fn q_network(actions: usize, seed: u64) -> Result<Self, NeuralError> {
        let mut widths = vec![STATE_WIDTH];
        widths.extend(HIDDEN_WIDTHS);
        widths.push(actions);
        Self::new(&widths, seed)
    }

    pub fn from_parameters(widths: &[usize], params: Vec<f64>) -> Result<Self, NeuralError> {
        let mut net = Self::zeros(widths)?;
        if params.len() != net.params.len() {
            return Err(NeuralError::DimensionMismatch {
                expected: net.params.len(),
                got: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(NeuralError::NonFinite("parameters"));
        }
        net.params = params;
        Ok(net)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn parameters(&self) -> &[f64] {
        &self.params
    }

    /// Mutable parameter access, for tests and perturbation.
    pub fn parameters_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, NeuralError> {
        self.check_input(input)?;
        let mut act = input.to_vec();
        let mut offset = 0;
        let last = self.widths.len() - 2;
        for (l, w) in self.widths.windows(2).enumerate() {
            act = self.layer(offset, w[0], w[1], &act, l < last);
            offset += w[0] * w[1] + w[1];
        }
        Ok(act)
    }

    fn check_input(&self, input: &[f64]) -> Result<(), NeuralError> {
        if input.len() != self.input_width() {
            return Err(NeuralError::DimensionMismatch {
                expected: self.input_width(),
                got: input.len(),
            });
        }
        if input.iter().any(|x| !x.is_finite()) {
            return Err(NeuralError::NonFinite("input"));
        }
        Ok(())
    }

    fn layer(&self, offset: usize, n_in: usize, n_out: usize, x: &[f64], relu: bool) -> Vec<f64> {
        let w = &self.params[offset..offset + n_in * n_out];
        let b = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
        (0..n_out)
            .map(|o| {
                let row = &w[o * n_in..(o + 1) * n_in];
                let z = b[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                if relu {
                    z.max(0.0)
                } else {
                    z
                }
            })
            .collect()
    }

    /// Mean squared error over the batch and its gradient with respect to
    /// every parameter.
    pub fn loss_and_gradient(&self, batch: &[Sample]) -> Result<(f64, Vec<f64>), NeuralError> {
        if batch.is_empty() {
            return Err(NeuralError::EmptyBatch);
        }
        let n_layers = self.widths.len() - 1;
        let mut offsets = Vec::with_capacity(n_layers);
        let mut offset = 0;
        for w in self.widths.windows(2) {
            offsets.push(offset);
            offset += w[0] * w[1] + w[1];
        }

        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        let scale = 1.0 / batch.len() as f64;
        for sample in batch {
            self.check_input(&sample.input)?;
            if sample.action >= self.output_width() {
                return Err(NeuralError::ActionOutOfRange {
                    action: sample.action,
                    width: self.output_width(),
                });
            }
            if !sample.target.is_finite() {
                return Err(NeuralError::NonFinite("target"));
            }
            // activations[l] is the input to layer l
            let mut activations = vec![sample.input.clone()];
            for l in 0..n_layers {
                let next = self.layer(
                    offsets[l],
                    self.widths[l],
                    self.widths[l + 1],
                    &activations[l],
                    l + 1 < n_layers,
                );
                activations.push(next);
            }
            let err = activations[n_layers][sample.action] - sample.target;
            loss += err * err * scale;

            let mut delta = vec![0.0; self.output_width()];
            delta[sample.action] = 2.0 * err * scale;
            for l in (0..n_layers).rev() {
                let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
                let x = &activations[l];
                let wo = offsets[l];
                let bo = wo + n_in * n_out;
                let mut back = vec![0.0; n_in];
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    grad[bo + o] += d;
                    let row = wo + o * n_in;
                    for i in 0..n_in {
                        grad[row + i] += d * x[i];
                        back[i] += d * self.params[row + i];
                    }
                }
                if l > 0 {
                    // x is the ReLU output of the previous layer
                    for (b, &a) in back.iter_mut().zip(x) {
                        if a <= 0.0 {
                            *b = 0.0;
                        }
                    }
                }
                delta = back;
            }
        }
        Ok((loss, grad))
    }

    /// One Adam step on the batch; returns the loss before the update.
    pub fn train_step(&mut self, opt: &mut Adam, batch: &[Sample]) -> Result<f64, NeuralError> {
        let (loss, grad) = self.loss_and_gradient(batch)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(NeuralError::NonFinite("gradient"));
        }
        opt.step(&mut self.params, &grad)?;
        Ok(loss)
    }

    /// Overwrites this network's parameters with `source`'s.
    pub fn copy_from(&mut self, source: &Network) -> Result<(), NeuralError> {
        if self.widths != source.widths {
            return Err(NeuralError::ArchitectureMismatch(
                source.widths.clone(),
                self.widths.clone(),
            ));
        }
        self.params.copy_from_slice(&source.params);
        Ok(())
    }

    pub fn to_checkpoint(&self) -> String {
        serde_json::to_string(&Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            widths: self.widths.clone(),
            parameters: self.params.clone(),
        })
        .expect("checkpoint serializes")
    }

    pub fn from_checkpoint(text: &str) -> Result<Self, NeuralError> {
        let cp: Checkpoint =
            serde_json::from_str(text).map_err(|e| NeuralError::Checkpoint(e.to_string()))?;
        if cp.format != CHECKPOINT_FORMAT || cp.version != CHECKPOINT_VERSION {
            return Err(NeuralError::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                cp.format, cp.version
            )));
        }
        Self::from_parameters(&cp.widths, cp.parameters)
    }

    pub fn save(&self, path: &Path) -> Result<(), NeuralError> {
        std::fs::write(path, self.to_checkpoint())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NeuralError> {
        Self::from_checkpoint(&std::fs::read_to_string(path)?)
    }
}

/// Checkpoint layout: JSON object with `format`, `version`, `widths` and the
/// flat `parameters` vector in layer order (weights row-major, then biases).
#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    widths: Vec<usize>,
    parameters: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl Adam {
    pub fn new(net: &Network, learning_rate: f64) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
            m: vec![0.0; net.params.len()],
            v: vec![0.0; net.params.len()],
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<(), NeuralError> {
        if grad.len() != self.m.len() {
            return Err(NeuralError::DimensionMismatch {
                expected: self.m.len(),
                got: grad.len(),
            });
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

/// Largest relative error between backprop and central differences.
pub fn gradient_check(net: &Network, batch: &[Sample], h: f64) -> Result<f64, NeuralError> {
    let (_, analytic) = net.loss_and_gradient(batch)?;
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for i in 0..net.params.len() {
        let orig = probe.params[i];
        probe.params[i] = orig + h;
        let up = probe.loss_and_gradient(batch)?.0;
        probe.params[i] = orig - h;
        let down = probe.loss_and_gradient(batch)?.0;
        probe.params[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let denom = analytic[i].abs().max(numeric.abs());
        // absolute floor: both sides vanish for dead units
        if denom > 1e-7 {
            worst = worst.max((analytic[i] - numeric).abs() / denom);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_network_outputs_zero() {
        let net = Network::zeros(&[4, 8, 3]).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 3.0, 0.5]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn hand_computed_single_layer() {
        // W = [[1, 2], [0, -1]], b = [0.5, 1]
        let net = Network::from_parameters(&[2, 2], vec![1.0, 2.0, 0.0, -1.0, 0.5, 1.0]).unwrap();
        assert_eq!(net.forward(&[1.0, 2.0]).unwrap(), vec![5.5, -1.0]);
    }

    #[test]
    fn hidden_relu_clamps() {
        // one hidden unit: h = relu(-x), y = 3h + 1
        let net = Network::from_parameters(&[1, 1, 1], vec![-1.0, 0.0, 3.0, 1.0]).unwrap();
        assert_eq!(net.forward(&[2.0]).unwrap(), vec![1.0]);
        assert_eq!(net.forward(&[-2.0]).unwrap(), vec![7.0]);
    }

    #[test]
    fn seeded_init_is_reproducible() {
        let a = Network::q_network(5, 9).unwrap();
        let b = Network::q_network(5, 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, Network::q_network(5, 10).unwrap());
        assert_eq!(a.widths(), &[4, 8, 64, 128, 5]);
        let x = [0.1, 0.2, 0.3, 0.4];
        assert_eq!(a.forward(&x).unwrap(), a.forward(&x).unwrap());
    }

    #[test]
    fn rejects_bad_input() {
        let net = Network::q_network(3, 1).unwrap();
        assert!(matches!(
            net.forward(&[1.0]),
            Err(NeuralError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            net.forward(&[1.0, f64::NAN, 0.0, 0.0]),
            Err(NeuralError::NonFinite(_))
        ));
    }

    #[test]
    fn analytic_two_parameter_gradient() {
        // y = w x + b, loss = (y - t)^2
        let net = Network::from_parameters(&[1, 1], vec![2.0, 1.0]).unwrap();
        let batch = [Sample {
            input: vec![3.0],
            action: 0,
            target: 4.0,
        }];
        let (loss, grad) = net.loss_and_gradient(&batch).unwrap();
        // y = 7, err = 3
        assert_eq!(loss, 9.0);
        assert_eq!(grad, vec![2.0 * 3.0 * 3.0, 2.0 * 3.0]);
        assert!(gradient_check(&net, &batch, 1e-5).unwrap() < 1e-6);
    }

    #[test]
    fn gradient_check_on_q_network() {
        let net = Network::q_network(6, 3).unwrap();
        let batch: Vec<Sample> = (0..4)
            .map(|k| Sample {
                input: vec![0.1 * k as f64, 0.9, 0.5 - 0.1 * k as f64, 0.3],
                action: k % 6,
                target: k as f64,
            })
            .collect();
        assert!(gradient_check(&net, &batch, 1e-5).unwrap() < 1e-4);
    }

    #[test]
    fn perfect_prediction_has_zero_loss() {
        let mut net = Network::q_network(3, 4).unwrap();
        let input = vec![0.2, 0.4, 0.6, 0.8];
        let q = net.forward(&input).unwrap();
        let before = net.clone();
        let mut opt = Adam::new(&net, 0.001);
        let loss = net
            .train_step(
                &mut opt,
                &[Sample {
                    input,
                    action: 1,
                    target: q[1],
                }],
            )
            .unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(net, before);
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let mut net = Network::q_network(3, 4).unwrap();
        let before = net.clone();
        let mut opt = Adam::new(&net, 0.0);
        net.train_step(
            &mut opt,
            &[Sample {
                input: vec![1.0; 4],
                action: 2,
                target: 10.0,
            }],
        )
        .unwrap();
        assert_eq!(net, before);
        assert_eq!(opt.steps(), 1);
    }

    #[test]
    fn loss_descends_on_a_linear_fixture() {
        let mut net = Network::new(&[2, 1], 5).unwrap();
        let mut opt = Adam::new(&net, 0.01);
        let batch: Vec<Sample> = [(1.0, 0.0, 2.0), (0.0, 1.0, -1.0), (1.0, 1.0, 1.0)]
            .iter()
            .map(|&(a, b, t)| Sample {
                input: vec![a, b],
                action: 0,
                target: t,
            })
            .collect();
        let mut last = f64::INFINITY;
        for _ in 0..100 {
            let loss = net.train_step(&mut opt, &batch).unwrap();
            assert!(loss <= last + 1e-12, "{loss} > {last}");
            last = loss;
        }
    }

    #[test]
    fn copy_and_diverge() {
        let mut source = Network::q_network(4, 1).unwrap();
        let mut dest = Network::q_network(4, 2).unwrap();
        dest.copy_from(&source).unwrap();
        assert_eq!(source.parameters(), dest.parameters());
        let x = [0.5; 4];
        assert_eq!(source.forward(&x).unwrap(), dest.forward(&x).unwrap());
        let mut opt = Adam::new(&source, 0.001);
        source
            .train_step(
                &mut opt,
                &[Sample {
                    input: x.to_vec(),
                    action: 0,
                    target: 100.0,
                }],
            )
            .unwrap();
        assert_ne!(source.forward(&x).unwrap(), dest.forward(&x).unwrap());
        let other = Network::q_network(5, 1).unwrap();
        assert!(dest.copy_from(&other).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let net = Network::q_network(7, 11).unwrap();
        let back = Network::from_checkpoint(&net.to_checkpoint()).unwrap();
        assert_eq!(net, back);
        assert!(Network::from_checkpoint("{\"format\":\"x\",\"version\":1,\"widths\":[1,1],\"parameters\":[0,0]}").is_err());
    }
}
