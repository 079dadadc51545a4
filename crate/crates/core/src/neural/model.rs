use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const INIT_SCALE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    /// logits = W x + b
    Linear,
    /// logits = W2 tanh(W1 x + b1) + b2
    Mlp1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Independent sigmoid outputs, summed binary cross-entropy.
    BinaryCe,
    /// Softmax over outputs, categorical cross-entropy.
    CategoricalCe,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    /// One 0/1 label per output (binary cross-entropy models).
    Binary(Vec<f64>),
    /// Index of the true class (categorical models).
    Class(usize),
}

/// A small differentiable classifier with a flat parameter vector.
///
/// Parameter layout, row-major: `Linear` is `W[out][in]` then `b[out]`;
/// `Mlp1` is `W1[hidden][in]`, `b1[hidden]`, `W2[out][hidden]`, `b2[out]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyModel {
    pub arch: Arch,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub loss_kind: LossKind,
    pub weights: Vec<f64>,
}

pub fn param_count(arch: Arch, input_dim: usize, hidden_dim: usize, output_dim: usize) -> usize {
    match arch {
        Arch::Linear => output_dim * input_dim + output_dim,
        Arch::Mlp1 => hidden_dim * input_dim + hidden_dim + output_dim * hidden_dim + output_dim,
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

struct Forward {
    hidden: Vec<f64>,
    logits: Vec<f64>,
}

impl ToyModel {
    /// Builds a model with weights drawn uniformly from `[-INIT_SCALE, INIT_SCALE]`.
    pub fn new(
        arch: Arch,
        input_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
        loss_kind: LossKind,
        seed: u64,
    ) -> Result<Self> {
        let mut model = Self::zeros(arch, input_dim, hidden_dim, output_dim, loss_kind)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for w in &mut model.weights {
            *w = rng.gen_range(-INIT_SCALE..=INIT_SCALE);
        }
        Ok(model)
    }

    pub fn zeros(
        arch: Arch,
        input_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
        loss_kind: LossKind,
    ) -> Result<Self> {
        let model = ToyModel {
            arch,
            input_dim,
            hidden_dim: if arch == Arch::Linear { 0 } else { hidden_dim },
            output_dim,
            loss_kind,
            weights: vec![0.0; param_count(arch, input_dim, hidden_dim, output_dim)],
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::Config(
                "input and output dimensions must be positive".into(),
            ));
        }
        if self.arch == Arch::Mlp1 && self.hidden_dim == 0 {
            return Err(Error::Config(
                "mlp1 needs a positive hidden dimension".into(),
            ));
        }
        if self.loss_kind == LossKind::CategoricalCe && self.output_dim < 2 {
            return Err(Error::Config(
                "categorical models need at least two outputs".into(),
            ));
        }
        let expected = param_count(self.arch, self.input_dim, self.hidden_dim, self.output_dim);
        if self.weights.len() != expected {
            return Err(Error::CorruptModel(format!(
                "expected {expected} parameters, found {}",
                self.weights.len()
            )));
        }
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::CorruptModel("non-finite parameter".into()));
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.weights.len()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::Dimension {
                expected: self.input_dim,
                actual: x.len(),
            });
        }
        Ok(())
    }

    pub fn check_target(&self, target: &Target) -> Result<()> {
        match (self.loss_kind, target) {
            (LossKind::BinaryCe, Target::Binary(y)) if y.len() == self.output_dim => Ok(()),
            (LossKind::CategoricalCe, Target::Class(c)) if *c < self.output_dim => Ok(()),
            (kind, t) => Err(Error::Config(format!(
                "target {t:?} does not fit a {kind:?} model with {} outputs",
                self.output_dim
            ))),
        }
    }

    fn forward(&self, x: &[f64]) -> Forward {
        let (n_in, n_out) = (self.input_dim, self.output_dim);
        let w = &self.weights;
        match self.arch {
            Arch::Linear => {
                let bias = &w[n_out * n_in..];
                let logits = (0..n_out)
                    .map(|o| bias[o] + dot(&w[o * n_in..(o + 1) * n_in], x))
                    .collect();
                Forward {
                    hidden: Vec::new(),
                    logits,
                }
            }
            Arch::Mlp1 => {
                let n_hid = self.hidden_dim;
                let (w1, rest) = w.split_at(n_hid * n_in);
                let (b1, rest) = rest.split_at(n_hid);
                let (w2, b2) = rest.split_at(n_out * n_hid);
                let hidden: Vec<f64> = (0..n_hid)
                    .map(|h| (b1[h] + dot(&w1[h * n_in..(h + 1) * n_in], x)).tanh())
                    .collect();
                let logits = (0..n_out)
                    .map(|o| b2[o] + dot(&w2[o * n_hid..(o + 1) * n_hid], &hidden))
                    .collect();
                Forward { hidden, logits }
            }
        }
    }

    /// Propagates `d_logits` back through the network, accumulating into the
    /// parameter and/or input gradient buffers that are supplied.
    fn backward(
        &self,
        x: &[f64],
        fwd: &Forward,
        d_logits: &[f64],
        mut d_params: Option<&mut [f64]>,
        mut d_input: Option<&mut [f64]>,
    ) {
        let (n_in, n_out) = (self.input_dim, self.output_dim);
        let w = &self.weights;
        match self.arch {
            Arch::Linear => {
                if let Some(g) = d_params.as_deref_mut() {
                    for o in 0..n_out {
                        axpy(d_logits[o], x, &mut g[o * n_in..(o + 1) * n_in]);
                        g[n_out * n_in + o] += d_logits[o];
                    }
                }
                if let Some(dx) = d_input.as_deref_mut() {
                    for o in 0..n_out {
                        axpy(d_logits[o], &w[o * n_in..(o + 1) * n_in], dx);
                    }
                }
            }
            Arch::Mlp1 => {
                let n_hid = self.hidden_dim;
                let w1 = &w[..n_hid * n_in];
                let w2_off = n_hid * n_in + n_hid;
                let w2 = &w[w2_off..w2_off + n_out * n_hid];
                let mut d_pre = vec![0.0; n_hid];
                for o in 0..n_out {
                    axpy(d_logits[o], &w2[o * n_hid..(o + 1) * n_hid], &mut d_pre);
                }
                for (d, a) in d_pre.iter_mut().zip(&fwd.hidden) {
                    *d *= 1.0 - a * a;
                }
                if let Some(g) = d_params {
                    let (g1, rest) = g.split_at_mut(n_hid * n_in);
                    let (gb1, rest) = rest.split_at_mut(n_hid);
                    let (g2, gb2) = rest.split_at_mut(n_out * n_hid);
                    for h in 0..n_hid {
                        axpy(d_pre[h], x, &mut g1[h * n_in..(h + 1) * n_in]);
                        gb1[h] += d_pre[h];
                    }
                    for o in 0..n_out {
                        axpy(
                            d_logits[o],
                            &fwd.hidden,
                            &mut g2[o * n_hid..(o + 1) * n_hid],
                        );
                        gb2[o] += d_logits[o];
                    }
                }
                if let Some(dx) = d_input {
                    for h in 0..n_hid {
                        axpy(d_pre[h], &w1[h * n_in..(h + 1) * n_in], dx);
                    }
                }
            }
        }
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.forward(x).logits)
    }

    /// Sigmoid outputs for binary models, softmax for categorical ones.
    pub fn outputs(&self, x: &[f64]) -> Result<Vec<f64>> {
        let z = self.logits(x)?;
        Ok(match self.loss_kind {
            LossKind::BinaryCe => z.into_iter().map(sigmoid).collect(),
            LossKind::CategoricalCe => softmax(&z),
        })
    }

    fn loss_from_logits(&self, z: &[f64], target: &Target) -> (f64, Vec<f64>) {
        match target {
            Target::Binary(y) => {
                let mut loss = 0.0;
                let grad = z
                    .iter()
                    .zip(y)
                    .map(|(&zi, &yi)| {
                        loss += zi.max(0.0) - zi * yi + (-zi.abs()).exp().ln_1p();
                        sigmoid(zi) - yi
                    })
                    .collect();
                (loss, grad)
            }
            Target::Class(c) => {
                let loss = log_sum_exp(z) - z[*c];
                let mut grad = softmax(z);
                grad[*c] -= 1.0;
                (loss, grad)
            }
        }
    }

    pub fn loss(&self, x: &[f64], target: &Target) -> Result<f64> {
        self.check_input(x)?;
        self.check_target(target)?;
        let z = self.forward(x).logits;
        Ok(self.loss_from_logits(&z, target).0)
    }

    /// Adds the parameter gradient of the per-example loss into `grad` and
    /// returns the loss.
    pub fn accumulate_gradient(&self, x: &[f64], target: &Target, grad: &mut [f64]) -> Result<f64> {
        self.check_input(x)?;
        self.check_target(target)?;
        if grad.len() != self.weights.len() {
            return Err(Error::Dimension {
                expected: self.weights.len(),
                actual: grad.len(),
            });
        }
        let fwd = self.forward(x);
        let (loss, d_logits) = self.loss_from_logits(&fwd.logits, target);
        self.backward(x, &fwd, &d_logits, Some(grad), None);
        Ok(loss)
    }

    pub fn param_gradient(&self, x: &[f64], target: &Target) -> Result<(f64, Vec<f64>)> {
        let mut grad = vec![0.0; self.weights.len()];
        let loss = self.accumulate_gradient(x, target, &mut grad)?;
        Ok((loss, grad))
    }

    /// Gradient of the per-example loss with respect to the input.
    pub fn loss_input_gradient(&self, x: &[f64], target: &Target) -> Result<Vec<f64>> {
        self.check_input(x)?;
        self.check_target(target)?;
        let fwd = self.forward(x);
        let (_, d_logits) = self.loss_from_logits(&fwd.logits, target);
        let mut dx = vec![0.0; self.input_dim];
        self.backward(x, &fwd, &d_logits, None, Some(&mut dx));
        Ok(dx)
    }

    /// Gradient of one output logit with respect to the input.
    pub fn logit_input_gradient(&self, x: &[f64], output: usize) -> Result<Vec<f64>> {
        self.check_input(x)?;
        if output >= self.output_dim {
            return Err(Error::Dimension {
                expected: self.output_dim,
                actual: output,
            });
        }
        let fwd = self.forward(x);
        let mut seed = vec![0.0; self.output_dim];
        seed[output] = 1.0;
        let mut dx = vec![0.0; self.input_dim];
        self.backward(x, &fwd, &seed, None, Some(&mut dx));
        Ok(dx)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: ToyModel = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = ToyModel::new(Arch::Mlp1, 6, 4, 3, LossKind::CategoricalCe, 11).unwrap();
        let b = ToyModel::new(Arch::Mlp1, 6, 4, 3, LossKind::CategoricalCe, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.num_params(), 4 * 6 + 4 + 3 * 4 + 3);
        assert!(a.weights.iter().all(|w| w.abs() <= INIT_SCALE));
    }

    #[test]
    fn zero_models_give_neutral_outputs() {
        let m = ToyModel::zeros(Arch::Linear, 4, 0, 14, LossKind::BinaryCe).unwrap();
        assert!(m.outputs(&[0.3; 4]).unwrap().iter().all(|&p| p == 0.5));
        let m = ToyModel::zeros(Arch::Mlp1, 4, 3, 5, LossKind::CategoricalCe).unwrap();
        assert!(m
            .outputs(&[0.3; 4])
            .unwrap()
            .iter()
            .all(|&p| (p - 0.2).abs() < 1e-15));
    }

    #[test]
    fn mismatched_targets_and_inputs_rejected() {
        let m = ToyModel::zeros(Arch::Linear, 4, 0, 5, LossKind::CategoricalCe).unwrap();
        assert!(m.loss(&[0.0; 4], &Target::Class(5)).is_err());
        assert!(m.loss(&[0.0; 4], &Target::Binary(vec![0.0; 5])).is_err());
        assert!(matches!(
            m.logits(&[0.0; 3]),
            Err(Error::Dimension {
                expected: 4,
                actual: 3
            })
        ));
    }

    #[test]
    fn extreme_logits_keep_loss_finite() {
        let mut m = ToyModel::zeros(Arch::Linear, 1, 0, 1, LossKind::BinaryCe).unwrap();
        m.weights = vec![1000.0, 0.0];
        let loss = m.loss(&[1.0], &Target::Binary(vec![0.0])).unwrap();
        assert!(loss.is_finite() && loss > 999.0);
    }

    #[test]
    fn checkpoint_round_trips_bit_exact() {
        let m = ToyModel::new(Arch::Mlp1, 5, 3, 2, LossKind::BinaryCe, 3).unwrap();
        let back = ToyModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn corrupt_checkpoint_rejected() {
        let mut m = ToyModel::zeros(Arch::Linear, 2, 0, 2, LossKind::BinaryCe).unwrap();
        m.weights.pop();
        let text = serde_json::to_string(&m).unwrap();
        assert!(matches!(
            ToyModel::from_json(&text),
            Err(Error::CorruptModel(_))
        ));
    }
}
