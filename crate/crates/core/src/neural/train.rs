//! Mini-batch training with adaptive moment estimation, plus the learning-rate
//! by epoch grid used to select the radiology stub.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{LossKind, Target, ToyModel};
use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub input: Vec<f64>,
    pub target: Target,
}

impl Example {
    pub fn new(input: Vec<f64>, target: Target) -> Self {
        Example { input, target }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(lr: f64, n_params: usize) -> Self {
        Adam {
            lr,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.t);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * grad[i];
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    pub batch_size: usize,
}

impl TrainConfig {
    pub fn new(lr: f64, epochs: usize, seed: u64) -> Self {
        TrainConfig {
            lr,
            epochs,
            seed,
            batch_size: 16,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub model: ToyModel,
    /// Mean per-example loss of each epoch, measured on the batches as seen.
    pub epoch_losses: Vec<f64>,
}

/// Trains a copy of `init`. Examples are reshuffled every epoch from a PRNG
/// seeded with `cfg.seed`, so the result is a pure function of the inputs.
pub fn train(init: &ToyModel, data: &[Example], cfg: &TrainConfig) -> Result<TrainReport> {
    init.validate()?;
    if !(cfg.lr.is_finite() && cfg.lr > 0.0) {
        return Err(Error::Config(format!(
            "learning rate must be positive, got {}",
            cfg.lr
        )));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    if cfg.epochs == 0 {
        return Ok(TrainReport {
            model: init.clone(),
            epoch_losses: Vec::new(),
        });
    }
    if data.is_empty() {
        return Err(Error::Config("no training examples".into()));
    }
    for ex in data {
        if ex.input.len() != init.input_dim {
            return Err(Error::Config(format!(
                "example input has {} values, model expects {}",
                ex.input.len(),
                init.input_dim
            )));
        }
        init.check_target(&ex.target)?;
    }

    let mut model = init.clone();
    let mut adam = Adam::new(cfg.lr, model.num_params());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut grad = vec![0.0; model.num_params()];
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                total += model.accumulate_gradient(&data[i].input, &data[i].target, &mut grad)?;
            }
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            adam.step(&mut model.weights, &grad);
        }
        let mean = total / data.len() as f64;
        if !mean.is_finite() || model.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Divergence { epoch: epoch + 1 });
        }
        epoch_losses.push(mean);
    }
    Ok(TrainReport {
        model,
        epoch_losses,
    })
}

/// Fraction of correct decisions: argmax agreement for categorical models,
/// per-output agreement at the 0.5 threshold for binary ones.
pub fn accuracy(model: &ToyModel, data: &[Example]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Config("accuracy of an empty example set".into()));
    }
    let mut correct = 0usize;
    let mut total = 0usize;
    for ex in data {
        let out = model.outputs(&ex.input)?;
        model.check_target(&ex.target)?;
        match (&ex.target, model.loss_kind) {
            (Target::Class(c), LossKind::CategoricalCe) => {
                total += 1;
                if argmax(&out) == *c {
                    correct += 1;
                }
            }
            (Target::Binary(y), _) => {
                for (p, t) in out.iter().zip(y) {
                    total += 1;
                    if (*p > 0.5) == (*t > 0.5) {
                        correct += 1;
                    }
                }
            }
            _ => unreachable!("target checked above"),
        }
    }
    Ok(correct as f64 / total as f64)
}

/// Index of the largest value, first one on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Independent PRNG seed for stream `index` of a run seeded with `seed`
/// (splitmix64 finalizer).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRun {
    pub index: usize,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    pub final_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub runs: Vec<GridRun>,
    pub best: usize,
    pub best_model: ToyModel,
}

/// Trains one model per (lr, epochs) pair, lr-major, and keeps the one with
/// the highest validation accuracy (earliest grid entry on ties). Runs go on
/// separate threads; each draws from its own seed stream.
pub fn grid_search(
    init: &ToyModel,
    train_set: &[Example],
    val_set: &[Example],
    lrs: &[f64],
    epochs: &[usize],
    seed: u64,
    batch_size: usize,
) -> Result<GridOutcome> {
    if lrs.is_empty() || epochs.is_empty() {
        return Err(Error::Config(
            "learning-rate and epoch grids must be nonempty".into(),
        ));
    }
    let settings: Vec<(f64, usize)> = lrs
        .iter()
        .flat_map(|&lr| epochs.iter().map(move |&e| (lr, e)))
        .collect();

    let results: Vec<Result<(GridRun, ToyModel)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = settings
            .iter()
            .enumerate()
            .map(|(index, &(lr, ep))| {
                scope.spawn(move || {
                    let run_seed = derive_seed(seed, index as u64);
                    let cfg = TrainConfig {
                        lr,
                        epochs: ep,
                        seed: run_seed,
                        batch_size,
                    };
                    let report = train(init, train_set, &cfg)?;
                    let val_accuracy = accuracy(&report.model, val_set)?;
                    let run = GridRun {
                        index,
                        lr,
                        epochs: ep,
                        seed: run_seed,
                        final_loss: report.epoch_losses.last().copied().unwrap_or(f64::NAN),
                        val_accuracy,
                    };
                    Ok((run, report.model))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("grid worker panicked"))
            .collect()
    });

    let mut runs = Vec::with_capacity(results.len());
    let mut models = Vec::with_capacity(results.len());
    for r in results {
        let (run, model) = r?;
        runs.push(run);
        models.push(model);
    }
    let mut best = 0;
    for (i, run) in runs.iter().enumerate() {
        if run.val_accuracy > runs[best].val_accuracy {
            best = i;
        }
    }
    let best_model = models.swap_remove(best);
    Ok(GridOutcome {
        runs,
        best,
        best_model,
    })
}
