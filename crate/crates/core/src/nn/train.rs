//! Dataset splitting, mini-batch Adam training with validation-based early
//! stopping and best-weights restore, per-epoch augmentation for image
//! inputs, and denormalized MAE evaluation.

use super::adam::{adam_step, AdamParams, AdamState};
use super::tensor::Tensor;
use super::{Model, NnError};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded shuffle, then 70% / 20% / 10% (training / validation / test);
/// floor sizes for train and val, remainder to test.
pub fn split_dataset(n: usize, seed: u64) -> SplitIndices {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let n_train = (0.7 * n as f64).floor() as usize;
    let n_val = (0.2 * n as f64).floor() as usize;
    SplitIndices {
        train: idx[..n_train].to_vec(),
        val: idx[n_train..n_train + n_val].to_vec(),
        test: idx[n_train + n_val..].to_vec(),
    }
}

#[derive(Clone, Debug)]
pub struct NnDataset {
    pub inputs: Vec<Tensor>,
    /// Raw (physical-unit) targets.
    pub targets: Vec<[f64; 2]>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TrainOptions {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Random x-axis flip or periodic shift per sample per epoch; image
    /// (rank-3) inputs only.
    pub augment: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 400,
            patience: 20,
            seed: 0,
            augment: false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

fn augmented(input: &Tensor, rng: &mut ChaCha8Rng) -> Tensor {
    if input.shape().len() != 3 {
        return input.clone();
    }
    if rng.random_bool(0.5) {
        input.flipped_y()
    } else {
        let (h, w) = (input.shape()[1], input.shape()[2]);
        let dy = rng.random_range(0..h as u64) as usize;
        let dx = rng.random_range(0..w as u64) as usize;
        input.rolled(dy, dx)
    }
}

/// Mean data loss + l2 penalty over an index set (no augmentation).
fn eval_loss(model: &mut Model, data: &NnDataset, idx: &[usize]) -> Result<f64, NnError> {
    let norm = model.normalizer.clone();
    let mut sum = 0.0;
    for &i in idx {
        let p = model.forward(&data.inputs[i])?;
        let t = match &norm {
            Some(n) => n.apply(data.targets[i]),
            None => data.targets[i],
        };
        sum += (p[0] - t[0]).powi(2) + (p[1] - t[1]).powi(2);
    }
    Ok(sum / idx.len() as f64 + model.l2_penalty())
}

/// Mini-batch training against normalized targets with early stopping on
/// the validation loss; restores the best-validation parameters.
pub fn train(
    model: &mut Model,
    data: &NnDataset,
    split: &SplitIndices,
    opts: &TrainOptions,
) -> Result<TrainReport, NnError> {
    if split.train.is_empty() {
        return Err(NnError::EmptySplit("training set".into()));
    }
    if split.val.is_empty() {
        return Err(NnError::EmptySplit("validation set".into()));
    }
    let norm = model.normalizer.clone();
    let to_target = |t: [f64; 2]| match &norm {
        Some(n) => n.apply(t),
        None => t,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut adam = AdamState::new(model.param_count());
    let hp = AdamParams::with_learning_rate(opts.learning_rate);
    let mut order = split.train.clone();
    let mut train_hist = Vec::new();
    let mut val_hist = Vec::new();
    let mut best = (f64::INFINITY, 0usize, model.params_flat());
    let mut stale = 0usize;
    let mut epochs_run = 0usize;
    for epoch in 0..opts.max_epochs {
        epochs_run = epoch + 1;
        order.shuffle(&mut rng);
        let mut epoch_data_loss = 0.0;
        for batch in order.chunks(opts.batch_size) {
            model.zero_grads();
            let nb = batch.len() as f64;
            let mut batch_loss = 0.0;
            for &i in batch {
                let x = if opts.augment {
                    augmented(&data.inputs[i], &mut rng)
                } else {
                    data.inputs[i].clone()
                };
                let p = model.forward(&x)?;
                let t = to_target(data.targets[i]);
                batch_loss += (p[0] - t[0]).powi(2) + (p[1] - t[1]).powi(2);
                model.backward([2.0 * (p[0] - t[0]) / nb, 2.0 * (p[1] - t[1]) / nb]);
            }
            model.add_l2_grads();
            let mut params = model.params_flat();
            let grads = model.grads_flat();
            adam_step(&mut params, &grads, &mut adam, &hp);
            model.set_params_flat(&params);
            epoch_data_loss += batch_loss;
        }
        let train_loss = epoch_data_loss / split.train.len() as f64 + model.l2_penalty();
        let val_loss = eval_loss(model, data, &split.val)?;
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(NnError::DivergedLoss { epoch });
        }
        train_hist.push(train_loss);
        val_hist.push(val_loss);
        if val_loss < best.0 {
            best = (val_loss, epoch, model.params_flat());
            stale = 0;
        } else {
            stale += 1;
            if stale > opts.patience {
                break;
            }
        }
    }
    model.set_params_flat(&best.2);
    Ok(TrainReport {
        train_loss: train_hist,
        val_loss: val_hist,
        best_epoch: best.1,
        epochs_run,
    })
}

/// Per-target mean absolute error in original (denormalized) units.
pub fn evaluate_mae(
    model: &mut Model,
    data: &NnDataset,
    idx: &[usize],
) -> Result<[f64; 2], NnError> {
    if idx.is_empty() {
        return Err(NnError::EmptySplit("evaluation set".into()));
    }
    let mut mae = [0.0; 2];
    for &i in idx {
        let p = model.predict(&data.inputs[i])?;
        mae[0] += (p[0] - data.targets[i][0]).abs();
        mae[1] += (p[1] - data.targets[i][1]).abs();
    }
    let n = idx.len() as f64;
    Ok([mae[0] / n, mae[1] / n])
}
