//! Minimal neural stack for the dispersivity regressors: tensors, layers
//! (dense, ReLU, periodic-padding convolution, max-pool), MSE + l2 loss,
//! Adam, Box-Cox target normalization, and training with early stopping.
//! Two builders cover the metrics MLP and the image CNN at configurable
//! widths.

mod adam;
pub mod checkpoint;
mod layers;
mod normalize;
mod tensor;
pub mod train;

pub use adam::{adam_step, AdamParams, AdamState};
pub use layers::{Dense, Flatten, Layer, MaxPool2, PeriodicConv2d, Relu, Standardize};
pub use normalize::{BoxCoxNormalizer, NormalizeError, TargetNormalizer, BOXCOX_SHIFT};
pub use tensor::Tensor;
pub use train::{evaluate_mae, split_dataset, train, NnDataset, SplitIndices, TrainOptions, TrainReport};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("non-finite value after {place}")]
    NonFinite { place: String },
    #[error("normalization error: {0}")]
    Normalize(#[from] NormalizeError),
    #[error("empty split: {0}")]
    EmptySplit(String),
    #[error("training diverged: non-finite loss at epoch {epoch}")]
    DivergedLoss { epoch: usize },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

/// Feed-forward trunk followed by two split heads, one per regression
/// target; predictions are in normalized units and the attached normalizer
/// maps them back to physical values.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Model {
    pub trunk: Vec<Layer>,
    pub heads: [Vec<Layer>; 2],
    pub normalizer: Option<TargetNormalizer>,
}

impl Model {
    /// Forward pass to the two normalized outputs, checking every layer
    /// output for NaN/inf.
    pub fn forward(&mut self, x: &Tensor) -> Result<[f64; 2], NnError> {
        let mut t = x.clone();
        for (k, layer) in self.trunk.iter_mut().enumerate() {
            t = layer.forward(&t);
            if !t.all_finite() {
                return Err(NnError::NonFinite {
                    place: format!("trunk layer {k}"),
                });
            }
        }
        let mut out = [0.0; 2];
        for (hi, head) in self.heads.iter_mut().enumerate() {
            let mut y = t.clone();
            for (k, layer) in head.iter_mut().enumerate() {
                y = layer.forward(&y);
                if !y.all_finite() {
                    return Err(NnError::NonFinite {
                        place: format!("head {hi} layer {k}"),
                    });
                }
            }
            assert_eq!(y.len(), 1, "head must end in a scalar output");
            out[hi] = y.data()[0];
        }
        Ok(out)
    }

    /// Backward pass from output gradients; accumulates parameter gradients.
    pub fn backward(&mut self, grad_out: [f64; 2]) {
        let mut trunk_grad: Option<Tensor> = None;
        for (hi, head) in self.heads.iter_mut().enumerate() {
            let mut g = Tensor::from_vec(&[1], vec![grad_out[hi]]);
            for layer in head.iter_mut().rev() {
                g = layer.backward(&g);
            }
            trunk_grad = Some(match trunk_grad.take() {
                None => g,
                Some(mut acc) => {
                    for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                        *a += b;
                    }
                    acc
                }
            });
        }
        let mut g = trunk_grad.expect("at least one head");
        for layer in self.trunk.iter_mut().rev() {
            g = layer.backward(&g);
        }
    }

    fn all_layers(&self) -> impl Iterator<Item = &Layer> {
        self.trunk.iter().chain(self.heads.iter().flatten())
    }

    fn all_layers_mut(&mut self) -> impl Iterator<Item = &mut Layer> {
        self.trunk.iter_mut().chain(self.heads.iter_mut().flatten())
    }

    pub fn param_count(&self) -> usize {
        self.all_layers().map(|l| l.param_count()).sum()
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in self.all_layers() {
            out.extend(l.params().0);
        }
        out
    }

    pub fn grads_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in self.all_layers() {
            out.extend(l.params().1);
        }
        out
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) {
        let mut off = 0;
        for l in self.all_layers_mut() {
            let n = l.param_count();
            l.set_params(&flat[off..off + n]);
            off += n;
        }
        assert_eq!(off, flat.len());
    }

    pub fn zero_grads(&mut self) {
        for l in self.all_layers_mut() {
            l.zero_grads();
        }
    }

    /// Adds the l2 term gradients (2 lambda xi per layer) to the accumulators.
    pub fn add_l2_grads(&mut self) {
        for l in self.all_layers_mut() {
            l.add_l2_grads();
        }
    }

    /// Sum over layers of lambda_layer * sum(xi^2).
    pub fn l2_penalty(&self) -> f64 {
        self.all_layers().map(|l| l.l2_penalty()).sum()
    }

    /// Physical-unit prediction through the inverse normalizer.
    pub fn predict(&mut self, x: &Tensor) -> Result<[f64; 2], NnError> {
        let norm = self.forward(x)?;
        Ok(match &self.normalizer {
            Some(n) => n.invert(norm),
            None => norm,
        })
    }
}

/// MSE + l2 loss over a batch: (1/n) sum_i |alpha_i - alpha_hat_i|^2 +
/// lambda * sum_j xi_j^2.
pub fn loss_mse_l2(
    preds: &[[f64; 2]],
    targets: &[[f64; 2]],
    params: &[f64],
    lambda: f64,
) -> f64 {
    assert_eq!(preds.len(), targets.len());
    let n = preds.len().max(1) as f64;
    let data: f64 = preds
        .iter()
        .zip(targets)
        .map(|(p, t)| (p[0] - t[0]).powi(2) + (p[1] - t[1]).powi(2))
        .sum::<f64>()
        / n;
    data + lambda * params.iter().map(|x| x * x).sum::<f64>()
}

/// Metrics MLP: input -> standardize -> dense(w1) -> relu -> dense(w2) ->
/// relu -> two heads (dense(head) -> relu -> dense(1)). The full-width
/// configuration (4096/4096/2048) is the same builder with bigger numbers.
pub fn metrics_mlp(
    input_dim: usize,
    widths: (usize, usize, usize),
    lambda: f64,
    standardizer: Standardize,
    seed: u64,
) -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w1, w2, wh) = widths;
    let trunk = vec![
        Layer::Standardize(standardizer),
        Layer::Dense(Dense::new(input_dim, w1, lambda, &mut rng)),
        Layer::Relu(Relu::new()),
        Layer::Dense(Dense::new(w1, w2, lambda, &mut rng)),
        Layer::Relu(Relu::new()),
    ];
    let head = |rng: &mut ChaCha8Rng| {
        vec![
            Layer::Dense(Dense::new(w2, wh, lambda, rng)),
            Layer::Relu(Relu::new()),
            Layer::Dense(Dense::new(wh, 1, lambda, rng)),
        ]
    };
    let heads = [head(&mut rng), head(&mut rng)];
    Model {
        trunk,
        heads,
        normalizer: None,
    }
}

/// Image CNN at reduced width: two periodic-conv blocks with 2x2 pooling,
/// a dense layer, and split heads. Size-preserving padding (k/2) keeps the
/// spatial bookkeeping simple at toy scale.
pub fn image_cnn(
    input_hw: usize,
    filters: (usize, usize),
    dense_width: usize,
    head_width: usize,
    lambda: f64,
    seed: u64,
) -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (f1, f2) = filters;
    let after_pools = input_hw / 4;
    let flat = f2 * after_pools * after_pools;
    let trunk = vec![
        Layer::PeriodicConv2d(PeriodicConv2d::new(1, f1, 3, 1, lambda, &mut rng)),
        Layer::Relu(Relu::new()),
        Layer::MaxPool2(MaxPool2::new()),
        Layer::PeriodicConv2d(PeriodicConv2d::new(f1, f2, 3, 1, lambda, &mut rng)),
        Layer::Relu(Relu::new()),
        Layer::MaxPool2(MaxPool2::new()),
        Layer::Flatten(Flatten::new()),
        Layer::Dense(Dense::new(flat, dense_width, lambda, &mut rng)),
        Layer::Relu(Relu::new()),
    ];
    let head = |rng: &mut ChaCha8Rng| {
        vec![
            Layer::Dense(Dense::new(dense_width, head_width, lambda, rng)),
            Layer::Relu(Relu::new()),
            Layer::Dense(Dense::new(head_width, 1, lambda, rng)),
        ]
    };
    let heads = [head(&mut rng), head(&mut rng)];
    Model {
        trunk,
        heads,
        normalizer: None,
    }
}
