//! Layer kinds with explicit forward/backward passes. Layers cache what the
//! backward pass needs and accumulate parameter gradients until reset.

use super::tensor::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum Layer {
    Dense(Dense),
    Relu(Relu),
    PeriodicConv2d(PeriodicConv2d),
    MaxPool2(MaxPool2),
    Flatten(Flatten),
    Standardize(Standardize),
}

impl Layer {
    pub fn forward(&mut self, x: &Tensor) -> Tensor {
        match self {
            Layer::Dense(l) => l.forward(x),
            Layer::Relu(l) => l.forward(x),
            Layer::PeriodicConv2d(l) => l.forward(x),
            Layer::MaxPool2(l) => l.forward(x),
            Layer::Flatten(l) => l.forward(x),
            Layer::Standardize(l) => l.forward(x),
        }
    }

    pub fn backward(&mut self, grad: &Tensor) -> Tensor {
        match self {
            Layer::Dense(l) => l.backward(grad),
            Layer::Relu(l) => l.backward(grad),
            Layer::PeriodicConv2d(l) => l.backward(grad),
            Layer::MaxPool2(l) => l.backward(grad),
            Layer::Flatten(l) => l.backward(grad),
            Layer::Standardize(l) => l.backward(grad),
        }
    }

    /// Trainable parameters and their gradient accumulators, flattened.
    pub fn params(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Layer::Dense(l) => (
                l.w.iter().chain(l.b.iter()).copied().collect(),
                l.gw.iter().chain(l.gb.iter()).copied().collect(),
            ),
            Layer::PeriodicConv2d(l) => (
                l.w.iter().chain(l.b.iter()).copied().collect(),
                l.gw.iter().chain(l.gb.iter()).copied().collect(),
            ),
            _ => (Vec::new(), Vec::new()),
        }
    }

    pub fn set_params(&mut self, flat: &[f64]) {
        match self {
            Layer::Dense(l) => {
                let nw = l.w.len();
                l.w.copy_from_slice(&flat[..nw]);
                l.b.copy_from_slice(&flat[nw..]);
            }
            Layer::PeriodicConv2d(l) => {
                let nw = l.w.len();
                l.w.copy_from_slice(&flat[..nw]);
                l.b.copy_from_slice(&flat[nw..]);
            }
            _ => assert!(flat.is_empty()),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Layer::Dense(l) => l.w.len() + l.b.len(),
            Layer::PeriodicConv2d(l) => l.w.len() + l.b.len(),
            _ => 0,
        }
    }

    pub fn zero_grads(&mut self) {
        match self {
            Layer::Dense(l) => {
                l.gw.fill(0.0);
                l.gb.fill(0.0);
            }
            Layer::PeriodicConv2d(l) => {
                l.gw.fill(0.0);
                l.gb.fill(0.0);
            }
            _ => {}
        }
    }

    /// Sum of squared trainable parameters, weighted by the layer's l2
    /// coefficient, plus the corresponding gradient contribution hook.
    pub fn l2_penalty(&self) -> f64 {
        let lambda = self.lambda();
        if lambda == 0.0 {
            return 0.0;
        }
        let (p, _) = self.params();
        lambda * p.iter().map(|x| x * x).sum::<f64>()
    }

    pub fn lambda(&self) -> f64 {
        match self {
            Layer::Dense(l) => l.lambda,
            Layer::PeriodicConv2d(l) => l.lambda,
            _ => 0.0,
        }
    }

    /// Adds the l2 gradient (2 lambda xi) into the accumulated gradients.
    pub fn add_l2_grads(&mut self) {
        match self {
            Layer::Dense(l) => {
                if l.lambda != 0.0 {
                    for (g, w) in l.gw.iter_mut().zip(&l.w) {
                        *g += 2.0 * l.lambda * w;
                    }
                    for (g, b) in l.gb.iter_mut().zip(&l.b) {
                        *g += 2.0 * l.lambda * b;
                    }
                }
            }
            Layer::PeriodicConv2d(l) => {
                if l.lambda != 0.0 {
                    for (g, w) in l.gw.iter_mut().zip(&l.w) {
                        *g += 2.0 * l.lambda * w;
                    }
                    for (g, b) in l.gb.iter_mut().zip(&l.b) {
                        *g += 2.0 * l.lambda * b;
                    }
                }
            }
            _ => {}
        }
    }
}

fn he_uniform(rng: &mut ChaCha8Rng, fan_in: usize, n: usize) -> Vec<f64> {
    let limit = (6.0 / fan_in as f64).sqrt();
    (0..n).map(|_| rng.random_range(-limit..limit)).collect()
}

/// Fully connected y = W x + b.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub lambda: f64,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    #[serde(skip)]
    gw: Vec<f64>,
    #[serde(skip)]
    gb: Vec<f64>,
    #[serde(skip)]
    cached_input: Vec<f64>,
}

impl Dense {
    pub fn new(in_dim: usize, out_dim: usize, lambda: f64, rng: &mut ChaCha8Rng) -> Self {
        Dense {
            in_dim,
            out_dim,
            lambda,
            w: he_uniform(rng, in_dim, in_dim * out_dim),
            b: vec![0.0; out_dim],
            gw: vec![0.0; in_dim * out_dim],
            gb: vec![0.0; out_dim],
            cached_input: Vec::new(),
        }
    }

    pub fn ensure_buffers(&mut self) {
        if self.gw.len() != self.w.len() {
            self.gw = vec![0.0; self.w.len()];
        }
        if self.gb.len() != self.b.len() {
            self.gb = vec![0.0; self.b.len()];
        }
    }

    fn forward(&mut self, x: &Tensor) -> Tensor {
        assert_eq!(x.len(), self.in_dim, "dense input size");
        self.ensure_buffers();
        self.cached_input = x.data().to_vec();
        let mut out = vec![0.0; self.out_dim];
        for (o, out_v) in out.iter_mut().enumerate() {
            let row = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = self.b[o];
            for (wi, xi) in row.iter().zip(x.data()) {
                acc += wi * xi;
            }
            *out_v = acc;
        }
        Tensor::from_vec(&[self.out_dim], out)
    }

    fn backward(&mut self, grad: &Tensor) -> Tensor {
        assert_eq!(grad.len(), self.out_dim);
        let mut gin = vec![0.0; self.in_dim];
        for (o, &g) in grad.data().iter().enumerate() {
            self.gb[o] += g;
            let row = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
            let grow = &mut self.gw[o * self.in_dim..(o + 1) * self.in_dim];
            for i in 0..self.in_dim {
                grow[i] += g * self.cached_input[i];
                gin[i] += g * row[i];
            }
        }
        Tensor::from_vec(&[self.in_dim], gin)
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Relu {
    #[serde(skip)]
    mask: Vec<bool>,
    #[serde(skip)]
    shape: Vec<usize>,
}

impl Relu {
    pub fn new() -> Self {
        Relu::default()
    }

    fn forward(&mut self, x: &Tensor) -> Tensor {
        self.shape = x.shape().to_vec();
        self.mask = x.data().iter().map(|&v| v > 0.0).collect();
        Tensor::from_vec(
            x.shape(),
            x.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect(),
        )
    }

    fn backward(&mut self, grad: &Tensor) -> Tensor {
        Tensor::from_vec(
            &self.shape,
            grad.data()
                .iter()
                .zip(&self.mask)
                .map(|(&g, &m)| if m { g } else { 0.0 })
                .collect(),
        )
    }
}

/// Convolution over an input wrapped periodically by `pad` on all sides,
/// then evaluated in valid mode: output extent = extent + 2 pad - k + 1.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PeriodicConv2d {
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    pub pad: usize,
    pub lambda: f64,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    #[serde(skip)]
    gw: Vec<f64>,
    #[serde(skip)]
    gb: Vec<f64>,
    #[serde(skip)]
    cached_input: Option<Tensor>,
}

impl PeriodicConv2d {
    pub fn new(in_c: usize, out_c: usize, k: usize, pad: usize, lambda: f64, rng: &mut ChaCha8Rng) -> Self {
        let fan_in = in_c * k * k;
        PeriodicConv2d {
            in_c,
            out_c,
            k,
            pad,
            lambda,
            w: he_uniform(rng, fan_in, out_c * in_c * k * k),
            b: vec![0.0; out_c],
            gw: vec![0.0; out_c * in_c * k * k],
            gb: vec![0.0; out_c],
            cached_input: None,
        }
    }

    pub fn ensure_buffers(&mut self) {
        if self.gw.len() != self.w.len() {
            self.gw = vec![0.0; self.w.len()];
        }
        if self.gb.len() != self.b.len() {
            self.gb = vec![0.0; self.b.len()];
        }
    }

    pub fn out_extent(&self, h: usize, w: usize) -> (usize, usize) {
        (h + 2 * self.pad + 1 - self.k, w + 2 * self.pad + 1 - self.k)
    }

    #[inline]
    fn widx(&self, o: usize, c: usize, ky: usize, kx: usize) -> usize {
        ((o * self.in_c + c) * self.k + ky) * self.k + kx
    }

    fn forward(&mut self, x: &Tensor) -> Tensor {
        assert_eq!(x.shape().len(), 3, "conv input must be (c, h, w)");
        assert_eq!(x.shape()[0], self.in_c, "conv input channels");
        self.ensure_buffers();
        let (h, w) = (x.shape()[1], x.shape()[2]);
        assert!(h >= self.k && w >= self.k, "input smaller than kernel");
        let (oh, ow) = self.out_extent(h, w);
        self.cached_input = Some(x.clone());
        let mut out = Tensor::zeros(&[self.out_c, oh, ow]);
        for o in 0..self.out_c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = self.b[o];
                    for c in 0..self.in_c {
                        for ky in 0..self.k {
                            let iy =
                                (oy + ky + h - (self.pad % h)) % h;
                            for kx in 0..self.k {
                                let ix = (ox + kx + w - (self.pad % w)) % w;
                                acc += self.w[self.widx(o, c, ky, kx)] * x.at3(c, iy, ix);
                            }
                        }
                    }
                    out.set3(o, oy, ox, acc);
                }
            }
        }
        out
    }

    fn backward(&mut self, grad: &Tensor) -> Tensor {
        let x = self.cached_input.as_ref().expect("forward before backward").clone();
        let (h, w) = (x.shape()[1], x.shape()[2]);
        let (oh, ow) = self.out_extent(h, w);
        assert_eq!(grad.shape(), &[self.out_c, oh, ow]);
        let mut gin = Tensor::zeros(x.shape());
        for o in 0..self.out_c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let g = grad.at3(o, oy, ox);
                    if g == 0.0 {
                        continue;
                    }
                    self.gb[o] += g;
                    for c in 0..self.in_c {
                        for ky in 0..self.k {
                            let iy = (oy + ky + h - (self.pad % h)) % h;
                            for kx in 0..self.k {
                                let ix = (ox + kx + w - (self.pad % w)) % w;
                                let wi = self.widx(o, c, ky, kx);
                                self.gw[wi] += g * x.at3(c, iy, ix);
                                let cur = gin.at3(c, iy, ix);
                                gin.set3(c, iy, ix, cur + g * self.w[wi]);
                            }
                        }
                    }
                }
            }
        }
        gin
    }
}

/// 2x2 max pooling with stride 2; ties route the gradient to the first
/// maximal index in scan order.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct MaxPool2 {
    #[serde(skip)]
    argmax: Vec<usize>,
    #[serde(skip)]
    in_shape: Vec<usize>,
}

impl MaxPool2 {
    pub fn new() -> Self {
        MaxPool2::default()
    }

    fn forward(&mut self, x: &Tensor) -> Tensor {
        assert_eq!(x.shape().len(), 3);
        let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let (oh, ow) = (h / 2, w / 2);
        self.in_shape = x.shape().to_vec();
        self.argmax = vec![0; c * oh * ow];
        let mut out = Tensor::zeros(&[c, oh, ow]);
        for ci in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = 0;
                    for ky in 0..2 {
                        for kx in 0..2 {
                            let (iy, ix) = (2 * oy + ky, 2 * ox + kx);
                            let v = x.at3(ci, iy, ix);
                            if v > best {
                                best = v;
                                best_idx = (ci * h + iy) * w + ix;
                            }
                        }
                    }
                    out.set3(ci, oy, ox, best);
                    self.argmax[(ci * oh + oy) * ow + ox] = best_idx;
                }
            }
        }
        out
    }

    fn backward(&mut self, grad: &Tensor) -> Tensor {
        let mut gin = Tensor::zeros(&self.in_shape);
        for (k, &src) in self.argmax.iter().enumerate() {
            gin.data_mut()[src] += grad.data()[k];
        }
        gin
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Flatten {
    #[serde(skip)]
    in_shape: Vec<usize>,
}

impl Flatten {
    pub fn new() -> Self {
        Flatten::default()
    }

    fn forward(&mut self, x: &Tensor) -> Tensor {
        self.in_shape = x.shape().to_vec();
        Tensor::from_vec(&[x.len()], x.data().to_vec())
    }

    fn backward(&mut self, grad: &Tensor) -> Tensor {
        Tensor::from_vec(&self.in_shape, grad.data().to_vec())
    }
}

/// Fixed per-feature standardization (x - mean) / std; not trainable.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Standardize {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardize {
    pub fn identity(dim: usize) -> Self {
        Standardize {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    /// Fits per-feature mean/std over rows; zero-variance features map to
    /// std 1 so they pass through centered.
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        assert!(!rows.is_empty());
        let dim = rows[0].len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let mut std = vec![0.0; dim];
        for r in rows {
            for (s, (v, m)) in std.iter_mut().zip(r.iter().zip(&mean)) {
                *s += (v - m) * (v - m) / n;
            }
        }
        for s in std.iter_mut() {
            *s = s.sqrt();
            if *s == 0.0 {
                *s = 1.0;
            }
        }
        Standardize { mean, std }
    }

    fn forward(&mut self, x: &Tensor) -> Tensor {
        assert_eq!(x.len(), self.mean.len());
        Tensor::from_vec(
            x.shape(),
            x.data()
                .iter()
                .zip(self.mean.iter().zip(&self.std))
                .map(|(&v, (m, s))| (v - m) / s)
                .collect(),
        )
    }

    fn backward(&mut self, grad: &Tensor) -> Tensor {
        Tensor::from_vec(
            grad.shape(),
            grad.data()
                .iter()
                .zip(&self.std)
                .map(|(&g, s)| g / s)
                .collect(),
        )
    }
}
