//! Dense row-major f64 tensor.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape/data mismatch"
        );
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Index into a (channels, height, width) tensor.
    #[inline]
    pub fn at3(&self, c: usize, y: usize, x: usize) -> f64 {
        let (_, h, w) = (self.shape[0], self.shape[1], self.shape[2]);
        self.data[(c * h + y) * w + x]
    }

    #[inline]
    pub fn set3(&mut self, c: usize, y: usize, x: usize, v: f64) {
        let (_, h, w) = (self.shape[0], self.shape[1], self.shape[2]);
        self.data[(c * h + y) * w + x] = v;
    }

    /// Flip across the horizontal axis of a (c, h, w) tensor: y -> h-1-y.
    pub fn flipped_y(&self) -> Tensor {
        assert_eq!(self.shape.len(), 3);
        let (c, h, w) = (self.shape[0], self.shape[1], self.shape[2]);
        let mut out = Tensor::zeros(&self.shape);
        for ci in 0..c {
            for y in 0..h {
                for x in 0..w {
                    out.set3(ci, y, x, self.at3(ci, h - 1 - y, x));
                }
            }
        }
        out
    }

    /// Periodic roll of a (c, h, w) tensor by (dy, dx).
    pub fn rolled(&self, dy: usize, dx: usize) -> Tensor {
        assert_eq!(self.shape.len(), 3);
        let (c, h, w) = (self.shape[0], self.shape[1], self.shape[2]);
        let mut out = Tensor::zeros(&self.shape);
        for ci in 0..c {
            for y in 0..h {
                for x in 0..w {
                    out.set3(ci, (y + dy) % h, (x + dx) % w, self.at3(ci, y, x));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roll_and_flip() {
        let t = Tensor::from_vec(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let r = t.rolled(1, 0);
        assert_eq!(r.data(), &[3.0, 4.0, 1.0, 2.0]);
        let f = t.flipped_y();
        assert_eq!(f.data(), &[3.0, 4.0, 1.0, 2.0]);
        assert_eq!(t.rolled(0, 1).data(), &[2.0, 1.0, 4.0, 3.0]);
    }
}
