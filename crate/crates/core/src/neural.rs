//! Differentiable primitives and the optimizer used by the word tagger:
//! narrow 1-D convolution with tanh, max-over-time pooling, highway layer,
//! LSTM cell, sigmoid readout, inverted dropout, global-norm clipping and
//! RMSProp with plateau decay.
//!
//! Everything is 64-bit and deterministic. Batched variants operate on row
//! matrices (one sample per row) and are exact counterparts of the
//! single-sample forms.

use ndarray::{Array1, Array2, ArrayD, Ix1, Ix2};
use rand::Rng;

pub mod ops;
pub mod optim;

/// A named parameter array with its gradient buffer.
#[derive(Debug, Clone)]
pub struct Tensor {
    pub name: String,
    pub value: ArrayD<f64>,
    pub grad: ArrayD<f64>,
}

impl Tensor {
    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Tensor {
        let value = ArrayD::zeros(shape.to_vec());
        let grad = ArrayD::zeros(shape.to_vec());
        Tensor {
            name: name.into(),
            value,
            grad,
        }
    }

    /// Uniform(-scale, scale) initialization.
    pub fn uniform(name: impl Into<String>, shape: &[usize], scale: f64, rng: &mut impl Rng) -> Tensor {
        let mut t = Tensor::zeros(name, shape);
        for v in t.value.iter_mut() {
            *v = rng.random_range(-scale..scale);
        }
        t
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn v1(&self) -> ndarray::ArrayView1<'_, f64> {
        self.value.view().into_dimensionality::<Ix1>().expect("1-d tensor")
    }

    pub fn v2(&self) -> ndarray::ArrayView2<'_, f64> {
        self.value.view().into_dimensionality::<Ix2>().expect("2-d tensor")
    }

    pub fn g1_mut(&mut self) -> ndarray::ArrayViewMut1<'_, f64> {
        self.grad.view_mut().into_dimensionality::<Ix1>().expect("1-d tensor")
    }

    pub fn g2_mut(&mut self) -> ndarray::ArrayViewMut2<'_, f64> {
        self.grad.view_mut().into_dimensionality::<Ix2>().expect("2-d tensor")
    }

    pub fn scalar(&self) -> f64 {
        self.value[[0]]
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn sigmoid_arr1(x: &Array1<f64>) -> Array1<f64> {
    x.mapv(sigmoid)
}

pub(crate) fn sigmoid_arr2(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(sigmoid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn uniform_init_stays_in_range_and_is_seeded() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let a = Tensor::uniform("a", &[4, 5], 0.05, &mut rng);
        assert!(a.value.iter().all(|v| v.abs() < 0.05));
        let mut rng2 = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let b = Tensor::uniform("b", &[4, 5], 0.05, &mut rng2);
        assert_eq!(a.value, b.value);
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(1e9) > 1.0 - 1e-12);
        assert!(sigmoid(-1e9) < 1e-12);
        assert!((sigmoid(9f64.ln()) - 0.9).abs() < 1e-12);
    }
}
