//! Gradient clipping and RMSProp with plateau-triggered learning-rate
//! decay.

use ndarray::ArrayD;

use super::Tensor;
use crate::error::{Error, Result};

/// Euclidean norm over all gradients.
pub fn global_grad_norm(params: &[&mut Tensor]) -> f64 {
    params
        .iter()
        .map(|p| p.grad.iter().map(|g| g * g).sum::<f64>())
        .sum::<f64>()
        .sqrt()
}

/// Scales every gradient by `max_norm / norm` when the global L2 norm
/// exceeds `max_norm`. Returns the factor applied (1.0 when untouched).
/// Non-finite gradients abort training.
pub fn clip_global_norm(params: &mut [&mut Tensor], max_norm: f64) -> Result<f64> {
    let mut total = 0.0;
    for p in params.iter() {
        for g in p.grad.iter() {
            if !g.is_finite() {
                return Err(Error::TrainingDiverged(format!(
                    "non-finite gradient in {}",
                    p.name
                )));
            }
            total += g * g;
        }
    }
    let norm = total.sqrt();
    if norm <= max_norm {
        return Ok(1.0);
    }
    let scale = max_norm / norm;
    for p in params.iter_mut() {
        p.grad.mapv_inplace(|g| g * scale);
    }
    Ok(scale)
}

/// Halves the learning rate when the validation metric fails to improve
/// by more than `threshold` over the previous epoch.
#[derive(Debug, Clone)]
pub struct PlateauDecay {
    pub threshold: f64,
    pub factor: f64,
    previous: Option<f64>,
}

impl PlateauDecay {
    pub fn new(threshold: f64, factor: f64) -> PlateauDecay {
        PlateauDecay {
            threshold,
            factor,
            previous: None,
        }
    }

    /// Feeds one epoch's validation metric; returns true when the learning
    /// rate was decayed.
    pub fn observe(&mut self, lr: &mut f64, metric: f64) -> bool {
        let decayed = match self.previous {
            Some(prev) if prev - metric <= self.threshold => {
                *lr *= self.factor;
                true
            }
            _ => false,
        };
        self.previous = Some(metric);
        decayed
    }
}

/// RMSProp: `a <- rho a + (1 - rho) g^2`, `p <- p - lr g / (sqrt(a) + eps)`.
///
/// Epsilon doubles as a gradient-scale floor: gradients well below it get
/// SGD-like steps of lr/eps times the gradient, gradients above it get the
/// usual normalized step capped near lr. At lr 0.1 a tiny epsilon turns
/// every update into a +-0.1 jump per parameter, which saturates the
/// network within an epoch.
#[derive(Debug, Clone)]
pub struct RmsProp {
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
    /// Starting value of the mean-square accumulators; 1.0 makes early
    /// steps behave like plain SGD at the configured rate, 0.0 makes the
    /// first step lr/sqrt(1-rho) regardless of gradient scale.
    pub initial_accumulator: f64,
    pub plateau: PlateauDecay,
    accumulators: Vec<ArrayD<f64>>,
}

impl RmsProp {
    pub fn new(learning_rate: f64, plateau_threshold: f64, decay_factor: f64) -> RmsProp {
        RmsProp {
            learning_rate,
            rho: 0.9,
            epsilon: 1e-2,
            initial_accumulator: 1.0,
            plateau: PlateauDecay::new(plateau_threshold, decay_factor),
            accumulators: Vec::new(),
        }
    }

    /// Applies one update. Call after [`clip_global_norm`]; the training
    /// loop order is clip then update.
    pub fn step(&mut self, params: &mut [&mut Tensor]) -> Result<()> {
        if self.accumulators.is_empty() {
            self.accumulators = params
                .iter()
                .map(|p| ArrayD::from_elem(p.value.shape().to_vec(), self.initial_accumulator))
                .collect();
        }
        if self.accumulators.len() != params.len() {
            return Err(Error::Shape(
                "optimizer state does not match parameter count".into(),
            ));
        }
        for (p, acc) in params.iter_mut().zip(&mut self.accumulators) {
            ndarray::Zip::from(&mut p.value)
                .and(&p.grad)
                .and(acc)
                .for_each(|v, &g, a| {
                    *a = self.rho * *a + (1.0 - self.rho) * g * g;
                    *v -= self.learning_rate * g / (a.sqrt() + self.epsilon);
                });
            if p.value.iter().any(|v| !v.is_finite()) {
                return Err(Error::TrainingDiverged(format!(
                    "non-finite parameter value in {}",
                    p.name
                )));
            }
        }
        Ok(())
    }

    /// Feeds the epoch validation metric into the plateau rule.
    pub fn end_epoch(&mut self, validation_metric: f64) -> bool {
        let mut lr = self.learning_rate;
        let decayed = self.plateau.observe(&mut lr, validation_metric);
        self.learning_rate = lr;
        decayed
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tensor_with_grad(grad: &[f64]) -> Tensor {
        let mut t = Tensor::zeros("t", &[grad.len()]);
        for (g, &v) in t.grad.iter_mut().zip(grad) {
            *g = v;
        }
        t
    }

    #[test]
    fn clip_scales_when_norm_exceeds_max() {
        let mut t = tensor_with_grad(&[6.0, 8.0]); // norm 10
        let mut params = [&mut t];
        let scale = clip_global_norm(&mut params, 5.0).unwrap();
        assert!((scale - 0.5).abs() < 1e-12);
        assert!((params[0].grad[[0]] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn clip_leaves_small_and_zero_gradients_alone() {
        let mut t = tensor_with_grad(&[3.0]);
        let mut params = [&mut t];
        assert_eq!(clip_global_norm(&mut params, 5.0).unwrap(), 1.0);
        assert_eq!(params[0].grad[[0]], 3.0);

        let mut z = tensor_with_grad(&[0.0, 0.0]);
        let mut params = [&mut z];
        clip_global_norm(&mut params, 5.0).unwrap();
        assert!(params[0].grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn nan_gradient_is_a_divergence_error() {
        let mut t = tensor_with_grad(&[f64::NAN]);
        let mut params = [&mut t];
        assert!(matches!(
            clip_global_norm(&mut params, 5.0),
            Err(Error::TrainingDiverged(_))
        ));
    }

    #[test]
    fn rmsprop_zero_gradient_is_a_fixed_point() {
        let mut t = Tensor::zeros("t", &[2]);
        t.value[[0]] = 1.0;
        let mut opt = RmsProp::new(0.1, 1.0, 0.5);
        let mut params = [&mut t];
        opt.step(&mut params).unwrap();
        assert_eq!(params[0].value[[0]], 1.0);
    }

    #[test]
    fn rmsprop_single_step_formula() {
        let g = 0.7;
        let mut t = tensor_with_grad(&[g]);
        let mut opt = RmsProp::new(0.1, 1.0, 0.5);
        opt.initial_accumulator = 0.0;
        opt.epsilon = 1e-8;
        let mut params = [&mut t];
        opt.step(&mut params).unwrap();
        let expected = -0.1 * g / ((0.1 * g * g).sqrt() + 1e-8);
        assert!((params[0].value[[0]] - expected).abs() < 1e-12);
    }

    #[test]
    fn rmsprop_constant_gradient_steps_shrink() {
        let g = 0.5;
        let mut t = tensor_with_grad(&[g]);
        let mut opt = RmsProp::new(0.1, 1.0, 0.5);
        opt.initial_accumulator = 0.0;
        opt.epsilon = 1e-8;
        let mut prev_value = 0.0;
        let mut prev_step = f64::INFINITY;
        for _ in 0..5 {
            {
                let mut params = [&mut t];
                opt.step(&mut params).unwrap();
            }
            let step = (t.value[[0]] - prev_value).abs();
            assert!(step < prev_step);
            prev_step = step;
            prev_value = t.value[[0]];
            for gr in t.grad.iter_mut() {
                *gr = g;
            }
        }
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let mut t = tensor_with_grad(&[0.9]);
        t.value[[0] ] = 2.0;
        let mut opt = RmsProp::new(0.0, 1.0, 0.5);
        let mut params = [&mut t];
        opt.step(&mut params).unwrap();
        assert_eq!(params[0].value[[0]], 2.0);
    }

    #[test]
    fn plateau_halves_only_without_sufficient_improvement() {
        let mut opt = RmsProp::new(0.1, 1.0, 0.5);
        assert!(!opt.end_epoch(10.0)); // first epoch: no reference yet
        assert_eq!(opt.learning_rate, 0.1);
        assert!(!opt.end_epoch(8.5)); // improved by 1.5 > 1.0
        assert_eq!(opt.learning_rate, 0.1);
        assert!(opt.end_epoch(8.0)); // improved by only 0.5
        assert_eq!(opt.learning_rate, 0.05);
        assert!(opt.end_epoch(8.7)); // got worse
        assert_eq!(opt.learning_rate, 0.025);
    }

    proptest! {
        // Clipping never increases the norm and preserves direction.
        #[test]
        fn clip_never_increases_norm(
            grads in prop::collection::vec(-10.0f64..10.0, 1..20),
            max_norm in 0.5f64..8.0,
        ) {
            let before = tensor_with_grad(&grads);
            let norm_before = before.grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            let mut t = tensor_with_grad(&grads);
            let mut params = [&mut t];
            clip_global_norm(&mut params, max_norm).unwrap();
            let norm_after = params[0].grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            prop_assert!(norm_after <= norm_before + 1e-9);
            prop_assert!(norm_after <= max_norm + 1e-9);
            // Direction preserved: after = c * before with c >= 0.
            if norm_before > 0.0 {
                let c = norm_after / norm_before;
                for (a, b) in params[0].grad.iter().zip(before.grad.iter()) {
                    prop_assert!((a - c * b).abs() < 1e-9);
                }
            }
        }
    }
}
