use super::matrix::{shape_str, Matrix};
use crate::error::{Error, Result};

/// RMSProp hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RmsProp {
    pub learning_rate: f64,
    pub decay: f64,
    pub epsilon: f64,
}

impl RmsProp {
    /// One update of a single parameter array:
    /// `acc ← decay·acc + (1−decay)·g²`, `p ← p − lr·g/(√acc + ε)`.
    pub fn update(&self, param: &mut Matrix, acc: &mut Matrix, grad: &Matrix) -> Result<()> {
        if param.shape() != grad.shape() || acc.shape() != grad.shape() {
            return Err(Error::shape(
                "rmsprop_step",
                format!(
                    "param {} acc {} grad {}",
                    shape_str(param.shape()),
                    shape_str(acc.shape()),
                    shape_str(grad.shape())
                ),
            ));
        }
        let (lr, decay, eps) = (self.learning_rate, self.decay, self.epsilon);
        for ((p, a), &g) in param
            .data_mut()
            .iter_mut()
            .zip(acc.data_mut())
            .zip(grad.data())
        {
            *a = decay * *a + (1.0 - decay) * g * g;
            *p -= lr * g / (a.sqrt() + eps);
        }
        Ok(())
    }
}

/// Optimizer together with its per-parameter squared-gradient accumulators.
#[derive(Clone, Debug)]
pub struct RmsPropState {
    pub config: RmsProp,
    pub accumulators: Vec<Matrix>,
}

impl RmsPropState {
    pub fn new(config: RmsProp, params: &[Matrix]) -> Self {
        let accumulators = params
            .iter()
            .map(|p| Matrix::zeros(p.rows(), p.cols()))
            .collect();
        Self {
            config,
            accumulators,
        }
    }

    pub fn step(&mut self, params: &mut [Matrix], grads: &[Matrix]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.accumulators.len() {
            return Err(Error::shape(
                "rmsprop_step",
                format!(
                    "{} params, {} grads, {} accumulators",
                    params.len(),
                    grads.len(),
                    self.accumulators.len()
                ),
            ));
        }
        for ((p, a), g) in params.iter_mut().zip(&mut self.accumulators).zip(grads) {
            self.config.update(p, a, g)?;
        }
        Ok(())
    }
}

pub fn global_norm(grads: &[Matrix]) -> f64 {
    grads.iter().map(Matrix::norm_sq).sum::<f64>().sqrt()
}

/// Rescales `grads` so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Matrix], max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm <= max_norm || !norm.is_finite() {
        return norm;
    }
    let mut factor = max_norm / norm;
    loop {
        let mut scaled: Vec<Matrix> = grads.to_vec();
        scaled.iter_mut().for_each(|g| g.scale_in_place(factor));
        if global_norm(&scaled) <= max_norm {
            grads.clone_from_slice(&scaled);
            return norm;
        }
        // rounding pushed the result just over the bound
        factor *= 1.0 - 4.0 * f64::EPSILON;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opt(lr: f64) -> RmsProp {
        RmsProp {
            learning_rate: lr,
            decay: 0.99,
            epsilon: 1e-8,
        }
    }

    #[test]
    fn zero_gradient_leaves_parameter() {
        let mut p = Matrix::row_vector(vec![0.3, -1.2]);
        let mut acc = Matrix::zeros(1, 2);
        opt(0.1).update(&mut p, &mut acc, &Matrix::zeros(1, 2)).unwrap();
        assert_eq!(p.data(), &[0.3, -1.2]);
    }

    #[test]
    fn hand_evaluated_step() {
        let mut p = Matrix::scalar(0.0);
        let mut acc = Matrix::scalar(0.0);
        opt(0.1).update(&mut p, &mut acc, &Matrix::scalar(1.0)).unwrap();
        assert!((acc.item() - 0.01).abs() < 1e-15);
        let expected = -0.1 / (0.1 + 1e-8);
        assert!((p.item() - expected).abs() < 1e-15);
        assert!((p.item() + 0.9999999).abs() < 1e-7);
    }

    #[test]
    fn repeated_steps_shrink() {
        let mut p = Matrix::scalar(0.0);
        let mut acc = Matrix::scalar(0.0);
        let g = Matrix::scalar(1.0);
        let mut prev = p.item();
        let mut last_delta = f64::INFINITY;
        for _ in 0..3 {
            opt(0.1).update(&mut p, &mut acc, &g).unwrap();
            let delta = (p.item() - prev).abs();
            assert!(delta < last_delta);
            assert!(acc.item() >= 0.0);
            last_delta = delta;
            prev = p.item();
        }
    }

    #[test]
    fn clipping_bounds_norm() {
        let mut g = vec![
            Matrix::row_vector(vec![30.0, 40.0]),
            Matrix::row_vector(vec![120.0]),
        ];
        let before = clip_global_norm(&mut g, 40.0);
        assert_eq!(before, 130.0);
        assert!(global_norm(&g) <= 40.0);
        let mut small = vec![Matrix::scalar(3.0)];
        clip_global_norm(&mut small, 40.0);
        assert_eq!(small[0].item(), 3.0);
    }
}
