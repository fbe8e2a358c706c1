use super::{NeuralError, Parameters};

/// Adaptive-moment optimizer with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update. Non-finite gradients leave `params` untouched.
    pub fn step<P: Parameters>(&mut self, params: &mut P, grads: &P) -> Result<(), NeuralError> {
        let mut flat = Vec::with_capacity(grads.num_parameters());
        let mut bad: Option<(String, usize)> = None;
        let mut bad_count = 0;
        grads.visit(&mut |name, s| {
            for (i, g) in s.iter().enumerate() {
                if !g.is_finite() {
                    bad_count += 1;
                    if bad.is_none() {
                        bad = Some((name.to_string(), i));
                    }
                }
            }
            flat.extend_from_slice(s);
        });
        if let Some((tensor, index)) = bad {
            return Err(NeuralError::NonFiniteGradient {
                tensor,
                index,
                count: bad_count,
            });
        }
        if params.num_parameters() != flat.len() {
            return Err(NeuralError::ShapeMismatch);
        }
        if self.first.len() != flat.len() {
            self.first = vec![0.0; flat.len()];
            self.second = vec![0.0; flat.len()];
        }
        self.step += 1;
        let t = self.step as i32;
        let correction1 = 1.0 - self.beta1.powi(t);
        let correction2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.epsilon);
        let (first, second) = (&mut self.first, &mut self.second);
        let mut offset = 0;
        params.visit_mut(&mut |_, s| {
            for (i, p) in s.iter_mut().enumerate() {
                let k = offset + i;
                let g = flat[k];
                first[k] = b1 * first[k] + (1.0 - b1) * g;
                second[k] = b2 * second[k] + (1.0 - b2) * g * g;
                let m_hat = first[k] / correction1;
                let v_hat = second[k] / correction2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
            offset += s.len();
        });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_keeps_parameters() {
        let mut params = vec![0.3, -1.2, 4.0];
        let mut adam = Adam::new(0.01);
        for _ in 0..5 {
            adam.step(&mut params, &vec![0.0; 3]).unwrap();
        }
        assert_eq!(params, vec![0.3, -1.2, 4.0]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut params = vec![0.0];
        let mut adam = Adam::new(0.001);
        adam.step(&mut params, &vec![1.0]).unwrap();
        assert!((params[0] + 0.001).abs() < 1e-6, "{}", params[0]);
    }

    #[test]
    fn constant_gradient_moves_monotonically() {
        let mut params = vec![1.0, 1.0];
        let mut adam = Adam::new(0.01);
        let mut prev = params.clone();
        for _ in 0..50 {
            adam.step(&mut params, &vec![0.5, -2.0]).unwrap();
            assert!(params[0] < prev[0]);
            assert!(params[1] > prev[1]);
            prev = params.clone();
        }
    }

    #[test]
    fn non_finite_gradients_are_rejected() {
        let mut params = vec![1.0, 2.0];
        let mut adam = Adam::new(0.01);
        let err = adam.step(&mut params, &vec![f64::NAN, f64::INFINITY]).unwrap_err();
        match err {
            NeuralError::NonFiniteGradient { index, count, .. } => {
                assert_eq!(index, 0);
                assert_eq!(count, 2);
            }
            other => panic!("unexpected {other}"),
        }
        assert_eq!(params, vec![1.0, 2.0]);
        assert_eq!(adam.steps_taken(), 0);
    }
}
