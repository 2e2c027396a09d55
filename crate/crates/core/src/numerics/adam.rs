use super::{NumericsError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Fold weight decay into the gradient (classic L2) instead of applying
    /// it directly to the parameters.
    pub coupled_wd: bool,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-6,
            coupled_wd: false,
        }
    }
}

/// First/second moment buffers and the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one bias-corrected Adam update.
    ///
    /// `decay[i]` selects whether parameter `i` receives weight decay. When
    /// any gradient holds a NaN or infinity the step is refused and neither
    /// the parameters nor the moments change.
    pub fn step(
        &mut self,
        params: &mut [&mut Tensor],
        grads: &[Tensor],
        decay: &[bool],
        lr: f64,
    ) -> Result<(), NumericsError> {
        if params.len() != grads.len() || decay.len() != grads.len() {
            return Err(NumericsError::ParamCount {
                params: params.len(),
                grads: grads.len(),
            });
        }
        if !(lr.is_finite() && lr >= 0.0) {
            return Err(NumericsError::InvalidLearningRate(lr));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(NumericsError::ShapeMismatch {
                    op: "adam_step",
                    lhs: p.shape().to_vec(),
                    rhs: g.shape().to_vec(),
                });
            }
            if !g.is_finite() {
                return Err(NumericsError::NonFiniteGradient { index: i });
            }
        }
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            self.v = self.m.clone();
        } else if self.m.len() != grads.len() || self.m.iter().zip(grads).any(|(m, g)| m.len() != g.len()) {
            return Err(NumericsError::ParamCount {
                params: self.m.len(),
                grads: grads.len(),
            });
        }

        self.t += 1;
        let AdamConfig {
            beta1,
            beta2,
            eps,
            weight_decay,
            coupled_wd,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for (idx, p) in params.iter_mut().enumerate() {
            let wd = if decay[idx] { weight_decay } else { 0.0 };
            let (m, v) = (&mut self.m[idx], &mut self.v[idx]);
            let g = grads[idx].data();
            for (j, w) in p.data_mut().iter_mut().enumerate() {
                let gj = if coupled_wd { g[j] + wd * *w } else { g[j] };
                m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
                v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                if !coupled_wd {
                    *w -= lr * wd * *w;
                }
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_decay() -> AdamConfig {
        AdamConfig {
            weight_decay: 0.0,
            ..AdamConfig::default()
        }
    }

    #[test]
    fn zero_gradient_leaves_parameter_unchanged() {
        let mut p = Tensor::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap();
        let before = p.clone();
        let mut st = AdamState::new(no_decay());
        st.step(&mut [&mut p], &[Tensor::zeros(&[3])], &[true], 0.1).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // Bias correction makes m_hat = g and v_hat = g² on the first step.
        let mut p = Tensor::scalar(1.0);
        let mut st = AdamState::new(no_decay());
        st.step(&mut [&mut p], &[Tensor::scalar(1.0)], &[false], 0.1).unwrap();
        let want = 1.0 - 0.1 * 1.0 / (1.0 + 1e-8);
        assert!((p.item() - want).abs() < 1e-15, "{}", p.item());
        assert_eq!(st.steps(), 1);
    }

    #[test]
    fn converges_on_convex_quadratic() {
        // f(p) = (p - 3)², f'(p) = 2(p - 3)
        let mut p = Tensor::scalar(0.0);
        let mut st = AdamState::new(no_decay());
        for k in 0..1000 {
            let g = Tensor::scalar(2.0 * (p.item() - 3.0));
            // step size decays so the iterate settles instead of orbiting
            let lr = 0.1 * (1.0 - k as f64 / 1000.0);
            st.step(&mut [&mut p], &[g], &[false], lr).unwrap();
        }
        assert!((p.item() - 3.0).abs() < 1e-3, "{}", p.item());
    }

    #[test]
    fn nan_gradient_aborts_without_side_effects() {
        let mut p = Tensor::scalar(1.0);
        let mut st = AdamState::new(no_decay());
        let err = st
            .step(&mut [&mut p], &[Tensor::scalar(f64::NAN)], &[false], 0.1)
            .unwrap_err();
        assert!(matches!(err, NumericsError::NonFiniteGradient { index: 0 }));
        assert_eq!(p.item(), 1.0);
        assert_eq!(st.steps(), 0);
    }

    #[test]
    fn decoupled_decay_shrinks_parameter_with_zero_gradient() {
        let mut p = Tensor::scalar(2.0);
        let cfg = AdamConfig {
            weight_decay: 0.5,
            ..AdamConfig::default()
        };
        let mut st = AdamState::new(cfg);
        st.step(&mut [&mut p], &[Tensor::scalar(0.0)], &[true], 0.1).unwrap();
        assert!((p.item() - 2.0 * (1.0 - 0.05)).abs() < 1e-15);
        // excluded parameters are left alone
        let mut q = Tensor::scalar(2.0);
        let mut st = AdamState::new(cfg);
        st.step(&mut [&mut q], &[Tensor::scalar(0.0)], &[false], 0.1).unwrap();
        assert_eq!(q.item(), 2.0);
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let mut p = Tensor::new(vec![2], vec![0.3, -0.7]).unwrap();
        let before = p.clone();
        let mut st = AdamState::new(AdamConfig::default());
        for _ in 0..5 {
            st.step(&mut [&mut p], &[Tensor::ones(&[2])], &[true], 0.0).unwrap();
        }
        assert_eq!(p, before);
    }
}
