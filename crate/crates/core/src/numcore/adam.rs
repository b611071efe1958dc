use super::Network;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment estimates for one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
}

impl AdamState {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
        }
    }

    pub fn for_network(net: &Network, config: AdamConfig) -> Self {
        Self::new(net.param_count(), config)
    }

    /// One bias-corrected ADAM update of `net` from its stored gradients.
    pub fn step(&mut self, net: &mut Network) -> Result<()> {
        if let Some(bad) = net.grads().iter().position(|g| !g.is_finite()) {
            let layer = net.layer_of_param(bad).unwrap_or(0);
            return Err(Error::Numeric(format!(
                "non-finite gradient at parameter {bad} (layer {layer})"
            )));
        }
        let (params, grads) = net.params_and_grads_mut();
        self.apply(params, grads)
    }

    /// Raw update over parallel slices.
    pub fn apply(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.first_moment.len() {
            return Err(Error::Dimension(format!(
                "adam state holds {} moments, params {} and grads {}",
                self.first_moment.len(),
                params.len(),
                grads.len()
            )));
        }
        if let Some(bad) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite gradient at parameter {bad}"
            )));
        }
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = i32::try_from(self.step).unwrap_or(i32::MAX);
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradients_are_a_fixed_point() {
        let mut state = AdamState::new(3, AdamConfig::default());
        let mut p = vec![1.0, -2.0, 0.25];
        let before = p.clone();
        state.apply(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, before);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate_against_gradient_sign() {
        // After one step m_hat = g and v_hat = g^2, so the update is
        // -lr * g / (|g| + eps).
        let cfg = AdamConfig::default();
        let mut state = AdamState::new(2, cfg);
        let mut p = vec![0.0, 0.0];
        let g = [3.0, -0.5];
        state.apply(&mut p, &g).unwrap();
        for (pi, gi) in p.iter().zip(g) {
            let expected = -cfg.learning_rate * gi / (gi.abs() + cfg.epsilon);
            assert!((pi - expected).abs() < 1e-18);
            assert!((pi.abs() - cfg.learning_rate).abs() < 1e-11);
        }
    }

    #[test]
    fn non_finite_gradient_names_the_layer() {
        use crate::numcore::{Activation, LayerSpec};
        let mut net = Network::zeroed(&[
            LayerSpec::new(2, 2, Activation::Linear),
            LayerSpec::new(2, 1, Activation::Linear),
        ])
        .unwrap();
        let last = net.param_count() - 1;
        net.grads_mut()[last] = f64::NAN;
        let mut state = AdamState::for_network(&net, AdamConfig::default());
        let err = state.step(&mut net).unwrap_err().to_string();
        assert!(err.contains("layer 1"), "{err}");
        assert_eq!(state.step, 0);
    }

    #[test]
    fn identical_streams_give_identical_trajectories() {
        let mut a = AdamState::new(4, AdamConfig::default());
        let mut b = a.clone();
        let mut pa = vec![0.1, 0.2, 0.3, 0.4];
        let mut pb = pa.clone();
        for k in 0..50 {
            let g: Vec<f64> = (0..4).map(|i| ((k * 7 + i) as f64).sin()).collect();
            a.apply(&mut pa, &g).unwrap();
            b.apply(&mut pb, &g).unwrap();
        }
        assert_eq!(
            pa.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            pb.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
}
