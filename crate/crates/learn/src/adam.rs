//! Bias-corrected ADAM optimizer over a flat parameter vector.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn new(lr: f64) -> Self {
        AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub(crate) m: Vec<f64>,
    pub(crate) v: Vec<f64>,
    pub(crate) t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, n_params: usize) -> Self {
        Adam {
            config,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub(crate) fn from_parts(config: AdamConfig, m: Vec<f64>, v: Vec<f64>, t: u64) -> Self {
        Adam { config, m, v, t }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.m, &self.v)
    }

    /// Clears both moments and the step counter.
    pub fn reset(&mut self) {
        self.m.iter_mut().for_each(|x| *x = 0.0);
        self.v.iter_mut().for_each(|x| *x = 0.0);
        self.t = 0;
    }

    /// Descends along `grads`. Entries with zero gradient and zero moments stay put.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::shape(
                format!("{} parameters and gradients", self.m.len()),
                format!("{} parameters, {} gradients", params.len(), grads.len()),
            ));
        }
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powf(self.t as f64);
        let c2 = 1.0 - beta2.powf(self.t as f64);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut opt = Adam::new(AdamConfig::new(0.1), 3);
        let mut p = vec![1.0, -2.0, 3.5];
        for _ in 0..10 {
            opt.step(&mut p, &[0.0; 3]).unwrap();
        }
        assert_eq!(p, vec![1.0, -2.0, 3.5]);
    }

    #[test]
    fn steady_state_step_is_lr_times_sign() {
        let mut opt = Adam::new(AdamConfig::new(0.01), 2);
        let mut p = vec![0.0, 0.0];
        let mut prev = p.clone();
        for _ in 0..2000 {
            prev.copy_from_slice(&p);
            opt.step(&mut p, &[3.0, -0.5]).unwrap();
        }
        assert!(((prev[0] - p[0]) - 0.01).abs() < 1e-8);
        assert!(((prev[1] - p[1]) + 0.01).abs() < 1e-8);
    }

    #[test]
    fn two_step_hand_trace() {
        // g = 2 then g = 1, lr = 0.1:
        // step 1: m̂ = 2, v̂ = 4, θ = 1 − 0.1·2/(2 + 1e-8)
        // step 2: m = 0.28, v = 0.004996, m̂ = 0.28/0.19, v̂ = 0.004996/0.001999
        let mut opt = Adam::new(AdamConfig::new(0.1), 1);
        let mut p = vec![1.0];
        opt.step(&mut p, &[2.0]).unwrap();
        assert!((p[0] - 0.9000000005).abs() < 1e-13);
        opt.step(&mut p, &[1.0]).unwrap();
        let expected = 0.9000000005 - 0.1 * (0.28 / 0.19) / ((0.004996f64 / 0.001999).sqrt() + 1e-8);
        assert!((p[0] - expected).abs() < 1e-12);
        assert!((p[0] - 0.8067820372085103).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut opt = Adam::new(AdamConfig::new(0.1), 2);
        assert!(opt.step(&mut [0.0; 3], &[0.0; 3]).is_err());
        assert!(opt.step(&mut [0.0; 2], &[0.0; 1]).is_err());
        assert_eq!(opt.steps(), 0);
    }
}
