//! Adam with optional decoupled weight decay.

use crate::autodiff::Real;

#[derive(Debug, Clone)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled weight decay coefficient (0 disables).
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0 }
    }
}

/// First and second moment state for one flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    cfg: AdamConfig,
    m: Vec<T>,
    v: Vec<T>,
    step: u64,
}

impl<T: Real> Adam<T> {
    pub fn new(len: usize, cfg: AdamConfig) -> Self {
        Adam { cfg, m: vec![T::zero(); len], v: vec![T::zero(); len], step: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One descent step: `params -= lr * update`. To ascend, negate the
    /// gradient before calling.
    pub fn step(&mut self, params: &mut [T], grads: &[T], lr: f64) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.step += 1;
        let b1 = T::from_f64(self.cfg.beta1);
        let b2 = T::from_f64(self.cfg.beta2);
        let eps = T::from_f64(self.cfg.eps);
        let lr_t = T::from_f64(lr);
        let one = T::one();
        let bc1 = T::from_f64(1.0 - self.cfg.beta1.powi(self.step as i32));
        let bc2 = T::from_f64(1.0 - self.cfg.beta2.powi(self.step as i32));
        let wd = T::from_f64(self.cfg.weight_decay * lr);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = b1 * self.m[i] + (one - b1) * g;
            self.v[i] = b2 * self.v[i] + (one - b2) * g * g;
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            if self.cfg.weight_decay > 0.0 {
                params[i] = params[i] - wd * params[i];
            }
            params[i] = params[i] - lr_t * mhat / (vhat.sqrt() + eps);
        }
    }
}

/// Linear warmup to `peak`, then cosine decay to zero over the remainder.
pub fn warmup_cosine_lr(step: u64, total_steps: u64, warmup_steps: u64, peak: f64) -> f64 {
    if total_steps == 0 {
        return peak;
    }
    if warmup_steps > 0 && step < warmup_steps {
        return peak * (step as f64 + 1.0) / warmup_steps as f64;
    }
    let remaining = (total_steps.saturating_sub(warmup_steps)).max(1) as f64;
    let progress = (step.saturating_sub(warmup_steps)) as f64 / remaining;
    let progress = progress.clamp(0.0, 1.0);
    peak * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_minimizes_a_quadratic() {
        let mut params = vec![5.0f64, -3.0];
        let mut adam = Adam::new(2, AdamConfig::default());
        for _ in 0..2000 {
            let grads: Vec<f64> = params.iter().map(|p| 2.0 * p).collect();
            adam.step(&mut params, &grads, 0.05);
        }
        assert!(params.iter().all(|p| p.abs() < 1e-3), "params {params:?}");
    }

    #[test]
    fn schedule_warms_up_then_decays() {
        let peak = 3e-4;
        assert!(warmup_cosine_lr(0, 100, 10, peak) < peak / 2.0);
        assert!((warmup_cosine_lr(9, 100, 10, peak) - peak).abs() < 1e-12);
        assert!(warmup_cosine_lr(99, 100, 10, peak) < 0.01 * peak);
    }
}
