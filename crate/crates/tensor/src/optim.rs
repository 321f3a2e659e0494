use std::collections::BTreeMap;

use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 6e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-5,
        }
    }
}

/// Decoupled-weight-decay optimizer over named parameters.
pub struct AdamW {
    pub cfg: AdamWConfig,
    step: u64,
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
}

impl AdamW {
    pub fn new(cfg: AdamWConfig) -> Self {
        Self {
            cfg,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update over all named parameters. Missing gradients are zeros
    /// (decay still applies).
    pub fn step(
        &mut self,
        params: &mut BTreeMap<String, Tensor>,
        grads: &BTreeMap<String, Tensor>,
    ) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.cfg.beta1.powi(t);
        let bc2 = 1.0 - self.cfg.beta2.powi(t);
        for (name, p) in params.iter_mut() {
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(p.shape.clone()));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(p.shape.clone()));
            debug_assert_eq!(m.shape, p.shape, "moment shape for {name}");
            let grad = grads.get(name);
            for i in 0..p.data.len() {
                let g = grad.map_or(0.0, |g| g.data[i]);
                m.data[i] = self.cfg.beta1 * m.data[i] + (1.0 - self.cfg.beta1) * g;
                v.data[i] = self.cfg.beta2 * v.data[i] + (1.0 - self.cfg.beta2) * g * g;
                let m_hat = m.data[i] / bc1;
                let v_hat = v.data[i] / bc2;
                p.data[i] -= self.cfg.lr
                    * (m_hat / (v_hat.sqrt() + self.cfg.eps) + self.cfg.weight_decay * p.data[i]);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(x: f64) -> BTreeMap<String, Tensor> {
        BTreeMap::from([("w".to_string(), Tensor::scalar(x))])
    }

    #[test]
    fn zero_grad_zero_decay_is_identity() {
        let mut opt = AdamW::new(AdamWConfig {
            weight_decay: 0.0,
            ..AdamWConfig::default()
        });
        let mut params = single(1.25);
        let grads = BTreeMap::from([("w".to_string(), Tensor::scalar(0.0))]);
        opt.step(&mut params, &grads);
        assert_eq!(params["w"].item(), 1.25);
    }

    #[test]
    fn first_step_is_sign_like() {
        // From zero moments, bias correction makes m_hat = g and
        // v_hat = g^2, so the update is -lr * g / (|g| + eps).
        let cfg = AdamWConfig {
            lr: 0.01,
            weight_decay: 0.0,
            ..AdamWConfig::default()
        };
        for g in [0.3, -2.0, 7.5] {
            let mut opt = AdamW::new(cfg);
            let mut params = single(0.0);
            let grads = BTreeMap::from([("w".to_string(), Tensor::scalar(g))]);
            opt.step(&mut params, &grads);
            let expect = -cfg.lr * g / (g.abs() + cfg.eps);
            assert!((params["w"].item() - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn decay_only_shrinks_by_factor() {
        let cfg = AdamWConfig {
            lr: 0.1,
            weight_decay: 0.5,
            ..AdamWConfig::default()
        };
        let mut opt = AdamW::new(cfg);
        let mut params = single(2.0);
        opt.step(&mut params, &BTreeMap::new());
        assert!((params["w"].item() - 2.0 * (1.0 - 0.1 * 0.5)).abs() < 1e-12);
    }

    #[test]
    fn deterministic_sequence() {
        let run = || {
            let mut opt = AdamW::new(AdamWConfig::default());
            let mut params = single(1.0);
            for k in 0..50 {
                let g = (k as f64 * 0.37).sin();
                let grads = BTreeMap::from([("w".to_string(), Tensor::scalar(g))]);
                opt.step(&mut params, &grads);
            }
            params["w"].item()
        };
        assert_eq!(run().to_bits(), run().to_bits());
    }
}
