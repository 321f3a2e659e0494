use rand::Rng;

use crate::hyper::HyperParams;

/// Noise schedules for the hybrid process: a log-linear variance-exploding
/// sigma for numerics and a linear masking schedule for categoricals
/// (alpha_t = 1 - t, i.e. sigma_cat(t) = -ln(1 - t)). Time is clamped to
/// [delta, 1] to bound the categorical loss weight near t = 0.
#[derive(Debug, Clone)]
pub struct NoiseSchedule {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub delta: f64,
    pub lambda_cat: f64,
}

impl NoiseSchedule {
    pub fn from_hyper(hp: &HyperParams) -> Self {
        Self {
            sigma_min: hp.sigma_min,
            sigma_max: hp.sigma_max,
            delta: hp.delta,
            lambda_cat: hp.lambda_cat,
        }
    }

    /// Gaussian noise level; log-linear between the endpoints, so
    /// sigma(0) = sigma_min and sigma(1) = sigma_max.
    pub fn sigma_num(&self, t: f64) -> f64 {
        self.sigma_min * (self.sigma_max / self.sigma_min).powf(t)
    }

    pub fn t_of_sigma(&self, sigma: f64) -> f64 {
        (sigma / self.sigma_min).ln() / (self.sigma_max / self.sigma_min).ln()
    }

    /// Survival probability of a categorical value at time t.
    pub fn alpha_cat(&self, t: f64) -> f64 {
        1.0 - t
    }

    /// Categorical loss weight alpha'_t / (alpha_t - 1) = 1 / t.
    pub fn cat_weight(&self, t: f64) -> f64 {
        1.0 / t.max(self.delta)
    }

    /// Linear decay of the numeric loss weight from 1 to 0 across training.
    pub fn lambda_num(step: usize, horizon: usize) -> f64 {
        if horizon <= 1 {
            return 0.0;
        }
        (1.0 - step as f64 / (horizon - 1) as f64).max(0.0)
    }

    /// Low-discrepancy timestep for training step k: consecutive steps cycle
    /// through 64 equal strata of [delta, 1], uniformly within each.
    pub fn sample_timestep(&self, k: usize, rng: &mut impl Rng) -> f64 {
        const STRATA: usize = 64;
        let stratum = k % STRATA;
        let u: f64 = rng.random();
        self.delta + (1.0 - self.delta) * ((stratum as f64 + u) / STRATA as f64)
    }

    /// Descending sampling grid of `steps` points from t = 1 to t = delta,
    /// geometric in sigma with exponent rho. The reverse process takes one
    /// transition per grid point, the last one landing on the data endpoint
    /// (t = 0: sigma_min, full unmasking).
    pub fn time_grid(&self, steps: usize, rho: f64) -> Vec<f64> {
        assert!(steps >= 2);
        let s_hi = self.sigma_max.powf(1.0 / rho);
        let s_lo = self.sigma_num(self.delta).powf(1.0 / rho);
        let mut grid = Vec::with_capacity(steps);
        for i in 0..steps {
            let f = i as f64 / (steps - 1) as f64;
            let sigma = (s_hi + f * (s_lo - s_hi)).powf(rho);
            grid.push(self.t_of_sigma(sigma).clamp(self.delta, 1.0));
        }
        grid[0] = 1.0;
        grid[steps - 1] = self.delta;
        grid
    }
}
