use rand::Rng;
use rand_distr::StandardNormal;

/// Temporally correlated zero-mean exploration noise (discrete
/// Ornstein-Uhlenbeck / AR(1)) with a per-dimension stationary spread.
///
/// `x ← ρ x + σ sqrt(1 - ρ²) ξ` with `ρ = 1 - θ·dt`, so every dimension has
/// stationary standard deviation `σ` and lag-one autocorrelation `ρ`.
#[derive(Debug, Clone)]
pub struct OrnsteinUhlenbeck {
    pub theta: f64,
    pub sigma: Vec<f64>,
    /// Multiplier on the emitted sample, used for annealing.
    pub scale: f64,
    state: Vec<f64>,
}

impl OrnsteinUhlenbeck {
    pub fn new(theta: f64, sigma: Vec<f64>) -> Self {
        let dim = sigma.len();
        OrnsteinUhlenbeck {
            theta,
            sigma,
            scale: 1.0,
            state: vec![0.0; dim],
        }
    }

    pub fn reset(&mut self) {
        self.state.iter_mut().for_each(|x| *x = 0.0);
    }

    pub fn correlation(&self, dt: f64) -> f64 {
        (1.0 - self.theta * dt).clamp(0.0, 1.0)
    }

    pub fn sample<R: Rng>(&mut self, dt: f64, rng: &mut R) -> Vec<f64> {
        let rho = self.correlation(dt);
        let innovation = (1.0 - rho * rho).sqrt();
        for (x, s) in self.state.iter_mut().zip(&self.sigma) {
            let xi: f64 = rng.sample(StandardNormal);
            *x = rho * *x + s * innovation * xi;
        }
        self.state.iter().map(|x| self.scale * x).collect()
    }
}
