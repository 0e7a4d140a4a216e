use rand::Rng;

/// Scaling bounds for (x, x_dot, theta, theta_dot). Velocities are
/// unbounded physically; these cover the range seen before termination.
pub(crate) const FEATURE_BOUNDS: [(f64, f64); 4] = [(-4.8, 4.8), (-3.0, 3.0), (-0.418, 0.418), (-3.5, 3.5)];

/// Cart-pole balancing with the classic parameters, integrated with
/// semi-implicit Euler at 0.02 s.
#[derive(Debug, Clone)]
pub struct CartPole {
    pub gravity: f64,
    pub mass_cart: f64,
    pub mass_pole: f64,
    pub half_length: f64,
    pub force_mag: f64,
    pub tau: f64,
    pub x_threshold: f64,
    pub theta_threshold: f64,
}

impl Default for CartPole {
    fn default() -> Self {
        Self {
            gravity: 9.8,
            mass_cart: 1.0,
            mass_pole: 0.1,
            half_length: 0.5,
            force_mag: 10.0,
            tau: 0.02,
            x_threshold: 2.4,
            theta_threshold: 12.0 * 2.0 * std::f64::consts::PI / 360.0,
        }
    }
}

impl CartPole {
    pub fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 4] {
        std::array::from_fn(|_| rng.random_range(-0.05..0.05))
    }

    /// (next state, reward, terminated). Reward is 1 for every step,
    /// including the one that ends the episode.
    pub fn step_state(&self, s: [f64; 4], action: usize) -> ([f64; 4], f64, bool) {
        let [x, x_dot, theta, theta_dot] = s;
        let force = if action == 1 { self.force_mag } else { -self.force_mag };
        let total_mass = self.mass_cart + self.mass_pole;
        let polemass_length = self.mass_pole * self.half_length;
        let (sin, cos) = theta.sin_cos();
        let temp = (force + polemass_length * theta_dot * theta_dot * sin) / total_mass;
        let theta_acc =
            (self.gravity * sin - cos * temp) / (self.half_length * (4.0 / 3.0 - self.mass_pole * cos * cos / total_mass));
        let x_acc = temp - polemass_length * theta_acc * cos / total_mass;

        let x_dot = x_dot + self.tau * x_acc;
        let x = x + self.tau * x_dot;
        let theta_dot = theta_dot + self.tau * theta_acc;
        let theta = theta + self.tau * theta_dot;

        let terminated = x < -self.x_threshold
            || x > self.x_threshold
            || theta < -self.theta_threshold
            || theta > self.theta_threshold;
        ([x, x_dot, theta, theta_dot], 1.0, terminated)
    }
}
