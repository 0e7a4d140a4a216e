use std::f64::consts::PI;

use rand::Rng;

pub(crate) const FEATURE_BOUNDS: [(f64, f64); 4] = [(-PI, PI), (-PI, PI), (-4.0 * PI, 4.0 * PI), (-9.0 * PI, 9.0 * PI)];

/// Two-link underactuated pendulum. State is (theta1, theta2, dtheta1,
/// dtheta2); one fourth-order Runge-Kutta step of 0.2 s per action.
#[derive(Debug, Clone)]
pub struct Acrobot {
    pub dt: f64,
    pub link_length_1: f64,
    pub link_mass_1: f64,
    pub link_mass_2: f64,
    pub link_com_1: f64,
    pub link_com_2: f64,
    pub link_moi: f64,
    pub max_vel_1: f64,
    pub max_vel_2: f64,
    pub gravity: f64,
}

impl Default for Acrobot {
    fn default() -> Self {
        Self {
            dt: 0.2,
            link_length_1: 1.0,
            link_mass_1: 1.0,
            link_mass_2: 1.0,
            link_com_1: 0.5,
            link_com_2: 0.5,
            link_moi: 1.0,
            max_vel_1: 4.0 * PI,
            max_vel_2: 9.0 * PI,
            gravity: 9.8,
        }
    }
}

const TORQUES: [f64; 3] = [-1.0, 0.0, 1.0];

pub(crate) fn wrap_angle(x: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut y = x;
    while y > PI {
        y -= two_pi;
    }
    while y < -PI {
        y += two_pi;
    }
    y
}

impl Acrobot {
    pub fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 4] {
        std::array::from_fn(|_| rng.random_range(-0.1..0.1))
    }

    /// Height of the tip above the pivot, in link lengths.
    pub fn tip_height(s: &[f64]) -> f64 {
        -s[0].cos() - (s[1] + s[0]).cos()
    }

    fn derivatives(&self, s: [f64; 4], torque: f64) -> [f64; 4] {
        let (m1, m2) = (self.link_mass_1, self.link_mass_2);
        let l1 = self.link_length_1;
        let (lc1, lc2) = (self.link_com_1, self.link_com_2);
        let (i1, i2) = (self.link_moi, self.link_moi);
        let g = self.gravity;
        let [theta1, theta2, dtheta1, dtheta2] = s;

        let d1 = m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * theta2.cos()) + i1 + i2;
        let d2 = m2 * (lc2 * lc2 + l1 * lc2 * theta2.cos()) + i2;
        let phi2 = m2 * lc2 * g * (theta1 + theta2 - PI / 2.0).cos();
        let phi1 = -m2 * l1 * lc2 * dtheta2 * dtheta2 * theta2.sin()
            - 2.0 * m2 * l1 * lc2 * dtheta2 * dtheta1 * theta2.sin()
            + (m1 * lc1 + m2 * l1) * g * (theta1 - PI / 2.0).cos()
            + phi2;
        let ddtheta2 = (torque + d2 / d1 * phi1 - m2 * l1 * lc2 * dtheta1 * dtheta1 * theta2.sin() - phi2)
            / (m2 * lc2 * lc2 + i2 - d2 * d2 / d1);
        let ddtheta1 = -(d2 * ddtheta2 + phi1) / d1;
        [dtheta1, dtheta2, ddtheta1, ddtheta2]
    }

    fn rk4(&self, s: [f64; 4], torque: f64) -> [f64; 4] {
        let h = self.dt;
        let add = |a: [f64; 4], b: [f64; 4], k: f64| -> [f64; 4] { std::array::from_fn(|i| a[i] + k * b[i]) };
        let k1 = self.derivatives(s, torque);
        let k2 = self.derivatives(add(s, k1, h / 2.0), torque);
        let k3 = self.derivatives(add(s, k2, h / 2.0), torque);
        let k4 = self.derivatives(add(s, k3, h), torque);
        std::array::from_fn(|i| s[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
    }

    /// (next state, reward, terminated): -1 per step, 0 once the tip
    /// clears one link length above the pivot.
    pub fn step_state(&self, s: [f64; 4], action: usize) -> ([f64; 4], f64, bool) {
        let n = self.rk4(s, TORQUES[action]);
        let next = [
            wrap_angle(n[0]),
            wrap_angle(n[1]),
            n[2].clamp(-self.max_vel_1, self.max_vel_1),
            n[3].clamp(-self.max_vel_2, self.max_vel_2),
        ];
        let terminated = Self::tip_height(&next) > 1.0;
        (next, if terminated { 0.0 } else { -1.0 }, terminated)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hanging_at_rest_is_equilibrium() {
        let env = Acrobot::default();
        let (next, r, done) = env.step_state([0.0; 4], 1);
        for x in next {
            assert!(x.abs() < 1e-12);
        }
        assert_eq!((r, done), (-1.0, false));
    }

    #[test]
    fn wrap_keeps_angles_in_range() {
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12 || (wrap_angle(3.0 * PI) + PI).abs() < 1e-12);
        assert!((wrap_angle(-0.5) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn upright_configuration_terminates() {
        let env = Acrobot::default();
        let (_, r, done) = env.step_state([PI, 0.0, 0.0, 0.0], 1);
        assert!(done);
        assert_eq!(r, 0.0);
    }
}
