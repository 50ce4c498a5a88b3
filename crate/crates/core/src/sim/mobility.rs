//! 3-D Gauss-Markov mobility inside a per-cluster cylinder (operating
//! radius x altitude band), with boundary reflection and a speed clamp.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MobilityParams {
    /// Memory parameter in [0, 1]: 1 keeps the previous velocity, 0 jumps
    /// straight to the mean.
    pub alpha: f64,
    pub sigma_mps: f64,
    pub step_ms: u64,
}

impl Default for MobilityParams {
    fn default() -> Self {
        MobilityParams {
            alpha: 0.85,
            sigma_mps: 1.0,
            step_ms: 100,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CylinderBounds {
    pub center_xy: [f64; 2],
    pub radius_m: f64,
    pub altitude_range_m: (f64, f64),
    pub speed_max_mps: f64,
}

impl CylinderBounds {
    pub fn contains(&self, p: &[f64; 3]) -> bool {
        let dx = p[0] - self.center_xy[0];
        let dy = p[1] - self.center_xy[1];
        let (z0, z1) = self.altitude_range_m;
        dx.hypot(dy) <= self.radius_m + 1e-6 && p[2] >= z0 - 1e-6 && p[2] <= z1 + 1e-6
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MobilityState {
    pub position: [f64; 3],
    pub velocity: [f64; 3],
    pub mean_velocity: [f64; 3],
}

impl MobilityState {
    /// One Gauss-Markov step: per axis
    /// `v' = alpha*v + (1-alpha)*mu + sigma*sqrt(1-alpha^2)*w`,
    /// then integrate, reflect at the cylinder, clamp speed.
    pub fn step(
        &mut self,
        dt_s: f64,
        params: &MobilityParams,
        bounds: &CylinderBounds,
        rng: &mut ChaCha12Rng,
    ) {
        let a = params.alpha;
        let noise = params.sigma_mps * (1.0 - a * a).max(0.0).sqrt();
        for axis in 0..3 {
            let w: f64 = rng.sample(StandardNormal);
            self.velocity[axis] =
                a * self.velocity[axis] + (1.0 - a) * self.mean_velocity[axis] + noise * w;
        }
        self.clamp_speed(bounds.speed_max_mps);
        for axis in 0..3 {
            self.position[axis] += self.velocity[axis] * dt_s;
        }
        self.reflect(bounds);
    }

    fn clamp_speed(&mut self, max: f64) {
        let speed = (self.velocity[0].powi(2)
            + self.velocity[1].powi(2)
            + self.velocity[2].powi(2))
        .sqrt();
        if speed > max && speed > 0.0 {
            let k = max / speed;
            for v in &mut self.velocity {
                *v *= k;
            }
        }
    }

    fn reflect(&mut self, bounds: &CylinderBounds) {
        let (z0, z1) = bounds.altitude_range_m;
        for _ in 0..8 {
            if self.position[2] < z0 {
                self.position[2] = 2.0 * z0 - self.position[2];
                self.velocity[2] = -self.velocity[2];
            } else if self.position[2] > z1 {
                self.position[2] = 2.0 * z1 - self.position[2];
                self.velocity[2] = -self.velocity[2];
            } else {
                break;
            }
        }
        self.position[2] = self.position[2].clamp(z0, z1);

        let dx = self.position[0] - bounds.center_xy[0];
        let dy = self.position[1] - bounds.center_xy[1];
        let r = dx.hypot(dy);
        if r > bounds.radius_m {
            let fold = (2.0 * bounds.radius_m - r).max(0.0) / r;
            self.position[0] = bounds.center_xy[0] + dx * fold;
            self.position[1] = bounds.center_xy[1] + dy * fold;
            // Reflect the radial velocity component.
            let nx = dx / r;
            let ny = dy / r;
            let vr = self.velocity[0] * nx + self.velocity[1] * ny;
            self.velocity[0] -= 2.0 * vr * nx;
            self.velocity[1] -= 2.0 * vr * ny;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn bounds() -> CylinderBounds {
        CylinderBounds {
            center_xy: [0.0, 0.0],
            radius_m: 1000.0,
            altitude_range_m: (200.0, 1000.0),
            speed_max_mps: 30.0,
        }
    }

    #[test]
    fn full_memory_keeps_velocity() {
        let params = MobilityParams {
            alpha: 1.0,
            sigma_mps: 5.0,
            step_ms: 100,
        };
        let mut st = MobilityState {
            position: [0.0, 0.0, 600.0],
            velocity: [3.0, -2.0, 1.0],
            mean_velocity: [10.0, 10.0, 10.0],
        };
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        st.step(0.1, &params, &bounds(), &mut rng);
        assert_eq!(st.velocity, [3.0, -2.0, 1.0]);
    }

    #[test]
    fn memoryless_noiseless_jumps_to_mean() {
        let params = MobilityParams {
            alpha: 0.0,
            sigma_mps: 0.0,
            step_ms: 100,
        };
        let mut st = MobilityState {
            position: [0.0, 0.0, 600.0],
            velocity: [9.0, 9.0, 9.0],
            mean_velocity: [4.0, -5.0, 0.5],
        };
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        st.step(0.1, &params, &bounds(), &mut rng);
        assert_eq!(st.velocity, [4.0, -5.0, 0.5]);
    }

    #[test]
    fn generic_step_matches_formula_oracle() {
        let params = MobilityParams {
            alpha: 0.85,
            sigma_mps: 1.0,
            step_ms: 100,
        };
        let start = MobilityState {
            position: [10.0, 20.0, 400.0],
            velocity: [1.0, 2.0, -0.5],
            mean_velocity: [3.0, 0.0, 0.2],
        };
        let mut engine_state = start;
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        engine_state.step(0.1, &params, &bounds(), &mut rng);

        // Oracle: replay the identical normal draws through the raw formula.
        let mut oracle_rng = ChaCha12Rng::seed_from_u64(3);
        let a = params.alpha;
        let noise = params.sigma_mps * (1.0 - a * a).sqrt();
        let mut v = start.velocity;
        let mu = start.mean_velocity;
        for (axis, item) in v.iter_mut().enumerate() {
            let w: f64 = oracle_rng.sample(StandardNormal);
            *item = a * start.velocity[axis] + (1.0 - a) * mu[axis] + noise * w;
        }
        assert_eq!(engine_state.velocity, v, "speed clamp must not fire here");
    }

    #[test]
    fn long_walk_stays_contained_and_speed_limited() {
        let params = MobilityParams::default();
        let b = bounds();
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let mut st = MobilityState {
            position: [990.0, 0.0, 210.0],
            velocity: [25.0, 3.0, -8.0],
            mean_velocity: [15.0, 0.0, -2.0],
        };
        for _ in 0..20_000 {
            st.step(0.1, &params, &b, &mut rng);
            assert!(b.contains(&st.position), "escaped at {:?}", st.position);
            let speed = (st.velocity[0].powi(2) + st.velocity[1].powi(2) + st.velocity[2].powi(2)).sqrt();
            assert!(speed <= b.speed_max_mps + 1e-9);
        }
    }
}
