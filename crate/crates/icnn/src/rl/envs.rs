//! Built-in toy continuous-control environments.

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Env, RlError};

/// Point mass on a line: state (position, velocity), one action in [-1, 1].
///
/// ```text
/// p' = p + 0.05 v,  v' = v + 0.05 a,  r = -(p^2 + 0.1 v^2 + 0.001 a^2)
/// ```
///
/// Horizon 200; reset draws (p, v) uniformly from [-1, 1]^2. Position and
/// velocity are walled at +-3 so runaway policies cannot blow up the
/// reward scale (the walls are unreachable from the reset box under any
/// competent policy).
pub struct PointMass {
    p: f64,
    v: f64,
    steps: usize,
    done: bool,
}

const WALL: f64 = 3.0;

impl PointMass {
    pub fn new() -> PointMass {
        PointMass {
            p: 0.0,
            v: 0.0,
            steps: 0,
            done: true,
        }
    }
}

impl Default for PointMass {
    fn default() -> Self {
        PointMass::new()
    }
}

impl Env for PointMass {
    fn state_dim(&self) -> usize {
        2
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn action_bounds(&self) -> (Array1<f64>, Array1<f64>) {
        (Array1::from_elem(1, -1.0), Array1::from_elem(1, 1.0))
    }

    fn horizon(&self) -> usize {
        200
    }

    fn reset(&mut self, seed: u64) -> Array1<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.p = rng.gen::<f64>() * 2.0 - 1.0;
        self.v = rng.gen::<f64>() * 2.0 - 1.0;
        self.steps = 0;
        self.done = false;
        Array1::from_vec(vec![self.p, self.v])
    }

    fn step(&mut self, a_env: &Array1<f64>) -> Result<(Array1<f64>, f64, bool), RlError> {
        if self.done {
            return Err(RlError::EpisodeOver);
        }
        let a = a_env[0];
        let reward = -(self.p * self.p + 0.1 * self.v * self.v + 0.001 * a * a);
        let p_next = (self.p + 0.05 * self.v).clamp(-WALL, WALL);
        let v_next = (self.v + 0.05 * a).clamp(-WALL, WALL);
        self.p = p_next;
        self.v = v_next;
        self.steps += 1;
        if self.steps >= self.horizon() {
            self.done = true;
        }
        Ok((
            Array1::from_vec(vec![self.p, self.v]),
            reward,
            self.done,
        ))
    }
}

pub fn env_pointmass() -> PointMass {
    PointMass::new()
}

/// Single-step bandit with action in [0, 1] and reward `-(a - 0.4)^2`;
/// the analytic optimum is a = 0.4.
pub struct Bandit {
    done: bool,
}

impl Bandit {
    pub fn new() -> Bandit {
        Bandit { done: true }
    }
}

impl Default for Bandit {
    fn default() -> Self {
        Bandit::new()
    }
}

impl Env for Bandit {
    fn state_dim(&self) -> usize {
        1
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn action_bounds(&self) -> (Array1<f64>, Array1<f64>) {
        (Array1::zeros(1), Array1::ones(1))
    }

    fn horizon(&self) -> usize {
        1
    }

    fn reset(&mut self, _seed: u64) -> Array1<f64> {
        self.done = false;
        Array1::zeros(1)
    }

    fn step(&mut self, a_env: &Array1<f64>) -> Result<(Array1<f64>, f64, bool), RlError> {
        if self.done {
            return Err(RlError::EpisodeOver);
        }
        self.done = true;
        let d = a_env[0] - 0.4;
        Ok((Array1::zeros(1), -d * d, true))
    }
}

pub fn env_bandit() -> Bandit {
    Bandit::new()
}
