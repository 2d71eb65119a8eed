//! Continuous-action Q-learning with an ICNN Q-function: the negated Q is a
//! PICNN in the action, so greedy action selection is a convex minimization
//! over the unit box. Includes a ring replay buffer, clipped Gaussian
//! exploration, a target network with soft updates, and toy environments.

mod envs;

pub use envs::{env_bandit, env_pointmass, Bandit, PointMass};

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::data::gaussian;
use crate::learn::{adam_update, AdamCfg, AdamState, LearnError};
use crate::net::{forward, grad_params, Gradients, NetError, Params};
use crate::solver::{
    bundle_entropy, entropy_extended, projected_gradient, BundleOptions, PgOptions, SolverError,
};

#[derive(Debug, Error)]
pub enum RlError {
    #[error("episode is over; call reset before stepping")]
    EpisodeOver,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Net(#[from] NetError),
}

/// Environment behavior: episodic, deterministic given the reset seed and
/// the action sequence. Actions are in environment coordinates within
/// `action_bounds`; the agent maps its unit-box actions through
/// `a_env = lo + (hi - lo) * a`.
pub trait Env {
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn action_bounds(&self) -> (Array1<f64>, Array1<f64>);
    fn horizon(&self) -> usize;
    fn reset(&mut self, seed: u64) -> Array1<f64>;
    fn step(&mut self, a_env: &Array1<f64>) -> Result<(Array1<f64>, f64, bool), RlError>;
}

/// One `(s, a, s+, r+)` tuple; the action is stored in network coordinates
/// (inside the unit box).
#[derive(Clone, Debug)]
pub struct Transition {
    pub s: Array1<f64>,
    pub a: Array1<f64>,
    pub s_next: Array1<f64>,
    pub r: f64,
    pub terminal: bool,
}

/// Fixed-capacity ring buffer with seeded uniform sampling (without
/// replacement inside a minibatch).
pub struct ReplayBuffer {
    items: Vec<Transition>,
    next: usize,
    capacity: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> ReplayBuffer {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            items: Vec::with_capacity(capacity),
            next: 0,
            capacity,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn sample<'a>(&'a self, batch: usize, rng: &mut ChaCha8Rng) -> Vec<&'a Transition> {
        let take = batch.min(self.items.len());
        rand::seq::index::sample(rng, self.items.len(), take)
            .into_iter()
            .map(|i| &self.items[i])
            .collect()
    }
}

#[derive(Clone, Copy, Debug)]
pub enum SolverChoice {
    Bundle { iterations: usize },
    Gradient { steps: usize, step_size: f64, momentum: f64 },
}

#[derive(Clone, Copy, Debug)]
pub struct QAgentConfig {
    pub gamma: f64,
    pub tau: f64,
    /// Std-dev of the clipped Gaussian exploration noise, in box coords.
    pub noise_sigma: f64,
    pub solver: SolverChoice,
    pub episodes: usize,
    pub minibatch: usize,
    pub capacity: usize,
    pub seed: u64,
    pub adam: AdamCfg,
}

impl QAgentConfig {
    pub fn validate(&self) -> Result<(), RlError> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(RlError::InvalidConfig(format!(
                "gamma must lie in (0,1), got {}",
                self.gamma
            )));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(RlError::InvalidConfig(format!(
                "tau must lie in (0,1), got {}",
                self.tau
            )));
        }
        if self.minibatch == 0 || self.capacity == 0 {
            return Err(RlError::InvalidConfig(
                "minibatch and capacity must be positive".into(),
            ));
        }
        Ok(())
    }
}

impl Default for QAgentConfig {
    fn default() -> Self {
        QAgentConfig {
            gamma: 0.9,
            tau: 0.05,
            noise_sigma: 0.1,
            solver: SolverChoice::Bundle { iterations: 5 },
            episodes: 40,
            minibatch: 32,
            capacity: 20_000,
            seed: 0,
            adam: AdamCfg::default(),
        }
    }
}

/// Q(s, a) = -f(s, a) where f is the PICNN energy.
pub fn q_value(params: &Params, s: &Array1<f64>, a: &Array1<f64>) -> Result<f64, RlError> {
    let (v, _) = forward(params, Some(s.view()), a.view())?;
    Ok(-v)
}

/// The objective the optimizer and the TD loss share: with the bundle
/// solver this is `Q + H(a)` (entropy by continuous extension at clipped
/// actions); with plain gradient descent it is `Q` itself.
pub fn q_tilde(
    params: &Params,
    s: &Array1<f64>,
    a: &Array1<f64>,
    solver: &SolverChoice,
) -> Result<f64, RlError> {
    let q = q_value(params, s, a)?;
    Ok(match solver {
        SolverChoice::Bundle { .. } => q + entropy_extended(a),
        SolverChoice::Gradient { .. } => q,
    })
}

/// Greedy action in network coordinates: minimizes `-Q(s, .)` with the
/// configured solver from the interior start `a0 = 0.5`.
pub fn select_action(
    params: &Params,
    s: &Array1<f64>,
    solver: &SolverChoice,
) -> Result<Array1<f64>, RlError> {
    let d = params.spec().input_dim_y;
    let a0 = Array1::from_elem(d, 0.5);
    let oracle = crate::learn::energy_oracle(params, Some(s));
    match solver {
        SolverChoice::Bundle { iterations } => {
            let report = bundle_entropy(
                oracle,
                &a0,
                &BundleOptions {
                    iterations: *iterations,
                    epsilon: 1.0,
                },
            )?;
            Ok(report.y)
        }
        SolverChoice::Gradient {
            steps,
            step_size,
            momentum,
        } => Ok(projected_gradient(
            oracle,
            &a0,
            &PgOptions {
                steps: *steps,
                step_size: *step_size,
                momentum: *momentum,
            },
        )),
    }
}

/// Bellman targets `y_m = r + gamma Q(s+, a+; target)` with the inner
/// maximization solved against the target parameters; terminal transitions
/// use `y_m = r`.
pub fn bellman_targets(
    target_params: &Params,
    batch: &[&Transition],
    gamma: f64,
    solver: &SolverChoice,
) -> Result<Vec<f64>, RlError> {
    let mut out = Vec::with_capacity(batch.len());
    for t in batch {
        if t.terminal || gamma == 0.0 {
            out.push(t.r);
        } else {
            let a_next = select_action(target_params, &t.s_next, solver)?;
            out.push(t.r + gamma * q_value(target_params, &t.s_next, &a_next)?);
        }
    }
    Ok(out)
}

/// One ADAM step on the mean squared Bellman residual
/// `(1/M) sum_m (q_tilde(s_m, a_m) - y_m)^2`. Returns the loss.
pub fn q_update(
    params: &mut Params,
    adam: &mut AdamState,
    batch: &[&Transition],
    targets: &[f64],
    solver: &SolverChoice,
) -> Result<f64, RlError> {
    assert_eq!(batch.len(), targets.len(), "batch/target length mismatch");
    let m = batch.len() as f64;
    let mut grads = Gradients::zeros_like(params);
    let mut loss = 0.0;
    for (t, &target) in batch.iter().zip(targets.iter()) {
        let qt = q_tilde(params, &t.s, &t.a, solver)?;
        let residual = qt - target;
        loss += residual * residual / m;
        // d qt / d theta = -grad_params(f)
        let (_, tape) = forward(params, Some(t.s.view()), t.a.view())?;
        grads.axpy(-2.0 * residual / m, &grad_params(params, &tape));
    }
    adam_update(adam, params, &grads);
    Ok(loss)
}

/// Exact per-tensor convex combination `target <- tau*params + (1-tau)*target`.
pub fn soft_update(target_params: &mut Params, params: &Params, tau: f64) {
    let mut t = target_params.flatten();
    let p = params.flatten();
    assert_eq!(t.len(), p.len(), "parameter shape mismatch");
    for i in 0..t.len() {
        t[i] = tau * p[i] + (1.0 - tau) * t[i];
    }
    target_params.assign_flat(&t);
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeLog {
    pub episode: usize,
    pub steps: usize,
    pub ret: f64,
    pub mean_td_loss: f64,
}

/// Counters for the inner-solve accounting: one action solve per
/// environment step, one target solve per sampled transition.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct QLearnStats {
    pub action_solves: u64,
    pub target_solves: u64,
    pub updates: u64,
}

pub struct QLearnOutcome {
    pub params: Params,
    pub log: Vec<EpisodeLog>,
    pub stats: QLearnStats,
}

/// Full Q-learning loop: per step, select a noisy action, store the
/// transition, sample a minibatch, fit the Bellman residual, and soft-update
/// the target network. No updates happen until the buffer holds one full
/// minibatch. Deterministic for a fixed seed.
pub fn run_q_learning<E: Env>(
    env: &mut E,
    params0: &Params,
    cfg: &QAgentConfig,
) -> Result<QLearnOutcome, RlError> {
    cfg.validate()?;
    let spec = params0.spec();
    if spec.input_dim_x != env.state_dim() || spec.input_dim_y != env.action_dim() {
        return Err(RlError::InvalidConfig(format!(
            "network is {}x{} but env wants {}x{}",
            spec.input_dim_x,
            spec.input_dim_y,
            env.state_dim(),
            env.action_dim()
        )));
    }

    let mut params = params0.clone();
    let mut target = params.clone();
    let mut adam = AdamState::new(&params, cfg.adam);
    let mut buffer = ReplayBuffer::new(cfg.capacity);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x4e4f4953);
    let mut sample_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x53414d50);
    let (lo, hi) = env.action_bounds();
    let span = &hi - &lo;
    let mut stats = QLearnStats::default();
    let mut log = Vec::with_capacity(cfg.episodes);

    for episode in 0..cfg.episodes {
        let mut s = env.reset(cfg.seed.wrapping_add(episode as u64));
        let mut ret = 0.0;
        let mut steps = 0usize;
        let mut td_sum = 0.0;
        let mut td_count = 0usize;
        for _ in 0..env.horizon() {
            let mut a = select_action(&params, &s, &cfg.solver)?;
            stats.action_solves += 1;
            if cfg.noise_sigma > 0.0 {
                a = a.mapv(|v| v) + Array1::from_shape_fn(a.len(), |_| {
                    cfg.noise_sigma * gaussian(&mut noise_rng)
                });
                a = a.mapv(|v| v.clamp(0.0, 1.0));
            }
            let a_env = &lo + &(&span * &a);
            let (s_next, r, terminal) = env.step(&a_env)?;
            ret += r;
            steps += 1;
            buffer.push(Transition {
                s: s.clone(),
                a,
                s_next: s_next.clone(),
                r,
                terminal,
            });

            if buffer.len() >= cfg.minibatch {
                let batch = buffer.sample(cfg.minibatch, &mut sample_rng);
                let targets = bellman_targets(&target, &batch, cfg.gamma, &cfg.solver)?;
                stats.target_solves += batch.iter().filter(|t| !t.terminal).count() as u64;
                let loss = q_update(&mut params, &mut adam, &batch, &targets, &cfg.solver)?;
                soft_update(&mut target, &params, cfg.tau);
                stats.updates += 1;
                td_sum += loss;
                td_count += 1;
            }

            s = s_next;
            if terminal {
                break;
            }
        }
        log.push(EpisodeLog {
            episode,
            steps,
            ret,
            mean_td_loss: if td_count > 0 {
                td_sum / td_count as f64
            } else {
                0.0
            },
        });
    }
    Ok(QLearnOutcome { params, log, stats })
}

/// Mean return of a uniform-random policy, for baselines.
pub fn run_random_policy<E: Env>(env: &mut E, episodes: usize, seed: u64) -> Result<f64, RlError> {
    let (lo, hi) = env.action_bounds();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for e in 0..episodes {
        let mut _s = env.reset(seed.wrapping_add(e as u64));
        for _ in 0..env.horizon() {
            let a = Array1::from_shape_fn(lo.len(), |j| {
                lo[j] + (hi[j] - lo[j]) * rng.gen::<f64>()
            });
            let (s_next, r, terminal) = env.step(&a)?;
            total += r;
            _s = s_next;
            if terminal {
                break;
            }
        }
    }
    Ok(total / episodes.max(1) as f64)
}
