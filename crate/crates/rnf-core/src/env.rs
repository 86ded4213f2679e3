//! Desk-scale continuous-control environments.
//!
//! Two tiny tasks exercise the policy machinery end to end:
//!
//! - [`BimodalBandit`]: a one-step contextual bandit whose reward has a wide
//!   low bump at `a = -1` and a narrow high bump at `a = 1.5`. A unimodal
//!   policy started near zero is pulled toward the wide mode while the
//!   optimum sits in the narrow one, so solving it exercises exactly the
//!   multimodality a flow policy is for. The context is irrelevant to the
//!   reward; the policy must learn to ignore it.
//! - [`PointReach`]: a 1-D point mass driven by clipped acceleration toward
//!   the origin under a quadratic cost, horizon 100.

use alloc::vec::Vec;

use crate::rng::Rng64;

/// One environment step for rollout buffers.
#[derive(Clone, Debug)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub state: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

pub trait Environment {
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn reset(&mut self, rng: &mut Rng64) -> Vec<f64>;
    fn step(&mut self, action: &[f64]) -> StepOutcome;
}

/// Reward surface of the bandit: `0.6 exp(-(a+1)^2 / (2 * 0.4^2))
/// + 1.0 exp(-(a-1.5)^2 / (2 * 0.15^2))`.
pub fn bandit_reward(a: f64) -> f64 {
    let wide = a + 1.0;
    let narrow = a - 1.5;
    0.6 * libm::exp(-wide * wide / (2.0 * 0.4 * 0.4))
        + libm::exp(-narrow * narrow / (2.0 * 0.15 * 0.15))
}

/// One-step bandit with a two-dimensional uniform context in `[-1, 1]^2`.
#[derive(Clone, Debug, Default)]
pub struct BimodalBandit {
    context: [f64; 2],
}

impl BimodalBandit {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Environment for BimodalBandit {
    fn state_dim(&self) -> usize {
        2
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn reset(&mut self, rng: &mut Rng64) -> Vec<f64> {
        self.context = [rng.uniform_in(-1.0, 1.0), rng.uniform_in(-1.0, 1.0)];
        self.context.to_vec()
    }

    fn step(&mut self, action: &[f64]) -> StepOutcome {
        StepOutcome {
            state: self.context.to_vec(),
            reward: bandit_reward(action[0]),
            done: true,
        }
    }
}

/// 1-D point mass: state `(position, velocity)`, action the acceleration
/// clipped to `[-1, 1]`. Semi-implicit Euler with `dt = 0.1`; reward
/// `-position^2 - 0.01 a^2` at the post-step position.
#[derive(Clone, Debug)]
pub struct PointReach {
    position: f64,
    velocity: f64,
    steps: usize,
    horizon: usize,
    fixed_start: Option<f64>,
}

impl PointReach {
    const DT: f64 = 0.1;

    pub fn new(horizon: usize) -> Self {
        PointReach { position: 0.0, velocity: 0.0, steps: 0, horizon, fixed_start: None }
    }

    /// Deterministic variant starting every episode from `position`.
    pub fn with_start(position: f64, horizon: usize) -> Self {
        PointReach { fixed_start: Some(position), ..Self::new(horizon) }
    }
}

impl Environment for PointReach {
    fn state_dim(&self) -> usize {
        2
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn reset(&mut self, rng: &mut Rng64) -> Vec<f64> {
        self.position = self.fixed_start.unwrap_or_else(|| rng.uniform_in(-1.0, 1.0));
        self.velocity = 0.0;
        self.steps = 0;
        alloc::vec![self.position, self.velocity]
    }

    fn step(&mut self, action: &[f64]) -> StepOutcome {
        let a = action[0].clamp(-1.0, 1.0);
        self.velocity += Self::DT * a;
        self.position += Self::DT * self.velocity;
        self.steps += 1;
        StepOutcome {
            state: alloc::vec![self.position, self.velocity],
            reward: -self.position * self.position - 0.01 * a * a,
            done: self.steps >= self.horizon,
        }
    }
}
