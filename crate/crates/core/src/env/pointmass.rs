//! A 2-D point mass driven by a bounded force.
//!
//! State `(px, py, vx, vy)`, action `(fx, fy)` in `[-1, 1]^2`. One step:
//!
//! ```text
//! v' = clip(v + 0.1 a, -1, 1)
//! p' = p + 0.1 v'
//! ```
//!
//! Positions are clamped to the arena `[-5, 5]^2` and the velocity component along a wall the
//! mass runs into is zeroed. The reward is `-|| p' - goal ||`.

use crate::nn::SeededRng;

pub const STATE_DIM: usize = 4;
pub const ACTION_DIM: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct PointMassConfig {
    pub goal: [f64; 2],
    pub arena: f64,
    pub horizon: usize,
    pub dt: f64,
    pub max_speed: f64,
    pub goal_radius: f64,
    /// Episodes start at rest, uniformly within `start_center +- start_spread` per axis.
    pub start_center: [f64; 2],
    pub start_spread: f64,
}

impl Default for PointMassConfig {
    fn default() -> Self {
        Self {
            goal: [3.0, 3.0],
            arena: 5.0,
            horizon: 200,
            dt: 0.1,
            max_speed: 1.0,
            goal_radius: 0.1,
            start_center: [-3.0, -3.0],
            start_spread: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub next_state: [f64; STATE_DIM],
    pub reward: f64,
    /// Goal reached.
    pub terminal: bool,
    /// Horizon reached without reaching the goal.
    pub truncated: bool,
}

impl Step {
    pub fn done(&self) -> bool {
        self.terminal || self.truncated
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointMassEnv {
    pub config: PointMassConfig,
    t: usize,
}

impl Default for PointMassEnv {
    fn default() -> Self {
        Self::new(PointMassConfig::default())
    }
}

impl PointMassEnv {
    pub const ID: &'static str = "pointmass";

    pub fn new(config: PointMassConfig) -> Self {
        Self { config, t: 0 }
    }

    pub fn elapsed(&self) -> usize {
        self.t
    }

    pub fn action_bounds(&self) -> ([f64; ACTION_DIM], [f64; ACTION_DIM]) {
        ([-1.0; ACTION_DIM], [1.0; ACTION_DIM])
    }

    pub fn reset(&mut self, rng: &mut SeededRng) -> [f64; STATE_DIM] {
        self.t = 0;
        let c = &self.config;
        [
            rng.uniform(c.start_center[0] - c.start_spread, c.start_center[0] + c.start_spread),
            rng.uniform(c.start_center[1] - c.start_spread, c.start_center[1] + c.start_spread),
            0.0,
            0.0,
        ]
    }

    pub fn goal_distance(&self, s: &[f64]) -> f64 {
        let dx = s[0] - self.config.goal[0];
        let dy = s[1] - self.config.goal[1];
        (dx * dx + dy * dy).sqrt()
    }

    /// Pure transition; does not advance the episode clock.
    pub fn dynamics(&self, s: &[f64], a: &[f64]) -> ([f64; STATE_DIM], f64, bool) {
        let c = &self.config;
        let mut next = [0.0; STATE_DIM];
        for axis in 0..2 {
            let force = a[axis].clamp(-1.0, 1.0);
            let mut v = (s[2 + axis] + c.dt * force).clamp(-c.max_speed, c.max_speed);
            let mut p = s[axis] + c.dt * v;
            if p > c.arena || p < -c.arena {
                p = p.clamp(-c.arena, c.arena);
                v = 0.0;
            }
            next[axis] = p;
            next[2 + axis] = v;
        }
        let dist = self.goal_distance(&next);
        (next, -dist, dist < c.goal_radius)
    }

    /// Advances the episode clock by one step.
    pub fn step(&mut self, s: &[f64], a: &[f64]) -> Step {
        let (next_state, reward, terminal) = self.dynamics(s, a);
        self.t += 1;
        Step { next_state, reward, terminal, truncated: !terminal && self.t >= self.config.horizon }
    }
}

/// Saturating proportional-derivative controller toward the goal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdController {
    pub kp: f64,
    pub kd: f64,
}

impl Default for PdController {
    fn default() -> Self {
        Self { kp: 1.0, kd: 2.0 }
    }
}

impl PdController {
    pub fn act(&self, env: &PointMassEnv, s: &[f64]) -> [f64; ACTION_DIM] {
        let g = env.config.goal;
        [
            (self.kp * (g[0] - s[0]) - self.kd * s[2]).clamp(-1.0, 1.0),
            (self.kp * (g[1] - s[1]) - self.kd * s[3]).clamp(-1.0, 1.0),
        ]
    }
}
