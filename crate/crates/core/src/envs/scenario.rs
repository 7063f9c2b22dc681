//! Per-episode problem generators.
//!
//! A scenario fixes everything about an episode except the evolving state:
//! the start state, the goal, and for driving the reference path (including an
//! optional abrupt switch to a laterally offset path part-way through).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Env, EnvId, Physics};
use crate::linalg::Mat;
use crate::problem::{ProblemInstance, Target};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Goal,
    LaneKeep,
    LaneChange,
    Arc,
}

#[derive(Clone, Debug)]
struct RoadPaths {
    primary: Mat,
    /// Step at which the planner replaces the reference, and the new path.
    switched: Option<(usize, Mat)>,
}

#[derive(Clone, Debug)]
pub struct Scenario {
    env_id: EnvId,
    horizon: usize,
    seed: u64,
    kind: ScenarioKind,
    x0: Vec<f64>,
    goal: Vec<f64>,
    road: Option<RoadPaths>,
}

impl Scenario {
    pub fn new(env: &Env, seed: u64) -> Self {
        Self::with_length(env, seed, env.t_env)
    }

    /// A scenario whose reference covers at least `steps` executed steps.
    pub fn with_length(env: &Env, seed: u64, steps: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match &env.physics {
            Physics::Driving(p) => {
                let len = steps + env.horizon + 2;
                let v_ref: f64 = rng.random_range(4.0..12.0);
                let kind = match rng.random_range(0..3) {
                    0 => ScenarioKind::LaneKeep,
                    1 => ScenarioKind::LaneChange,
                    _ => ScenarioKind::Arc,
                };
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                let curvature: Box<dyn Fn(usize) -> f64> = match kind {
                    ScenarioKind::LaneKeep | ScenarioKind::Goal => Box::new(|_| 0.0),
                    ScenarioKind::Arc => {
                        let k = sign * rng.random_range(0.01..0.04);
                        Box::new(move |_| k)
                    }
                    ScenarioKind::LaneChange => {
                        let amp = sign * rng.random_range(0.01..0.02);
                        let start = rng.random_range(3..12usize);
                        let dur = 20usize;
                        Box::new(move |k| {
                            if k >= start && k < start + dur {
                                amp * (2.0 * std::f64::consts::PI * (k - start) as f64 / dur as f64).sin()
                            } else {
                                0.0
                            }
                        })
                    }
                };
                let mut primary = Mat::zeros(len, 5);
                let (mut x, mut y, mut phi) = (0.0f64, 0.0f64, 0.0f64);
                for k in 0..len {
                    let kappa = curvature(k);
                    let row = primary.row_mut(k);
                    row.copy_from_slice(&[x, y, phi, v_ref, (p.wheelbase * kappa).atan()]);
                    x += env.dt * v_ref * phi.cos();
                    y += env.dt * v_ref * phi.sin();
                    phi += env.dt * v_ref * kappa;
                }
                let switched = if steps >= 20 && rng.random::<bool>() {
                    let at = rng.random_range(8..steps - 8);
                    let offset = if rng.random::<bool>() { 1.0 } else { -1.0 } * rng.random_range(2.5..3.5);
                    let mut alt = primary.clone();
                    for k in 0..len {
                        let row = alt.row_mut(k);
                        let (s, c) = row[2].sin_cos();
                        row[0] -= offset * s;
                        row[1] += offset * c;
                    }
                    Some((at, alt))
                } else {
                    None
                };
                let r0 = primary.row(0);
                let (s, c) = r0[2].sin_cos();
                let lateral = rng.random_range(-1.0..1.0);
                let x0 = vec![
                    r0[0] - lateral * s,
                    r0[1] + lateral * c,
                    r0[2] + rng.random_range(-0.1..0.1),
                    (v_ref + rng.random_range(-2.0..2.0)).max(0.0),
                    0.0,
                ];
                Scenario {
                    env_id: env.id,
                    horizon: env.horizon,
                    seed,
                    kind,
                    x0,
                    goal: Vec::new(),
                    road: Some(RoadPaths { primary, switched }),
                }
            }
            _ => {
                let (x0, goal) = env.sample_start(&mut rng);
                Scenario {
                    env_id: env.id,
                    horizon: env.horizon,
                    seed,
                    kind: ScenarioKind::Goal,
                    x0,
                    goal,
                    road: None,
                }
            }
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn kind(&self) -> ScenarioKind {
        self.kind
    }

    pub fn initial_state(&self) -> &[f64] {
        &self.x0
    }

    /// Step at which the driving reference jumps, if it does.
    pub fn switch_step(&self) -> Option<usize> {
        self.road.as_ref().and_then(|r| r.switched.as_ref().map(|(k, _)| *k))
    }

    /// The problem faced at `step` from `state` (the scenario start if `None`).
    pub fn instance_at(&self, step: usize, state: Option<&[f64]>, instance_id: u64) -> ProblemInstance {
        let x0 = state.unwrap_or(&self.x0).to_vec();
        let target = match &self.road {
            None => Target::Goal(self.goal.clone()),
            Some(road) => {
                let path = match &road.switched {
                    Some((at, alt)) if step >= *at => alt,
                    _ => &road.primary,
                };
                let last = path.rows() - 1;
                Target::Reference(Mat::from_fn(self.horizon, path.cols(), |i, j| {
                    path[((step + 1 + i).min(last), j)]
                }))
            }
        };
        ProblemInstance {
            env_id: self.env_id,
            x0,
            target,
            instance_id,
            seed: self.seed,
        }
    }
}
