//! Problem instances, control sequences, trajectories and rollout.
//!
//! Every optimizer and loss in the crate is written against [`ControlProblem`],
//! a horizon-`H` discrete-time problem with box-bounded controls. Environments
//! expose one through [`crate::envs::Env::problem`]; tests also implement it for
//! plain linear-quadratic systems.

use serde::{Deserialize, Serialize};

use crate::envs::EnvId;
use crate::error::{Error, Result};
use crate::linalg::Mat;

/// What a problem instance is tracking.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Target {
    /// A fixed goal state (toy1d, cartpole, reacher).
    Goal(Vec<f64>),
    /// One reference state per control step, `H × n` (driving).
    Reference(Mat),
}

/// The parameter vector of one optimization problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub env_id: EnvId,
    pub x0: Vec<f64>,
    pub target: Target,
    pub instance_id: u64,
    pub seed: u64,
}

impl ProblemInstance {
    /// The state tracked at the end of control step `t` (i.e. by `states[t + 1]`).
    pub fn target_at(&self, t: usize) -> &[f64] {
        match &self.target {
            Target::Goal(g) => g,
            Target::Reference(r) => r.row(t.min(r.rows() - 1)),
        }
    }
}

/// `H × m` controls. Row `t` is the control applied at step `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlSequence(Mat);

impl ControlSequence {
    pub fn new(controls: Mat) -> Result<Self> {
        if controls.rows() == 0 {
            return Err(Error::Dimension {
                context: "control horizon",
                expected: 1,
                got: 0,
            });
        }
        if !controls.is_finite() {
            return Err(Error::NonFinite("control sequence"));
        }
        Ok(Self(controls))
    }

    pub fn zeros(horizon: usize, m: usize) -> Self {
        Self(Mat::zeros(horizon, m))
    }

    pub fn from_flat(horizon: usize, m: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != horizon * m {
            return Err(Error::Dimension {
                context: "flat control sequence",
                expected: horizon * m,
                got: data.len(),
            });
        }
        Self::new(Mat::from_vec(horizon, m, data))
    }

    #[inline]
    pub fn horizon(&self) -> usize {
        self.0.rows()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.0.cols()
    }

    #[inline]
    pub fn at(&self, t: usize) -> &[f64] {
        self.0.row(t)
    }

    #[inline]
    pub fn at_mut(&mut self, t: usize) -> &mut [f64] {
        self.0.row_mut(t)
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        self.0.as_mut_slice()
    }

    pub fn matrix(&self) -> &Mat {
        &self.0
    }

    pub fn clamp_to(&mut self, lo: &[f64], hi: &[f64]) {
        for t in 0..self.horizon() {
            clamp_into(self.0.row_mut(t), lo, hi);
        }
    }

    pub fn clamped(mut self, lo: &[f64], hi: &[f64]) -> Self {
        self.clamp_to(lo, hi);
        self
    }
}

pub(crate) fn clamp_into(u: &mut [f64], lo: &[f64], hi: &[f64]) {
    for ((v, &l), &h) in u.iter_mut().zip(lo).zip(hi) {
        *v = v.clamp(l, h);
    }
}

/// A rolled-out solution: `H + 1` states, `H` controls and their cost.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Mat,
    pub controls: ControlSequence,
    pub cost: f64,
}

impl Trajectory {
    pub fn final_state(&self) -> &[f64] {
        self.states.row(self.states.rows() - 1)
    }
}

/// K proposed initializations with provenance labels.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateSet {
    candidates: Vec<ControlSequence>,
    labels: Vec<String>,
}

impl CandidateSet {
    pub fn new(candidates: Vec<ControlSequence>, labels: Vec<String>) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::Config("candidate set must not be empty".into()));
        }
        if labels.len() != candidates.len() {
            return Err(Error::Dimension {
                context: "candidate labels",
                expected: candidates.len(),
                got: labels.len(),
            });
        }
        let (h, m) = (candidates[0].horizon(), candidates[0].dim());
        for c in &candidates {
            if c.horizon() != h || c.dim() != m {
                return Err(Error::Dimension {
                    context: "candidate shape",
                    expected: h * m,
                    got: c.horizon() * c.dim(),
                });
            }
        }
        Ok(Self { candidates, labels })
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn candidates(&self) -> &[ControlSequence] {
        &self.candidates
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn push(&mut self, candidate: ControlSequence, label: impl Into<String>) -> Result<()> {
        let first = &self.candidates[0];
        if candidate.horizon() != first.horizon() || candidate.dim() != first.dim() {
            return Err(Error::Dimension {
                context: "candidate shape",
                expected: first.horizon() * first.dim(),
                got: candidate.horizon() * candidate.dim(),
            });
        }
        self.candidates.push(candidate);
        self.labels.push(label.into());
        Ok(())
    }

    pub fn into_parts(self) -> (Vec<ControlSequence>, Vec<String>) {
        (self.candidates, self.labels)
    }
}

/// Second-order expansion of a stage cost. Hessians are Gauss-Newton.
#[derive(Clone, Debug)]
pub struct CostExpansion {
    pub lx: Vec<f64>,
    pub lu: Vec<f64>,
    pub lxx: Mat,
    pub luu: Mat,
    /// `∂²ℓ/∂u∂x`, `m × n`.
    pub lux: Mat,
}

/// A finite-horizon discrete-time optimal control problem with box-bounded controls.
///
/// Cost: `Σ_{t<H} stage_cost(t, x_t, u_t) + terminal_cost(x_H)`.
pub trait ControlProblem: Sync {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn horizon(&self) -> usize;
    fn initial_state(&self) -> &[f64];
    fn control_lower(&self) -> &[f64];
    fn control_upper(&self) -> &[f64];

    /// One step of the dynamics. `u` is already inside the bounds.
    fn step(&self, x: &[f64], u: &[f64]) -> Vec<f64>;
    /// `(∂f/∂x, ∂f/∂u)` at `(x, u)`.
    fn linearize(&self, x: &[f64], u: &[f64]) -> (Mat, Mat);

    fn stage_cost(&self, t: usize, x: &[f64], u: &[f64]) -> f64;
    fn terminal_cost(&self, x: &[f64]) -> f64;
    fn stage_expansion(&self, t: usize, x: &[f64], u: &[f64]) -> CostExpansion;
    /// `(∂φ/∂x, ∂²φ/∂x²)` of the terminal cost.
    fn terminal_expansion(&self, x: &[f64]) -> (Vec<f64>, Mat);
}

/// Sum of stage and terminal costs along given states and controls.
pub fn trajectory_cost<P: ControlProblem + ?Sized>(
    problem: &P,
    states: &Mat,
    controls: &ControlSequence,
) -> Result<f64> {
    let h = controls.horizon();
    check_dims(problem, controls)?;
    if states.rows() != h + 1 || states.cols() != problem.state_dim() {
        return Err(Error::Dimension {
            context: "trajectory states",
            expected: (h + 1) * problem.state_dim(),
            got: states.rows() * states.cols(),
        });
    }
    let mut cost = 0.0;
    for t in 0..h {
        cost += problem.stage_cost(t, states.row(t), controls.at(t));
    }
    Ok(cost + problem.terminal_cost(states.row(h)))
}

fn check_dims<P: ControlProblem + ?Sized>(problem: &P, controls: &ControlSequence) -> Result<()> {
    if controls.horizon() != problem.horizon() {
        return Err(Error::Dimension {
            context: "control horizon",
            expected: problem.horizon(),
            got: controls.horizon(),
        });
    }
    if controls.dim() != problem.control_dim() {
        return Err(Error::Dimension {
            context: "control dimension",
            expected: problem.control_dim(),
            got: controls.dim(),
        });
    }
    Ok(())
}

/// Simulates `controls` from the problem's initial state.
///
/// Controls are clamped to the box before use and the clamped values are what
/// the returned trajectory records.
pub fn rollout<P: ControlProblem + ?Sized>(problem: &P, controls: &ControlSequence) -> Result<Trajectory> {
    check_dims(problem, controls)?;
    let (n, h) = (problem.state_dim(), problem.horizon());
    if problem.initial_state().len() != n {
        return Err(Error::Dimension {
            context: "initial state",
            expected: n,
            got: problem.initial_state().len(),
        });
    }
    let controls = controls
        .clone()
        .clamped(problem.control_lower(), problem.control_upper());
    let mut states = Mat::zeros(h + 1, n);
    states.row_mut(0).copy_from_slice(problem.initial_state());
    let mut cost = 0.0;
    for t in 0..h {
        let x = states.row(t).to_vec();
        let next = problem.step(&x, controls.at(t));
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step: t });
        }
        cost += problem.stage_cost(t, &x, controls.at(t));
        states.row_mut(t + 1).copy_from_slice(&next);
    }
    cost += problem.terminal_cost(states.row(h));
    if !cost.is_finite() {
        return Err(Error::Divergence { step: h });
    }
    Ok(Trajectory { states, controls, cost })
}

/// The classic warm start: drop the first control, append a zero control.
pub fn warm_start_shift(prev: &ControlSequence) -> ControlSequence {
    let (h, m) = (prev.horizon(), prev.dim());
    let mut out = ControlSequence::zeros(h, m);
    for t in 1..h {
        out.at_mut(t - 1).copy_from_slice(prev.at(t));
    }
    out
}
