//! Analytic environments: dynamics, Jacobians, tracking costs and instance sampling.

pub mod cartpole;
pub mod driving;
pub mod reacher;
mod scenario;
pub mod toy;

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use cartpole::CartPoleParams;
pub use driving::DrivingParams;
pub use reacher::ReacherParams;
pub use scenario::{Scenario, ScenarioKind};

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::problem::{
    clamp_into, rollout, ControlProblem, ControlSequence, CostExpansion, ProblemInstance, Target, Trajectory,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvId {
    Toy1d,
    Cartpole,
    Reacher,
    Driving,
}

impl EnvId {
    pub const ALL: [EnvId; 4] = [EnvId::Toy1d, EnvId::Cartpole, EnvId::Reacher, EnvId::Driving];

    pub fn as_str(self) -> &'static str {
        match self {
            EnvId::Toy1d => "toy1d",
            EnvId::Cartpole => "cartpole",
            EnvId::Reacher => "reacher",
            EnvId::Driving => "driving",
        }
    }

    pub fn to_byte(self) -> u8 {
        match self {
            EnvId::Toy1d => 0,
            EnvId::Cartpole => 1,
            EnvId::Reacher => 2,
            EnvId::Driving => 3,
        }
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        Self::ALL.get(b as usize).copied()
    }
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "toy1d" | "toy" => Ok(EnvId::Toy1d),
            "cartpole" | "cart-pole" => Ok(EnvId::Cartpole),
            "reacher" => Ok(EnvId::Reacher),
            "driving" => Ok(EnvId::Driving),
            other => Err(Error::Config(format!("unknown environment '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Physics {
    Toy,
    CartPole(CartPoleParams),
    Reacher(ReacherParams),
    Driving(DrivingParams),
}

/// Immutable description of one environment.
///
/// State costs are weighted sums of squared residuals `Σ qᵢ rᵢ(x)²`. For
/// cartpole and driving the residual is `x − target`; reacher uses the
/// fingertip position error and joint velocities; toy1d uses the square root of
/// its two-well cost.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Env {
    pub id: EnvId,
    pub n: usize,
    pub m: usize,
    pub horizon: usize,
    pub dt: f64,
    pub u_min: Vec<f64>,
    pub u_max: Vec<f64>,
    /// Stage weights on the state residual.
    pub q: Vec<f64>,
    /// Terminal weights on the state residual.
    pub q_terminal: Vec<f64>,
    /// Control weights.
    pub r: Vec<f64>,
    pub physics: Physics,
    /// Default episode length for sequential runs.
    pub t_env: usize,
}

/// Overrides for [`Env`] loaded from TOML. Keys follow the usual symbols.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub env: Option<String>,
    pub m_c: Option<f64>,
    pub m_p: Option<f64>,
    pub l: Option<f64>,
    pub g: Option<f64>,
    pub n_sub_steps: Option<usize>,
    pub dt: Option<f64>,
    #[serde(rename = "H")]
    pub horizon: Option<usize>,
    pub u_min: Option<Vec<f64>>,
    pub u_max: Option<Vec<f64>>,
    #[serde(rename = "Q")]
    pub q: Option<Vec<f64>>,
    #[serde(rename = "Q_terminal")]
    pub q_terminal: Option<Vec<f64>>,
    #[serde(rename = "R")]
    pub r: Option<Vec<f64>>,
    #[serde(rename = "T_env")]
    pub t_env: Option<usize>,
    pub damping: Option<f64>,
    pub gear: Option<f64>,
    pub link_length: Option<[f64; 2]>,
    pub link_mass: Option<[f64; 2]>,
    pub wrist_limit_deg: Option<f64>,
    pub wheelbase: Option<f64>,
    pub v_min_linearization: Option<f64>,
    pub steer_max_deg: Option<f64>,
}

impl Env {
    pub fn new(id: EnvId) -> Self {
        match id {
            EnvId::Toy1d => Env {
                id,
                n: 1,
                m: 1,
                horizon: 5,
                dt: 1.0,
                u_min: vec![-1.0],
                u_max: vec![1.0],
                q: vec![1.0],
                q_terminal: vec![1.0],
                r: vec![0.0],
                physics: Physics::Toy,
                t_env: 1,
            },
            EnvId::Cartpole => Env {
                id,
                n: 4,
                m: 1,
                horizon: 10,
                dt: 0.1,
                u_min: vec![-5.5],
                u_max: vec![5.5],
                // (x, ẋ, θ, θ̇)
                q: vec![1.0, 0.01, 0.1, 0.01],
                q_terminal: vec![1.0, 0.01, 0.1, 0.01],
                r: vec![1e-4],
                physics: Physics::CartPole(CartPoleParams::default()),
                t_env: 50,
            },
            EnvId::Reacher => Env {
                id,
                n: 4,
                m: 2,
                horizon: 10,
                dt: 0.02,
                u_min: vec![-1.0, -1.0],
                u_max: vec![1.0, 1.0],
                // (tip error x, tip error y, ω₁, ω₂)
                q: vec![100.0, 100.0, 0.01, 0.01],
                q_terminal: vec![100.0, 100.0, 0.01, 0.01],
                r: vec![1e-3, 1e-3],
                physics: Physics::Reacher(ReacherParams::default()),
                t_env: 250,
            },
            EnvId::Driving => Env {
                id,
                n: 5,
                m: 2,
                horizon: 40,
                dt: 0.2,
                u_min: vec![-3.0, -0.5],
                u_max: vec![3.0, 0.5],
                q: vec![1.0, 1.0, 10.0, 0.0, 0.0],
                q_terminal: vec![1.0, 1.0, 10.0, 0.0, 0.0],
                r: vec![1.0, 10.0],
                physics: Physics::Driving(DrivingParams::default()),
                t_env: 50,
            },
        }
    }

    /// Defaults for `id` with `cfg` applied on top.
    pub fn with_config(id: EnvId, cfg: &EnvConfig) -> Result<Self> {
        if let Some(name) = &cfg.env {
            let named: EnvId = name.parse()?;
            if named != id {
                return Err(Error::EnvMismatch {
                    expected: id,
                    found: named,
                });
            }
        }
        let mut env = Env::new(id);
        if let Some(v) = cfg.dt {
            env.dt = v;
        }
        if let Some(v) = cfg.horizon {
            env.horizon = v;
        }
        if let Some(v) = &cfg.u_min {
            env.u_min = v.clone();
        }
        if let Some(v) = &cfg.u_max {
            env.u_max = v.clone();
        }
        if let Some(v) = &cfg.q {
            env.q = v.clone();
            if cfg.q_terminal.is_none() {
                env.q_terminal = v.clone();
            }
        }
        if let Some(v) = &cfg.q_terminal {
            env.q_terminal = v.clone();
        }
        if let Some(v) = &cfg.r {
            env.r = v.clone();
        }
        if let Some(v) = cfg.t_env {
            env.t_env = v;
        }
        match &mut env.physics {
            Physics::Toy => {}
            Physics::CartPole(p) => {
                p.cart_mass = cfg.m_c.unwrap_or(p.cart_mass);
                p.pole_mass = cfg.m_p.unwrap_or(p.pole_mass);
                p.pole_length = cfg.l.unwrap_or(p.pole_length);
                p.gravity = cfg.g.unwrap_or(p.gravity);
                p.n_sub_steps = cfg.n_sub_steps.unwrap_or(p.n_sub_steps);
            }
            Physics::Reacher(p) => {
                p.damping = cfg.damping.unwrap_or(p.damping);
                p.gear = cfg.gear.unwrap_or(p.gear);
                p.link_length = cfg.link_length.unwrap_or(p.link_length);
                p.link_mass = cfg.link_mass.unwrap_or(p.link_mass);
                if let Some(d) = cfg.wrist_limit_deg {
                    p.wrist_limit = d.to_radians();
                }
            }
            Physics::Driving(p) => {
                p.wheelbase = cfg.wheelbase.unwrap_or(p.wheelbase);
                p.v_min_linearization = cfg.v_min_linearization.unwrap_or(p.v_min_linearization);
                if let Some(d) = cfg.steer_max_deg {
                    p.steer_max = d.to_radians();
                }
            }
        }
        env.validate()?;
        Ok(env)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: EnvConfig = toml::from_str(&text)?;
        let id: EnvId = cfg
            .env
            .as_deref()
            .ok_or_else(|| Error::Config(format!("{}: missing 'env' key", path.display())))?
            .parse()?;
        Self::with_config(id, &cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("{}: {msg}", self.id)));
        if self.horizon == 0 {
            return bad("H must be at least 1");
        }
        if !(self.dt > 0.0) {
            return bad("dt must be positive");
        }
        if self.u_min.len() != self.m || self.u_max.len() != self.m || self.r.len() != self.m {
            return bad("control bound/weight length must equal m");
        }
        if self.u_min.iter().zip(&self.u_max).any(|(lo, hi)| !(lo < hi)) {
            return bad("u_min must be strictly below u_max");
        }
        let p = self.residual_dim();
        if self.q.len() != p || self.q_terminal.len() != p {
            return bad("state weight length mismatch");
        }
        if self
            .q
            .iter()
            .chain(&self.q_terminal)
            .chain(&self.r)
            .any(|w| !(*w >= 0.0))
        {
            return bad("weights must be non-negative");
        }
        if self.t_env == 0 {
            return bad("T_env must be at least 1");
        }
        match &self.physics {
            Physics::CartPole(c) => {
                if !(c.cart_mass > 0.0 && c.pole_mass > 0.0 && c.pole_length > 0.0) || c.n_sub_steps == 0 {
                    return bad("cart-pole masses, length and sub-steps must be positive");
                }
            }
            Physics::Reacher(r) => {
                if r.link_length.iter().chain(&r.link_mass).any(|v| !(*v > 0.0)) {
                    return bad("reacher link masses and lengths must be positive");
                }
            }
            Physics::Driving(d) => {
                if !(d.wheelbase > 0.0) {
                    return bad("wheelbase must be positive");
                }
            }
            Physics::Toy => {}
        }
        Ok(())
    }

    /// Number of per-step feature blocks the predictor consumes.
    pub fn feature_len(&self) -> usize {
        match self.id {
            // The final warm-start control is always the zero pad; its step is dropped.
            EnvId::Cartpole => self.horizon - 1,
            _ => self.horizon,
        }
    }

    /// Width of one feature block: state error, warm-start control, extras.
    pub fn feature_step_dim(&self) -> usize {
        self.n + self.m + self.feature_extras_dim()
    }

    pub fn feature_extras_dim(&self) -> usize {
        match self.id {
            EnvId::Reacher => 2,
            _ => 0,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_len() * self.feature_step_dim()
    }

    pub fn residual_dim(&self) -> usize {
        match self.id {
            EnvId::Toy1d => 1,
            _ => self.n,
        }
    }

    pub fn clamp_control(&self, u: &mut [f64]) {
        clamp_into(u, &self.u_min, &self.u_max);
    }

    /// One step of the true dynamics; the control is clamped first.
    pub fn dynamics(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        self.check_state(x)?;
        if u.len() != self.m {
            return Err(Error::Dimension {
                context: "control",
                expected: self.m,
                got: u.len(),
            });
        }
        if x.iter().chain(u).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dynamics input"));
        }
        let mut uc = u.to_vec();
        self.clamp_control(&mut uc);
        Ok(self.step_raw(x, &uc))
    }

    fn check_state(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::Dimension {
                context: "state",
                expected: self.n,
                got: x.len(),
            });
        }
        Ok(())
    }

    pub(crate) fn step_raw(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        match &self.physics {
            Physics::Toy => toy::step(x, u),
            Physics::CartPole(p) => p.step(self.dt, x, u),
            Physics::Reacher(p) => p.step(self.dt, x, u),
            Physics::Driving(p) => p.step(self.dt, x, u),
        }
    }

    /// `(A, B) = (∂f/∂x, ∂f/∂u)` at `(x, clamp(u))`.
    pub fn jacobians(&self, x: &[f64], u: &[f64]) -> (Mat, Mat) {
        let mut uc = u.to_vec();
        self.clamp_control(&mut uc);
        match &self.physics {
            Physics::Toy => toy::jacobians(),
            Physics::CartPole(p) => p.jacobians(self.dt, x, &uc),
            Physics::Reacher(p) => p.jacobians(self.dt, x, &uc),
            Physics::Driving(p) => p.jacobians(self.dt, x, &uc),
        }
    }

    /// State residual and its Jacobian w.r.t. the state.
    pub fn residual(&self, x: &[f64], target: &[f64]) -> (Vec<f64>, Mat) {
        match &self.physics {
            Physics::Toy => {
                let (r, dr) = toy::residual(x[0]);
                (vec![r], Mat::from_vec(1, 1, vec![dr]))
            }
            Physics::Reacher(p) => {
                let tip = p.fingertip(x[0], x[1]);
                let goal = p.fingertip(target[0], target[1]);
                let jac = p.fingertip_jacobian(x[0], x[1]);
                let mut j = Mat::zeros(4, 4);
                j[(0, 0)] = jac[0][0];
                j[(0, 1)] = jac[0][1];
                j[(1, 0)] = jac[1][0];
                j[(1, 1)] = jac[1][1];
                j[(2, 2)] = 1.0;
                j[(3, 3)] = 1.0;
                (vec![tip[0] - goal[0], tip[1] - goal[1], x[2], x[3]], j)
            }
            Physics::CartPole(_) | Physics::Driving(_) => (
                x.iter().zip(target).map(|(a, b)| a - b).collect(),
                Mat::identity(self.n),
            ),
        }
    }

    fn weighted_state_cost(&self, w: &[f64], x: &[f64], target: &[f64]) -> f64 {
        let (r, _) = self.residual(x, target);
        r.iter().zip(w).map(|(ri, wi)| wi * ri * ri).sum()
    }

    fn weighted_state_expansion(&self, w: &[f64], x: &[f64], target: &[f64]) -> (Vec<f64>, Mat) {
        let (r, j) = self.residual(x, target);
        let wr: Vec<f64> = r.iter().zip(w).map(|(ri, wi)| 2.0 * wi * ri).collect();
        let grad = j.tr_matvec(&wr);
        let wj = Mat::from_fn(j.rows(), j.cols(), |i, k| 2.0 * w[i] * j[(i, k)]);
        (grad, j.tr_matmul(&wj))
    }

    pub fn control_cost(&self, u: &[f64]) -> f64 {
        u.iter().zip(&self.r).map(|(ui, ri)| ri * ui * ui).sum()
    }

    /// Cost of step `t`: the control effort of `u_t` plus, for `t ≥ 1`, the
    /// tracking error of `x_t` against the target of step `t − 1`.
    ///
    /// With the terminal term this charges every state `x_1 … x_H` once; the
    /// fixed initial state carries no cost.
    pub fn stage_cost(&self, inst: &ProblemInstance, t: usize, x: &[f64], u: &[f64]) -> f64 {
        let mut c = self.control_cost(u);
        if t >= 1 {
            c += self.weighted_state_cost(&self.q, x, inst.target_at(t - 1));
        }
        c
    }

    pub fn terminal_cost(&self, inst: &ProblemInstance, x: &[f64]) -> f64 {
        self.weighted_state_cost(&self.q_terminal, x, inst.target_at(self.horizon - 1))
    }

    pub fn stage_expansion(&self, inst: &ProblemInstance, t: usize, x: &[f64], u: &[f64]) -> CostExpansion {
        let (lx, lxx) = if t >= 1 {
            self.weighted_state_expansion(&self.q, x, inst.target_at(t - 1))
        } else {
            (vec![0.0; self.n], Mat::zeros(self.n, self.n))
        };
        let lu = u.iter().zip(&self.r).map(|(ui, ri)| 2.0 * ri * ui).collect();
        let luu = Mat::from_diag(&self.r.iter().map(|r| 2.0 * r).collect::<Vec<_>>());
        CostExpansion {
            lx,
            lu,
            lxx,
            luu,
            lux: Mat::zeros(self.m, self.n),
        }
    }

    pub fn terminal_expansion(&self, inst: &ProblemInstance, x: &[f64]) -> (Vec<f64>, Mat) {
        self.weighted_state_expansion(&self.q_terminal, x, inst.target_at(self.horizon - 1))
    }

    pub fn problem<'a>(&'a self, inst: &'a ProblemInstance) -> EnvProblem<'a> {
        EnvProblem { env: self, inst }
    }

    /// Rolls `controls` out from `inst.x0` and prices the result.
    pub fn rollout(&self, inst: &ProblemInstance, controls: &ControlSequence) -> Result<Trajectory> {
        self.check_instance(inst)?;
        rollout(&self.problem(inst), controls)
    }

    pub fn trajectory_cost(&self, inst: &ProblemInstance, states: &Mat, controls: &ControlSequence) -> Result<f64> {
        self.check_instance(inst)?;
        crate::problem::trajectory_cost(&self.problem(inst), states, controls)
    }

    pub fn check_instance(&self, inst: &ProblemInstance) -> Result<()> {
        if inst.env_id != self.id {
            return Err(Error::EnvMismatch {
                expected: self.id,
                found: inst.env_id,
            });
        }
        self.check_state(&inst.x0)?;
        match (&inst.target, self.id) {
            (Target::Reference(r), EnvId::Driving) => {
                if r.rows() != self.horizon || r.cols() != self.n {
                    return Err(Error::Dimension {
                        context: "reference trajectory",
                        expected: self.horizon * self.n,
                        got: r.rows() * r.cols(),
                    });
                }
            }
            (Target::Goal(g), id) if id != EnvId::Driving => self.check_state(g)?,
            _ => return Err(Error::Config(format!("{}: wrong target kind", self.id))),
        }
        Ok(())
    }

    /// Draws a fresh instance (the first step of a fresh scenario).
    pub fn sample_instance<R: Rng + ?Sized>(&self, rng: &mut R) -> ProblemInstance {
        let seed = rng.random::<u64>();
        Scenario::new(self, seed).instance_at(0, None, 0)
    }

    pub(crate) fn sample_start<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
        match &self.physics {
            Physics::Toy => (vec![0.0], vec![0.0]),
            Physics::CartPole(_) => {
                let x0 = vec![
                    rng.random_range(-2.0..=2.0),
                    rng.random_range(-1.0..=1.0),
                    rng.random_range(-PI / 2.0..=PI / 2.0),
                    rng.random_range(-PI / 4.0..=PI / 4.0),
                ];
                let goal = vec![rng.random_range(-2.0..=2.0), 0.0, 0.0, 0.0];
                (x0, goal)
            }
            Physics::Reacher(p) => {
                let angle = rng.random_range(0.0..2.0 * PI);
                let radius = rng.random_range(0.05..=0.20);
                let q = p.inverse_kinematics([radius * angle.cos(), radius * angle.sin()]);
                let x0 = vec![rng.random_range(-PI..PI), rng.random_range(-2.5..=2.5), 0.0, 0.0];
                (x0, vec![q[0], q[1], 0.0, 0.0])
            }
            Physics::Driving(_) => unreachable!("driving starts are produced by Scenario"),
        }
    }

    /// Fingertip target of a reacher goal.
    pub fn reacher_target(&self, goal: &[f64]) -> Option<[f64; 2]> {
        match &self.physics {
            Physics::Reacher(p) => Some(p.fingertip(goal[0], goal[1])),
            _ => None,
        }
    }
}

/// An [`Env`] bound to one [`ProblemInstance`].
#[derive(Clone, Copy)]
pub struct EnvProblem<'a> {
    pub env: &'a Env,
    pub inst: &'a ProblemInstance,
}

impl ControlProblem for EnvProblem<'_> {
    fn state_dim(&self) -> usize {
        self.env.n
    }

    fn control_dim(&self) -> usize {
        self.env.m
    }

    fn horizon(&self) -> usize {
        self.env.horizon
    }

    fn initial_state(&self) -> &[f64] {
        &self.inst.x0
    }

    fn control_lower(&self) -> &[f64] {
        &self.env.u_min
    }

    fn control_upper(&self) -> &[f64] {
        &self.env.u_max
    }

    fn step(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        self.env.step_raw(x, u)
    }

    fn linearize(&self, x: &[f64], u: &[f64]) -> (Mat, Mat) {
        self.env.jacobians(x, u)
    }

    fn stage_cost(&self, t: usize, x: &[f64], u: &[f64]) -> f64 {
        self.env.stage_cost(self.inst, t, x, u)
    }

    fn terminal_cost(&self, x: &[f64]) -> f64 {
        self.env.terminal_cost(self.inst, x)
    }

    fn stage_expansion(&self, t: usize, x: &[f64], u: &[f64]) -> CostExpansion {
        self.env.stage_expansion(self.inst, t, x, u)
    }

    fn terminal_expansion(&self, x: &[f64]) -> (Vec<f64>, Mat) {
        self.env.terminal_expansion(self.inst, x)
    }
}
