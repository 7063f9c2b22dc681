//! Local trajectory optimizers consuming an initial control sequence.

mod ddp;
pub mod lq;
pub mod mppi;
pub mod riccati;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use ddp::{boxddp_solve, ilqr_solve};
pub use mppi::{mppi_solve, mppi_update, mppi_weights};
pub use riccati::riccati_lqr;

use crate::envs::EnvId;
use crate::error::{Error, Result};
use crate::problem::{ControlProblem, ControlSequence, Trajectory};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Ilqr,
    BoxDdp,
    Mppi,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetMode {
    Iterations,
    WallClockMs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MppiConfig {
    pub num_samples: usize,
    /// Per-coordinate noise variance σ².
    pub noise_sigma2: f64,
    /// Softmin temperature λ.
    pub temperature: f64,
}

impl Default for MppiConfig {
    fn default() -> Self {
        Self {
            num_samples: 3,
            noise_sigma2: 1e-3,
            temperature: 1e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub algorithm: Algorithm,
    pub max_iters: usize,
    pub max_linesearch_iter: usize,
    pub reg_init: f64,
    pub reg_min: f64,
    pub reg_max: f64,
    /// Stop once an accepted step lowers the cost by less than this.
    pub tol: f64,
    pub budget_mode: BudgetMode,
    /// Only used with `budget_mode = "wall_clock_ms"`.
    pub max_solve_time_ms: f64,
    pub mppi: MppiConfig,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Ilqr,
            max_iters: 10,
            max_linesearch_iter: 3,
            reg_init: 1e-6,
            reg_min: 1e-9,
            reg_max: 1e9,
            tol: 1e-10,
            budget_mode: BudgetMode::Iterations,
            max_solve_time_ms: 5.0,
            mppi: MppiConfig::default(),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("optimizer: {m}")));
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1");
        }
        if self.max_linesearch_iter == 0 {
            return bad("max_linesearch_iter must be at least 1");
        }
        if !(self.reg_min <= self.reg_init && self.reg_init <= self.reg_max) {
            return bad("need reg_min <= reg_init <= reg_max");
        }
        if self.algorithm == Algorithm::Mppi {
            if !(self.mppi.noise_sigma2 > 0.0) || !(self.mppi.temperature > 0.0) {
                return bad("MPPI needs positive sigma2 and temperature");
            }
            if self.mppi.num_samples == 0 {
                return bad("MPPI needs at least one sample");
            }
        }
        Ok(())
    }
}

/// Online (real-time) and oracle (generous budget) settings for one environment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerProfiles {
    pub online: OptimizerConfig,
    pub oracle: OptimizerConfig,
}

impl OptimizerProfiles {
    pub fn for_env(env: EnvId) -> Self {
        let text = match env {
            EnvId::Toy1d => include_str!("../../configs/optim/toy1d.toml"),
            EnvId::Cartpole => include_str!("../../configs/optim/cartpole.toml"),
            EnvId::Reacher => include_str!("../../configs/optim/reacher.toml"),
            EnvId::Driving => include_str!("../../configs/optim/driving.toml"),
        };
        toml::from_str(text).expect("shipped optimizer profiles parse")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let p: Self = toml::from_str(&text)?;
        p.online.validate()?;
        p.oracle.validate()?;
        Ok(p)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub trajectory: Trajectory,
    pub iterations_used: usize,
    pub converged: bool,
    /// Cost of the (clamped) initialization's rollout.
    pub init_cost: f64,
    pub solve_time_ms: f64,
}

impl Solution {
    pub fn cost(&self) -> f64 {
        self.trajectory.cost
    }

    pub fn controls(&self) -> &ControlSequence {
        &self.trajectory.controls
    }
}

/// Runs the configured algorithm. `seed` only matters for MPPI.
pub fn solve<P: ControlProblem + ?Sized>(
    problem: &P,
    init: &ControlSequence,
    cfg: &OptimizerConfig,
    seed: u64,
) -> Result<Solution> {
    match cfg.algorithm {
        Algorithm::Ilqr => ilqr_solve(problem, init, cfg),
        Algorithm::BoxDdp => boxddp_solve(problem, init, cfg),
        Algorithm::Mppi => mppi_solve(problem, init, cfg, seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_profiles_are_valid() {
        for env in EnvId::ALL {
            let p = OptimizerProfiles::for_env(env);
            p.online.validate().unwrap();
            p.oracle.validate().unwrap();
        }
    }

    #[test]
    fn reference_budgets_are_shipped() {
        let c = OptimizerProfiles::for_env(EnvId::Cartpole);
        assert_eq!(c.online.algorithm, Algorithm::BoxDdp);
        assert_eq!((c.online.max_iters, c.online.max_linesearch_iter), (2, 1));
        assert_eq!((c.oracle.max_iters, c.oracle.max_linesearch_iter), (10, 3));
        let r = OptimizerProfiles::for_env(EnvId::Reacher);
        assert_eq!(r.online.mppi.num_samples, 3);
        assert_eq!(r.oracle.mppi.num_samples, 50);
        assert_eq!(r.online.mppi.noise_sigma2, 1e-3);
        assert_eq!(r.online.mppi.temperature, 1e-4);
        let d = OptimizerProfiles::for_env(EnvId::Driving);
        assert_eq!(d.online.algorithm, Algorithm::Ilqr);
        assert_eq!(d.online.max_solve_time_ms, 5.0);
        assert_eq!(d.oracle.max_solve_time_ms, 50.0);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let c = OptimizerConfig {
            max_iters: 0,
            ..OptimizerConfig::default()
        };
        assert!(c.validate().is_err());
        let c = OptimizerConfig {
            reg_init: 1e12,
            ..OptimizerConfig::default()
        };
        assert!(c.validate().is_err());
        let mut c = OptimizerConfig {
            algorithm: Algorithm::Mppi,
            ..OptimizerConfig::default()
        };
        c.mppi.temperature = 0.0;
        assert!(c.validate().is_err());
    }
}
