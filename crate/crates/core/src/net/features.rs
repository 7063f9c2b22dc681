use crate::envs::{Env, EnvId};
use crate::error::Result;
use crate::linalg::Mat;
use crate::problem::{ControlSequence, ProblemInstance};

/// Flattened `[target − x_{t+1}, u_t, extras]` blocks for the warm-start
/// rollout. Reacher appends the fingertip target position as extras.
///
/// Standardization is not applied here.
pub fn featurize(env: &Env, inst: &ProblemInstance, warm_start: &ControlSequence) -> Result<Vec<f64>> {
    let traj = env.rollout(inst, warm_start)?;
    let extras: Vec<f64> = match env.id {
        EnvId::Reacher => env
            .reacher_target(inst.target_at(0))
            .map(|p| p.to_vec())
            .unwrap_or_default(),
        _ => Vec::new(),
    };
    let mut out = Vec::with_capacity(env.feature_dim());
    for t in 0..env.feature_len() {
        let x = traj.states.row(t + 1);
        out.extend(inst.target_at(t).iter().zip(x).map(|(r, s)| r - s));
        out.extend_from_slice(traj.controls.at(t));
        out.extend_from_slice(&extras);
    }
    Ok(out)
}

/// [`featurize`], falling back to a zero warm start when the given one diverges.
pub fn featurize_or_zero(env: &Env, inst: &ProblemInstance, warm_start: &ControlSequence) -> Result<Vec<f64>> {
    match featurize(env, inst, warm_start) {
        Ok(f) => Ok(f),
        Err(crate::Error::Divergence { .. }) => featurize(env, inst, &ControlSequence::zeros(env.horizon, env.m)),
        Err(e) => Err(e),
    }
}

/// Per-dimension mean and (population) standard deviation.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Fits on the rows of `data`. Dimensions that are constant get std 1 so
    /// they pass through as zeros.
    pub fn fit(data: &Mat) -> Self {
        let (n, d) = (data.rows(), data.cols());
        let mut mean = vec![0.0; d];
        for r in 0..n {
            for (m, v) in mean.iter_mut().zip(data.row(r)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n.max(1) as f64);
        let mut var = vec![0.0; d];
        for r in 0..n {
            for ((s, v), m) in var.iter_mut().zip(data.row(r)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .iter()
            .zip(&mean)
            .map(|(s, m)| {
                let sd = (s / n.max(1) as f64).sqrt();
                if sd > 1e-9 * m.abs().max(1.0) {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, std }
    }

    pub fn apply(&self, data: &Mat) -> Mat {
        Mat::from_fn(data.rows(), data.cols(), |r, c| {
            (data[(r, c)] - self.mean[c]) / self.std[c]
        })
    }
}
