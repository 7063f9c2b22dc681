//! Training losses for single- and multi-output predictors.
//!
//! The regression loss compares a predicted control sequence to the oracle's,
//! optionally adding a penalty on the rolled-out states whose gradient is
//! obtained with an adjoint sweep through the dynamics Jacobians. The
//! multi-output losses combine per-candidate regression losses with a
//! pairwise dispersion term. Dispersion is *rewarded*: it enters with a minus
//! sign so that minimizing the loss pushes candidates apart.

use serde::{Deserialize, Serialize};

use crate::dataset::DatasetRecord;
use crate::envs::Env;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Regression,
    MultiOutput,
    Pairwise,
    Wta,
    Mix,
}

impl LossKind {
    pub fn to_byte(self) -> u8 {
        match self {
            LossKind::Regression => 0,
            LossKind::MultiOutput => 1,
            LossKind::Pairwise => 2,
            LossKind::Wta => 3,
            LossKind::Mix => 4,
        }
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        Some(match b {
            0 => LossKind::Regression,
            1 => LossKind::MultiOutput,
            2 => LossKind::Pairwise,
            3 => LossKind::Wta,
            4 => LossKind::Mix,
            _ => return None,
        })
    }
}

/// Bounding function applied to the dispersion term of the mix loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phi {
    Tanh,
    /// `min(z, 1)`
    Clamp1,
}

impl Phi {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Phi::Tanh => z.tanh(),
            Phi::Clamp1 => z.min(1.0),
        }
    }

    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Phi::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Phi::Clamp1 => {
                if z < 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distance {
    L2,
    L1,
}

impl Distance {
    pub fn eval(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Distance::L2 => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
            Distance::L1 => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
        }
    }

    /// Gradient of `d(a, b)` w.r.t. `a`, scaled by `s` and added to `out`.
    /// Zero where the distance is not differentiable.
    fn accumulate_grad(self, a: &[f64], b: &[f64], s: f64, out: &mut [f64]) {
        match self {
            Distance::L2 => {
                let d = self.eval(a, b);
                if d > 0.0 {
                    for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
                        *o += s * (x - y) / d;
                    }
                }
            }
            Distance::L1 => {
                for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
                    if x != y {
                        *o += s * (x - y).signum();
                    }
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    pub kind: LossKind,
    pub control_weight: f64,
    pub state_weight: f64,
    /// Dispersion weight α_K.
    pub alpha_k: f64,
    pub phi: Phi,
    pub distance: Distance,
    /// Added to the control term when a candidate's rollout diverges.
    pub divergence_penalty: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            kind: LossKind::Wta,
            control_weight: 1.0,
            state_weight: 0.0,
            alpha_k: 0.0,
            phi: Phi::Tanh,
            distance: Distance::L2,
            divergence_penalty: 1e3,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v >= 0.0 && v.is_finite();
        if !(ok(self.control_weight) && ok(self.state_weight) && ok(self.alpha_k) && ok(self.divergence_penalty)) {
            return Err(Error::Config("loss weights must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Regression loss of one candidate.
#[derive(Clone, Debug, PartialEq)]
pub struct RegLoss {
    pub value: f64,
    pub control: f64,
    pub state: f64,
    /// `∂value/∂candidate`, flattened like the candidate; empty if not requested.
    pub grad: Vec<f64>,
    pub diverged: bool,
}

/// `control_weight · L_control + state_weight · L_state` and its gradient.
///
/// `L_control = (1/H) Σ_t ‖û_t − u*_t‖²` and
/// `L_state = (1/H) Σ_{t=1..H} ‖x̂_t − x*_t‖²` where `x̂` is the rollout of the
/// candidate from the record's initial state.
pub fn reg_loss(env: &Env, candidate: &[f64], record: &DatasetRecord, cfg: &LossConfig) -> Result<RegLoss> {
    reg_eval(env, candidate, record, cfg, true)
}

fn reg_eval(env: &Env, cand: &[f64], rec: &DatasetRecord, cfg: &LossConfig, want_grad: bool) -> Result<RegLoss> {
    let (h, m, n) = (env.horizon, env.m, env.n);
    let target = rec.oracle_controls.as_slice();
    if cand.len() != h * m || target.len() != h * m {
        return Err(Error::Dimension {
            context: "candidate controls",
            expected: h * m,
            got: cand.len(),
        });
    }
    let inv_h = 1.0 / h as f64;
    let control = inv_h * cand.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    let mut grad = if want_grad {
        cand.iter()
            .zip(target)
            .map(|(a, b)| cfg.control_weight * 2.0 * inv_h * (a - b))
            .collect()
    } else {
        Vec::new()
    };
    if cfg.state_weight == 0.0 {
        return Ok(RegLoss {
            value: cfg.control_weight * control,
            control,
            state: 0.0,
            grad,
            diverged: false,
        });
    }

    let mut states = Vec::with_capacity(h + 1);
    states.push(rec.instance.x0.clone());
    let mut diverged = false;
    for t in 0..h {
        let next = env.dynamics(&states[t], &cand[t * m..(t + 1) * m]);
        match next {
            Ok(x) if x.iter().all(|v| v.is_finite()) => states.push(x),
            _ => {
                diverged = true;
                break;
            }
        }
    }
    if diverged {
        return Ok(RegLoss {
            value: cfg.control_weight * control + cfg.divergence_penalty,
            control,
            state: f64::INFINITY,
            grad,
            diverged,
        });
    }
    let star = &rec.oracle_states;
    let err = |t: usize| -> Vec<f64> { states[t].iter().zip(star.row(t)).map(|(a, b)| a - b).collect() };
    let state = inv_h * (1..=h).map(|t| err(t).iter().map(|e| e * e).sum::<f64>()).sum::<f64>();

    if want_grad {
        let w = cfg.state_weight;
        let mut lam: Vec<f64> = err(h).iter().map(|e| 2.0 * inv_h * e).collect();
        for t in (0..h).rev() {
            let u = &cand[t * m..(t + 1) * m];
            let (a, mut b) = env.jacobians(&states[t], u);
            for (j, &uj) in u.iter().enumerate() {
                if uj < env.u_min[j] || uj > env.u_max[j] {
                    for i in 0..n {
                        b[(i, j)] = 0.0;
                    }
                }
            }
            let gu = b.tr_matvec(&lam);
            for (g, v) in grad[t * m..(t + 1) * m].iter_mut().zip(&gu) {
                *g += w * v;
            }
            let mut next = a.tr_matvec(&lam);
            if t >= 1 {
                for (l, e) in next.iter_mut().zip(err(t)) {
                    *l += 2.0 * inv_h * e;
                }
            }
            lam = next;
        }
    }
    Ok(RegLoss {
        value: cfg.control_weight * control + cfg.state_weight * state,
        control,
        state,
        grad,
        diverged: false,
    })
}

/// Mean distance from each candidate to the others:
/// `L_PD,k = 1/(K−1) Σ_{k'≠k} d(x_k, x_k')`. All zeros when `K < 2`.
pub fn pd_term(candidates: &[&[f64]], distance: Distance) -> Vec<f64> {
    let k = candidates.len();
    if k < 2 {
        return vec![0.0; k];
    }
    let mut out = vec![0.0; k];
    for i in 0..k {
        for j in (i + 1)..k {
            let d = distance.eval(candidates[i], candidates[j]);
            out[i] += d;
            out[j] += d;
        }
    }
    let s = 1.0 / (k - 1) as f64;
    out.iter_mut().for_each(|v| *v *= s);
    out
}

/// Gradient of `Σ_k coeffs[k] · L_PD,k` w.r.t. every candidate.
pub fn pd_grad(candidates: &[&[f64]], distance: Distance, coeffs: &[f64]) -> Vec<Vec<f64>> {
    let k = candidates.len();
    let len = candidates.first().map_or(0, |c| c.len());
    let mut grads = vec![vec![0.0; len]; k];
    if k < 2 {
        return grads;
    }
    let s = 1.0 / (k - 1) as f64;
    let mut tmp = vec![0.0; len];
    for a in 0..k {
        if coeffs[a] == 0.0 {
            continue;
        }
        for b in 0..k {
            if a == b {
                continue;
            }
            tmp.iter_mut().for_each(|v| *v = 0.0);
            distance.accumulate_grad(candidates[a], candidates[b], coeffs[a] * s, &mut tmp);
            for i in 0..len {
                grads[a][i] += tmp[i];
                grads[b][i] -= tmp[i];
            }
        }
    }
    grads
}

/// Result of a multi-candidate loss on one record.
#[derive(Clone, Debug, PartialEq)]
pub struct LossOutput {
    pub value: f64,
    pub winner: Option<usize>,
    /// Regression loss of every candidate.
    pub reg_values: Vec<f64>,
    /// `∂value/∂candidate_k` for every k.
    pub grads: Vec<Vec<f64>>,
    pub diverged: bool,
}

fn all_reg(env: &Env, cands: &[&[f64]], rec: &DatasetRecord, cfg: &LossConfig, grad: bool) -> Result<Vec<RegLoss>> {
    if cands.is_empty() {
        return Err(Error::Config("loss needs at least one candidate".into()));
    }
    cands.iter().map(|c| reg_eval(env, c, rec, cfg, grad)).collect()
}

/// Lowest index attaining the minimum; NaN never wins unless everything is NaN.
fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v < values[best] || (values[best].is_nan() && !v.is_nan()) {
            best = i;
        }
    }
    best
}

/// Mean regression loss over candidates (naive multi-output regression).
pub fn multi_output_loss(env: &Env, cands: &[&[f64]], rec: &DatasetRecord, cfg: &LossConfig) -> Result<LossOutput> {
    let regs = all_reg(env, cands, rec, cfg, true)?;
    let k = regs.len() as f64;
    let value = regs.iter().map(|r| r.value).sum::<f64>() / k;
    Ok(LossOutput {
        value,
        winner: None,
        reg_values: regs.iter().map(|r| r.value).collect(),
        diverged: regs.iter().any(|r| r.diverged),
        grads: regs
            .into_iter()
            .map(|r| r.grad.iter().map(|g| g / k).collect())
            .collect(),
    })
}

/// `mean_k L_reg,k − α_K · mean_k L_PD,k`.
pub fn pairwise_loss(env: &Env, cands: &[&[f64]], rec: &DatasetRecord, cfg: &LossConfig) -> Result<LossOutput> {
    let mut out = multi_output_loss(env, cands, rec, cfg)?;
    let k = cands.len() as f64;
    let pd = pd_term(cands, cfg.distance);
    let mean_pd = pd.iter().sum::<f64>() / k;
    out.value -= cfg.alpha_k * mean_pd;
    let pg = pd_grad(cands, cfg.distance, &vec![1.0 / k; cands.len()]);
    for (g, p) in out.grads.iter_mut().zip(&pg) {
        for (gi, pi) in g.iter_mut().zip(p) {
            *gi -= cfg.alpha_k * pi;
        }
    }
    Ok(out)
}

/// `min_k L_reg,k`; only the winner (lowest index on ties) gets a gradient.
pub fn wta_loss(env: &Env, cands: &[&[f64]], rec: &DatasetRecord, cfg: &LossConfig) -> Result<LossOutput> {
    let regs = all_reg(env, cands, rec, cfg, false)?;
    let values: Vec<f64> = regs.iter().map(|r| r.value).collect();
    let w = argmin(&values);
    let win = reg_eval(env, cands[w], rec, cfg, true)?;
    let len = cands[0].len();
    let mut grads = vec![vec![0.0; len]; cands.len()];
    grads[w] = win.grad;
    Ok(LossOutput {
        value: values[w],
        winner: Some(w),
        diverged: regs.iter().any(|r| r.diverged),
        reg_values: values,
        grads,
    })
}

/// `min_k (L_reg,k − α_K · Φ(L_PD,k))`. The winner's dispersion also pulls on
/// the other candidates through the shared distances.
pub fn mix_loss(env: &Env, cands: &[&[f64]], rec: &DatasetRecord, cfg: &LossConfig) -> Result<LossOutput> {
    if cfg.alpha_k == 0.0 {
        return wta_loss(env, cands, rec, cfg);
    }
    let regs = all_reg(env, cands, rec, cfg, false)?;
    let values: Vec<f64> = regs.iter().map(|r| r.value).collect();
    let pd = pd_term(cands, cfg.distance);
    let scores: Vec<f64> = values
        .iter()
        .zip(&pd)
        .map(|(r, p)| r - cfg.alpha_k * cfg.phi.apply(*p))
        .collect();
    let w = argmin(&scores);
    let win = reg_eval(env, cands[w], rec, cfg, true)?;
    let mut coeffs = vec![0.0; cands.len()];
    coeffs[w] = cfg.phi.derivative(pd[w]);
    let mut grads = pd_grad(cands, cfg.distance, &coeffs);
    for g in &mut grads {
        g.iter_mut().for_each(|v| *v *= -cfg.alpha_k);
    }
    for (g, r) in grads[w].iter_mut().zip(&win.grad) {
        *g += r;
    }
    Ok(LossOutput {
        value: scores[w],
        winner: Some(w),
        diverged: regs.iter().any(|r| r.diverged),
        reg_values: values,
        grads,
    })
}

/// Dispatches on `cfg.kind`.
pub fn candidate_loss(env: &Env, cands: &[&[f64]], rec: &DatasetRecord, cfg: &LossConfig) -> Result<LossOutput> {
    match cfg.kind {
        LossKind::Regression => {
            if cands.len() != 1 {
                return Err(Error::Config(format!(
                    "regression expects one candidate, got {}",
                    cands.len()
                )));
            }
            let r = reg_loss(env, cands[0], rec, cfg)?;
            Ok(LossOutput {
                value: r.value,
                winner: Some(0),
                reg_values: vec![r.value],
                diverged: r.diverged,
                grads: vec![r.grad],
            })
        }
        LossKind::MultiOutput => multi_output_loss(env, cands, rec, cfg),
        LossKind::Pairwise => pairwise_loss(env, cands, rec, cfg),
        LossKind::Wta => wta_loss(env, cands, rec, cfg),
        LossKind::Mix => mix_loss(env, cands, rec, cfg),
    }
}
