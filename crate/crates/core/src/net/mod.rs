//! Multi-head feed-forward predictor with hand-written reverse mode.
//!
//! A shared trunk of dense layers maps standardized features to an embedding;
//! `K` linear heads each decode the embedding into one `H × m` control
//! sequence. Outputs are de-standardized, scaled and clamped to the control
//! box, so every candidate is a feasible initialization.

mod adamw;
mod checkpoint;
mod config;
mod features;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use adamw::{adamw_step, clip_grad_norm, AdamW, AdamWConfig};
pub use checkpoint::{checkpoint_load, checkpoint_save, CKPT_MAGIC, CKPT_VERSION};
pub use config::{Architecture, TrainConfig};
pub use features::{featurize, featurize_or_zero, Standardizer};

use crate::envs::{Env, EnvId};
use crate::error::{Error, Result};
use crate::linalg::{gemm, Mat, Op};
use crate::losses::LossKind;
use crate::problem::{CandidateSet, ControlSequence};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    /// tanh approximation
    Gelu,
}

impl Activation {
    pub(crate) fn to_byte(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Gelu => 1,
        }
    }

    pub(crate) fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Gelu),
            _ => None,
        }
    }

    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Gelu => {
                let t = (GELU_C * (z + 0.044715 * z * z * z)).tanh();
                0.5 * z * (1.0 + t)
            }
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Gelu => {
                let inner = GELU_C * (z + 0.044715 * z * z * z);
                let t = inner.tanh();
                let dinner = GELU_C * (1.0 + 3.0 * 0.044715 * z * z);
                0.5 * (1.0 + t) + 0.5 * z * (1.0 - t * t) * dinner
            }
        }
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/π)

/// `y = act(W x + b)` with `W` stored `out × in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Mat,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Dense {
            weight: Mat::zeros(outputs, inputs),
            bias: vec![0.0; outputs],
            activation,
        }
    }

    fn random<R: Rng>(rng: &mut R, inputs: usize, outputs: usize, activation: Activation, gain: f64) -> Self {
        let std = gain / (inputs as f64).sqrt();
        let weight = Mat::from_fn(outputs, inputs, |_, _| {
            let z: f64 = StandardNormal.sample(rng);
            std * z
        });
        Dense {
            weight,
            bias: vec![0.0; outputs],
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.rows()
    }

    /// Pre-activations for a batch (rows are samples).
    fn pre(&self, x: &Mat) -> Mat {
        let mut z = Mat::zeros(x.rows(), self.outputs());
        gemm(1.0, x, Op::N, &self.weight, Op::T, 0.0, &mut z);
        for r in 0..z.rows() {
            for (v, b) in z.row_mut(r).iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        z
    }
}

/// Weights plus everything needed to map raw features to clamped controls.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub env_id: EnvId,
    pub loss_kind: LossKind,
    pub feature_dim: usize,
    pub horizon: usize,
    pub control_dim: usize,
    pub trunk: Vec<Dense>,
    pub heads: Vec<Dense>,
    pub in_mean: Vec<f64>,
    pub in_std: Vec<f64>,
    pub out_mean: Vec<f64>,
    pub out_std: Vec<f64>,
    pub out_scale: Vec<f64>,
    pub u_min: Vec<f64>,
    pub u_max: Vec<f64>,
}

/// Activations kept by [`ModelParams::forward_batch`] for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// Standardized input followed by each trunk layer's output.
    inputs: Vec<Mat>,
    /// Trunk pre-activations.
    pre: Vec<Mat>,
    /// Unclamped outputs per head, in control units.
    raw: Vec<Mat>,
}

impl ForwardCache {
    pub fn batch(&self) -> usize {
        self.inputs[0].rows()
    }
}

/// Gradients in the order of [`ModelParams::tensors`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Gradients {
            tensors: params.tensors().iter().map(|t| vec![0.0; t.len()]).collect(),
        }
    }

    pub fn norm(&self) -> f64 {
        self.tensors
            .iter()
            .flat_map(|t| t.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }
}

impl ModelParams {
    /// Randomly initialized model for `env` with `k` heads. Standardization
    /// starts as the identity.
    pub fn new(env: &Env, arch: &Architecture, k: usize, loss_kind: LossKind, seed: u64) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("model needs at least one head".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let feature_dim = env.feature_dim();
        let out = env.horizon * env.m;
        let mut trunk = Vec::new();
        let mut width = feature_dim;
        for &h in arch.hidden.iter().chain(std::iter::once(&arch.embed_dim)) {
            trunk.push(Dense::random(&mut rng, width, h, Activation::Gelu, 2f64.sqrt()));
            width = h;
        }
        let heads = (0..k)
            .map(|_| Dense::random(&mut rng, width, out, Activation::Identity, 1.0))
            .collect();
        let params = ModelParams {
            env_id: env.id,
            loss_kind,
            feature_dim,
            horizon: env.horizon,
            control_dim: env.m,
            trunk,
            heads,
            in_mean: vec![0.0; feature_dim],
            in_std: vec![1.0; feature_dim],
            out_mean: vec![0.0; out],
            out_std: vec![1.0; out],
            out_scale: vec![1.0; out],
            u_min: env.u_min.clone(),
            u_max: env.u_max.clone(),
        };
        params.validate()?;
        Ok(params)
    }

    pub fn k(&self) -> usize {
        self.heads.len()
    }

    pub fn output_dim(&self) -> usize {
        self.horizon * self.control_dim
    }

    pub fn embed_dim(&self) -> usize {
        self.trunk.last().map_or(self.feature_dim, Dense::outputs)
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let out = self.output_dim();
        let dim = |context, expected: usize, got: usize| {
            if expected == got {
                Ok(())
            } else {
                Err(Error::Dimension { context, expected, got })
            }
        };
        if self.heads.is_empty() {
            return Err(Error::Config("model needs at least one head".into()));
        }
        dim("in_mean", self.feature_dim, self.in_mean.len())?;
        dim("in_std", self.feature_dim, self.in_std.len())?;
        dim("out_mean", out, self.out_mean.len())?;
        dim("out_std", out, self.out_std.len())?;
        dim("out_scale", out, self.out_scale.len())?;
        dim("u_min", self.control_dim, self.u_min.len())?;
        dim("u_max", self.control_dim, self.u_max.len())?;
        let mut width = self.feature_dim;
        for layer in &self.trunk {
            dim("trunk layer input", width, layer.inputs())?;
            dim("trunk bias", layer.outputs(), layer.bias.len())?;
            width = layer.outputs();
        }
        for head in &self.heads {
            dim("head input", width, head.inputs())?;
            dim("head output", out, head.outputs())?;
            dim("head bias", out, head.bias.len())?;
        }
        if self.in_std.iter().chain(&self.out_std).any(|s| !(*s > 0.0)) {
            return Err(Error::Config("standardization std must be positive".into()));
        }
        Ok(())
    }

    /// All trainable tensors: each trunk layer's weight and bias, then each head's.
    pub fn tensors(&self) -> Vec<&[f64]> {
        self.trunk
            .iter()
            .chain(&self.heads)
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.trunk
            .iter_mut()
            .chain(self.heads.iter_mut())
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn check_finite(&self) -> Result<()> {
        let stats = [
            &self.in_mean,
            &self.in_std,
            &self.out_mean,
            &self.out_std,
            &self.out_scale,
        ];
        if self.tensors().iter().any(|t| t.iter().any(|v| !v.is_finite()))
            || stats.iter().any(|t| t.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::NonFinite("model parameters"));
        }
        Ok(())
    }

    /// A copy keeping only the first `j` heads.
    pub fn truncated(&self, j: usize) -> Result<Self> {
        if j == 0 || j > self.k() {
            return Err(Error::Config(format!("cannot keep {j} of {} heads", self.k())));
        }
        let mut out = self.clone();
        out.heads.truncate(j);
        Ok(out)
    }

    /// Candidates for one raw feature vector.
    pub fn forward(&self, features: &[f64]) -> Result<CandidateSet> {
        let x = Mat::from_vec(1, features.len(), features.to_vec());
        let (outputs, _) = self.run(&x, false)?;
        let mut candidates = Vec::with_capacity(self.k());
        for out in outputs {
            candidates.push(ControlSequence::from_flat(
                self.horizon,
                self.control_dim,
                out.into_vec(),
            )?);
        }
        let labels = (0..self.k()).map(|k| format!("head_{k}")).collect();
        CandidateSet::new(candidates, labels)
    }

    /// Clamped outputs for a batch of raw features (rows), one `B × H·m`
    /// matrix per head, plus the cache needed by [`ModelParams::backward`].
    pub fn forward_batch(&self, features: &Mat) -> Result<(Vec<Mat>, ForwardCache)> {
        let (out, cache) = self.run(features, true)?;
        Ok((out, cache.expect("cache requested")))
    }

    fn run(&self, features: &Mat, keep: bool) -> Result<(Vec<Mat>, Option<ForwardCache>)> {
        if features.cols() != self.feature_dim {
            return Err(Error::Dimension {
                context: "features",
                expected: self.feature_dim,
                got: features.cols(),
            });
        }
        let mut h = Mat::from_fn(features.rows(), self.feature_dim, |r, c| {
            (features[(r, c)] - self.in_mean[c]) / self.in_std[c]
        });
        let mut inputs = Vec::new();
        let mut pres = Vec::new();
        for layer in &self.trunk {
            let pre = layer.pre(&h);
            let mut post = pre.clone();
            post.as_mut_slice()
                .iter_mut()
                .for_each(|v| *v = layer.activation.apply(*v));
            if keep {
                inputs.push(std::mem::replace(&mut h, post));
                pres.push(pre);
            } else {
                h = post;
            }
        }
        let m = self.control_dim;
        let mut outputs = Vec::with_capacity(self.k());
        let mut raws = Vec::new();
        for head in &self.heads {
            let mut y = head.pre(&h);
            for r in 0..y.rows() {
                for (j, v) in y.row_mut(r).iter_mut().enumerate() {
                    *v = (*v * self.out_std[j] + self.out_mean[j]) * self.out_scale[j];
                }
            }
            let mut clamped = y.clone();
            for r in 0..clamped.rows() {
                for (j, v) in clamped.row_mut(r).iter_mut().enumerate() {
                    *v = v.clamp(self.u_min[j % m], self.u_max[j % m]);
                }
            }
            if y.as_slice().iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("model output"));
            }
            if keep {
                raws.push(y);
            }
            outputs.push(clamped);
        }
        let cache = keep.then(|| {
            inputs.push(h);
            ForwardCache {
                inputs,
                pre: pres,
                raw: raws,
            }
        });
        Ok((outputs, cache))
    }

    /// Parameter gradients given `dL/d(output_k)` for every head.
    ///
    /// The clamp passes gradients strictly inside the box, passes only
    /// inward-pushing gradients at a bound, and blocks everything outside.
    pub fn backward(&self, cache: &ForwardCache, upstream: &[Mat]) -> Result<Gradients> {
        let b = cache.batch();
        if upstream.len() != self.k() || cache.raw.len() != self.k() {
            return Err(Error::Dimension {
                context: "upstream head gradients",
                expected: self.k(),
                got: upstream.len(),
            });
        }
        let out = self.output_dim();
        let m = self.control_dim;
        let n_trunk = self.trunk.len();
        let mut grads = Gradients::zeros_like(self);
        let embed = &cache.inputs[n_trunk];
        let mut d_embed = Mat::zeros(b, self.embed_dim());

        for (k, head) in self.heads.iter().enumerate() {
            let g = &upstream[k];
            if g.rows() != b || g.cols() != out {
                return Err(Error::Dimension {
                    context: "upstream gradient",
                    expected: b * out,
                    got: g.rows() * g.cols(),
                });
            }
            let raw = &cache.raw[k];
            let dy = Mat::from_fn(b, out, |r, j| {
                let (lo, hi) = (self.u_min[j % m], self.u_max[j % m]);
                let v = raw[(r, j)];
                let gj = g[(r, j)];
                let pass = (v > lo && v < hi) || (v == hi && gj > 0.0) || (v == lo && gj < 0.0);
                if pass {
                    gj * self.out_std[j] * self.out_scale[j]
                } else {
                    0.0
                }
            });
            let slot = 2 * (n_trunk + k);
            let mut dw = Mat::zeros(out, embed.cols());
            gemm(1.0, &dy, Op::T, embed, Op::N, 0.0, &mut dw);
            grads.tensors[slot] = dw.into_vec();
            let db = &mut grads.tensors[slot + 1];
            for r in 0..b {
                for (acc, v) in db.iter_mut().zip(dy.row(r)) {
                    *acc += v;
                }
            }
            gemm(1.0, &dy, Op::N, &head.weight, Op::N, 1.0, &mut d_embed);
        }

        let mut d_post = d_embed;
        for (i, layer) in self.trunk.iter().enumerate().rev() {
            let pre = &cache.pre[i];
            let dz = Mat::from_fn(b, layer.outputs(), |r, c| {
                d_post[(r, c)] * layer.activation.derivative(pre[(r, c)])
            });
            let x = &cache.inputs[i];
            let mut dw = Mat::zeros(layer.outputs(), layer.inputs());
            gemm(1.0, &dz, Op::T, x, Op::N, 0.0, &mut dw);
            grads.tensors[2 * i] = dw.into_vec();
            let db = &mut grads.tensors[2 * i + 1];
            for r in 0..b {
                for (acc, v) in db.iter_mut().zip(dz.row(r)) {
                    *acc += v;
                }
            }
            if i > 0 {
                let mut dx = Mat::zeros(b, layer.inputs());
                gemm(1.0, &dz, Op::N, &layer.weight, Op::N, 0.0, &mut dx);
                d_post = dx;
            }
        }
        Ok(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_env() -> Env {
        Env::new(EnvId::Toy1d)
    }

    fn arch(hidden: &[usize], embed: usize) -> Architecture {
        Architecture {
            hidden: hidden.to_vec(),
            embed_dim: embed,
        }
    }

    #[test]
    fn zero_weights_give_zero_candidates() {
        let env = Env::new(EnvId::Cartpole);
        let mut p = ModelParams::new(&env, &arch(&[8], 4), 3, LossKind::Wta, 1).unwrap();
        for t in p.tensors_mut() {
            t.iter_mut().for_each(|v| *v = 0.0);
        }
        let cs = p.forward(&vec![0.3; env.feature_dim()]).unwrap();
        assert_eq!(cs.len(), 3);
        for c in cs.candidates() {
            assert!(c.as_slice().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn outputs_respect_bounds() {
        let env = Env::new(EnvId::Driving);
        let mut p = ModelParams::new(&env, &arch(&[16], 8), 4, LossKind::Wta, 2).unwrap();
        p.out_std.iter_mut().for_each(|s| *s = 50.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..env.feature_dim()).map(|_| rng.random_range(-5.0..5.0)).collect();
        for c in p.forward(&x).unwrap().candidates() {
            for t in 0..c.horizon() {
                for (j, &u) in c.at(t).iter().enumerate() {
                    assert!(u >= env.u_min[j] && u <= env.u_max[j]);
                }
            }
        }
    }

    #[test]
    fn single_linear_layer_gradient_is_closed_form() {
        // No trunk: one head maps features straight to outputs.
        let env = small_env();
        let mut p = ModelParams::new(&env, &arch(&[], 0), 1, LossKind::Regression, 4).unwrap();
        p.trunk.clear();
        p.heads = vec![Dense::random(
            &mut ChaCha8Rng::seed_from_u64(5),
            p.feature_dim,
            5,
            Activation::Identity,
            0.1,
        )];
        p.u_min = vec![-1e9];
        p.u_max = vec![1e9];
        let x: Vec<f64> = (0..p.feature_dim).map(|i| 0.1 * i as f64 - 0.3).collect();
        let y = [0.2, -0.1, 0.0, 0.4, 0.3];
        let xm = Mat::from_vec(1, x.len(), x.clone());
        let (out, cache) = p.forward_batch(&xm).unwrap();
        let resid: Vec<f64> = out[0].row(0).iter().zip(&y).map(|(a, b)| a - b).collect();
        let up = Mat::from_vec(1, 5, resid.iter().map(|r| 2.0 * r).collect());
        let g = p.backward(&cache, &[up]).unwrap();
        for (i, r) in resid.iter().enumerate() {
            for (j, xj) in x.iter().enumerate() {
                let want = 2.0 * r * xj;
                assert!((g.tensors[0][i * x.len() + j] - want).abs() < 1e-12);
            }
            assert!((g.tensors[1][i] - 2.0 * r).abs() < 1e-12);
        }
    }

    #[test]
    fn outward_gradient_at_the_bound_is_blocked() {
        let env = small_env();
        let mut p = ModelParams::new(&env, &arch(&[4], 3), 1, LossKind::Regression, 6).unwrap();
        // Drive every output far above the bound.
        p.out_mean = vec![5.0; 5];
        let xm = Mat::from_vec(1, p.feature_dim, vec![0.1; p.feature_dim]);
        let (out, cache) = p.forward_batch(&xm).unwrap();
        assert!(out[0].as_slice().iter().all(|&u| u == 1.0));
        let g = p.backward(&cache, &[Mat::from_vec(1, 5, vec![-1.0; 5])]).unwrap();
        assert_eq!(g.norm(), 0.0);
        // Exactly at the bound an inward push passes.
        p.out_mean = vec![1.0; 5];
        for h in &mut p.heads {
            h.weight.as_mut_slice().iter_mut().for_each(|w| *w = 0.0);
        }
        let (_, cache) = p.forward_batch(&xm).unwrap();
        let g = p.backward(&cache, &[Mat::from_vec(1, 5, vec![1.0; 5])]).unwrap();
        assert!(g.norm() > 0.0);
        let g = p.backward(&cache, &[Mat::from_vec(1, 5, vec![-1.0; 5])]).unwrap();
        assert_eq!(g.norm(), 0.0);
    }

    #[test]
    fn truncation_keeps_leading_heads() {
        let env = small_env();
        let p = ModelParams::new(&env, &arch(&[8], 4), 4, LossKind::Wta, 7).unwrap();
        let t = p.truncated(2).unwrap();
        assert_eq!(t.k(), 2);
        let x = vec![0.2; p.feature_dim];
        let full = p.forward(&x).unwrap();
        let part = t.forward(&x).unwrap();
        assert_eq!(&full.candidates()[..2], part.candidates());
        assert!(p.truncated(0).is_err() && p.truncated(5).is_err());
    }
}
