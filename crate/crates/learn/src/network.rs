//! The object-centric attention actor-critic.
//!
//! Rows of the observation are embedded independently, mixed by a stack of
//! single-head self-attention blocks, and read out by a policy head (object
//! choice plus three placement heads) and a mean-pooled value head. The
//! `Dual` variant adds a second, independent trunk for the value function
//! and keeps an auxiliary value head on the policy trunk.

use bridge_autodiff::{Element, Graph, ParamId, ParamSet, Tensor, Var};
use bridge_core::env::{ActionConfig, Observation, OBS_DIM, TYPE_COLUMN};
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::LearnError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArchVariant {
    Shared,
    Dual,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    pub feature_dim: usize,
    pub n_attention: usize,
    pub embed_layers: usize,
    pub variant: ArchVariant,
    pub n_blocks: usize,
    pub actions: ActionConfig,
    /// Orthogonal-init gain of the final policy-logit layers.
    pub policy_gain: f64,
    /// Multiplies the observation before embedding. Positions are in metres
    /// and differ by centimetres between tasks, so a larger scale speeds up
    /// early learning.
    pub input_scale: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            feature_dim: 64,
            n_attention: 3,
            embed_layers: 2,
            variant: ArchVariant::Shared,
            n_blocks: 7,
            actions: ActionConfig::default(),
            policy_gain: 0.01,
            input_scale: 1.0,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        let bad = |m: &str| Err(LearnError::InvalidConfig(m.to_string()));
        if self.feature_dim == 0 {
            return bad("feature_dim must be positive");
        }
        if self.n_attention == 0 {
            return bad("n_attention must be at least 1");
        }
        if self.embed_layers == 0 {
            return bad("embed_layers must be at least 1");
        }
        if self.n_blocks == 0 {
            return bad("n_blocks must be positive");
        }
        let a = &self.actions;
        if a.y_bins == 0 || a.z_bins == 0 || a.rotation_bins == 0 {
            return bad("every action head needs at least one bin");
        }
        if !(self.input_scale.is_finite() && self.input_scale > 0.0) {
            return bad("input_scale must be positive");
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.n_blocks + 2
    }

    /// Sizes of the four factorised heads: object, y (with reset), z, rotation.
    pub fn head_sizes(&self) -> [usize; 4] {
        [self.n_rows(), self.actions.y_head_size(), self.actions.z_bins, self.actions.rotation_bins]
    }
}

/// Observations stacked into `[batch, rows, 14]` together with the object mask.
#[derive(Clone, Debug, PartialEq)]
pub struct ObsBatch {
    pub batch: usize,
    pub rows: usize,
    pub data: Vec<f64>,
    /// `true` for rows that cannot be selected (cliffs).
    pub mask: Vec<bool>,
}

impl ObsBatch {
    pub fn from_observations<'a>(obs: impl IntoIterator<Item = &'a Observation>) -> Result<Self, LearnError> {
        let mut data = Vec::new();
        let mut mask = Vec::new();
        let mut rows = None;
        let mut batch = 0;
        for o in obs {
            if *rows.get_or_insert(o.rows()) != o.rows() {
                return Err(LearnError::InvalidConfig(format!(
                    "observation batch mixes {} and {} rows",
                    rows.unwrap_or(0),
                    o.rows()
                )));
            }
            data.extend_from_slice(o.as_slice());
            mask.extend((0..o.rows()).map(|i| o.row(i)[TYPE_COLUMN] == 0.0));
            batch += 1;
        }
        Ok(Self { batch, rows: rows.unwrap_or(0), data, mask })
    }

    /// Rows `idx` of `self`, in that order.
    pub fn select(&self, idx: &[usize]) -> Self {
        let (r, w) = (self.rows, self.rows * OBS_DIM);
        let mut data = Vec::with_capacity(idx.len() * w);
        let mut mask = Vec::with_capacity(idx.len() * r);
        for &i in idx {
            data.extend_from_slice(&self.data[i * w..(i + 1) * w]);
            mask.extend_from_slice(&self.mask[i * r..(i + 1) * r]);
        }
        Self { batch: idx.len(), rows: r, data, mask }
    }

    pub fn observation(&self, i: usize) -> Observation {
        let w = self.rows * OBS_DIM;
        Observation::from_rows(self.rows, self.data[i * w..(i + 1) * w].to_vec())
    }
}

/// Which optional outputs a forward pass should build.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Want {
    /// The critic used for advantages: shared head, or the separate trunk in `Dual`.
    pub value: bool,
    /// The auxiliary value head on the policy trunk (`Dual` only).
    pub aux: bool,
}

/// Tape handles produced by [`PolicyNet::forward`]. Each head is a
/// `[batch, bins]` log-probability; values are `[batch]`.
#[derive(Clone, Copy, Debug)]
pub struct Heads {
    pub logp: [Var; 4],
    pub value: Option<Var>,
    pub aux_value: Option<Var>,
}

#[derive(Clone, Copy, Debug)]
struct Linear {
    w: ParamId,
    b: ParamId,
}

#[derive(Clone, Debug)]
struct Mlp {
    layers: Vec<Linear>,
}

#[derive(Clone, Copy, Debug)]
struct AttentionBlock {
    q: Linear,
    k: Linear,
    v: Linear,
    g: Linear,
    ff1: Linear,
    ff2: Linear,
}

#[derive(Clone, Debug)]
struct Trunk {
    embed: Vec<Linear>,
    blocks: Vec<AttentionBlock>,
}

#[derive(Clone, Debug)]
struct PolicyHead {
    object: Linear,
    pool_key: Linear,
    pool_value: Linear,
    query: ParamId,
    placement: [Mlp; 3],
}

#[derive(Clone, Debug)]
struct Layout {
    trunk: Trunk,
    policy: PolicyHead,
    /// Value head on the policy trunk: the critic for `Shared`, auxiliary for `Dual`.
    value: Mlp,
    critic: Option<(Trunk, Mlp)>,
}

/// Attention actor-critic with its parameters.
#[derive(Clone, Debug)]
pub struct PolicyNet<T> {
    config: NetworkConfig,
    pub params: ParamSet<T>,
    layout: Layout,
}

/// Orthogonal `[fan_in, fan_out]` matrix scaled by `gain`.
fn orthogonal<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, gain: f64, rng: &mut R) -> Vec<f64> {
    let (long, short) = (fan_in.max(fan_out), fan_in.min(fan_out));
    // `short` orthonormal vectors of length `long`, by modified Gram-Schmidt.
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(short);
    while basis.len() < short {
        let mut v: Vec<f64> = (0..long).map(|_| StandardNormal.sample(rng)).collect();
        for u in &basis {
            let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= d * b);
        }
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 1e-6 {
            v.iter_mut().for_each(|a| *a /= n);
            basis.push(v);
        }
    }
    let mut w = vec![0.0; fan_in * fan_out];
    for i in 0..fan_in {
        for j in 0..fan_out {
            w[i * fan_out + j] = gain * if fan_in >= fan_out { basis[j][i] } else { basis[i][j] };
        }
    }
    w
}

struct Builder<'a, T, R: ?Sized> {
    params: &'a mut ParamSet<T>,
    rng: &'a mut R,
}

impl<T: Element, R: Rng + ?Sized> Builder<'_, T, R> {
    fn linear(&mut self, name: &str, fan_in: usize, fan_out: usize, gain: f64) -> Result<Linear, LearnError> {
        let w = orthogonal(fan_in, fan_out, gain, self.rng);
        let w = self.params.add(&format!("{name}.w"), Tensor::from_f64(&[fan_in, fan_out], &w)?)?;
        let b = self.params.add(&format!("{name}.b"), Tensor::zeros(&[fan_out]))?;
        Ok(Linear { w, b })
    }

    fn mlp(&mut self, name: &str, sizes: &[usize], out_gain: f64) -> Result<Mlp, LearnError> {
        let last = sizes.len() - 2;
        let layers = (0..=last)
            .map(|i| {
                let gain = if i == last { out_gain } else { 1.0 };
                self.linear(&format!("{name}.{i}"), sizes[i], sizes[i + 1], gain)
            })
            .collect::<Result<_, _>>()?;
        Ok(Mlp { layers })
    }

    fn trunk(&mut self, name: &str, c: &NetworkConfig) -> Result<Trunk, LearnError> {
        let d = c.feature_dim;
        let embed = (0..c.embed_layers)
            .map(|i| self.linear(&format!("{name}.embed.{i}"), if i == 0 { OBS_DIM } else { d }, d, 1.0))
            .collect::<Result<_, _>>()?;
        let blocks = (0..c.n_attention)
            .map(|i| {
                let p = format!("{name}.attn.{i}");
                Ok(AttentionBlock {
                    q: self.linear(&format!("{p}.q"), d, d, 1.0)?,
                    k: self.linear(&format!("{p}.k"), d, d, 1.0)?,
                    v: self.linear(&format!("{p}.v"), d, d, 1.0)?,
                    g: self.linear(&format!("{p}.g"), d, d, 1.0)?,
                    ff1: self.linear(&format!("{p}.ff1"), d, d, 1.0)?,
                    ff2: self.linear(&format!("{p}.ff2"), d, d, 1.0)?,
                })
            })
            .collect::<Result<_, LearnError>>()?;
        Ok(Trunk { embed, blocks })
    }
}

impl<T: Element> PolicyNet<T> {
    pub fn new<R: Rng + ?Sized>(config: NetworkConfig, rng: &mut R) -> Result<Self, LearnError> {
        config.validate()?;
        let d = config.feature_dim;
        let mut params = ParamSet::new();
        let mut b = Builder { params: &mut params, rng };
        let trunk = b.trunk("pi", &config)?;
        let [_, ny, nz, nr] = config.head_sizes();
        let g = config.policy_gain;
        let policy = PolicyHead {
            object: b.linear("pi.object", d, 1, g)?,
            pool_key: b.linear("pi.pool.key", d + 1, d, 1.0)?,
            pool_value: b.linear("pi.pool.value", d + 1, d, 1.0)?,
            query: {
                let q: Vec<f64> =
                    (0..d).map(|_| StandardNormal.sample(&mut *b.rng)).map(|z: f64| z / (d as f64).sqrt()).collect();
                b.params.add("pi.pool.query", Tensor::from_f64(&[d, 1], &q)?)?
            },
            placement: [
                b.mlp("pi.y", &[d, d, ny], g)?,
                b.mlp("pi.z", &[d, d, nz], g)?,
                b.mlp("pi.rot", &[d, d, nr], g)?,
            ],
        };
        let value = b.mlp("pi.value", &[d, d, 1], 1.0)?;
        let critic = match config.variant {
            ArchVariant::Shared => None,
            ArchVariant::Dual => Some((b.trunk("vf", &config)?, b.mlp("vf.value", &[d, d, 1], 1.0)?)),
        };
        Ok(Self { config, params, layout: Layout { trunk, policy, value, critic } })
    }

    /// Rebuilds the handle layout around existing parameters (e.g. from a checkpoint).
    pub fn with_params(config: NetworkConfig, params: ParamSet<T>) -> Result<Self, LearnError> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut fresh = Self::new(config, &mut rng)?;
        fresh.params.copy_values_from(&params).map_err(|e| LearnError::Checkpoint(e.to_string()))?;
        fresh.params = params;
        Ok(fresh)
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    /// Same architecture and weights in another precision.
    pub fn cast<U: Element>(&self) -> PolicyNet<U> {
        PolicyNet { config: self.config, params: self.params.cast(), layout: self.layout.clone() }
    }

    fn linear(&self, g: &mut Graph<T>, l: Linear, x: Var) -> Result<Var, LearnError> {
        let w = g.param(&self.params, l.w);
        let b = g.param(&self.params, l.b);
        let y = g.matmul(x, w)?;
        Ok(g.add_bias(y, b)?)
    }

    fn mlp(&self, g: &mut Graph<T>, m: &Mlp, mut x: Var) -> Result<Var, LearnError> {
        for (i, &l) in m.layers.iter().enumerate() {
            x = self.linear(g, l, x)?;
            if i + 1 < m.layers.len() {
                x = g.tanh(x);
            }
        }
        Ok(x)
    }

    fn features(&self, g: &mut Graph<T>, t: &Trunk, obs: Var) -> Result<Var, LearnError> {
        let scale = 1.0 / (self.config.feature_dim as f64).sqrt();
        let mut x = obs;
        for &l in &t.embed {
            x = self.linear(g, l, x)?;
            x = g.tanh(x);
        }
        for blk in &t.blocks {
            let q = self.linear(g, blk.q, x)?;
            let k = self.linear(g, blk.k, x)?;
            let v = self.linear(g, blk.v, x)?;
            let s = g.bmm_nt(q, k)?;
            let s = g.scale(s, scale);
            let a = g.softmax(s);
            let av = g.bmm(a, v)?;
            let f = self.linear(g, blk.g, av)?;
            x = g.add(x, f)?;
            let h = self.linear(g, blk.ff1, x)?;
            let h = g.tanh(h);
            let h = self.linear(g, blk.ff2, h)?;
            x = g.add(x, h)?;
        }
        Ok(x)
    }

    fn value_head(&self, g: &mut Graph<T>, m: &Mlp, f: Var, batch: usize) -> Result<Var, LearnError> {
        let pooled = g.mean_rows(f)?;
        let v = self.mlp(g, m, pooled)?;
        Ok(g.reshape(v, &[batch])?)
    }

    fn input(&self, g: &mut Graph<T>, obs: &ObsBatch) -> Result<Var, LearnError> {
        let s = self.config.input_scale;
        let scaled: Vec<f64> = obs.data.iter().map(|v| v * s).collect();
        Ok(g.input(Tensor::from_f64(&[obs.batch, obs.rows, OBS_DIM], &scaled)?))
    }

    /// Object-centric features of the policy trunk, `[batch, rows, feature_dim]`.
    pub fn forward_features(&self, g: &mut Graph<T>, obs: &ObsBatch) -> Result<Var, LearnError> {
        let x = self.input(g, obs)?;
        self.features(g, &self.layout.trunk, x)
    }

    /// Builds the action heads and the requested value outputs on `g`.
    pub fn forward(&self, g: &mut Graph<T>, obs: &ObsBatch, want: Want) -> Result<Heads, LearnError> {
        let (b, r, d) = (obs.batch, obs.rows, self.config.feature_dim);
        let x = self.input(g, obs)?;
        let f = self.features(g, &self.layout.trunk, x)?;
        let p = &self.layout.policy;

        let obj = self.linear(g, p.object, f)?;
        let obj = g.reshape(obj, &[b, r])?;
        let obj = g.masked_fill(obj, &obs.mask, -1e9)?;
        let obj_logp = g.log_softmax(obj);

        let probs = g.exp(obj_logp);
        let probs = g.reshape(probs, &[b, r, 1])?;
        let fp = g.concat_last(f, probs)?;
        let keys = self.linear(g, p.pool_key, fp)?;
        let vals = self.linear(g, p.pool_value, fp)?;
        let q = g.param(&self.params, p.query);
        let scores = g.matmul(keys, q)?;
        let scores = g.reshape(scores, &[b, 1, r])?;
        let scores = g.scale(scores, 1.0 / (d as f64).sqrt());
        let att = g.softmax(scores);
        let fa = g.bmm(att, vals)?;
        let fa = g.reshape(fa, &[b, d])?;

        let mut logp = [obj_logp; 4];
        for (i, m) in p.placement.iter().enumerate() {
            let logits = self.mlp(g, m, fa)?;
            logp[i + 1] = g.log_softmax(logits);
        }

        let shared_value = match self.config.variant {
            ArchVariant::Shared => want.value,
            ArchVariant::Dual => want.aux,
        };
        let head_value = if shared_value { Some(self.value_head(g, &self.layout.value, f, b)?) } else { None };
        let (value, aux_value) = match (&self.layout.critic, self.config.variant) {
            (None, _) => (head_value, None),
            (Some((trunk, head)), _) => {
                let value = if want.value {
                    let fv = self.features(g, trunk, x)?;
                    Some(self.value_head(g, head, fv, b)?)
                } else {
                    None
                };
                (value, head_value)
            }
        };
        Ok(Heads { logp, value, aux_value })
    }
}
