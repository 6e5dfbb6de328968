//! Factorised action distributions: sampling, log-probabilities, entropy.

use bridge_autodiff::{Element, Graph, Var};
use bridge_core::env::RawAction;
use rand::Rng;

use crate::network::Heads;
use crate::LearnError;

/// The four per-sample distributions (object, y, z, rotation), kept as
/// log-probabilities so that sampling and re-evaluation agree bit for bit.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionDistributions {
    pub log_probs: [Vec<f64>; 4],
}

impl ActionDistributions {
    pub fn probs(&self, head: usize) -> Vec<f64> {
        self.log_probs[head].iter().map(|l| l.exp()).collect()
    }

    pub fn object_probs(&self) -> Vec<f64> {
        self.probs(0)
    }

    pub fn log_prob(&self, a: RawAction) -> f64 {
        let idx = [a.object, a.y_bin, a.z_bin, a.rot_bin];
        (0..4).map(|h| self.log_probs[h][idx[h]]).sum()
    }

    /// Sum of the component entropies.
    pub fn entropy(&self) -> f64 {
        self.log_probs.iter().map(|lp| lp.iter().map(|&l| if l.exp() > 0.0 { -l.exp() * l } else { 0.0 }).sum::<f64>()).sum()
    }

    /// Reads sample `i` out of a forward pass.
    pub fn from_heads<T: Element>(g: &Graph<T>, heads: &Heads, i: usize) -> Self {
        let log_probs = heads.logp.map(|v| {
            let n = g.value(v).last_dim();
            g.value(v).data()[i * n..(i + 1) * n].iter().map(|x| x.as_f64()).collect()
        });
        Self { log_probs }
    }
}

fn argmax(lp: &[f64]) -> usize {
    let mut best = 0;
    for (i, &l) in lp.iter().enumerate() {
        if l > lp[best] {
            best = i;
        }
    }
    best
}

fn categorical<R: Rng + ?Sized>(lp: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &l) in lp.iter().enumerate() {
        let p = l.exp();
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    // Rounding left the cumulative sum just below one.
    last
}

/// Draws one factorised action; `deterministic` takes each component's
/// mode, preferring the lowest index on ties.
pub fn sample_action<R: Rng + ?Sized>(d: &ActionDistributions, rng: &mut R, deterministic: bool) -> (RawAction, f64) {
    let pick = |lp: &[f64], rng: &mut R| if deterministic { argmax(lp) } else { categorical(lp, rng) };
    let object = pick(&d.log_probs[0], rng);
    let y_bin = pick(&d.log_probs[1], rng);
    let z_bin = pick(&d.log_probs[2], rng);
    let rot_bin = pick(&d.log_probs[3], rng);
    let a = RawAction { object, y_bin, z_bin, rot_bin };
    (a, d.log_prob(a))
}

/// Per-sample `log π(a|s)` and total entropy on the tape, both `[batch]`.
pub fn evaluate_actions<T: Element>(
    g: &mut Graph<T>,
    heads: &Heads,
    actions: &[RawAction],
) -> Result<(Var, Var), LearnError> {
    let columns: [Vec<usize>; 4] = [
        actions.iter().map(|a| a.object).collect(),
        actions.iter().map(|a| a.y_bin).collect(),
        actions.iter().map(|a| a.z_bin).collect(),
        actions.iter().map(|a| a.rot_bin).collect(),
    ];
    let mut logp = None;
    let mut entropy = None;
    for (h, idx) in columns.iter().enumerate() {
        let lp = heads.logp[h];
        let chosen = g.gather_last(lp, idx)?;
        logp = Some(match logp {
            None => chosen,
            Some(acc) => g.add(acc, chosen)?,
        });
        let p = g.exp(lp);
        let plp = g.mul(p, lp)?;
        let neg_h = g.sum_last(plp);
        entropy = Some(match entropy {
            None => g.neg(neg_h),
            Some(acc) => g.sub(acc, neg_h)?,
        });
    }
    Ok((logp.expect("four heads"), entropy.expect("four heads")))
}
