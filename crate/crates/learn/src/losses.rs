//! PPO and PPG objectives, built on the tape.

use bridge_autodiff::{Element, Graph, Tensor, Var};

use crate::LearnError;

/// `min(ρÂ, clip(ρ, 1−ε, 1+ε)Â)` for one sample.
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip_eps: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps) * advantage)
}

fn constant<T: Element>(g: &mut Graph<T>, values: &[f64]) -> Result<Var, LearnError> {
    Ok(g.input(Tensor::from_f64(&[values.len()], values)?))
}

/// Per-sample clipped surrogate `[batch]` given new log-probs on the tape.
pub fn ppo_surrogate<T: Element>(
    g: &mut Graph<T>,
    new_logp: Var,
    old_logp: &[f64],
    advantages: &[f64],
    clip_eps: f64,
) -> Result<Var, LearnError> {
    let old = constant(g, old_logp)?;
    let adv = constant(g, advantages)?;
    let diff = g.sub(new_logp, old)?;
    let ratio = g.exp(diff);
    let unclipped = g.mul(ratio, adv)?;
    let clipped = g.clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps);
    let clipped = g.mul(clipped, adv)?;
    Ok(g.minimum(unclipped, clipped)?)
}

/// Negated PPO objective with entropy bonus: `−E[surrogate] − c_ent·E[H]`.
pub fn ppo_policy_loss<T: Element>(
    g: &mut Graph<T>,
    new_logp: Var,
    entropy: Var,
    old_logp: &[f64],
    advantages: &[f64],
    clip_eps: f64,
    entropy_coef: f64,
) -> Result<Var, LearnError> {
    let surr = ppo_surrogate(g, new_logp, old_logp, advantages, clip_eps)?;
    let surr = g.mean(surr);
    let ent = g.mean(entropy);
    let ent = g.scale(ent, entropy_coef);
    let obj = g.add(surr, ent)?;
    Ok(g.neg(obj))
}

/// `½ E[(V − V_targ)²]`.
pub fn value_loss<T: Element>(g: &mut Graph<T>, value: Var, targets: &[f64]) -> Result<Var, LearnError> {
    let t = constant(g, targets)?;
    let e = g.sub(value, t)?;
    let sq = g.square(e);
    let m = g.mean(sq);
    Ok(g.scale(m, 0.5))
}

/// Mean over the batch of `Σ_heads KL(π_old ‖ π)`, with the frozen
/// distributions given as row-major log-probabilities per head.
pub fn factorized_kl<T: Element>(
    g: &mut Graph<T>,
    old_log_probs: &[Vec<f64>; 4],
    new_logp: &[Var; 4],
) -> Result<Var, LearnError> {
    let mut total: Option<Var> = None;
    for h in 0..4 {
        let shape = g.shape(new_logp[h]).to_vec();
        let lp_old = g.input(Tensor::from_f64(&shape, &old_log_probs[h])?);
        let p: Vec<f64> = old_log_probs[h].iter().map(|l| l.exp()).collect();
        let p_old = g.input(Tensor::from_f64(&shape, &p)?);
        let diff = g.sub(lp_old, new_logp[h])?;
        let terms = g.mul(p_old, diff)?;
        let kl = g.sum_last(terms);
        total = Some(match total {
            None => kl,
            Some(acc) => g.add(acc, kl)?,
        });
    }
    Ok(g.mean(total.expect("four heads")))
}

/// `L^V + β·KL`.
pub fn joint_loss<T: Element>(
    g: &mut Graph<T>,
    value: Var,
    targets: &[f64],
    old_log_probs: &[Vec<f64>; 4],
    new_logp: &[Var; 4],
    beta_clone: f64,
) -> Result<(Var, Var), LearnError> {
    let lv = value_loss(g, value, targets)?;
    let kl = factorized_kl(g, old_log_probs, new_logp)?;
    let weighted = g.scale(kl, beta_clone);
    Ok((g.add(lv, weighted)?, kl))
}
