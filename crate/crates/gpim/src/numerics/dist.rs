//! Probability primitives used by the actors and the discriminator:
//! tanh-squashed diagonal Gaussians, categoricals, and Gaussian KL terms.

use super::tape::{Tape, Tx};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng::SplitRng;

pub const LN_2PI: f64 = 1.8378770664093453;
/// Keeps the tanh change-of-variables term finite at saturation.
pub const TANH_EPS: f64 = 1e-6;
/// Conventional SAC clamp on the actor's log standard deviation.
pub const LOG_STD_RANGE: (f64, f64) = (-20.0, 2.0);

/// Numerically stable log-softmax of a single logit row.
pub fn log_softmax_vec(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = logits.iter().map(|&x| (x - max).exp()).sum::<f64>().ln() + max;
    logits.iter().map(|&x| x - lse).collect()
}

pub fn softmax_vec(logits: &[f64]) -> Vec<f64> {
    log_softmax_vec(logits).iter().map(|&x| x.exp()).collect()
}

/// Sample an index with probability softmax(logits).
pub fn categorical_sample(logits: &[f64], rng: &mut SplitRng) -> Result<usize> {
    if logits.iter().any(|x| x.is_nan()) {
        return Err(Error::contract("categorical_sample: NaN logits"));
    }
    let probs = softmax_vec(logits);
    let u = rng.next_f64();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return Ok(i);
        }
    }
    Ok(probs.len() - 1)
}

/// Sample from a tanh-squashed diagonal Gaussian without gradient recording.
///
/// Returns `(action in (-1,1)^d, per-row log-probability [m,1])`. `log_std`
/// is clamped to [`LOG_STD_RANGE`] before use.
pub fn squashed_gaussian_sample(
    mean: &Tensor,
    log_std: &Tensor,
    rng: &mut SplitRng,
) -> Result<(Tensor, Tensor)> {
    if mean.shape() != log_std.shape() {
        return Err(Error::shape(
            mean.shape(),
            log_std.shape(),
            "squashed gaussian",
        ));
    }
    let noise = Tensor::from_vec(
        mean.shape().to_vec(),
        (0..mean.len()).map(|_| rng.normal()).collect(),
    );
    Ok(squashed_gaussian_from_noise(mean, log_std, &noise))
}

/// Deterministic part of the squashed-Gaussian sampler, reused by the taped
/// version and by tests that pin the noise.
pub fn squashed_gaussian_from_noise(
    mean: &Tensor,
    log_std: &Tensor,
    noise: &Tensor,
) -> (Tensor, Tensor) {
    let ls = log_std.map(|v| v.clamp(LOG_STD_RANGE.0, LOG_STD_RANGE.1));
    let std = ls.map(f64::exp);
    let u = mean.add(&std.mul(noise));
    let action = u.map(f64::tanh);
    let (m, d) = (mean.rows(), mean.cols());
    let mut logp = Vec::with_capacity(m);
    for i in 0..m {
        let mut acc = 0.0;
        for j in 0..d {
            let k = i * d + j;
            let eps = noise.data()[k];
            let a = action.data()[k];
            acc += -0.5 * eps * eps - ls.data()[k] - 0.5 * LN_2PI;
            acc -= (1.0 - a * a + TANH_EPS).ln();
        }
        logp.push(acc);
    }
    (action, Tensor::matrix(m, 1, logp))
}

/// Taped squashed-Gaussian reparameterization: gradients flow into `mean`
/// and `log_std` through both the action and its log-probability.
pub fn squashed_gaussian_on_tape(
    tape: &mut Tape,
    mean: Tx,
    log_std: Tx,
    noise: &Tensor,
) -> (Tx, Tx) {
    let d = tape.value(mean).cols();
    let ls = tape.clamp(log_std, LOG_STD_RANGE.0, LOG_STD_RANGE.1);
    let std = tape.exp(ls);
    let eps = tape.constant(noise.clone());
    let scaled = tape.mul(std, eps);
    let u = tape.add(mean, scaled);
    let action = tape.tanh(u);

    // log N(u; mean, std) with u = mean + std*eps reduces to
    // -eps^2/2 - log_std - log(2*pi)/2 per dimension.
    let half_eps_sq = tape.constant(noise.map(|e| -0.5 * e * e - 0.5 * LN_2PI));
    let gauss = tape.sub(half_eps_sq, ls);
    // tanh change of variables: -log(1 - tanh(u)^2 + eps)
    let asq = tape.square(action);
    let neg_asq = tape.neg(asq);
    let one_m = tape.add_scalar(neg_asq, 1.0 + TANH_EPS);
    let log_det = tape.ln(one_m);
    let per_dim = tape.sub(gauss, log_det);
    let logp = if d == 1 {
        per_dim
    } else {
        tape.sum_rows(per_dim)
    };
    (action, logp)
}

/// log N(target; mean, exp(log_var)) summed over dimensions, per row.
pub fn gaussian_logpdf_on_tape(tape: &mut Tape, mean: Tx, log_var: Tx, target: &Tensor) -> Tx {
    let t = tape.constant(target.clone());
    let diff = tape.sub(t, mean);
    let sq = tape.square(diff);
    let neg_lv = tape.neg(log_var);
    let inv_var = tape.exp(neg_lv);
    let maha = tape.mul(sq, inv_var);
    let inner = tape.add(maha, log_var);
    let shifted = tape.add_scalar(inner, LN_2PI);
    let scaled = tape.scale(shifted, -0.5);
    tape.sum_rows(scaled)
}

/// Plain evaluation of the diagonal-Gaussian log-density.
pub fn gaussian_logpdf(target: &[f64], mean: &[f64], log_var: &[f64]) -> f64 {
    target
        .iter()
        .zip(mean.iter())
        .zip(log_var.iter())
        .map(|((&t, &m), &lv)| {
            let d = t - m;
            -0.5 * (d * d * (-lv).exp() + lv + LN_2PI)
        })
        .sum()
}

/// KL( N(mean, diag exp(log_var)) || N(0, I) ) = 0.5 * sum(mu^2 + var - log var - 1).
pub fn kl_diag_gaussian_to_standard(mean: &Tensor, log_var: &Tensor) -> Result<f64> {
    if mean.shape() != log_var.shape() {
        return Err(Error::shape(mean.shape(), log_var.shape(), "gaussian KL"));
    }
    Ok(mean
        .data()
        .iter()
        .zip(log_var.data().iter())
        .map(|(&m, &lv)| 0.5 * (m * m + lv.exp() - lv - 1.0))
        .sum())
}

/// Taped per-row KL to the standard normal: [m,d] x [m,d] -> [m,1].
pub fn kl_to_standard_on_tape(tape: &mut Tape, mean: Tx, log_var: Tx) -> Tx {
    let msq = tape.square(mean);
    let var = tape.exp(log_var);
    let a = tape.add(msq, var);
    let b = tape.sub(a, log_var);
    let c = tape.add_scalar(b, -1.0);
    let scaled = tape.scale(c, 0.5);
    tape.sum_rows(scaled)
}
