//! Goal codec: a variational encoder/decoder pair that turns raw goal
//! vectors (coordinates, descriptor bits, or flattened pixels) into compact
//! latent codes for the goal-conditioned policy. The encoder is trained
//! jointly: it receives the sum of the perception-loss gradients and whatever
//! gradients the policy loss sends into the goal embedding.

use crate::checkpoint::{self, Blob};
use crate::error::{Error, Result};
use crate::numerics::dist::kl_to_standard_on_tape;
use crate::numerics::{Activation, AdamState, Mlp, MlpHandle, Tape, Tensor, Tx};
use crate::rng::SplitRng;

#[derive(Copy, Clone, Debug)]
pub struct PerceptionConfig {
    pub latent_dim: usize,
    /// Reconstruction weight.
    pub recon_weight: f64,
    /// Prior-matching (KL) weight.
    pub kl_weight: f64,
    pub hidden: usize,
    pub lr: f64,
}

impl Default for PerceptionConfig {
    fn default() -> PerceptionConfig {
        PerceptionConfig {
            latent_dim: 2,
            recon_weight: 1.0,
            kl_weight: 5.0,
            hidden: 64,
            lr: 0.001,
        }
    }
}

impl PerceptionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(Error::ConfigGeneral(
                "latent dimension must be at least 1".into(),
            ));
        }
        if self.recon_weight < 0.0 || self.kl_weight < 0.0 {
            return Err(Error::ConfigGeneral(
                "loss weights must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

pub struct GoalCodec {
    cfg: PerceptionConfig,
    goal_dim: usize,
    encoder: Mlp, // goal -> [mean, log_var]
    decoder: Mlp, // z -> goal reconstruction
    enc_opt: AdamState,
    dec_opt: AdamState,
}

impl GoalCodec {
    pub fn new(goal_dim: usize, cfg: PerceptionConfig, rng: &mut SplitRng) -> Result<GoalCodec> {
        cfg.validate()?;
        if goal_dim == 0 {
            return Err(Error::ConfigGeneral(
                "goal dimension must be at least 1".into(),
            ));
        }
        let h = cfg.hidden;
        let encoder = Mlp::new(vec![goal_dim, h, 2 * cfg.latent_dim], Activation::Relu, rng);
        let decoder = Mlp::new(vec![cfg.latent_dim, h, goal_dim], Activation::Relu, rng);
        let enc_opt = AdamState::for_params(encoder.params(), cfg.lr);
        let dec_opt = AdamState::for_params(decoder.params(), cfg.lr);
        Ok(GoalCodec {
            cfg,
            goal_dim,
            encoder,
            decoder,
            enc_opt,
            dec_opt,
        })
    }

    pub fn config(&self) -> &PerceptionConfig {
        &self.cfg
    }

    pub fn goal_dim(&self) -> usize {
        self.goal_dim
    }

    pub fn latent_dim(&self) -> usize {
        self.cfg.latent_dim
    }

    pub fn encoder(&self) -> &Mlp {
        &self.encoder
    }

    pub fn decoder(&self) -> &Mlp {
        &self.decoder
    }

    fn check_goal(&self, goal: &[f64]) -> Result<Tensor> {
        if goal.len() != self.goal_dim {
            return Err(Error::shape(&[self.goal_dim], &[goal.len()], "goal"));
        }
        Ok(Tensor::matrix(1, goal.len(), goal.to_vec()))
    }

    /// Posterior statistics (mean, log-variance) at one goal.
    pub fn encode_stats(&self, goal: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let out = self.encoder.forward(&self.check_goal(goal)?)?;
        let d = self.cfg.latent_dim;
        Ok((out.data()[..d].to_vec(), out.data()[d..].to_vec()))
    }

    /// Reparameterized sample z = mean + exp(log_var / 2) * noise.
    pub fn encode_with_noise(&self, goal: &[f64], noise: &[f64]) -> Result<Vec<f64>> {
        let (mean, log_var) = self.encode_stats(goal)?;
        if noise.len() != mean.len() {
            return Err(Error::shape(&[mean.len()], &[noise.len()], "encoder noise"));
        }
        Ok(mean
            .iter()
            .zip(log_var.iter())
            .zip(noise.iter())
            .map(|((&m, &lv), &e)| m + (0.5 * lv).exp() * e)
            .collect())
    }

    pub fn encode(&self, goal: &[f64], rng: &mut SplitRng) -> Result<Vec<f64>> {
        let noise: Vec<f64> = (0..self.cfg.latent_dim).map(|_| rng.normal()).collect();
        self.encode_with_noise(goal, &noise)
    }

    /// Deterministic embedding: the posterior mean. This is what the policy
    /// is conditioned on.
    pub fn encode_mean(&self, goal: &[f64]) -> Result<Vec<f64>> {
        Ok(self.encode_stats(goal)?.0)
    }

    pub fn decode(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.cfg.latent_dim {
            return Err(Error::shape(&[self.cfg.latent_dim], &[z.len()], "latent"));
        }
        let out = self
            .decoder
            .forward(&Tensor::matrix(1, z.len(), z.to_vec()))?;
        Ok(out.data().to_vec())
    }

    /// Perception loss on a batch of flattened goals, with pinned noise.
    pub fn prec_loss(&self, goals: &[Vec<f64>], noise: &Tensor) -> Result<f64> {
        Ok(perception_loss(
            &self.encoder,
            &self.decoder,
            &self.cfg,
            self.goal_dim,
            goals,
            noise,
        )?
        .0)
    }

    /// One joint optimizer step. The encoder gradient is the sum of the
    /// perception-loss gradient and `policy_grads` (gradients the policy loss
    /// sent into the encoder, aligned with its parameter list); the decoder
    /// sees perception gradients only. Returns the perception loss.
    ///
    /// When both terms are present the policy pull is rescaled so its global
    /// norm never exceeds the perception gradient norm: the policy may steer
    /// the embedding but must not be able to collapse it.
    pub fn joint_update(
        &mut self,
        policy_grads: Option<&[Tensor]>,
        goals: &[Vec<f64>],
        rng: &mut SplitRng,
    ) -> Result<f64> {
        let m = goals.len();
        let (loss, mut enc_grads, dec_grads) = if m == 0 {
            let eg: Vec<Tensor> = self
                .encoder
                .params()
                .iter()
                .map(|p| Tensor::zeros(p.shape().to_vec()))
                .collect();
            let dg: Vec<Tensor> = self
                .decoder
                .params()
                .iter()
                .map(|p| Tensor::zeros(p.shape().to_vec()))
                .collect();
            (0.0, eg, dg)
        } else {
            let noise = Tensor::matrix(
                m,
                self.cfg.latent_dim,
                (0..m * self.cfg.latent_dim).map(|_| rng.normal()).collect(),
            );
            perception_loss(
                &self.encoder,
                &self.decoder,
                &self.cfg,
                self.goal_dim,
                goals,
                &noise,
            )?
        };
        if let Some(pg) = policy_grads {
            if pg.len() != enc_grads.len() {
                return Err(Error::contract(format!(
                    "{} policy gradients for {} encoder parameters",
                    pg.len(),
                    enc_grads.len()
                )));
            }
            let scale = if m == 0 {
                1.0
            } else {
                policy_grad_scale(&enc_grads, pg)
            };
            for (g, p) in enc_grads.iter_mut().zip(pg.iter()) {
                if g.shape() != p.shape() {
                    return Err(Error::shape(
                        g.shape(),
                        p.shape(),
                        "policy gradient into encoder",
                    ));
                }
                *g = g.add(&p.scale(scale));
            }
        }
        let mut enc_params = self.encoder.params().to_vec();
        self.enc_opt.step(&mut enc_params, &enc_grads)?;
        self.encoder.set_params(enc_params);
        let mut dec_params = self.decoder.params().to_vec();
        self.dec_opt.step(&mut dec_params, &dec_grads)?;
        self.decoder.set_params(dec_params);
        Ok(loss)
    }

    /// Taped encoder mean over a goal batch, for losses that differentiate
    /// through the embedding. Returns the handle (for gradient extraction)
    /// and the mean node.
    pub fn watch_encoder_mean(&self, tape: &mut Tape, goals: Tx) -> (MlpHandle, Tx) {
        let h = self.encoder.watch(tape);
        let out = h.forward(tape, goals);
        let mean = tape.slice_cols(out, 0, self.cfg.latent_dim);
        (h, mean)
    }

    pub fn to_blobs(&self, prefix: &str) -> Vec<Blob> {
        let mut blobs = vec![(
            format!("{prefix}meta"),
            vec![
                self.goal_dim as f64,
                self.cfg.latent_dim as f64,
                self.cfg.hidden as f64,
            ],
        )];
        for (name, net) in [("encoder", &self.encoder), ("decoder", &self.decoder)] {
            for (i, p) in net.params().iter().enumerate() {
                blobs.push((format!("{prefix}{name}.{i}"), p.data().to_vec()));
            }
        }
        for (name, data) in self.enc_opt.flatten() {
            blobs.push((format!("{prefix}enc_opt.{name}"), data));
        }
        for (name, data) in self.dec_opt.flatten() {
            blobs.push((format!("{prefix}dec_opt.{name}"), data));
        }
        blobs
    }

    pub fn restore_blobs(&mut self, prefix: &str, blobs: &[Blob]) -> Result<()> {
        let meta = checkpoint::get(blobs, &format!("{prefix}meta"))?;
        if meta
            != [
                self.goal_dim as f64,
                self.cfg.latent_dim as f64,
                self.cfg.hidden as f64,
            ]
        {
            return Err(Error::Checkpoint(
                "codec layout differs from the checkpointed one".into(),
            ));
        }
        let nets: [(&str, &mut Mlp); 2] = [
            ("encoder", &mut self.encoder),
            ("decoder", &mut self.decoder),
        ];
        for (name, net) in nets {
            let mut params = Vec::with_capacity(net.params().len());
            for (i, p) in net.params().iter().enumerate() {
                let data = checkpoint::get(blobs, &format!("{prefix}{name}.{i}"))?;
                if data.len() != p.len() {
                    return Err(Error::Checkpoint(format!(
                        "parameter {prefix}{name}.{i} has wrong size"
                    )));
                }
                params.push(Tensor::from_vec(p.shape().to_vec(), data.to_vec()));
            }
            net.set_params(params);
        }
        for (opt, tag) in [
            (&mut self.enc_opt, "enc_opt."),
            (&mut self.dec_opt, "dec_opt."),
        ] {
            let sub: Vec<Blob> = blobs
                .iter()
                .filter_map(|(n, v)| {
                    n.strip_prefix(prefix)
                        .and_then(|n| n.strip_prefix(tag))
                        .map(|n| (n.to_string(), v.clone()))
                })
                .collect();
            opt.restore(&sub)?;
        }
        Ok(())
    }
}

/// min(1, |perception| / |policy|) over the concatenated gradient vectors.
fn policy_grad_scale(perception: &[Tensor], policy: &[Tensor]) -> f64 {
    let norm = |gs: &[Tensor]| {
        gs.iter()
            .flat_map(|g| g.data().iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    };
    let p = norm(policy);
    if p <= norm(perception) || p == 0.0 {
        1.0
    } else {
        norm(perception) / p
    }
}

/// recon_weight * MSE(decode(z), goal) + kl_weight * mean KL(q(z|g) || N(0,I))
/// with z reparameterized through `noise`. Returns the loss value and the
/// encoder and decoder gradients.
pub(crate) fn perception_loss(
    encoder: &Mlp,
    decoder: &Mlp,
    cfg: &PerceptionConfig,
    goal_dim: usize,
    goals: &[Vec<f64>],
    noise: &Tensor,
) -> Result<(f64, Vec<Tensor>, Vec<Tensor>)> {
    let m = goals.len();
    if m == 0 {
        return Err(Error::contract("perception loss needs a non-empty batch"));
    }
    let mut flat = Vec::with_capacity(m * goal_dim);
    for g in goals {
        if g.len() != goal_dim {
            return Err(Error::shape(&[goal_dim], &[g.len()], "goal batch entry"));
        }
        flat.extend_from_slice(g);
    }
    let targets = Tensor::matrix(m, goal_dim, flat);

    let mut tape = Tape::new();
    let x = tape.constant(targets.clone());
    let eh = encoder.watch(&mut tape);
    let out = eh.forward(&mut tape, x);
    let d = cfg.latent_dim;
    let mean = tape.slice_cols(out, 0, d);
    let log_var = tape.slice_cols(out, d, 2 * d);

    // z = mean + exp(log_var / 2) * noise
    let half_lv = tape.scale(log_var, 0.5);
    let std = tape.exp(half_lv);
    let eps = tape.constant(noise.clone());
    let scaled = tape.mul(std, eps);
    let z = tape.add(mean, scaled);

    let dh = decoder.watch(&mut tape);
    let recon = dh.forward(&mut tape, z);
    let mse = tape.mse(recon, &targets);
    let recon_term = tape.scale(mse, cfg.recon_weight);

    let kl_rows = kl_to_standard_on_tape(&mut tape, mean, log_var);
    let kl_mean = tape.mean_all(kl_rows);
    let kl_term = tape.scale(kl_mean, cfg.kl_weight);

    let loss = tape.add(recon_term, kl_term);
    let value = tape.value(loss).item();
    let grads = tape.backward(loss)?;
    Ok((value, eh.grads(encoder, &grads), dh.grads(decoder, &grads)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn codec(seed: u64, cfg: PerceptionConfig) -> GoalCodec {
        let mut rng = SplitRng::from_seed(seed);
        GoalCodec::new(2, cfg, &mut rng).unwrap()
    }

    fn zero_params(net: &Mlp) -> Vec<Tensor> {
        net.params()
            .iter()
            .map(|p| Tensor::zeros(p.shape().to_vec()))
            .collect()
    }

    #[test]
    fn zero_noise_returns_the_mean() {
        let c = codec(1, PerceptionConfig::default());
        let (mean, _) = c.encode_stats(&[0.3, -0.8]).unwrap();
        let z = c.encode_with_noise(&[0.3, -0.8], &[0.0, 0.0]).unwrap();
        assert_eq!(z, mean);
    }

    #[test]
    fn identical_goals_identical_means() {
        let c = codec(2, PerceptionConfig::default());
        assert_eq!(
            c.encode_mean(&[1.0, 1.0]).unwrap(),
            c.encode_mean(&[1.0, 1.0]).unwrap()
        );
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let c = codec(3, PerceptionConfig::default());
        assert!(c.encode_mean(&[1.0]).is_err());
        assert!(c.decode(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn sample_variance_matches_the_posterior() {
        let c = codec(4, PerceptionConfig::default());
        let goal = [0.5, 0.2];
        let (_, log_var) = c.encode_stats(&goal).unwrap();
        let mut rng = SplitRng::from_seed(5);
        let n = 10_000;
        let mut sums = vec![[0.0; 2]; c.latent_dim()];
        for _ in 0..n {
            let z = c.encode(&goal, &mut rng).unwrap();
            for (d, &v) in z.iter().enumerate() {
                sums[d][0] += v;
                sums[d][1] += v * v;
            }
        }
        for d in 0..c.latent_dim() {
            let mean = sums[d][0] / n as f64;
            let var = sums[d][1] / n as f64 - mean * mean;
            let expected = log_var[d].exp();
            // Var of the sample variance of a Gaussian is ~ 2 sigma^4 / n.
            let tol = 3.0 * (2.0 / n as f64).sqrt() * expected;
            assert!((var - expected).abs() < tol, "dim {d}: {var} vs {expected}");
        }
    }

    #[test]
    fn prior_matching_perfect_autoencoder_has_zero_loss() {
        // Zero networks on zero goals: posterior = N(0, I) so KL = 0, and the
        // reconstruction of the zero goal is exact.
        let mut c = codec(6, PerceptionConfig::default());
        let enc = {
            let mut net = c.encoder.clone();
            net.set_params(zero_params(&c.encoder));
            net
        };
        let dec = {
            let mut net = c.decoder.clone();
            net.set_params(zero_params(&c.decoder));
            net
        };
        c.encoder = enc;
        c.decoder = dec;
        let goals = vec![vec![0.0, 0.0]; 4];
        let noise = Tensor::matrix(4, 2, vec![0.3, -0.7, 1.2, 0.0, -0.4, 0.9, 0.1, 0.2]);
        assert!(c.prec_loss(&goals, &noise).unwrap().abs() < 1e-15);
    }

    #[test]
    fn zero_kl_weight_reduces_to_pure_reconstruction() {
        let cfg = PerceptionConfig {
            kl_weight: 0.0,
            ..PerceptionConfig::default()
        };
        let c = codec(7, cfg);
        let goals = vec![vec![0.4, -0.2], vec![-1.0, 0.5]];
        let noise = Tensor::matrix(2, 2, vec![0.1, -0.2, 0.3, 0.4]);
        let loss = c.prec_loss(&goals, &noise).unwrap();
        // Recompute the reconstruction error by hand with the same noise.
        let mut mse = 0.0;
        for (i, g) in goals.iter().enumerate() {
            let z = c.encode_with_noise(g, noise.row(i)).unwrap();
            let rec = c.decode(&z).unwrap();
            mse += rec
                .iter()
                .zip(g.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        }
        mse /= (goals.len() * 2) as f64;
        assert!((loss - mse).abs() < 1e-12, "{loss} vs {mse}");
    }

    #[test]
    fn kl_term_is_nonnegative() {
        let c = codec(
            8,
            PerceptionConfig {
                recon_weight: 0.0,
                ..PerceptionConfig::default()
            },
        );
        let mut rng = SplitRng::from_seed(9);
        for _ in 0..10 {
            let goals = vec![vec![rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)]];
            let noise = Tensor::matrix(1, 2, vec![rng.normal(), rng.normal()]);
            assert!(c.prec_loss(&goals, &noise).unwrap() >= 0.0);
        }
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        let c = codec(
            10,
            PerceptionConfig {
                kl_weight: 5.0,
                ..PerceptionConfig::default()
            },
        );
        let mut rng = SplitRng::from_seed(11);
        let goals: Vec<Vec<f64>> = (0..4)
            .map(|_| vec![rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)])
            .collect();
        let noise = Tensor::matrix(4, 2, (0..8).map(|_| rng.normal()).collect());
        let (_, eg, dg) =
            perception_loss(&c.encoder, &c.decoder, &c.cfg, 2, &goals, &noise).unwrap();
        let perturbed = |net: &Mlp, pi: usize, e: usize, h: f64| {
            let mut out = net.clone();
            let mut params = out.params().to_vec();
            let mut data = params[pi].data().to_vec();
            data[e] += h;
            params[pi] = Tensor::from_vec(params[pi].shape().to_vec(), data);
            out.set_params(params);
            out
        };
        for (which, grads) in [(0, &eg), (1, &dg)] {
            for (pi, g) in grads.iter().enumerate() {
                for e in (0..g.len()).step_by(7) {
                    let h = 1e-6;
                    let value = |delta: f64| {
                        let (enc, dec) = if which == 0 {
                            (perturbed(&c.encoder, pi, e, delta), c.decoder.clone())
                        } else {
                            (c.encoder.clone(), perturbed(&c.decoder, pi, e, delta))
                        };
                        perception_loss(&enc, &dec, &c.cfg, 2, &goals, &noise)
                            .unwrap()
                            .0
                    };
                    let fd = (value(h) - value(-h)) / (2.0 * h);
                    let ad = g.data()[e];
                    let denom = fd.abs().max(ad.abs()).max(1e-6);
                    assert!(
                        (fd - ad).abs() / denom < 1e-4,
                        "net {which} param {pi} entry {e}: {ad} vs {fd}"
                    );
                }
            }
        }
    }

    #[test]
    fn joint_step_equals_the_manual_gradient_sum() {
        let mut rng = SplitRng::from_seed(12);
        let mut a = codec(13, PerceptionConfig::default());
        let goals: Vec<Vec<f64>> = (0..4)
            .map(|_| vec![rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)])
            .collect();
        let policy_grads: Vec<Tensor> = a
            .encoder
            .params()
            .iter()
            .map(|p| {
                Tensor::from_vec(
                    p.shape().to_vec(),
                    (0..p.len()).map(|_| rng.uniform(-0.1, 0.1)).collect(),
                )
            })
            .collect();

        // Manual replica: identical codec, summed gradients, same Adam.
        let mut manual = codec(13, PerceptionConfig::default());
        let (seed, stream, pos) = rng.state();
        let mut rng_b = SplitRng::restore(seed, stream, pos);
        a.joint_update(Some(&policy_grads), &goals, &mut rng)
            .unwrap();

        let noise = Tensor::matrix(4, 2, (0..8).map(|_| rng_b.normal()).collect());
        let (_, eg, dg) = perception_loss(
            &manual.encoder,
            &manual.decoder,
            &manual.cfg,
            2,
            &goals,
            &noise,
        )
        .unwrap();
        let scale = policy_grad_scale(&eg, &policy_grads);
        let summed: Vec<Tensor> = eg
            .iter()
            .zip(policy_grads.iter())
            .map(|(a, b)| a.add(&b.scale(scale)))
            .collect();
        let mut enc_params = manual.encoder.params().to_vec();
        manual.enc_opt.step(&mut enc_params, &summed).unwrap();
        manual.encoder.set_params(enc_params);
        let mut dec_params = manual.decoder.params().to_vec();
        manual.dec_opt.step(&mut dec_params, &dg).unwrap();
        manual.decoder.set_params(dec_params);

        for (x, y) in a
            .encoder
            .params()
            .iter()
            .zip(manual.encoder.params().iter())
        {
            assert_eq!(x.data(), y.data());
        }
        for (x, y) in a
            .decoder
            .params()
            .iter()
            .zip(manual.decoder.params().iter())
        {
            assert_eq!(x.data(), y.data());
        }
    }

    #[test]
    fn policy_only_step_ignores_perception() {
        // Empty batch: the encoder moves by exactly the policy gradients.
        let mut rng = SplitRng::from_seed(14);
        let mut a = codec(15, PerceptionConfig::default());
        let b = codec(15, PerceptionConfig::default());
        let policy_grads: Vec<Tensor> = a
            .encoder
            .params()
            .iter()
            .map(|p| Tensor::full(p.shape().to_vec(), 0.01))
            .collect();
        a.joint_update(Some(&policy_grads), &[], &mut rng).unwrap();
        let mut manual = b.encoder.params().to_vec();
        let mut opt = AdamState::for_params(&manual, b.cfg.lr);
        opt.step(&mut manual, &policy_grads).unwrap();
        for (x, y) in a.encoder.params().iter().zip(manual.iter()) {
            assert_eq!(x.data(), y.data());
        }
        // Decoder got a zero-gradient step: parameters unchanged.
        for (x, y) in a.decoder.params().iter().zip(b.decoder.params().iter()) {
            assert_eq!(x.data(), y.data());
        }
    }

    fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
        let rank = |v: &[f64]| {
            let mut idx: Vec<usize> = (0..v.len()).collect();
            idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
            let mut r = vec![0.0; v.len()];
            for (pos, &i) in idx.iter().enumerate() {
                r[i] = pos as f64;
            }
            r
        };
        let (rx, ry) = (rank(xs), rank(ys));
        let n = xs.len() as f64;
        let mx = rx.iter().sum::<f64>() / n;
        let my = ry.iter().sum::<f64>() / n;
        let mut num = 0.0;
        let mut dx = 0.0;
        let mut dy = 0.0;
        for i in 0..xs.len() {
            num += (rx[i] - mx) * (ry[i] - my);
            dx += (rx[i] - mx).powi(2);
            dy += (ry[i] - my).powi(2);
        }
        num / (dx * dy).sqrt()
    }

    #[test]
    fn arc_goal_family_embeds_monotonically() {
        // Goals on a half circle, a 1-parameter family: the projection of the
        // learned means onto their principal direction must order the goals
        // by angle.
        let cfg = PerceptionConfig {
            kl_weight: 0.5,
            lr: 0.003,
            ..PerceptionConfig::default()
        };
        let mut rng = SplitRng::from_seed(16);
        let mut c = GoalCodec::new(2, cfg, &mut rng).unwrap();
        for _ in 0..2000 {
            let goals: Vec<Vec<f64>> = (0..32)
                .map(|_| {
                    let t = rng.uniform(0.0, std::f64::consts::PI);
                    vec![t.cos(), t.sin()]
                })
                .collect();
            c.joint_update(None, &goals, &mut rng).unwrap();
        }
        let angles: Vec<f64> = (0..50)
            .map(|i| i as f64 / 49.0 * std::f64::consts::PI)
            .collect();
        let zs: Vec<Vec<f64>> = angles
            .iter()
            .map(|t| c.encode_mean(&[t.cos(), t.sin()]).unwrap())
            .collect();
        // Principal direction by power iteration on the 2x2 covariance.
        let d = c.latent_dim();
        let mean: Vec<f64> = (0..d)
            .map(|j| zs.iter().map(|z| z[j]).sum::<f64>() / zs.len() as f64)
            .collect();
        let mut cov = vec![0.0; d * d];
        for z in &zs {
            for a in 0..d {
                for b in 0..d {
                    cov[a * d + b] += (z[a] - mean[a]) * (z[b] - mean[b]);
                }
            }
        }
        let mut v = vec![1.0; d];
        for _ in 0..100 {
            let mut nv = vec![0.0; d];
            for a in 0..d {
                for b in 0..d {
                    nv[a] += cov[a * d + b] * v[b];
                }
            }
            let norm = nv.iter().map(|x| x * x).sum::<f64>().sqrt();
            v = nv.iter().map(|x| x / norm).collect();
        }
        let proj: Vec<f64> = zs
            .iter()
            .map(|z| z.iter().zip(v.iter()).map(|(a, b)| a * b).sum())
            .collect();
        let rho = spearman(&angles, &proj).abs();
        assert!(rho >= 0.9, "rank correlation {rho}");
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = SplitRng::from_seed(17);
        let mut a = codec(18, PerceptionConfig::default());
        let goals = vec![vec![0.1, 0.2], vec![0.3, 0.4]];
        for _ in 0..3 {
            a.joint_update(None, &goals, &mut rng).unwrap();
        }
        let blobs = a.to_blobs("codec.");
        let mut b = codec(19, PerceptionConfig::default());
        b.restore_blobs("codec.", &blobs).unwrap();
        assert_eq!(
            a.encode_mean(&[0.5, -0.5]).unwrap(),
            b.encode_mean(&[0.5, -0.5]).unwrap()
        );
    }
}
