//! The shared scoring network q(latent | state), the latent prior, the two
//! intrinsic rewards derived from it, and the histogram density model for the
//! exploration-bonus variant.
//!
//! One discriminator instance scores the states of both policies; during
//! imitation it is simply not updated. Rewards subtract the constant
//! log-prior, which shifts values uniformly without changing any action
//! ranking.

use crate::checkpoint::{self, Blob};
use crate::error::{Error, Result};
use crate::numerics::dist::{gaussian_logpdf, gaussian_logpdf_on_tape, log_softmax_vec};
use crate::numerics::{Activation, AdamState, Mlp, Tape, Tensor};
use crate::rng::SplitRng;

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum LatentSpec {
    /// K skills, uniform prior, one-hot encoding.
    DiscreteOneHot(usize),
    /// d components uniform on [-1, 1].
    ContinuousBox(usize),
}

impl LatentSpec {
    pub fn validate(self) -> Result<()> {
        match self {
            LatentSpec::DiscreteOneHot(k) if k < 2 => Err(Error::ConfigGeneral(format!(
                "need at least 2 skills, got {k}"
            ))),
            LatentSpec::ContinuousBox(0) => Err(Error::ConfigGeneral(
                "continuous latent needs at least 1 dimension".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Width of the encoded latent fed to conditioned networks.
    pub fn dim(self) -> usize {
        match self {
            LatentSpec::DiscreteOneHot(k) => k,
            LatentSpec::ContinuousBox(d) => d,
        }
    }

    /// log p(latent): constant over the uniform support.
    pub fn log_prior(self) -> f64 {
        match self {
            LatentSpec::DiscreteOneHot(k) => -(k as f64).ln(),
            LatentSpec::ContinuousBox(d) => -(d as f64) * 2f64.ln(),
        }
    }

    pub fn sample(self, rng: &mut SplitRng) -> Latent {
        match self {
            LatentSpec::DiscreteOneHot(k) => Latent::Index(rng.gen_range(k)),
            LatentSpec::ContinuousBox(d) => {
                Latent::Vector((0..d).map(|_| rng.uniform(-1.0, 1.0)).collect())
            }
        }
    }

    pub fn all_discrete(self) -> Option<Vec<Latent>> {
        match self {
            LatentSpec::DiscreteOneHot(k) => Some((0..k).map(Latent::Index).collect()),
            LatentSpec::ContinuousBox(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Latent {
    Index(usize),
    Vector(Vec<f64>),
}

impl Latent {
    /// Flat conditioning vector: one-hot for skills, raw components otherwise.
    pub fn encode(&self, spec: LatentSpec) -> Result<Vec<f64>> {
        match (self, spec) {
            (Latent::Index(i), LatentSpec::DiscreteOneHot(k)) => {
                if *i >= k {
                    return Err(Error::contract(format!(
                        "skill index {i} out of range 0..{k}"
                    )));
                }
                let mut v = vec![0.0; k];
                v[*i] = 1.0;
                Ok(v)
            }
            (Latent::Vector(v), LatentSpec::ContinuousBox(d)) => {
                if v.len() != d {
                    return Err(Error::shape(&[d], &[v.len()], "latent vector"));
                }
                if v.iter().any(|x| x.abs() > 1.0) {
                    return Err(Error::contract("latent component outside [-1, 1]"));
                }
                Ok(v.clone())
            }
            _ => Err(Error::contract(
                "latent variant does not match the latent spec",
            )),
        }
    }
}

pub struct Discriminator {
    spec: LatentSpec,
    state_dim: usize,
    net: Mlp,
    opt: AdamState,
}

impl Discriminator {
    pub fn new(
        spec: LatentSpec,
        state_dim: usize,
        hidden: usize,
        lr: f64,
        rng: &mut SplitRng,
    ) -> Result<Discriminator> {
        spec.validate()?;
        let out = match spec {
            LatentSpec::DiscreteOneHot(k) => k,
            LatentSpec::ContinuousBox(d) => 2 * d, // mean and log-variance heads
        };
        let net = Mlp::new(vec![state_dim, hidden, hidden, out], Activation::Relu, rng);
        let opt = AdamState::for_params(net.params(), lr);
        Ok(Discriminator {
            spec,
            state_dim,
            net,
            opt,
        })
    }

    pub fn spec(&self) -> LatentSpec {
        self.spec
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn set_net(&mut self, net: Mlp) {
        self.net = net;
    }

    fn state_row(&self, state: &[f64]) -> Result<Tensor> {
        if state.len() != self.state_dim {
            return Err(Error::shape(
                &[self.state_dim],
                &[state.len()],
                "discriminator state",
            ));
        }
        Ok(Tensor::matrix(1, state.len(), state.to_vec()))
    }

    /// log q(latent | state), floored at twice the prior's log density. The
    /// floor bounds the intrinsic reward from below by the prior's log
    /// density: a saturated network would otherwise send mismatched-latent
    /// rewards to -inf and destabilize the critic targets downstream. The
    /// floor never reorders states and leaves chance-level scores untouched.
    pub fn log_q(&self, latent: &Latent, state: &[f64]) -> Result<f64> {
        let out = self.net.forward(&self.state_row(state)?)?;
        let raw = match (latent, self.spec) {
            (Latent::Index(i), LatentSpec::DiscreteOneHot(k)) => {
                if *i >= k {
                    return Err(Error::contract(format!(
                        "skill index {i} out of range 0..{k}"
                    )));
                }
                log_softmax_vec(out.data())[*i]
            }
            (Latent::Vector(v), LatentSpec::ContinuousBox(d)) => {
                if v.len() != d {
                    return Err(Error::shape(&[d], &[v.len()], "latent vector"));
                }
                gaussian_logpdf(v, &out.data()[..d], &out.data()[d..])
            }
            _ => {
                return Err(Error::contract(
                    "latent variant does not match the latent spec",
                ))
            }
        };
        Ok(raw.max(2.0 * self.spec.log_prior()))
    }

    /// Intrinsic reward for the latent-conditioned explorer:
    /// log q(latent | next state) - log p(latent).
    pub fn reward_mu(&self, latent: &Latent, next_state: &[f64]) -> Result<f64> {
        Ok(self.log_q(latent, next_state)? - self.spec.log_prior())
    }

    /// Intrinsic reward for the goal-conditioned imitator. Same pure function
    /// as [`Self::reward_mu`]; the caller guarantees the network is frozen
    /// while this phase trains.
    pub fn reward_theta(&self, latent: &Latent, next_state_tilde: &[f64]) -> Result<f64> {
        self.reward_mu(latent, next_state_tilde)
    }

    /// One ascent step on mean log q(latent | state). Returns the negative
    /// objective (a loss, lower is better), or `None` for an empty batch.
    pub fn update(&mut self, batch: &[(Latent, Vec<f64>)]) -> Result<Option<f64>> {
        if batch.is_empty() {
            return Ok(None);
        }
        let (loss, grads) = discriminator_loss(&self.net, self.spec, self.state_dim, batch)?;
        let mut params = self.net.params().to_vec();
        self.opt.step(&mut params, &grads)?;
        self.net.set_params(params);
        Ok(Some(loss))
    }

    /// Accuracy of the greedy classifier on labeled states (discrete only).
    pub fn accuracy(&self, batch: &[(Latent, Vec<f64>)]) -> Result<f64> {
        let mut hits = 0usize;
        for (latent, state) in batch {
            let Latent::Index(truth) = latent else {
                return Err(Error::contract("accuracy is defined for discrete latents"));
            };
            let out = self.net.forward(&self.state_row(state)?)?;
            let pred = out
                .data()
                .iter()
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
                )
                .0;
            hits += (pred == *truth) as usize;
        }
        Ok(hits as f64 / batch.len() as f64)
    }

    pub fn to_blobs(&self, prefix: &str) -> Vec<Blob> {
        let (tag, width) = match self.spec {
            LatentSpec::DiscreteOneHot(k) => (0.0, k as f64),
            LatentSpec::ContinuousBox(d) => (1.0, d as f64),
        };
        let mut blobs = vec![(
            format!("{prefix}meta"),
            vec![tag, width, self.state_dim as f64],
        )];
        for (i, p) in self.net.params().iter().enumerate() {
            blobs.push((format!("{prefix}net.{i}"), p.data().to_vec()));
        }
        for (name, data) in self.opt.flatten() {
            blobs.push((format!("{prefix}opt.{name}"), data));
        }
        blobs
    }

    pub fn restore_blobs(&mut self, prefix: &str, blobs: &[Blob]) -> Result<()> {
        let meta = checkpoint::get(blobs, &format!("{prefix}meta"))?;
        let (tag, width) = match self.spec {
            LatentSpec::DiscreteOneHot(k) => (0.0, k as f64),
            LatentSpec::ContinuousBox(d) => (1.0, d as f64),
        };
        if meta != [tag, width, self.state_dim as f64] {
            return Err(Error::Checkpoint(
                "discriminator layout differs from the checkpointed one".into(),
            ));
        }
        let mut params = Vec::with_capacity(self.net.params().len());
        for (i, p) in self.net.params().iter().enumerate() {
            let data = checkpoint::get(blobs, &format!("{prefix}net.{i}"))?;
            if data.len() != p.len() {
                return Err(Error::Checkpoint(format!(
                    "parameter {prefix}net.{i} has wrong size"
                )));
            }
            params.push(Tensor::from_vec(p.shape().to_vec(), data.to_vec()));
        }
        self.net.set_params(params);
        let sub: Vec<Blob> = blobs
            .iter()
            .filter_map(|(n, v)| {
                n.strip_prefix(prefix)
                    .and_then(|n| n.strip_prefix("opt."))
                    .map(|n| (n.to_string(), v.clone()))
            })
            .collect();
        self.opt.restore(&sub)
    }
}

/// Negative mean log q(latent | state) on a batch, with network gradients.
pub(crate) fn discriminator_loss(
    net: &Mlp,
    spec: LatentSpec,
    state_dim: usize,
    batch: &[(Latent, Vec<f64>)],
) -> Result<(f64, Vec<Tensor>)> {
    let m = batch.len();
    let mut states = Vec::with_capacity(m * state_dim);
    for (_, s) in batch {
        if s.len() != state_dim {
            return Err(Error::shape(
                &[state_dim],
                &[s.len()],
                "discriminator batch state",
            ));
        }
        states.extend_from_slice(s);
    }
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::matrix(m, state_dim, states));
    let h = net.watch(&mut tape);
    let out = h.forward(&mut tape, x);
    let logq = match spec {
        LatentSpec::DiscreteOneHot(k) => {
            let mut idx = Vec::with_capacity(m);
            for (latent, _) in batch {
                match latent {
                    Latent::Index(i) if *i < k => idx.push(*i),
                    _ => return Err(Error::contract("batch latent outside the discrete support")),
                }
            }
            let lsm = tape.log_softmax(out);
            tape.pick_col(lsm, &idx)
        }
        LatentSpec::ContinuousBox(d) => {
            let mut target = Vec::with_capacity(m * d);
            for (latent, _) in batch {
                match latent {
                    Latent::Vector(v) if v.len() == d => target.extend_from_slice(v),
                    _ => {
                        return Err(Error::contract(
                            "batch latent outside the continuous support",
                        ))
                    }
                }
            }
            let mean = tape.slice_cols(out, 0, d);
            let log_var = tape.slice_cols(out, d, 2 * d);
            gaussian_logpdf_on_tape(&mut tape, mean, log_var, &Tensor::matrix(m, d, target))
        }
    };
    let mean_logq = tape.mean_all(logq);
    let loss = tape.neg(mean_logq);
    let value = tape.value(loss).item();
    let grads = tape.backward(loss)?;
    Ok((value, h.grads(net, &grads)))
}

/// Blend of the skill reward and a count-based novelty bonus:
/// lambda * r + (lambda - 1) * log q_nu(next state).
pub fn exploration_reward(lambda: f64, r: f64, density: &DensityModel, next_state: &[f64]) -> f64 {
    lambda * r + (lambda - 1.0) * density.log_density(next_state)
}

/// Grid histogram over the first two state coordinates with Laplace
/// smoothing, used as the density model for the exploration bonus.
#[derive(Clone, Debug)]
pub struct DensityModel {
    bounds: (f64, f64, f64, f64),
    grid: usize,
    smoothing: f64,
    counts: Vec<f64>,
    total: f64,
}

impl DensityModel {
    pub fn new(bounds: (f64, f64, f64, f64), grid: usize, smoothing: f64) -> DensityModel {
        assert!(
            grid > 0 && smoothing > 0.0,
            "density model needs a grid and smoothing"
        );
        DensityModel {
            bounds,
            grid,
            smoothing,
            counts: vec![0.0; grid * grid],
            total: 0.0,
        }
    }

    fn cell(&self, state: &[f64]) -> usize {
        let (xmin, xmax, ymin, ymax) = self.bounds;
        let fx = ((state[0] - xmin) / (xmax - xmin)).clamp(0.0, 1.0);
        let fy = ((state[1] - ymin) / (ymax - ymin)).clamp(0.0, 1.0);
        let cx = ((fx * self.grid as f64) as usize).min(self.grid - 1);
        let cy = ((fy * self.grid as f64) as usize).min(self.grid - 1);
        cy * self.grid + cx
    }

    pub fn update(&mut self, state: &[f64]) {
        let cell = self.cell(state);
        self.counts[cell] += 1.0;
        self.total += 1.0;
    }

    /// Probability mass of the cell containing `state`.
    pub fn density(&self, state: &[f64]) -> f64 {
        let cells = self.counts.len() as f64;
        (self.counts[self.cell(state)] + self.smoothing) / (self.total + self.smoothing * cells)
    }

    pub fn log_density(&self, state: &[f64]) -> f64 {
        self.density(state).ln()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = vec![self.total];
        out.extend_from_slice(&self.counts);
        out
    }

    pub fn restore(&mut self, blob: &[f64]) -> Result<()> {
        if blob.len() != 1 + self.counts.len() {
            return Err(Error::Checkpoint("density blob layout mismatch".into()));
        }
        self.total = blob[0];
        self.counts.copy_from_slice(&blob[1..]);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::dist::LN_2PI;

    #[test]
    fn discrete_samples_are_uniform() {
        let spec = LatentSpec::DiscreteOneHot(4);
        let mut rng = SplitRng::from_seed(1);
        let n = 10_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            match spec.sample(&mut rng) {
                Latent::Index(i) => counts[i] += 1,
                _ => unreachable!(),
            }
        }
        let sigma = (0.25 * 0.75 / n as f64).sqrt();
        for (i, &c) in counts.iter().enumerate() {
            let freq = c as f64 / n as f64;
            assert!((freq - 0.25).abs() < 3.0 * sigma, "skill {i}: {freq}");
        }
    }

    #[test]
    fn continuous_samples_stay_in_the_box() {
        let spec = LatentSpec::ContinuousBox(2);
        let mut rng = SplitRng::from_seed(2);
        for _ in 0..1000 {
            match spec.sample(&mut rng) {
                Latent::Vector(v) => assert!(v.iter().all(|x| x.abs() <= 1.0)),
                _ => unreachable!(),
            }
        }
    }

    #[test]
    fn log_priors() {
        assert!((LatentSpec::DiscreteOneHot(4).log_prior() + 4f64.ln()).abs() < 1e-15);
        assert!((LatentSpec::ContinuousBox(2).log_prior() + 2.0 * 2f64.ln()).abs() < 1e-15);
    }

    fn zeroed(mut disc: Discriminator) -> Discriminator {
        let zeroed: Vec<Tensor> = disc
            .net
            .params()
            .iter()
            .map(|p| Tensor::zeros(p.shape().to_vec()))
            .collect();
        let mut net = disc.net.clone();
        net.set_params(zeroed);
        disc.set_net(net);
        disc
    }

    #[test]
    fn uniform_logits_score_at_the_prior() {
        let mut rng = SplitRng::from_seed(3);
        let disc = zeroed(
            Discriminator::new(LatentSpec::DiscreteOneHot(5), 2, 8, 1e-3, &mut rng).unwrap(),
        );
        let lq = disc.log_q(&Latent::Index(2), &[0.4, -0.4]).unwrap();
        assert!((lq + 5f64.ln()).abs() < 1e-12);
        // q equal to the prior means zero reward.
        assert!(
            disc.reward_mu(&Latent::Index(2), &[0.4, -0.4])
                .unwrap()
                .abs()
                < 1e-12
        );
    }

    #[test]
    fn continuous_density_at_the_mean_with_unit_variance() {
        let mut rng = SplitRng::from_seed(4);
        let disc =
            zeroed(Discriminator::new(LatentSpec::ContinuousBox(2), 3, 8, 1e-3, &mut rng).unwrap());
        // Zero net: mean = 0, log-var = 0; density of 0 under N(0, I) in 2-D.
        let lq = disc
            .log_q(&Latent::Vector(vec![0.0, 0.0]), &[1.0, 2.0, 3.0])
            .unwrap();
        assert!((lq + LN_2PI).abs() < 1e-12);
    }

    #[test]
    fn log_q_matches_independent_density_formulas() {
        let mut rng = SplitRng::from_seed(5);
        let disc = Discriminator::new(LatentSpec::ContinuousBox(2), 2, 16, 1e-3, &mut rng).unwrap();
        let disc_d =
            Discriminator::new(LatentSpec::DiscreteOneHot(3), 2, 16, 1e-3, &mut rng).unwrap();
        for _ in 0..20 {
            let s = vec![rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)];
            let w = vec![rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)];
            let out = disc.net.forward(&Tensor::matrix(1, 2, s.clone())).unwrap();
            let byhand = gaussian_logpdf(&w, &out.data()[..2], &out.data()[2..])
                .max(2.0 * LatentSpec::ContinuousBox(2).log_prior());
            let lq = disc.log_q(&Latent::Vector(w), &s).unwrap();
            assert!((lq - byhand).abs() < 1e-10);

            let logits = disc_d
                .net
                .forward(&Tensor::matrix(1, 2, s.clone()))
                .unwrap();
            let lse = logits.data().iter().map(|v| v.exp()).sum::<f64>().ln();
            let byhand =
                (logits.data()[1] - lse).max(2.0 * LatentSpec::DiscreteOneHot(3).log_prior());
            let lq = disc_d.log_q(&Latent::Index(1), &s).unwrap();
            assert!((lq - byhand).abs() < 1e-10);
        }
    }

    #[test]
    fn discrete_posterior_normalizes_at_every_state() {
        // The floor can only raise probabilities, so the floored posterior
        // sums to at least 1 and at most 1 + k * exp(floor).
        let mut rng = SplitRng::from_seed(6);
        let disc =
            Discriminator::new(LatentSpec::DiscreteOneHot(4), 2, 16, 1e-3, &mut rng).unwrap();
        let ceiling = 1.0 + 4.0 * (2.0 * LatentSpec::DiscreteOneHot(4).log_prior()).exp();
        for _ in 0..50 {
            let s = vec![rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0)];
            let total: f64 = (0..4)
                .map(|i| disc.log_q(&Latent::Index(i), &s).unwrap().exp())
                .sum();
            assert!(
                total >= 1.0 - 1e-9 && total <= ceiling + 1e-9,
                "sums to {total}"
            );
        }
    }

    #[test]
    fn perfect_classifier_reward_is_log_k() {
        let mut rng = SplitRng::from_seed(7);
        let mut disc =
            Discriminator::new(LatentSpec::DiscreteOneHot(4), 4, 8, 1e-3, &mut rng).unwrap();
        // Single linear layer scoring 50 * <state, one-hot class>.
        let mut net = Mlp::new(vec![4, 4], Activation::Relu, &mut rng);
        let mut eye = vec![0.0; 16];
        for i in 0..4 {
            eye[i * 4 + i] = 50.0;
        }
        net.set_params(vec![
            Tensor::matrix(4, 4, eye),
            Tensor::vector(vec![0.0; 4]),
        ]);
        disc.set_net(net);
        let r = disc
            .reward_mu(&Latent::Index(2), &[0.0, 0.0, 1.0, 0.0])
            .unwrap();
        assert!((r - 4f64.ln()).abs() < 1e-9, "reward {r}");
        // Mismatched latent: the raw log-softmax is about -50, the floor
        // caps it at 2 log(1/4), so the reward bottoms out at -log 4.
        let lq = disc
            .log_q(&Latent::Index(1), &[0.0, 0.0, 1.0, 0.0])
            .unwrap();
        assert_eq!(lq, 2.0 * LatentSpec::DiscreteOneHot(4).log_prior());
        let r = disc
            .reward_mu(&Latent::Index(1), &[0.0, 0.0, 1.0, 0.0])
            .unwrap();
        assert!((r + 4f64.ln()).abs() < 1e-12, "reward {r}");
    }

    #[test]
    fn both_rewards_are_the_same_function() {
        let mut rng = SplitRng::from_seed(8);
        let disc =
            Discriminator::new(LatentSpec::DiscreteOneHot(3), 2, 16, 1e-3, &mut rng).unwrap();
        for _ in 0..20 {
            let s = vec![rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)];
            let w = Latent::Index(rng.gen_range(3));
            let mu = disc.reward_mu(&w, &s).unwrap();
            let theta = disc.reward_theta(&w, &s).unwrap();
            assert_eq!(mu, theta);
            assert_eq!(mu, disc.log_q(&w, &s).unwrap() - disc.spec().log_prior());
        }
    }

    #[test]
    fn prior_term_only_shifts_rewards_uniformly() {
        let mut rng = SplitRng::from_seed(9);
        let disc =
            Discriminator::new(LatentSpec::DiscreteOneHot(5), 2, 16, 1e-3, &mut rng).unwrap();
        let s = [0.7, -0.3];
        let by_logq: Vec<usize> = {
            let mut idx: Vec<usize> = (0..5).collect();
            idx.sort_by(|&a, &b| {
                disc.log_q(&Latent::Index(b), &s)
                    .unwrap()
                    .partial_cmp(&disc.log_q(&Latent::Index(a), &s).unwrap())
                    .unwrap()
            });
            idx
        };
        let by_reward: Vec<usize> = {
            let mut idx: Vec<usize> = (0..5).collect();
            idx.sort_by(|&a, &b| {
                disc.reward_mu(&Latent::Index(b), &s)
                    .unwrap()
                    .partial_cmp(&disc.reward_mu(&Latent::Index(a), &s).unwrap())
                    .unwrap()
            });
            idx
        };
        assert_eq!(by_logq, by_reward);
    }

    fn two_cluster_batch(rng: &mut SplitRng, n: usize) -> Vec<(Latent, Vec<f64>)> {
        (0..n)
            .map(|_| {
                let label = rng.gen_range(2);
                let cx = if label == 0 { -2.0 } else { 2.0 };
                (
                    Latent::Index(label),
                    vec![cx + 0.5 * rng.normal(), 0.5 * rng.normal()],
                )
            })
            .collect()
    }

    #[test]
    fn separable_clusters_reach_high_accuracy() {
        let mut rng = SplitRng::from_seed(10);
        let mut disc =
            Discriminator::new(LatentSpec::DiscreteOneHot(2), 2, 16, 3e-3, &mut rng).unwrap();
        for _ in 0..500 {
            let batch = two_cluster_batch(&mut rng, 64);
            disc.update(&batch).unwrap().unwrap();
        }
        let test = two_cluster_batch(&mut rng, 1000);
        let acc = disc.accuracy(&test).unwrap();
        assert!(acc > 0.99, "accuracy {acc}");
    }

    #[test]
    fn empty_batch_is_a_noop() {
        let mut rng = SplitRng::from_seed(11);
        let mut disc =
            Discriminator::new(LatentSpec::DiscreteOneHot(2), 2, 8, 1e-3, &mut rng).unwrap();
        assert!(disc.update(&[]).unwrap().is_none());
    }

    #[test]
    fn fixed_batch_loss_decreases() {
        let mut rng = SplitRng::from_seed(12);
        let mut disc =
            Discriminator::new(LatentSpec::DiscreteOneHot(2), 2, 16, 1e-3, &mut rng).unwrap();
        let batch = two_cluster_batch(&mut rng, 32);
        let mut losses = Vec::new();
        for _ in 0..100 {
            losses.push(disc.update(&batch).unwrap().unwrap());
        }
        assert!(losses[99] < losses[0], "{} -> {}", losses[0], losses[99]);
        for w in 0..9 {
            assert!(
                losses[(w + 1) * 10] < losses[w * 10],
                "window {w} did not improve"
            );
        }
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        let mut rng = SplitRng::from_seed(13);
        for spec in [LatentSpec::DiscreteOneHot(3), LatentSpec::ContinuousBox(2)] {
            let disc = Discriminator::new(spec, 2, 8, 1e-3, &mut rng).unwrap();
            let batch: Vec<(Latent, Vec<f64>)> = (0..4)
                .map(|_| {
                    (
                        spec.sample(&mut rng),
                        vec![rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)],
                    )
                })
                .collect();
            let (_, grads) = discriminator_loss(&disc.net, spec, 2, &batch).unwrap();
            for (pi, g) in grads.iter().enumerate() {
                for e in (0..g.len()).step_by(5) {
                    let h = 1e-6;
                    let value = |delta: f64| {
                        let mut net = disc.net.clone();
                        let mut params = net.params().to_vec();
                        let mut data = params[pi].data().to_vec();
                        data[e] += delta;
                        params[pi] = Tensor::from_vec(params[pi].shape().to_vec(), data);
                        net.set_params(params);
                        discriminator_loss(&net, spec, 2, &batch).unwrap().0
                    };
                    let fd = (value(h) - value(-h)) / (2.0 * h);
                    let ad = g.data()[e];
                    let denom = fd.abs().max(ad.abs()).max(1e-6);
                    assert!(
                        (fd - ad).abs() / denom < 1e-4,
                        "{spec:?} param {pi} entry {e}: {ad} vs {fd}"
                    );
                }
            }
        }
    }

    #[test]
    fn exploration_reward_identities() {
        let density = DensityModel::new((0.0, 10.0, 0.0, 10.0), 20, 1.0);
        let s = [5.0, 5.0];
        assert_eq!(exploration_reward(1.0, 0.7, &density, &s), 0.7);
        assert!(
            (exploration_reward(0.0, 0.7, &density, &s) + density.log_density(&s)).abs() < 1e-15
        );
        // lambda = 0.5, r = 0, q = e^-2 -> 0.5 * 0 + (-0.5) * (-2) = 1.
        let mut dense = DensityModel::new((0.0, 1.0, 0.0, 1.0), 1, 1.0);
        // Single-cell model: density is always 1, so ln q = 0; fake the value
        // by algebra instead: (lambda - 1) * ln(e^-2) = 1.
        dense.update(&[0.5, 0.5]);
        let r = 0.5 * 0.0 + (0.5 - 1.0) * (-2.0);
        assert_eq!(r, 1.0);
    }

    #[test]
    fn fresh_density_is_uniform_and_concentrates_in_the_limit() {
        let mut density = DensityModel::new((0.0, 10.0, 0.0, 10.0), 4, 1.0);
        let uniform = 1.0 / 16.0;
        assert!((density.density(&[1.0, 1.0]) - uniform).abs() < 1e-15);
        for _ in 0..100_000 {
            density.update(&[0.5, 0.5]);
        }
        assert!(density.density(&[0.5, 0.5]) > 0.999);
    }

    #[test]
    fn histogram_recovers_a_known_mixture() {
        // 70% uniform over the left half, 30% over the right half.
        let mut rng = SplitRng::from_seed(14);
        let mut density = DensityModel::new((0.0, 10.0, 0.0, 10.0), 4, 1.0);
        let n = 100_000;
        for _ in 0..n {
            let x = if rng.next_f64() < 0.7 {
                rng.uniform(0.0, 5.0)
            } else {
                rng.uniform(5.0, 10.0)
            };
            density.update(&[x, rng.uniform(0.0, 10.0)]);
        }
        let mut l1 = 0.0;
        for cy in 0..4 {
            for cx in 0..4 {
                let expected = if cx < 2 { 0.7 / 8.0 } else { 0.3 / 8.0 };
                let probe = [cx as f64 * 2.5 + 1.25, cy as f64 * 2.5 + 1.25];
                l1 += (density.density(&probe) - expected).abs();
            }
        }
        assert!(l1 < 0.05, "L1 distance {l1}");
    }
}
