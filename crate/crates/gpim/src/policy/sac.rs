//! Soft actor-critic with an extra conditioning vector.

use std::path::Path;

use crate::checkpoint::{self, Blob};
use crate::envs::{Action, Transition};
use crate::error::{Error, Result};
use crate::numerics::dist::{
    categorical_sample, log_softmax_vec, squashed_gaussian_from_noise, squashed_gaussian_on_tape,
};
use crate::numerics::{Activation, AdamState, Mlp, Tape, Tensor};
use crate::policy::replay::ReplayBuffer;
use crate::rng::SplitRng;

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum ActionMode {
    /// Squashed-Gaussian actor over `dim` components in (-1, 1).
    Continuous { dim: usize },
    /// Categorical actor over `n` actions; expectations are exact.
    Discrete { n: usize },
}

impl ActionMode {
    fn actor_out(self) -> usize {
        match self {
            ActionMode::Continuous { dim } => 2 * dim, // mean and log-std heads
            ActionMode::Discrete { n } => n,
        }
    }

    /// Width of the action field stored in replay (discrete stores the index).
    fn stored_dim(self) -> usize {
        match self {
            ActionMode::Continuous { dim } => dim,
            ActionMode::Discrete { .. } => 1,
        }
    }
}

#[derive(Copy, Clone, Debug)]
pub struct SacConfig {
    pub batch_size: usize,
    pub discount: f64,
    pub buffer_capacity: usize,
    /// Target-network smoothing coefficient.
    pub tau: f64,
    /// Fixed entropy temperature.
    pub temperature: f64,
    pub lr: f64,
    pub hidden: usize,
}

impl Default for SacConfig {
    fn default() -> SacConfig {
        SacConfig {
            batch_size: 256,
            discount: 0.99,
            buffer_capacity: 10_000,
            tau: 0.05,
            temperature: 0.2,
            lr: 0.001,
            hidden: 128,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::ConfigGeneral(format!(
                "tau {} outside (0, 1]",
                self.tau
            )));
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(Error::ConfigGeneral(format!(
                "discount {} outside (0, 1)",
                self.discount
            )));
        }
        if self.buffer_capacity < self.batch_size {
            return Err(Error::ConfigGeneral(format!(
                "buffer capacity {} below batch size {}",
                self.buffer_capacity, self.batch_size
            )));
        }
        Ok(())
    }
}

#[derive(Copy, Clone, Debug)]
pub struct SacLosses {
    pub critic: f64,
    pub actor: f64,
}

/// target <- (1 - tau) * target + tau * online.
pub fn soft_update(target: &mut Mlp, online: &Mlp, tau: f64) {
    let mixed: Vec<Tensor> = target
        .params()
        .iter()
        .zip(online.params().iter())
        .map(|(t, o)| t.scale(1.0 - tau).add(&o.scale(tau)))
        .collect();
    target.set_params(mixed);
}

pub struct SacAgent {
    mode: ActionMode,
    state_dim: usize,
    cond_dim: usize,
    cfg: SacConfig,
    actor: Mlp,
    critic1: Mlp,
    critic2: Mlp,
    target1: Mlp,
    target2: Mlp,
    actor_opt: AdamState,
    critic_opt: AdamState,
    replay: ReplayBuffer,
}

struct Batch {
    /// [m, state_dim + cond_dim]
    sc: Tensor,
    s2c: Tensor,
    /// [m, dim] (continuous only)
    actions: Tensor,
    /// action indices (discrete only)
    idx: Vec<usize>,
    reward: Vec<f64>,
    done: Vec<f64>,
}

fn split_cols(x: &Tensor, d: usize) -> (Tensor, Tensor) {
    let (m, n) = (x.rows(), x.cols());
    let mut a = Vec::with_capacity(m * d);
    let mut b = Vec::with_capacity(m * (n - d));
    for i in 0..m {
        a.extend_from_slice(&x.row(i)[..d]);
        b.extend_from_slice(&x.row(i)[d..]);
    }
    (Tensor::matrix(m, d, a), Tensor::matrix(m, n - d, b))
}

impl SacAgent {
    pub fn new(
        mode: ActionMode,
        state_dim: usize,
        cond_dim: usize,
        cfg: SacConfig,
        rng: &mut SplitRng,
    ) -> Result<SacAgent> {
        cfg.validate()?;
        let h = cfg.hidden;
        let input = state_dim + cond_dim;
        let actor = Mlp::new(vec![input, h, h, mode.actor_out()], Activation::Relu, rng);
        let critic_widths = match mode {
            ActionMode::Continuous { dim } => vec![input + dim, h, h, 1],
            ActionMode::Discrete { n } => vec![input, h, h, n],
        };
        let critic1 = Mlp::new(critic_widths.clone(), Activation::Relu, rng);
        let critic2 = Mlp::new(critic_widths, Activation::Relu, rng);
        let (target1, target2) = (critic1.clone(), critic2.clone());
        let actor_opt = AdamState::for_params(actor.params(), cfg.lr);
        let all: Vec<Tensor> = critic1
            .params()
            .iter()
            .chain(critic2.params())
            .cloned()
            .collect();
        let critic_opt = AdamState::for_params(&all, cfg.lr);
        Ok(SacAgent {
            mode,
            state_dim,
            cond_dim,
            cfg,
            actor,
            critic1,
            critic2,
            target1,
            target2,
            actor_opt,
            critic_opt,
            replay: ReplayBuffer::new(cfg.buffer_capacity),
        })
    }

    pub fn mode(&self) -> ActionMode {
        self.mode
    }

    pub fn config(&self) -> &SacConfig {
        &self.cfg
    }

    pub fn actor(&self) -> &Mlp {
        &self.actor
    }

    pub fn critics(&self) -> (&Mlp, &Mlp) {
        (&self.critic1, &self.critic2)
    }

    pub fn targets(&self) -> (&Mlp, &Mlp) {
        (&self.target1, &self.target2)
    }

    pub fn replay(&self) -> &ReplayBuffer {
        &self.replay
    }

    fn input_row(&self, state: &[f64], cond: &[f64]) -> Result<Tensor> {
        if state.len() != self.state_dim {
            return Err(Error::shape(&[self.state_dim], &[state.len()], "state"));
        }
        if cond.len() != self.cond_dim {
            return Err(Error::shape(&[self.cond_dim], &[cond.len()], "condition"));
        }
        let mut row = state.to_vec();
        row.extend_from_slice(cond);
        Ok(Tensor::matrix(1, row.len(), row))
    }

    /// Mean / log-std (continuous) or logits (discrete) at one input.
    pub fn actor_head(&self, state: &[f64], cond: &[f64]) -> Result<Tensor> {
        self.actor.forward(&self.input_row(state, cond)?)
    }

    pub fn act(
        &self,
        state: &[f64],
        cond: &[f64],
        deterministic: bool,
        rng: &mut SplitRng,
    ) -> Result<Action> {
        let out = self.actor_head(state, cond)?;
        match self.mode {
            ActionMode::Continuous { dim } => {
                let (mean, log_std) = split_cols(&out, dim);
                if deterministic {
                    Ok(Action::Continuous(
                        mean.data().iter().map(|v| v.tanh()).collect(),
                    ))
                } else {
                    let (a, _) =
                        crate::numerics::dist::squashed_gaussian_sample(&mean, &log_std, rng)?;
                    Ok(Action::Continuous(a.data().to_vec()))
                }
            }
            ActionMode::Discrete { .. } => {
                let logits = out.data();
                if deterministic {
                    // Ties resolve to the lowest index.
                    let best =
                        logits
                            .iter()
                            .enumerate()
                            .fold(
                                (0, f64::NEG_INFINITY),
                                |acc, (i, &v)| {
                                    if v > acc.1 {
                                        (i, v)
                                    } else {
                                        acc
                                    }
                                },
                            );
                    Ok(Action::Discrete(best.0))
                } else {
                    Ok(Action::Discrete(categorical_sample(logits, rng)?))
                }
            }
        }
    }

    /// Minimum of the two online critic values at (state, condition, action).
    pub fn q_min(&self, state: &[f64], cond: &[f64], action: &Action) -> Result<f64> {
        let sc = self.input_row(state, cond)?;
        match (self.mode, action) {
            (ActionMode::Continuous { dim }, Action::Continuous(a)) => {
                if a.len() != dim {
                    return Err(Error::shape(&[dim], &[a.len()], "action"));
                }
                let input = sc.concat_cols(&Tensor::matrix(1, dim, a.clone()));
                let q1 = self.critic1.forward(&input)?.item();
                let q2 = self.critic2.forward(&input)?.item();
                Ok(q1.min(q2))
            }
            (ActionMode::Discrete { n }, Action::Discrete(i)) => {
                if *i >= n {
                    return Err(Error::contract(format!(
                        "action index {i} out of range 0..{n}"
                    )));
                }
                let q1 = self.critic1.forward(&sc)?.data()[*i];
                let q2 = self.critic2.forward(&sc)?.data()[*i];
                Ok(q1.min(q2))
            }
            _ => Err(Error::contract(
                "action variant does not match the agent's mode",
            )),
        }
    }

    pub fn store(&mut self, t: Transition) -> Result<()> {
        if t.state.len() != self.state_dim || t.next_state.len() != self.state_dim {
            return Err(Error::shape(
                &[self.state_dim],
                &[t.state.len()],
                "stored state",
            ));
        }
        if t.condition.len() != self.cond_dim {
            return Err(Error::shape(
                &[self.cond_dim],
                &[t.condition.len()],
                "stored condition",
            ));
        }
        if t.action.len() != self.mode.stored_dim() {
            return Err(Error::shape(
                &[self.mode.stored_dim()],
                &[t.action.len()],
                "stored action",
            ));
        }
        if !t.reward.is_finite() {
            return Err(Error::contract("non-finite reward"));
        }
        self.replay.push(t);
        Ok(())
    }

    /// Encode an environment action as the replay representation.
    pub fn encode_action(&self, action: &Action) -> Result<Vec<f64>> {
        match (self.mode, action) {
            (ActionMode::Continuous { dim }, Action::Continuous(a)) if a.len() == dim => {
                Ok(a.clone())
            }
            (ActionMode::Discrete { n }, Action::Discrete(i)) if *i < n => Ok(vec![*i as f64]),
            _ => Err(Error::contract(
                "action variant does not match the agent's mode",
            )),
        }
    }

    fn assemble(&self, rng: &mut SplitRng) -> Result<Batch> {
        let m = self.cfg.batch_size;
        let sampled = self.replay.sample(m, rng)?;
        let width = self.state_dim + self.cond_dim;
        let mut sc = Vec::with_capacity(m * width);
        let mut s2c = Vec::with_capacity(m * width);
        let mut actions = Vec::new();
        let mut idx = Vec::new();
        let mut reward = Vec::with_capacity(m);
        let mut done = Vec::with_capacity(m);
        for t in sampled {
            sc.extend_from_slice(&t.state);
            sc.extend_from_slice(&t.condition);
            s2c.extend_from_slice(&t.next_state);
            s2c.extend_from_slice(&t.condition);
            match self.mode {
                ActionMode::Continuous { .. } => actions.extend_from_slice(&t.action),
                ActionMode::Discrete { .. } => idx.push(t.action[0] as usize),
            }
            reward.push(t.reward);
            done.push(if t.done { 1.0 } else { 0.0 });
        }
        let ad = self.mode.stored_dim();
        Ok(Batch {
            sc: Tensor::matrix(m, width, sc),
            s2c: Tensor::matrix(m, width, s2c),
            actions: if actions.is_empty() {
                Tensor::zeros(vec![m, ad])
            } else {
                Tensor::matrix(m, ad, actions)
            },
            idx,
            reward,
            done,
        })
    }

    /// Bellman target y = r + discount * (1 - done) * (min target-Q - alpha * log pi).
    fn targets_for(&self, batch: &Batch, rng: &mut SplitRng) -> Result<Tensor> {
        let m = batch.reward.len();
        let alpha = self.cfg.temperature;
        let mut y = Vec::with_capacity(m);
        match self.mode {
            ActionMode::Continuous { dim } => {
                let out2 = self.actor.forward(&batch.s2c)?;
                let (mean2, ls2) = split_cols(&out2, dim);
                let noise = Tensor::matrix(m, dim, (0..m * dim).map(|_| rng.normal()).collect());
                let (a2, lp2) = squashed_gaussian_from_noise(&mean2, &ls2, &noise);
                let in2 = batch.s2c.concat_cols(&a2);
                let q1 = self.target1.forward(&in2)?;
                let q2 = self.target2.forward(&in2)?;
                for i in 0..m {
                    let soft = q1.data()[i].min(q2.data()[i]) - alpha * lp2.data()[i];
                    y.push(batch.reward[i] + self.cfg.discount * (1.0 - batch.done[i]) * soft);
                }
            }
            ActionMode::Discrete { .. } => {
                let logits2 = self.actor.forward(&batch.s2c)?;
                let q1 = self.target1.forward(&batch.s2c)?;
                let q2 = self.target2.forward(&batch.s2c)?;
                for i in 0..m {
                    let lp = log_softmax_vec(logits2.row(i));
                    // Exact soft state value over the small action set.
                    let v: f64 = lp
                        .iter()
                        .zip(q1.row(i).iter().zip(q2.row(i).iter()))
                        .map(|(&l, (&a, &b))| l.exp() * (a.min(b) - alpha * l))
                        .sum();
                    y.push(batch.reward[i] + self.cfg.discount * (1.0 - batch.done[i]) * v);
                }
            }
        }
        Ok(Tensor::matrix(m, 1, y))
    }

    /// One SAC step: critic regression to the Bellman target, actor ascent on
    /// the entropy-regularized value, then target smoothing. Returns `None`
    /// while the buffer is smaller than a batch.
    pub fn update(&mut self, rng: &mut SplitRng) -> Result<Option<SacLosses>> {
        if self.replay.len() < self.cfg.batch_size {
            return Ok(None);
        }
        let batch = self.assemble(rng)?;
        let y = self.targets_for(&batch, rng)?;

        let (critic_input, picks) = match self.mode {
            ActionMode::Continuous { .. } => (batch.sc.concat_cols(&batch.actions), None),
            ActionMode::Discrete { .. } => (batch.sc.clone(), Some(batch.idx.as_slice())),
        };
        let (critic_loss, g1, g2) =
            critic_losses(&self.critic1, &self.critic2, &critic_input, picks, &y)?;
        let mut params: Vec<Tensor> = self
            .critic1
            .params()
            .iter()
            .chain(self.critic2.params())
            .cloned()
            .collect();
        let grads: Vec<Tensor> = g1.into_iter().chain(g2).collect();
        self.critic_opt.step(&mut params, &grads)?;
        let n1 = self.critic1.params().len();
        self.critic2.set_params(params.split_off(n1));
        self.critic1.set_params(params);

        let alpha = self.cfg.temperature;
        let (actor_loss, ga) = match self.mode {
            ActionMode::Continuous { dim } => {
                let m = batch.reward.len();
                let noise = Tensor::matrix(m, dim, (0..m * dim).map(|_| rng.normal()).collect());
                actor_loss_continuous(
                    &self.actor,
                    &self.critic1,
                    &self.critic2,
                    &batch.sc,
                    &noise,
                    alpha,
                    dim,
                )?
            }
            ActionMode::Discrete { .. } => {
                let q1 = self.critic1.forward(&batch.sc)?;
                let q2 = self.critic2.forward(&batch.sc)?;
                let qmin = q1.zip(&q2, f64::min);
                actor_loss_discrete(&self.actor, &qmin, &batch.sc, alpha)?
            }
        };
        let mut actor_params = self.actor.params().to_vec();
        self.actor_opt.step(&mut actor_params, &ga)?;
        self.actor.set_params(actor_params);

        soft_update(&mut self.target1, &self.critic1, self.cfg.tau);
        soft_update(&mut self.target2, &self.critic2, self.cfg.tau);
        Ok(Some(SacLosses {
            critic: critic_loss,
            actor: actor_loss,
        }))
    }

    pub fn to_blobs(&self, prefix: &str) -> Vec<Blob> {
        let (mode_tag, width) = match self.mode {
            ActionMode::Continuous { dim } => (0.0, dim as f64),
            ActionMode::Discrete { n } => (1.0, n as f64),
        };
        let mut blobs = vec![(
            format!("{prefix}meta"),
            vec![
                mode_tag,
                width,
                self.state_dim as f64,
                self.cond_dim as f64,
                self.cfg.hidden as f64,
            ],
        )];
        let nets: [(&str, &Mlp); 5] = [
            ("actor", &self.actor),
            ("critic1", &self.critic1),
            ("critic2", &self.critic2),
            ("target1", &self.target1),
            ("target2", &self.target2),
        ];
        for (name, net) in nets {
            for (i, p) in net.params().iter().enumerate() {
                blobs.push((format!("{prefix}{name}.{i}"), p.data().to_vec()));
            }
        }
        for (name, data) in self.actor_opt.flatten() {
            blobs.push((format!("{prefix}actor_opt.{name}"), data));
        }
        for (name, data) in self.critic_opt.flatten() {
            blobs.push((format!("{prefix}critic_opt.{name}"), data));
        }
        blobs.push((format!("{prefix}replay"), self.replay.flatten()));
        blobs
    }

    pub fn restore_blobs(&mut self, prefix: &str, blobs: &[Blob]) -> Result<()> {
        let meta = checkpoint::get(blobs, &format!("{prefix}meta"))?;
        let (mode_tag, width) = match self.mode {
            ActionMode::Continuous { dim } => (0.0, dim as f64),
            ActionMode::Discrete { n } => (1.0, n as f64),
        };
        let expected = [
            mode_tag,
            width,
            self.state_dim as f64,
            self.cond_dim as f64,
            self.cfg.hidden as f64,
        ];
        if meta != expected {
            return Err(Error::Checkpoint(
                "agent layout differs from the checkpointed one".into(),
            ));
        }
        let nets: [(&str, &mut Mlp); 5] = [
            ("actor", &mut self.actor),
            ("critic1", &mut self.critic1),
            ("critic2", &mut self.critic2),
            ("target1", &mut self.target1),
            ("target2", &mut self.target2),
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
            (&mut self.actor_opt, "actor_opt."),
            (&mut self.critic_opt, "critic_opt."),
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
        self.replay
            .restore(checkpoint::get(blobs, &format!("{prefix}replay"))?)?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::write_blobs(path, &self.to_blobs(""))
    }

    pub fn load(&mut self, path: &Path) -> Result<()> {
        self.restore_blobs("", &checkpoint::read_blobs(path)?)
    }
}

/// Summed MSE of both critics against a fixed target, with gradients.
pub(crate) fn critic_losses(
    c1: &Mlp,
    c2: &Mlp,
    input: &Tensor,
    picks: Option<&[usize]>,
    target: &Tensor,
) -> Result<(f64, Vec<Tensor>, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let x = tape.constant(input.clone());
    let h1 = c1.watch(&mut tape);
    let h2 = c2.watch(&mut tape);
    let mut q1 = h1.forward(&mut tape, x);
    let mut q2 = h2.forward(&mut tape, x);
    if let Some(idx) = picks {
        q1 = tape.pick_col(q1, idx);
        q2 = tape.pick_col(q2, idx);
    }
    let l1 = tape.mse(q1, target);
    let l2 = tape.mse(q2, target);
    let loss = tape.add(l1, l2);
    let value = tape.value(loss).item();
    let grads = tape.backward(loss)?;
    Ok((value, h1.grads(c1, &grads), h2.grads(c2, &grads)))
}

/// mean(alpha * log pi - min Q) under the reparameterized actor, critics
/// frozen. Returns the loss and the actor gradients.
pub(crate) fn actor_loss_continuous(
    actor: &Mlp,
    c1: &Mlp,
    c2: &Mlp,
    input: &Tensor,
    noise: &Tensor,
    alpha: f64,
    action_dim: usize,
) -> Result<(f64, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let x = tape.constant(input.clone());
    let ah = actor.watch(&mut tape);
    let out = ah.forward(&mut tape, x);
    let mean = tape.slice_cols(out, 0, action_dim);
    let log_std = tape.slice_cols(out, action_dim, 2 * action_dim);
    let (action, logp) = squashed_gaussian_on_tape(&mut tape, mean, log_std, noise);
    let qin = tape.concat_cols(x, action);
    let q1 = c1.frozen(&mut tape).forward(&mut tape, qin);
    let q2 = c2.frozen(&mut tape).forward(&mut tape, qin);
    let qmin = tape.min2(q1, q2);
    let ent = tape.scale(logp, alpha);
    let gap = tape.sub(ent, qmin);
    let loss = tape.mean_all(gap);
    let value = tape.value(loss).item();
    let grads = tape.backward(loss)?;
    Ok((value, ah.grads(actor, &grads)))
}

/// Exact-expectation actor loss over a small discrete action set:
/// mean over states of sum_a pi(a) * (alpha * log pi(a) - Q_min(a)).
pub(crate) fn actor_loss_discrete(
    actor: &Mlp,
    qmin: &Tensor,
    input: &Tensor,
    alpha: f64,
) -> Result<(f64, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let x = tape.constant(input.clone());
    let ah = actor.watch(&mut tape);
    let logits = ah.forward(&mut tape, x);
    let logp = tape.log_softmax(logits);
    let probs = tape.exp(logp);
    let scaled = tape.scale(logp, alpha);
    let q = tape.constant(qmin.clone());
    let gap = tape.sub(scaled, q);
    let weighted = tape.mul(probs, gap);
    let per_state = tape.sum_rows(weighted);
    let loss = tape.mean_all(per_state);
    let value = tape.value(loss).item();
    let grads = tape.backward(loss)?;
    Ok((value, ah.grads(actor, &grads)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::dist::LN_2PI;

    fn continuous_agent(seed: u64, cfg: SacConfig) -> SacAgent {
        let mut rng = SplitRng::from_seed(seed);
        SacAgent::new(ActionMode::Continuous { dim: 2 }, 2, 1, cfg, &mut rng).unwrap()
    }

    fn small_cfg() -> SacConfig {
        SacConfig {
            batch_size: 16,
            buffer_capacity: 256,
            hidden: 24,
            ..SacConfig::default()
        }
    }

    fn transition(state: [f64; 2], action: [f64; 2], reward: f64, done: bool) -> Transition {
        Transition {
            state: state.to_vec(),
            condition: vec![0.0],
            action: action.to_vec(),
            reward,
            next_state: state.to_vec(),
            done,
        }
    }

    #[test]
    fn deterministic_act_is_repeatable_and_bounded() {
        let agent = continuous_agent(1, small_cfg());
        let mut rng = SplitRng::from_seed(2);
        let a = agent.act(&[0.3, -0.7], &[1.0], true, &mut rng).unwrap();
        let b = agent.act(&[0.3, -0.7], &[1.0], true, &mut rng).unwrap();
        assert_eq!(a, b);
        for _ in 0..100 {
            match agent.act(&[0.3, -0.7], &[1.0], false, &mut rng).unwrap() {
                Action::Continuous(v) => assert!(v.iter().all(|x| x.abs() < 1.0)),
                _ => unreachable!(),
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let agent = continuous_agent(3, small_cfg());
        let mut rng = SplitRng::from_seed(4);
        assert!(agent.act(&[0.0], &[0.0], true, &mut rng).is_err());
        assert!(agent.act(&[0.0, 0.0], &[], true, &mut rng).is_err());
    }

    /// E[tanh(mu + sigma * eps)] by trapezoid quadrature over the Gaussian.
    fn expected_tanh_moment(mu: f64, sigma: f64, power: i32) -> f64 {
        let n = 20_000;
        let (lo, hi) = (mu - 10.0 * sigma, mu + 10.0 * sigma);
        let h = (hi - lo) / n as f64;
        let mut acc = 0.0;
        for i in 0..=n {
            let u = lo + i as f64 * h;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            let dens = (-0.5 * ((u - mu) / sigma).powi(2)).exp() / (sigma * (0.5 * LN_2PI).exp());
            acc += w * dens * u.tanh().powi(power) * h;
        }
        acc
    }

    #[test]
    fn sampled_actions_match_the_analytic_head_distribution() {
        let agent = continuous_agent(5, small_cfg());
        let (state, cond) = ([0.4, -0.2], [1.0]);
        let head = agent.actor_head(&state, &cond).unwrap();
        let mut rng = SplitRng::from_seed(6);
        let n = 40_000;
        let mut sums = [[0.0; 2]; 2]; // per-dim sum and sum of squares
        for _ in 0..n {
            match agent.act(&state, &cond, false, &mut rng).unwrap() {
                Action::Continuous(a) => {
                    for d in 0..2 {
                        sums[d][0] += a[d];
                        sums[d][1] += a[d] * a[d];
                    }
                }
                _ => unreachable!(),
            }
        }
        for d in 0..2 {
            let mu = head.data()[d];
            let sigma = head.data()[2 + d]
                .clamp(
                    crate::numerics::dist::LOG_STD_RANGE.0,
                    crate::numerics::dist::LOG_STD_RANGE.1,
                )
                .exp();
            let m1 = expected_tanh_moment(mu, sigma, 1);
            let m2 = expected_tanh_moment(mu, sigma, 2);
            let emp1 = sums[d][0] / n as f64;
            let emp2 = sums[d][1] / n as f64;
            let se1 = ((m2 - m1 * m1).max(1e-12) / n as f64).sqrt();
            assert!(
                (emp1 - m1).abs() < 4.0 * se1,
                "dim {d}: mean {emp1} vs {m1}"
            );
            assert!(
                (emp2 - m2).abs() < 0.01,
                "dim {d}: second moment {emp2} vs {m2}"
            );
        }
    }

    #[test]
    fn discrete_sampling_frequencies_match_softmax() {
        let mut rng = SplitRng::from_seed(7);
        let agent =
            SacAgent::new(ActionMode::Discrete { n: 4 }, 2, 1, small_cfg(), &mut rng).unwrap();
        let (state, cond) = ([0.1, 0.9], [0.5]);
        let logits = agent.actor_head(&state, &cond).unwrap();
        let probs = crate::numerics::dist::softmax_vec(logits.data());
        let n = 40_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            match agent.act(&state, &cond, false, &mut rng).unwrap() {
                Action::Discrete(i) => counts[i] += 1,
                _ => unreachable!(),
            }
        }
        for i in 0..4 {
            let freq = counts[i] as f64 / n as f64;
            let sigma = (probs[i] * (1.0 - probs[i]) / n as f64).sqrt();
            assert!(
                (freq - probs[i]).abs() < 4.0 * sigma,
                "action {i}: {freq} vs {}",
                probs[i]
            );
        }
    }

    #[test]
    fn terminal_zero_reward_batch_gives_mean_square_critic_loss() {
        let mut agent = continuous_agent(8, small_cfg());
        let t = transition([0.2, 0.2], [0.1, -0.1], 0.0, true);
        for _ in 0..16 {
            agent.store(t.clone()).unwrap();
        }
        // All transitions identical and terminal: target is exactly 0, so the
        // critic loss equals mean q1^2 + mean q2^2 at the pre-update weights.
        let mut input = t.state.clone();
        input.extend_from_slice(&t.condition);
        input.extend_from_slice(&t.action);
        let x = Tensor::matrix(1, 5, input);
        let q1 = agent.critic1.forward(&x).unwrap().item();
        let q2 = agent.critic2.forward(&x).unwrap().item();
        let mut rng = SplitRng::from_seed(9);
        let losses = agent.update(&mut rng).unwrap().unwrap();
        assert!(
            (losses.critic - (q1 * q1 + q2 * q2)).abs() < 1e-10,
            "loss {} vs {}",
            losses.critic,
            q1 * q1 + q2 * q2
        );
    }

    #[test]
    fn update_is_a_noop_below_one_batch() {
        let mut agent = continuous_agent(10, small_cfg());
        let mut rng = SplitRng::from_seed(11);
        assert!(agent.update(&mut rng).unwrap().is_none());
    }

    #[test]
    fn bandit_q_converges_to_unit_reward() {
        let cfg = SacConfig {
            batch_size: 64,
            buffer_capacity: 256,
            hidden: 32,
            lr: 0.003,
            ..SacConfig::default()
        };
        let mut rng = SplitRng::from_seed(12);
        let mut agent =
            SacAgent::new(ActionMode::Continuous { dim: 1 }, 1, 1, cfg, &mut rng).unwrap();
        for _ in 0..256 {
            let a = rng.uniform(-0.999, 0.999);
            agent
                .store(Transition {
                    state: vec![0.0],
                    condition: vec![0.0],
                    action: vec![a],
                    reward: 1.0,
                    next_state: vec![0.0],
                    done: true,
                })
                .unwrap();
        }
        for _ in 0..2000 {
            agent.update(&mut rng).unwrap();
        }
        let a = agent.act(&[0.0], &[0.0], true, &mut rng).unwrap();
        let q = agent.q_min(&[0.0], &[0.0], &a).unwrap();
        assert!((q - 1.0).abs() < 0.05, "Q at the policy action is {q}");
    }

    #[test]
    fn zero_temperature_absorbing_state_matches_plain_q_fixed_point() {
        // r = 1 every step in an absorbing state with discount 0.5 and no
        // entropy term: Q* = 1 / (1 - 0.5) = 2.
        let cfg = SacConfig {
            batch_size: 64,
            buffer_capacity: 256,
            hidden: 32,
            lr: 0.003,
            discount: 0.5,
            temperature: 0.0,
            ..SacConfig::default()
        };
        let mut rng = SplitRng::from_seed(13);
        let mut agent =
            SacAgent::new(ActionMode::Continuous { dim: 1 }, 1, 1, cfg, &mut rng).unwrap();
        for _ in 0..256 {
            let a = rng.uniform(-0.999, 0.999);
            agent
                .store(Transition {
                    state: vec![0.0],
                    condition: vec![0.0],
                    action: vec![a],
                    reward: 1.0,
                    next_state: vec![0.0],
                    done: false,
                })
                .unwrap();
        }
        for _ in 0..4000 {
            agent.update(&mut rng).unwrap();
        }
        let a = agent.act(&[0.0], &[0.0], true, &mut rng).unwrap();
        let q = agent.q_min(&[0.0], &[0.0], &a).unwrap();
        assert!((q - 2.0).abs() < 0.1, "Q at the policy action is {q}");
    }

    fn perturbed(net: &Mlp, pi: usize, e: usize, h: f64) -> Mlp {
        let mut out = net.clone();
        let mut params = out.params().to_vec();
        let mut data = params[pi].data().to_vec();
        data[e] += h;
        params[pi] = Tensor::from_vec(params[pi].shape().to_vec(), data);
        out.set_params(params);
        out
    }

    #[test]
    fn losses_match_finite_differences_on_a_frozen_batch() {
        let agent = continuous_agent(14, small_cfg());
        let mut rng = SplitRng::from_seed(15);
        // Frozen 4-transition batch with pinned exploration noise.
        let m = 4;
        let sc = Tensor::matrix(m, 3, (0..12).map(|_| rng.uniform(-1.0, 1.0)).collect());
        let actions = Tensor::matrix(m, 2, (0..8).map(|_| rng.uniform(-0.9, 0.9)).collect());
        let y = Tensor::matrix(m, 1, (0..4).map(|_| rng.uniform(-1.0, 1.0)).collect());
        let noise = Tensor::matrix(m, 2, (0..8).map(|_| rng.normal()).collect());
        let input = sc.concat_cols(&actions);

        let (_, g1, _) = critic_losses(&agent.critic1, &agent.critic2, &input, None, &y).unwrap();
        for (pi, g) in g1.iter().enumerate() {
            for e in (0..g.len()).step_by(7) {
                let h = 1e-6;
                let lp = critic_losses(
                    &perturbed(&agent.critic1, pi, e, h),
                    &agent.critic2,
                    &input,
                    None,
                    &y,
                )
                .unwrap()
                .0;
                let lm = critic_losses(
                    &perturbed(&agent.critic1, pi, e, -h),
                    &agent.critic2,
                    &input,
                    None,
                    &y,
                )
                .unwrap()
                .0;
                let fd = (lp - lm) / (2.0 * h);
                let ad = g.data()[e];
                let denom = fd.abs().max(ad.abs()).max(1e-6);
                assert!(
                    (fd - ad).abs() / denom < 1e-4,
                    "critic param {pi} entry {e}: {ad} vs {fd}"
                );
            }
        }

        let (_, ga) = actor_loss_continuous(
            &agent.actor,
            &agent.critic1,
            &agent.critic2,
            &sc,
            &noise,
            0.2,
            2,
        )
        .unwrap();
        for (pi, g) in ga.iter().enumerate() {
            for e in (0..g.len()).step_by(11) {
                let h = 1e-6;
                let value = |net: &Mlp| {
                    actor_loss_continuous(net, &agent.critic1, &agent.critic2, &sc, &noise, 0.2, 2)
                        .unwrap()
                        .0
                };
                let fd = (value(&perturbed(&agent.actor, pi, e, h))
                    - value(&perturbed(&agent.actor, pi, e, -h)))
                    / (2.0 * h);
                let ad = g.data()[e];
                let denom = fd.abs().max(ad.abs()).max(1e-6);
                assert!(
                    (fd - ad).abs() / denom < 1e-3,
                    "actor param {pi} entry {e}: {ad} vs {fd}"
                );
            }
        }
    }

    #[test]
    fn discrete_actor_loss_matches_finite_differences() {
        let mut rng = SplitRng::from_seed(16);
        let agent =
            SacAgent::new(ActionMode::Discrete { n: 3 }, 2, 1, small_cfg(), &mut rng).unwrap();
        let m = 4;
        let sc = Tensor::matrix(m, 3, (0..12).map(|_| rng.uniform(-1.0, 1.0)).collect());
        let qmin = Tensor::matrix(m, 3, (0..12).map(|_| rng.uniform(-1.0, 1.0)).collect());
        let (_, ga) = actor_loss_discrete(&agent.actor, &qmin, &sc, 0.2).unwrap();
        for (pi, g) in ga.iter().enumerate() {
            for e in (0..g.len()).step_by(9) {
                let h = 1e-6;
                let value = |net: &Mlp| actor_loss_discrete(net, &qmin, &sc, 0.2).unwrap().0;
                let fd = (value(&perturbed(&agent.actor, pi, e, h))
                    - value(&perturbed(&agent.actor, pi, e, -h)))
                    / (2.0 * h);
                let ad = g.data()[e];
                let denom = fd.abs().max(ad.abs()).max(1e-6);
                assert!(
                    (fd - ad).abs() / denom < 1e-4,
                    "param {pi} entry {e}: {ad} vs {fd}"
                );
            }
        }
    }

    #[test]
    fn soft_update_limits() {
        let mut rng = SplitRng::from_seed(17);
        let online = Mlp::new(vec![2, 3, 1], Activation::Tanh, &mut rng);
        let mut frozen = Mlp::new(vec![2, 3, 1], Activation::Tanh, &mut rng);
        let before = frozen.params().to_vec();
        soft_update(&mut frozen, &online, 0.0);
        for (a, b) in frozen.params().iter().zip(before.iter()) {
            assert_eq!(a.data(), b.data());
        }
        soft_update(&mut frozen, &online, 1.0);
        for (a, b) in frozen.params().iter().zip(online.params().iter()) {
            assert_eq!(a.data(), b.data());
        }
    }

    #[test]
    fn repeated_soft_updates_converge_geometrically() {
        let mut rng = SplitRng::from_seed(18);
        let online = Mlp::new(vec![2, 3, 1], Activation::Tanh, &mut rng);
        let mut target = Mlp::new(vec![2, 3, 1], Activation::Tanh, &mut rng);
        let tau = 0.05;
        let gap = |t: &Mlp| {
            t.params()
                .iter()
                .zip(online.params().iter())
                .map(|(a, b)| a.sub(b).map(f64::abs).sum())
                .sum::<f64>()
        };
        let mut prev = gap(&target);
        for _ in 0..10 {
            soft_update(&mut target, &online, tau);
            let now = gap(&target);
            assert!(
                (now / prev - (1.0 - tau)).abs() < 1e-9,
                "ratio {}",
                now / prev
            );
            prev = now;
        }
    }

    #[test]
    fn targets_follow_the_ema_recurrence() {
        let mut agent = continuous_agent(19, small_cfg());
        let mut rng = SplitRng::from_seed(20);
        for i in 0..32 {
            agent
                .store(transition(
                    [i as f64 * 0.01, 0.0],
                    [0.2, -0.2],
                    0.1,
                    i % 4 == 0,
                ))
                .unwrap();
        }
        let mut replayed = agent.target1.params().to_vec();
        let tau = agent.cfg.tau;
        for _ in 0..5 {
            agent.update(&mut rng).unwrap().unwrap();
            replayed = replayed
                .iter()
                .zip(agent.critic1.params().iter())
                .map(|(t, o)| t.scale(1.0 - tau).add(&o.scale(tau)))
                .collect();
            for (a, b) in agent.target1.params().iter().zip(replayed.iter()) {
                assert!(a.max_abs_diff(b) < 1e-14);
            }
        }
    }

    #[test]
    fn save_load_round_trip_and_bit_exact_continuation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("agent.bin");
        let mut a = continuous_agent(21, small_cfg());
        let mut rng_a = SplitRng::from_seed(22);
        for i in 0..40 {
            a.store(transition(
                [0.1 * i as f64, -0.3],
                [0.4, 0.1],
                0.5,
                i % 5 == 0,
            ))
            .unwrap();
        }
        for _ in 0..5 {
            a.update(&mut rng_a).unwrap();
        }
        a.save(&path).unwrap();

        let mut b = continuous_agent(23, small_cfg()); // different init, fully overwritten
        b.load(&path).unwrap();
        let mut probe = SplitRng::from_seed(0);
        assert_eq!(
            a.act(&[0.2, 0.2], &[0.0], true, &mut probe).unwrap(),
            b.act(&[0.2, 0.2], &[0.0], true, &mut probe).unwrap()
        );

        let (seed, stream, pos) = rng_a.state();
        let mut rng_b = SplitRng::restore(seed, stream, pos);
        for _ in 0..10 {
            a.update(&mut rng_a).unwrap();
            b.update(&mut rng_b).unwrap();
        }
        for (x, y) in a.actor.params().iter().zip(b.actor.params().iter()) {
            assert_eq!(x.data(), y.data(), "continuation diverged");
        }
        for (x, y) in a.target1.params().iter().zip(b.target1.params().iter()) {
            assert_eq!(x.data(), y.data());
        }
    }

    #[test]
    fn load_rejects_mismatched_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("agent.bin");
        continuous_agent(24, small_cfg()).save(&path).unwrap();
        let mut rng = SplitRng::from_seed(25);
        let mut other =
            SacAgent::new(ActionMode::Discrete { n: 4 }, 2, 1, small_cfg(), &mut rng).unwrap();
        assert!(other.load(&path).is_err());
    }
}
