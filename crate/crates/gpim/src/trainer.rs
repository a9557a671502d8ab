//! The alternating training loop. Each cycle runs one exploration episode
//! (latent-conditioned policy plus discriminator) that records relabeled
//! goals, then one imitation episode where the goal-conditioned policy chases
//! those goals under the frozen discriminator's reward.

use std::fmt::Write as _;
use std::path::Path;

use crate::checkpoint::{self, Blob};
use crate::discriminator::{exploration_reward, DensityModel, Discriminator, Latent, LatentSpec};
use crate::envs::{ActionSpace, EnvConfig, EnvInstance, EnvKind, Goal, StateVec, Transition};
use crate::error::{Error, Result};
use crate::numerics::{Mlp, Tape, Tensor};
use crate::perception::{GoalCodec, PerceptionConfig};
use crate::policy::{ActionMode, SacAgent, SacConfig};
use crate::rng::SplitRng;

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum GoalMode {
    /// Every imitation step is conditioned on the episode's final goal.
    Static,
    /// Step t is conditioned on the goal relabeled at step t of exploration.
    Dynamic,
}

impl GoalMode {
    pub fn name(self) -> &'static str {
        match self {
            GoalMode::Static => "static",
            GoalMode::Dynamic => "dynamic",
        }
    }
}

/// The relabeled goals of one exploration episode, tagged with the latent
/// that produced them. `None` marks a visited state the perceptual map could
/// not label; how many of those are tolerable depends on the goal mode.
#[derive(Clone, Debug)]
pub struct GoalRecord {
    pub omega: Latent,
    pub goals: Vec<Option<Goal>>,
}

impl GoalRecord {
    pub fn final_goal(&self) -> &Goal {
        self.goals
            .last()
            .and_then(|g| g.as_ref())
            .expect("records are validated to end in a labeled goal")
    }
}

#[derive(Clone, Debug)]
pub struct TrainLoopConfig {
    pub env: EnvConfig,
    pub latent: LatentSpec,
    pub mu_sac: SacConfig,
    pub theta_sac: SacConfig,
    pub perception: PerceptionConfig,
    pub goal_mode: GoalMode,
    /// Instantiate the scene from the relabeled goal when resetting for the
    /// imitation episode. Only meaningful for object environments.
    pub env_relabel: bool,
    /// Density-bonus mixing weight; `None` disables the exploration bonus.
    pub exploration_lambda: Option<f64>,
    pub density_grid: usize,
    pub cycles: usize,
    /// Evaluate every this many cycles; 0 disables periodic evaluation.
    pub eval_every: usize,
    pub eval_goals: usize,
    /// Imitation-policy updates are suppressed for this many initial cycles.
    pub theta_freeze_cycles: usize,
    /// When false the goal encoder trains on the perception loss alone and
    /// never sees value gradients from the imitation policy.
    pub encoder_policy_term: bool,
    pub seed: u64,
}

impl TrainLoopConfig {
    pub fn new(kind: EnvKind, latent: LatentSpec, seed: u64) -> TrainLoopConfig {
        TrainLoopConfig {
            env: EnvConfig::defaults(kind),
            latent,
            mu_sac: SacConfig::default(),
            theta_sac: SacConfig::default(),
            perception: PerceptionConfig::default(),
            goal_mode: GoalMode::Static,
            env_relabel: false,
            exploration_lambda: None,
            density_grid: 20,
            cycles: 100,
            eval_every: 0,
            eval_goals: 50,
            theta_freeze_cycles: 0,
            encoder_policy_term: true,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.latent.validate()?;
        self.mu_sac.validate()?;
        self.theta_sac.validate()?;
        self.perception.validate()?;
        if self.env_relabel
            && !matches!(
                self.env.kind,
                EnvKind::Nav2dColorShape | EnvKind::ObjectManip
            )
        {
            return Err(Error::ConfigGeneral(
                "goal-driven scene instantiation only applies to object environments".into(),
            ));
        }
        if let Some(l) = self.exploration_lambda {
            if !(0.0..=1.0).contains(&l) {
                return Err(Error::ConfigGeneral(
                    "exploration weight must lie in [0, 1]".into(),
                ));
            }
            if self.density_grid == 0 {
                return Err(Error::ConfigGeneral("density grid must be positive".into()));
            }
        }
        Ok(())
    }

    /// Stable content hash used to refuse resuming under a different setup.
    pub fn fingerprint(&self) -> u64 {
        let mut s = String::new();
        let _ = write!(
            s,
            "{:?}|{:?}|{:?}|{:?}|{:?}|{}|{}|{:?}|{}|{}|{}|{}|{}|{}|{}",
            self.env,
            self.latent,
            self.mu_sac,
            self.theta_sac,
            self.perception,
            self.goal_mode.name(),
            self.env_relabel,
            self.exploration_lambda,
            self.density_grid,
            self.cycles,
            self.eval_every,
            self.eval_goals,
            self.theta_freeze_cycles,
            self.encoder_policy_term,
            self.seed,
        );
        fnv1a(s.as_bytes())
    }
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    h
}

/// FNV over the exact bit patterns of every parameter.
pub fn params_hash(net: &Mlp) -> u64 {
    let mut bytes = Vec::new();
    for p in net.params() {
        for v in p.data() {
            bytes.extend_from_slice(&v.to_bits().to_le_bytes());
        }
    }
    fnv1a(&bytes)
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Provenance {
    StepI,
    StepII,
}

/// Replay of (latent, visited state) pairs for the discriminator. Only
/// exploration data may enter: imitation rollouts are produced under a frozen
/// discriminator and would bias it.
pub struct DiscReplay {
    capacity: usize,
    items: Vec<(Latent, StateVec)>,
    cursor: usize,
}

impl DiscReplay {
    pub fn new(capacity: usize) -> DiscReplay {
        assert!(capacity > 0);
        DiscReplay {
            capacity,
            items: Vec::new(),
            cursor: 0,
        }
    }

    pub fn push(&mut self, provenance: Provenance, latent: Latent, state: StateVec) -> Result<()> {
        if provenance != Provenance::StepI {
            return Err(Error::contract(
                "the discriminator replay only accepts exploration-phase data",
            ));
        }
        if self.items.len() < self.capacity {
            self.items.push((latent, state));
        } else {
            self.items[self.cursor] = (latent, state);
        }
        self.cursor = (self.cursor + 1) % self.capacity;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn sample(&self, batch: usize, rng: &mut SplitRng) -> Vec<(Latent, Vec<f64>)> {
        let k = batch.min(self.items.len());
        rng.sample_indices(self.items.len(), k)
            .into_iter()
            .map(|i| self.items[i].clone())
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub cycle: usize,
    pub actor_steps: usize,
    pub component: String,
    pub metric_name: String,
    pub value: f64,
}

impl MetricRow {
    fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.cycle, self.actor_steps, self.component, self.metric_name, self.value
        )
    }

    fn parse(line: &str) -> Result<MetricRow> {
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 5 {
            return Err(Error::contract(format!("malformed metric row: {line}")));
        }
        let bad = |what: &str| Error::contract(format!("bad {what} in metric row: {line}"));
        Ok(MetricRow {
            cycle: parts[0].parse().map_err(|_| bad("cycle"))?,
            actor_steps: parts[1].parse().map_err(|_| bad("actor_steps"))?,
            component: parts[2].to_string(),
            metric_name: parts[3].to_string(),
            value: parts[4].parse().map_err(|_| bad("value"))?,
        })
    }
}

pub const METRICS_HEADER: &str = "cycle,actor_steps,component,metric_name,value";

/// Gaussian noise scale applied to percepts in discriminator batches.
const DISC_INPUT_JITTER: f64 = 0.05;

/// Uniform goal-space samples with prior latents appended to each batch.
const DISC_BACKGROUND_PER_BATCH: usize = 32;

pub fn write_metrics(path: &Path, rows: &[MetricRow]) -> Result<()> {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricRow>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == METRICS_HEADER => {}
        _ => return Err(Error::contract("metric log is missing its header")),
    }
    lines.map(MetricRow::parse).collect()
}

/// Outcome of one imitation episode.
#[derive(Clone, Debug)]
pub struct ImitationStats {
    /// Flat goal encoding fed to the policy at each step.
    pub goals_used: Vec<Vec<f64>>,
    pub final_state: StateVec,
    pub mean_reward: f64,
    /// Distance between the exploration episode's final goal and the
    /// imitation episode's final position, when both live in coordinates.
    pub delta_d: Option<f64>,
}

pub struct Trainer {
    cfg: TrainLoopConfig,
    env: EnvInstance,
    eval_env: EnvInstance,
    mu: SacAgent,
    theta: SacAgent,
    disc: Discriminator,
    codec: GoalCodec,
    density: Option<DensityModel>,
    disc_replay: DiscReplay,
    rng_latent: SplitRng,
    rng_mu: SplitRng,
    rng_theta: SplitRng,
    rng_disc: SplitRng,
    rng_codec: SplitRng,
    rng_eval: SplitRng,
    cycle: usize,
    actor_steps: usize,
    discarded: usize,
    metrics: Vec<MetricRow>,
}

fn action_mode(space: ActionSpace) -> ActionMode {
    match space {
        ActionSpace::Discrete(n) => ActionMode::Discrete { n },
        ActionSpace::Continuous(dim) => ActionMode::Continuous { dim },
    }
}

impl Trainer {
    pub fn new(cfg: TrainLoopConfig) -> Result<Trainer> {
        cfg.validate()?;
        let root = SplitRng::from_seed(cfg.seed);
        let env = EnvInstance::new(cfg.env.clone(), root.split("env"))?;
        let eval_env = EnvInstance::new(cfg.env.clone(), root.split("eval_env"))?;
        let spec = env.spec();
        let mode = action_mode(spec.action_space);
        let mut rng_init = root.split("init");
        let mu = SacAgent::new(
            mode,
            spec.state_dim,
            cfg.latent.dim(),
            cfg.mu_sac,
            &mut rng_init,
        )?;
        let theta = SacAgent::new(
            mode,
            spec.state_dim,
            cfg.perception.latent_dim,
            cfg.theta_sac,
            &mut rng_init,
        )?;
        // The discriminator reads the perceptual relabeling of a state, not
        // the state itself: skills must differ in what they look like, and
        // for coordinate goals the two coincide anyway.
        let disc = Discriminator::new(
            cfg.latent,
            spec.goal.dim(),
            cfg.mu_sac.hidden,
            cfg.mu_sac.lr,
            &mut rng_init,
        )?;
        let codec = GoalCodec::new(spec.goal.dim(), cfg.perception, &mut rng_init)?;
        let density = cfg
            .exploration_lambda
            .map(|_| DensityModel::new(cfg.env.bounds, cfg.density_grid, 1.0));
        let disc_replay = DiscReplay::new(cfg.mu_sac.buffer_capacity);
        Ok(Trainer {
            env,
            eval_env,
            mu,
            theta,
            disc,
            codec,
            density,
            disc_replay,
            rng_latent: root.split("latent"),
            rng_mu: root.split("mu"),
            rng_theta: root.split("theta"),
            rng_disc: root.split("disc"),
            rng_codec: root.split("codec"),
            rng_eval: root.split("eval"),
            cycle: 0,
            actor_steps: 0,
            discarded: 0,
            metrics: Vec::new(),
            cfg,
        })
    }

    pub fn config(&self) -> &TrainLoopConfig {
        &self.cfg
    }

    pub fn cycle(&self) -> usize {
        self.cycle
    }

    pub fn actor_steps(&self) -> usize {
        self.actor_steps
    }

    pub fn discarded_episodes(&self) -> usize {
        self.discarded
    }

    pub fn metrics(&self) -> &[MetricRow] {
        &self.metrics
    }

    pub fn mu(&self) -> &SacAgent {
        &self.mu
    }

    pub fn theta(&self) -> &SacAgent {
        &self.theta
    }

    pub fn discriminator(&self) -> &Discriminator {
        &self.disc
    }

    pub fn codec(&self) -> &GoalCodec {
        &self.codec
    }

    fn log(&mut self, component: &str, name: &str, value: f64) {
        self.metrics.push(MetricRow {
            cycle: self.cycle,
            actor_steps: self.actor_steps,
            component: component.to_string(),
            metric_name: name.to_string(),
            value,
        });
    }

    /// One exploration episode: sample a latent, roll the latent-conditioned
    /// policy, relabel every visited state, and update both that policy and
    /// the discriminator online. States the perceptual map cannot label earn
    /// the chance-level reward of zero and stay out of the discriminator's
    /// data, so the explorer drifts toward labelable regions. Returns `None`
    /// (and counts the episode as discarded) when the goal mode's labeling
    /// requirement is unmet: the final step for static goals, every step for
    /// dynamic ones.
    pub fn step_i(&mut self) -> Result<Option<GoalRecord>> {
        let omega = self.cfg.latent.sample(&mut self.rng_latent);
        let cond = omega.encode(self.cfg.latent)?;
        let horizon = self.env.spec().path_length;
        let mut state = self.env.reset(None)?;
        let mut goals: Vec<Option<Goal>> = Vec::with_capacity(horizon);
        let mut reward_sum = 0.0;
        let mut disc_loss = None;
        for _ in 0..horizon {
            let action = self.mu.act(&state, &cond, false, &mut self.rng_mu)?;
            let (next, done) = self.env.step(&action)?;
            let labeled = match self.env.relabel(&next) {
                Ok(goal) => Some(goal),
                Err(Error::Unlabelable) => None,
                Err(e) => return Err(e),
            };
            let base = match &labeled {
                Some(g) => self.disc.reward_mu(&omega, &g.to_vec())?,
                None => 0.0,
            };
            let reward = match (self.cfg.exploration_lambda, &mut self.density) {
                (Some(lambda), Some(dm)) => {
                    let r = exploration_reward(lambda, base, dm, &next);
                    dm.update(&next);
                    r
                }
                _ => base,
            };
            reward_sum += reward;
            self.mu.store(Transition {
                state: state.clone(),
                condition: cond.clone(),
                action: self.mu.encode_action(&action)?,
                reward,
                next_state: next.clone(),
                done,
            })?;
            self.mu.update(&mut self.rng_mu)?;
            if let Some(g) = &labeled {
                self.disc_replay
                    .push(Provenance::StepI, omega.clone(), g.to_vec())?;
            }
            // Jitter the percepts: finitely many exactly repeated training
            // points are linearly separable, and Adam then inflates the
            // winning logits without bound, pushing the reward's argmax
            // arbitrarily far from the data. The noise keeps the learned
            // reward peaked at the percepts themselves.
            let mut batch: Vec<_> = self
                .disc_replay
                .sample(64, &mut self.rng_disc)
                .into_iter()
                .map(|(w, mut g)| {
                    for v in &mut g {
                        *v += DISC_INPUT_JITTER * self.rng_disc.normal();
                    }
                    (w, g)
                })
                .collect();
            // Calibrate the posterior toward the prior away from the data:
            // a few uniform goal-space points paired with prior-sampled
            // latents make unvisited percepts score at chance level instead
            // of inheriting an arbitrary extrapolation.
            if !batch.is_empty() {
                let bounds = self.env.goal_bounds();
                for _ in 0..DISC_BACKGROUND_PER_BATCH {
                    let g: Vec<f64> = bounds
                        .iter()
                        .map(|&(lo, hi)| self.rng_disc.uniform(lo, hi))
                        .collect();
                    batch.push((self.cfg.latent.sample(&mut self.rng_disc), g));
                }
            }
            disc_loss = self.disc.update(&batch)?;
            goals.push(labeled);
            self.actor_steps += 1;
            state = next;
        }
        self.log("mu", "reward_mean", reward_sum / horizon as f64);
        if let Some(l) = disc_loss {
            self.log("disc", "loss", l);
        }
        let labelable = match self.cfg.goal_mode {
            GoalMode::Static => goals.last().is_some_and(|g| g.is_some()),
            GoalMode::Dynamic => goals.iter().all(|g| g.is_some()),
        };
        if !labelable {
            self.discarded += 1;
            self.log("mu", "discarded", 1.0);
            return Ok(None);
        }
        Ok(Some(GoalRecord { omega, goals }))
    }

    /// One imitation episode against the goals of `record`. The
    /// discriminator and the exploration policy are read-only here; when
    /// `update_theta` is false the imitation policy and codec are too and the
    /// episode is purely diagnostic.
    pub fn step_ii(&mut self, record: &GoalRecord, update_theta: bool) -> Result<ImitationStats> {
        let horizon = self.env.spec().path_length;
        if record.goals.len() != horizon {
            return Err(Error::contract(format!(
                "record has {} goals for a horizon of {horizon}",
                record.goals.len()
            )));
        }
        let context = if self.cfg.env_relabel {
            Some(record.final_goal())
        } else {
            None
        };
        let mut state = self.env.reset(context)?;
        let mut goals_used = Vec::with_capacity(horizon);
        let mut episode: Vec<(StateVec, Vec<f64>, Vec<f64>)> = Vec::with_capacity(horizon);
        let mut reward_sum = 0.0;
        for t in 0..horizon {
            let goal = match self.cfg.goal_mode {
                GoalMode::Static => record.final_goal(),
                GoalMode::Dynamic => record.goals[t].as_ref().ok_or_else(|| {
                    Error::contract("dynamic imitation requires a goal at every step")
                })?,
            };
            let gvec = goal.to_vec();
            let z = self.codec.encode_mean(&gvec)?;
            let action = self.theta.act(&state, &z, false, &mut self.rng_theta)?;
            let (next, done) = self.env.step(&action)?;
            let reward = match self.env.relabel(&next) {
                Ok(g) => self.disc.reward_theta(&record.omega, &g.to_vec())?,
                Err(Error::Unlabelable) => 0.0,
                Err(e) => return Err(e),
            };
            reward_sum += reward;
            let encoded = self.theta.encode_action(&action)?;
            if update_theta {
                self.theta.store(Transition {
                    state: state.clone(),
                    condition: z,
                    action: encoded.clone(),
                    reward,
                    next_state: next.clone(),
                    done,
                })?;
                self.theta.update(&mut self.rng_theta)?;
            }
            episode.push((state.clone(), gvec.clone(), encoded));
            goals_used.push(gvec);
            self.actor_steps += 1;
            state = next;
        }
        if update_theta {
            let states: Vec<StateVec> = episode.iter().map(|e| e.0.clone()).collect();
            let goals: Vec<Vec<f64>> = episode.iter().map(|e| e.1.clone()).collect();
            let actions: Vec<Vec<f64>> = episode.iter().map(|e| e.2.clone()).collect();
            let pg = if self.cfg.encoder_policy_term {
                Some(encoder_policy_grads(
                    &self.codec,
                    &self.theta,
                    &states,
                    &goals,
                    &actions,
                )?)
            } else {
                None
            };
            let loss = self
                .codec
                .joint_update(pg.as_deref(), &goals, &mut self.rng_codec)?;
            self.log("codec", "loss", loss);
        }
        let delta_d = match record.final_goal() {
            Goal::Coordinate(c) => Some(l2(c, &state[..c.len()])),
            _ => None,
        };
        self.log("theta", "reward_mean", reward_sum / horizon as f64);
        if let Some(d) = delta_d {
            self.log("eval", "delta_d", d);
        }
        Ok(ImitationStats {
            goals_used,
            final_state: state,
            mean_reward: reward_sum / horizon as f64,
            delta_d,
        })
    }

    /// One full alternation. Imitation is skipped when exploration produced
    /// an unlabelable episode; imitation updates are suppressed while the
    /// freeze budget lasts.
    pub fn run_cycle(&mut self) -> Result<()> {
        let record = self.step_i()?;
        if let Some(record) = record {
            let update_theta = self.cycle >= self.cfg.theta_freeze_cycles;
            self.step_ii(&record, update_theta)?;
        }
        self.cycle += 1;
        if self.cfg.eval_every > 0 && self.cycle % self.cfg.eval_every == 0 {
            let dist = self.evaluate()?;
            self.log("eval", "dist_final", dist);
        }
        Ok(())
    }

    /// Mean final distance to sampled reachable goals under the
    /// deterministic imitation policy. Goals without a coordinate payload
    /// contribute an exact-match indicator distance instead.
    pub fn evaluate(&mut self) -> Result<f64> {
        let mut total = 0.0;
        let n = self.cfg.eval_goals;
        for _ in 0..n {
            let goal = sample_reachable_goal(&mut self.eval_env, &mut self.rng_eval)?;
            let gvec = goal.to_vec();
            let z = self.codec.encode_mean(&gvec)?;
            let mut state = self.eval_env.reset(None)?;
            for _ in 0..self.eval_env.spec().path_length {
                let action = self.theta.act(&state, &z, true, &mut self.rng_eval)?;
                state = self.eval_env.step(&action)?.0;
            }
            total += match &goal {
                Goal::Coordinate(c) => l2(c, &state[..c.len()]),
                Goal::Descriptor { coord, .. } => l2(coord, &state[..coord.len()]),
                other => match self.eval_env.relabel(&state) {
                    Ok(g) if &g == other => 0.0,
                    _ => 1.0,
                },
            };
        }
        Ok(total / n as f64)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let fp = self.cfg.fingerprint();
        let mut blobs: Vec<Blob> = vec![(
            "meta".into(),
            vec![
                1.0,
                self.cycle as f64,
                self.actor_steps as f64,
                self.discarded as f64,
                (fp >> 32) as f64,
                (fp & 0xffff_ffff) as f64,
            ],
        )];
        for (name, state) in [
            ("rng.env", self.env.rng_state()),
            ("rng.eval_env", self.eval_env.rng_state()),
            ("rng.latent", self.rng_latent.state()),
            ("rng.mu", self.rng_mu.state()),
            ("rng.theta", self.rng_theta.state()),
            ("rng.disc", self.rng_disc.state()),
            ("rng.codec", self.rng_codec.state()),
            ("rng.eval", self.rng_eval.state()),
        ] {
            blobs.push((name.into(), rng_state_blob(state)));
        }
        blobs.push(("env.state".into(), self.env.state().to_vec()));
        blobs.extend(self.mu.to_blobs("mu."));
        blobs.extend(self.theta.to_blobs("theta."));
        blobs.extend(self.disc.to_blobs("disc."));
        blobs.extend(self.codec.to_blobs("codec."));
        if let Some(dm) = &self.density {
            blobs.push(("density".into(), dm.flatten()));
        }
        blobs.push(("disc_replay".into(), self.flatten_disc_replay()));
        for (i, row) in self.metrics.iter().enumerate() {
            blobs.push((
                format!("metrics.{i}.{}.{}", row.component, row.metric_name),
                vec![row.cycle as f64, row.actor_steps as f64, row.value],
            ));
        }
        checkpoint::write_blobs(path, &blobs)
    }

    pub fn resume(cfg: TrainLoopConfig, path: &Path) -> Result<Trainer> {
        let blobs = checkpoint::read_blobs(path)?;
        let meta = checkpoint::get(&blobs, "meta")?;
        if meta.len() != 6 || meta[0] != 1.0 {
            return Err(Error::Checkpoint(
                "unrecognized trainer checkpoint layout".into(),
            ));
        }
        let fp = cfg.fingerprint();
        if meta[4] != (fp >> 32) as f64 || meta[5] != (fp & 0xffff_ffff) as f64 {
            return Err(Error::Checkpoint(
                "checkpoint was written under a different configuration".into(),
            ));
        }
        let mut t = Trainer::new(cfg)?;
        t.cycle = meta[1] as usize;
        t.actor_steps = meta[2] as usize;
        t.discarded = meta[3] as usize;
        let restore = |name: &str| -> Result<(u64, u64, u128)> {
            rng_state_from_blob(checkpoint::get(&blobs, name)?)
        };
        let (s, st, p) = restore("rng.env")?;
        t.env.restore_rng(s, st, p);
        let (s, st, p) = restore("rng.eval_env")?;
        t.eval_env.restore_rng(s, st, p);
        t.env.restore_state(checkpoint::get(&blobs, "env.state")?)?;
        for (name, slot) in [
            ("rng.latent", &mut t.rng_latent),
            ("rng.mu", &mut t.rng_mu),
            ("rng.theta", &mut t.rng_theta),
            ("rng.disc", &mut t.rng_disc),
            ("rng.codec", &mut t.rng_codec),
            ("rng.eval", &mut t.rng_eval),
        ] {
            let (s, st, p) = restore(name)?;
            *slot = SplitRng::restore(s, st, p);
        }
        t.mu.restore_blobs("mu.", &blobs)?;
        t.theta.restore_blobs("theta.", &blobs)?;
        t.disc.restore_blobs("disc.", &blobs)?;
        t.codec.restore_blobs("codec.", &blobs)?;
        if let Some(dm) = &mut t.density {
            dm.restore(checkpoint::get(&blobs, "density")?)?;
        }
        t.restore_disc_replay(checkpoint::get(&blobs, "disc_replay")?)?;
        let mut rows: Vec<(usize, MetricRow)> = Vec::new();
        for (name, data) in &blobs {
            let Some(rest) = name.strip_prefix("metrics.") else {
                continue;
            };
            let mut parts = rest.splitn(3, '.');
            let (Some(i), Some(component), Some(metric)) =
                (parts.next(), parts.next(), parts.next())
            else {
                return Err(Error::Checkpoint(format!("malformed metric blob {name}")));
            };
            let i: usize = i
                .parse()
                .map_err(|_| Error::Checkpoint(format!("malformed metric blob {name}")))?;
            if data.len() != 3 {
                return Err(Error::Checkpoint(format!("malformed metric blob {name}")));
            }
            rows.push((
                i,
                MetricRow {
                    cycle: data[0] as usize,
                    actor_steps: data[1] as usize,
                    component: component.to_string(),
                    metric_name: metric.to_string(),
                    value: data[2],
                },
            ));
        }
        rows.sort_by_key(|(i, _)| *i);
        t.metrics = rows.into_iter().map(|(_, r)| r).collect();
        Ok(t)
    }

    fn flatten_disc_replay(&self) -> Vec<f64> {
        let d = self.cfg.latent.dim();
        let mut out = vec![
            self.disc_replay.items.len() as f64,
            self.disc_replay.cursor as f64,
        ];
        for (latent, state) in &self.disc_replay.items {
            out.extend(
                latent
                    .encode(self.cfg.latent)
                    .expect("stored latent matches the spec"),
            );
            out.extend_from_slice(state);
        }
        debug_assert!(d > 0);
        out
    }

    fn restore_disc_replay(&mut self, blob: &[f64]) -> Result<()> {
        if blob.len() < 2 {
            return Err(Error::Checkpoint("truncated discriminator replay".into()));
        }
        let len = blob[0] as usize;
        let cursor = blob[1] as usize;
        let d = self.cfg.latent.dim();
        let sd = self.env.spec().goal.dim();
        if blob.len() != 2 + len * (d + sd) {
            return Err(Error::Checkpoint(
                "discriminator replay size mismatch".into(),
            ));
        }
        let mut items = Vec::with_capacity(len);
        for r in 0..len {
            let base = 2 + r * (d + sd);
            let enc = &blob[base..base + d];
            let latent = match self.cfg.latent {
                LatentSpec::DiscreteOneHot(_) => {
                    let idx = enc
                        .iter()
                        .position(|&v| v == 1.0)
                        .ok_or_else(|| Error::Checkpoint("bad one-hot in replay".into()))?;
                    Latent::Index(idx)
                }
                LatentSpec::ContinuousBox(_) => Latent::Vector(enc.to_vec()),
            };
            items.push((latent, blob[base + d..base + d + sd].to_vec()));
        }
        self.disc_replay.items = items;
        self.disc_replay.cursor = cursor;
        Ok(())
    }
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn rng_state_blob((seed, stream, pos): (u64, u64, u128)) -> Vec<f64> {
    let mut out = Vec::with_capacity(8);
    for v in [seed, stream] {
        out.push((v >> 32) as f64);
        out.push((v & 0xffff_ffff) as f64);
    }
    for i in 0..4 {
        out.push(((pos >> (96 - 32 * i)) & 0xffff_ffff) as f64);
    }
    out
}

fn rng_state_from_blob(blob: &[f64]) -> Result<(u64, u64, u128)> {
    if blob.len() != 8 {
        return Err(Error::Checkpoint("malformed RNG state".into()));
    }
    let seed = ((blob[0] as u64) << 32) | blob[1] as u64;
    let stream = ((blob[2] as u64) << 32) | blob[3] as u64;
    let mut pos: u128 = 0;
    for v in &blob[4..8] {
        pos = (pos << 32) | *v as u128;
    }
    Ok((seed, stream, pos))
}

/// Roll a uniformly random episode and relabel its final state. Guarantees
/// the returned goal is reachable within the horizon.
pub fn sample_reachable_goal(env: &mut EnvInstance, rng: &mut SplitRng) -> Result<Goal> {
    let space = env.action_space();
    for _ in 0..40 {
        let mut state = env.reset(None)?;
        for _ in 0..env.spec().path_length {
            state = env.step(&space.sample(rng))?.0;
        }
        match env.relabel(&state) {
            Ok(goal) => return Ok(goal),
            Err(Error::Unlabelable) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::contract(
        "no labelable goal found in 40 random episodes",
    ))
}

/// Gradient of the imitation policy's value objective with respect to the
/// goal encoder: push embeddings toward conditions under which the stored
/// state-action pairs score higher on the frozen critics.
fn encoder_policy_grads(
    codec: &GoalCodec,
    theta: &SacAgent,
    states: &[StateVec],
    goals: &[Vec<f64>],
    actions: &[Vec<f64>],
) -> Result<Vec<Tensor>> {
    let m = states.len();
    if m == 0 || goals.len() != m || actions.len() != m {
        return Err(Error::contract(
            "mismatched episode batch for encoder gradients",
        ));
    }
    let sd = states[0].len();
    let gd = goals[0].len();
    let sflat: Vec<f64> = states.iter().flatten().copied().collect();
    let gflat: Vec<f64> = goals.iter().flatten().copied().collect();
    let mut tape = Tape::new();
    let gx = tape.constant(Tensor::matrix(m, gd, gflat));
    let (eh, mean) = codec.watch_encoder_mean(&mut tape, gx);
    let sx = tape.constant(Tensor::matrix(m, sd, sflat));
    let input = tape.concat_cols(sx, mean);
    let (c1, c2) = theta.critics();
    let (h1, h2) = (c1.frozen(&mut tape), c2.frozen(&mut tape));
    let qmin = match theta.mode() {
        ActionMode::Continuous { dim } => {
            let aflat: Vec<f64> = actions.iter().flatten().copied().collect();
            if aflat.len() != m * dim {
                return Err(Error::shape(&[m, dim], &[aflat.len()], "episode actions"));
            }
            let ax = tape.constant(Tensor::matrix(m, dim, aflat));
            let full = tape.concat_cols(input, ax);
            let q1 = h1.forward(&mut tape, full);
            let q2 = h2.forward(&mut tape, full);
            tape.min2(q1, q2)
        }
        ActionMode::Discrete { n } => {
            let idx: Vec<usize> = actions.iter().map(|a| a[0] as usize).collect();
            if idx.iter().any(|&i| i >= n) {
                return Err(Error::contract("stored action index out of range"));
            }
            let q1 = h1.forward(&mut tape, input);
            let q2 = h2.forward(&mut tape, input);
            let qm = tape.min2(q1, q2);
            tape.pick_col(qm, &idx)
        }
    };
    let mean_q = tape.mean_all(qmin);
    let loss = tape.neg(mean_q);
    let grads = tape.backward(loss)?;
    Ok(eh.grads(codec.encoder(), &grads))
}

/// Run the full alternating loop, writing an initial checkpoint, the metric
/// log, and a final checkpoint under `out_dir`. Returns the metric rows.
pub fn train(cfg: TrainLoopConfig, out_dir: &Path) -> Result<Vec<MetricRow>> {
    std::fs::create_dir_all(out_dir)?;
    let mut trainer = Trainer::new(cfg)?;
    trainer.save(&out_dir.join("checkpoint-initial.bin"))?;
    for _ in 0..trainer.cfg.cycles {
        trainer.run_cycle()?;
    }
    write_metrics(&out_dir.join("metrics.csv"), &trainer.metrics)?;
    trainer.save(&out_dir.join("checkpoint.bin"))?;
    Ok(trainer.metrics)
}

/// The delayed-imitation protocol: suppress imitation-policy updates for the
/// first `switch_cycle` cycles while still logging its goal-tracking error.
pub fn mu_pretrain_then_theta(
    mut cfg: TrainLoopConfig,
    switch_cycle: usize,
    out_dir: &Path,
) -> Result<Vec<MetricRow>> {
    if switch_cycle >= cfg.cycles {
        return Err(Error::ConfigGeneral(
            "the switch must happen within the budget".into(),
        ));
    }
    cfg.theta_freeze_cycles = switch_cycle;
    train(cfg, out_dir)
}
