//! Plain-text experiment configuration. INI-style sections, `key = value`
//! lines, `#` comments. Unknown keys are rejected with the offending line
//! number, and a config serializes back to text losslessly so every run can
//! snapshot exactly what it ran with.

use std::fmt::Write as _;
use std::path::PathBuf;

use crate::baselines::{BaselineConfig, BaselineKind};
use crate::discriminator::LatentSpec;
use crate::envs::EnvKind;
use crate::error::{Error, Result};
use crate::perception::PerceptionConfig;
use crate::policy::SacConfig;
use crate::trainer::{fnv1a, GoalMode, TrainLoopConfig};

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Method {
    Gpim,
    L2,
    Rig,
    RigPlus,
    DiscernLite,
    DiaynImitator,
    DiaynGoal,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Gpim => "gpim",
            Method::L2 => "l2",
            Method::Rig => "rig",
            Method::RigPlus => "rig_plus",
            Method::DiscernLite => "discern_lite",
            Method::DiaynImitator => "diayn_imitator",
            Method::DiaynGoal => "diayn_goal",
        }
    }

    fn from_name(name: &str) -> Option<Method> {
        [
            Method::Gpim,
            Method::L2,
            Method::Rig,
            Method::RigPlus,
            Method::DiscernLite,
            Method::DiaynImitator,
            Method::DiaynGoal,
        ]
        .into_iter()
        .find(|m| m.name() == name)
    }

    pub fn baseline_kind(self) -> Option<BaselineKind> {
        match self {
            Method::Gpim => None,
            Method::L2 => Some(BaselineKind::L2),
            Method::Rig => Some(BaselineKind::Rig),
            Method::RigPlus => Some(BaselineKind::RigPlus),
            Method::DiscernLite => Some(BaselineKind::DiscernLite),
            Method::DiaynImitator => Some(BaselineKind::DiaynImitator),
            Method::DiaynGoal => Some(BaselineKind::DiaynGoal),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub method: Method,
    pub env: EnvKind,
    pub latent: LatentSpec,
    pub sac: SacConfig,
    pub perception: PerceptionConfig,
    pub goal_mode: GoalMode,
    pub env_relabel: bool,
    pub exploration_lambda: Option<f64>,
    pub density_grid: usize,
    pub sigma_pixel: f64,
    pub goal_buffer: usize,
    pub reward_floor: f64,
    pub grid_resolution: usize,
    pub cycles: usize,
    pub eval_every: usize,
    pub eval_goals: usize,
    pub theta_freeze_cycles: usize,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    /// Per-environment defaults: skill spaces sized to the task's natural
    /// behavior count, generative-factor width 2 for planar tasks and 4 for
    /// object manipulation.
    pub fn defaults(method: Method, env: EnvKind) -> ExperimentConfig {
        let latent = match env {
            EnvKind::Gridworld4 => LatentSpec::DiscreteOneHot(4),
            EnvKind::Archery => LatentSpec::DiscreteOneHot(3),
            EnvKind::MazeBottleneck => LatentSpec::DiscreteOneHot(10),
            EnvKind::Nav2dColorShape => LatentSpec::DiscreteOneHot(3),
            EnvKind::ObjectManip => LatentSpec::DiscreteOneHot(4),
            _ => LatentSpec::ContinuousBox(2),
        };
        let mut perception = PerceptionConfig::default();
        perception.latent_dim = match env {
            EnvKind::Nav2dColorShape | EnvKind::ObjectManip => 4,
            _ => 2,
        };
        ExperimentConfig {
            method,
            env,
            latent,
            sac: SacConfig::default(),
            perception,
            goal_mode: GoalMode::Static,
            env_relabel: matches!(env, EnvKind::Nav2dColorShape | EnvKind::ObjectManip),
            exploration_lambda: None,
            density_grid: 20,
            sigma_pixel: 255.0,
            goal_buffer: 256,
            reward_floor: -10.0,
            grid_resolution: 21,
            cycles: 100,
            eval_every: 0,
            eval_goals: 50,
            theta_freeze_cycles: 0,
            seeds: vec![0],
            output_dir: PathBuf::from("runs"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.latent.validate()?;
        self.sac.validate()?;
        self.perception.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::ConfigGeneral("at least one seed is required".into()));
        }
        if self.sigma_pixel <= 0.0 {
            return Err(Error::ConfigGeneral("sigma_pixel must be positive".into()));
        }
        Ok(())
    }

    pub fn to_train_config(&self, seed: u64) -> TrainLoopConfig {
        let mut cfg = TrainLoopConfig::new(self.env, self.latent, seed);
        cfg.mu_sac = self.sac;
        cfg.theta_sac = self.sac;
        cfg.perception = self.perception;
        cfg.goal_mode = self.goal_mode;
        cfg.env_relabel = self.env_relabel;
        cfg.exploration_lambda = self.exploration_lambda;
        cfg.density_grid = self.density_grid;
        cfg.cycles = self.cycles;
        cfg.eval_every = self.eval_every;
        cfg.eval_goals = self.eval_goals;
        cfg.theta_freeze_cycles = self.theta_freeze_cycles;
        cfg
    }

    pub fn to_baseline_config(&self, seed: u64) -> Result<BaselineConfig> {
        let kind = self
            .method
            .baseline_kind()
            .ok_or_else(|| Error::contract("the main method has no baseline kind"))?;
        let mut cfg = BaselineConfig::new(kind, self.env, seed);
        cfg.sac = self.sac;
        cfg.vae = self.perception;
        cfg.sigma_pixel = self.sigma_pixel;
        cfg.goal_buffer = self.goal_buffer;
        cfg.reward_floor = self.reward_floor;
        cfg.grid_resolution = self.grid_resolution;
        cfg.cycles = self.cycles;
        cfg.eval_every = self.eval_every;
        cfg.eval_goals = self.eval_goals;
        Ok(cfg)
    }

    /// Canonical text form; `parse(serialize(c))` reproduces `c` exactly.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[experiment]");
        let _ = writeln!(s, "method = {}", self.method.name());
        let _ = writeln!(s, "env = {}", self.env.name());
        let seeds: Vec<String> = self.seeds.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "seeds = {}", seeds.join(", "));
        let _ = writeln!(s, "cycles = {}", self.cycles);
        let _ = writeln!(s, "eval_every = {}", self.eval_every);
        let _ = writeln!(s, "eval_goals = {}", self.eval_goals);
        let _ = writeln!(s, "theta_freeze_cycles = {}", self.theta_freeze_cycles);
        let _ = writeln!(s, "goal_mode = {}", self.goal_mode.name());
        let _ = writeln!(s, "env_relabel = {}", self.env_relabel);
        if let Some(l) = self.exploration_lambda {
            let _ = writeln!(s, "exploration_lambda = {l}");
        }
        let _ = writeln!(s, "output_dir = {}", self.output_dir.display());
        let _ = writeln!(s);
        let _ = writeln!(s, "[latent]");
        match self.latent {
            LatentSpec::DiscreteOneHot(k) => {
                let _ = writeln!(s, "kind = discrete");
                let _ = writeln!(s, "size = {k}");
            }
            LatentSpec::ContinuousBox(d) => {
                let _ = writeln!(s, "kind = continuous");
                let _ = writeln!(s, "size = {d}");
            }
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "[sac]");
        let _ = writeln!(s, "batch_size = {}", self.sac.batch_size);
        let _ = writeln!(s, "discount = {}", self.sac.discount);
        let _ = writeln!(s, "buffer_capacity = {}", self.sac.buffer_capacity);
        let _ = writeln!(s, "tau = {}", self.sac.tau);
        let _ = writeln!(s, "temperature = {}", self.sac.temperature);
        let _ = writeln!(s, "lr = {}", self.sac.lr);
        let _ = writeln!(s, "hidden = {}", self.sac.hidden);
        let _ = writeln!(s);
        let _ = writeln!(s, "[perception]");
        let _ = writeln!(s, "latent_dim = {}", self.perception.latent_dim);
        let _ = writeln!(s, "recon_weight = {}", self.perception.recon_weight);
        let _ = writeln!(s, "kl_weight = {}", self.perception.kl_weight);
        let _ = writeln!(s, "hidden = {}", self.perception.hidden);
        let _ = writeln!(s, "lr = {}", self.perception.lr);
        let _ = writeln!(s);
        let _ = writeln!(s, "[baseline]");
        let _ = writeln!(s, "sigma_pixel = {}", self.sigma_pixel);
        let _ = writeln!(s, "goal_buffer = {}", self.goal_buffer);
        let _ = writeln!(s, "reward_floor = {}", self.reward_floor);
        let _ = writeln!(s, "grid_resolution = {}", self.grid_resolution);
        let _ = writeln!(s, "density_grid = {}", self.density_grid);
        s
    }

    pub fn fingerprint(&self) -> u64 {
        fnv1a(self.serialize().as_bytes())
    }
}

struct Entry {
    section: String,
    key: String,
    value: String,
    line: usize,
}

fn scan(text: &str) -> Result<Vec<Entry>> {
    let mut entries = Vec::new();
    let mut section = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let stripped = raw.split('#').next().unwrap_or("").trim();
        if stripped.is_empty() {
            continue;
        }
        if let Some(name) = stripped.strip_prefix('[') {
            let Some(name) = name.strip_suffix(']') else {
                return Err(Error::Config {
                    line,
                    message: "unterminated section header".into(),
                });
            };
            section = name.trim().to_string();
            continue;
        }
        let Some((key, value)) = stripped.split_once('=') else {
            return Err(Error::Config {
                line,
                message: format!("expected `key = value`, found `{stripped}`"),
            });
        };
        if section.is_empty() {
            return Err(Error::Config {
                line,
                message: "keys must appear inside a [section]".into(),
            });
        }
        entries.push(Entry {
            section: section.clone(),
            key: key.trim().to_string(),
            value: value.trim().to_string(),
            line,
        });
    }
    Ok(entries)
}

fn parse_num<T: std::str::FromStr>(e: &Entry, what: &str) -> Result<T> {
    e.value.parse().map_err(|_| Error::Config {
        line: e.line,
        message: format!("`{}` is not a valid {what} for {}", e.value, e.key),
    })
}

fn positive(e: &Entry, v: f64) -> Result<f64> {
    if v <= 0.0 {
        return Err(Error::Config {
            line: e.line,
            message: format!("{} must be positive, got {}", e.key, e.value),
        });
    }
    Ok(v)
}

fn positive_usize(e: &Entry) -> Result<usize> {
    let v: i64 = parse_num(e, "integer")?;
    if v <= 0 {
        return Err(Error::Config {
            line: e.line,
            message: format!("{} must be positive, got {}", e.key, e.value),
        });
    }
    Ok(v as usize)
}

fn parse_bool(e: &Entry) -> Result<bool> {
    match e.value.as_str() {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(Error::Config {
            line: e.line,
            message: format!("`{other}` is not a boolean (true/false)"),
        }),
    }
}

/// Parse a config file. Environment-dependent defaults are applied first,
/// then every present key overrides them; unknown sections or keys are
/// rejected with their line number.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let entries = scan(text)?;
    let method = match entries
        .iter()
        .find(|e| e.section == "experiment" && e.key == "method")
    {
        Some(e) => Method::from_name(&e.value).ok_or_else(|| Error::Config {
            line: e.line,
            message: format!("unknown method `{}`", e.value),
        })?,
        None => Method::Gpim,
    };
    let env = match entries
        .iter()
        .find(|e| e.section == "experiment" && e.key == "env")
    {
        Some(e) => EnvKind::from_name(&e.value).map_err(|_| Error::Config {
            line: e.line,
            message: format!("unknown environment `{}`", e.value),
        })?,
        None => EnvKind::Nav2dXy,
    };
    let mut cfg = ExperimentConfig::defaults(method, env);
    let mut latent_kind: Option<(String, usize)> = None;
    let mut latent_size: Option<(usize, usize)> = None;
    for e in &entries {
        match (e.section.as_str(), e.key.as_str()) {
            ("experiment", "method") | ("experiment", "env") => {}
            ("experiment", "seeds") => {
                let mut seeds = Vec::new();
                for part in e.value.split(',') {
                    let v: u64 = part.trim().parse().map_err(|_| Error::Config {
                        line: e.line,
                        message: format!("`{}` is not a valid seed", part.trim()),
                    })?;
                    seeds.push(v);
                }
                cfg.seeds = seeds;
            }
            ("experiment", "cycles") => cfg.cycles = parse_num(e, "integer")?,
            ("experiment", "eval_every") => cfg.eval_every = parse_num(e, "integer")?,
            ("experiment", "eval_goals") => cfg.eval_goals = positive_usize(e)?,
            ("experiment", "theta_freeze_cycles") => {
                cfg.theta_freeze_cycles = parse_num(e, "integer")?
            }
            ("experiment", "goal_mode") => {
                cfg.goal_mode = match e.value.as_str() {
                    "static" => GoalMode::Static,
                    "dynamic" => GoalMode::Dynamic,
                    other => {
                        return Err(Error::Config {
                            line: e.line,
                            message: format!("unknown goal mode `{other}`"),
                        })
                    }
                }
            }
            ("experiment", "env_relabel") => cfg.env_relabel = parse_bool(e)?,
            ("experiment", "exploration_lambda") => {
                let v: f64 = parse_num(e, "number")?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Config {
                        line: e.line,
                        message: format!("exploration_lambda must be in [0, 1], got {v}"),
                    });
                }
                cfg.exploration_lambda = Some(v);
            }
            ("experiment", "output_dir") => cfg.output_dir = PathBuf::from(&e.value),
            ("latent", "kind") => latent_kind = Some((e.value.clone(), e.line)),
            ("latent", "size") => latent_size = Some((positive_usize(e)?, e.line)),
            ("sac", "batch_size") => cfg.sac.batch_size = positive_usize(e)?,
            ("sac", "discount") => cfg.sac.discount = parse_num(e, "number")?,
            ("sac", "buffer_capacity") => cfg.sac.buffer_capacity = positive_usize(e)?,
            ("sac", "tau") => cfg.sac.tau = parse_num(e, "number")?,
            ("sac", "temperature") => cfg.sac.temperature = parse_num(e, "number")?,
            ("sac", "lr") => cfg.sac.lr = positive(e, parse_num(e, "number")?)?,
            ("sac", "hidden") => cfg.sac.hidden = positive_usize(e)?,
            ("perception", "latent_dim") => cfg.perception.latent_dim = positive_usize(e)?,
            ("perception", "recon_weight") => cfg.perception.recon_weight = parse_num(e, "number")?,
            ("perception", "kl_weight") => cfg.perception.kl_weight = parse_num(e, "number")?,
            ("perception", "hidden") => cfg.perception.hidden = positive_usize(e)?,
            ("perception", "lr") => cfg.perception.lr = positive(e, parse_num(e, "number")?)?,
            ("baseline", "sigma_pixel") => cfg.sigma_pixel = positive(e, parse_num(e, "number")?)?,
            ("baseline", "goal_buffer") => cfg.goal_buffer = positive_usize(e)?,
            ("baseline", "reward_floor") => cfg.reward_floor = parse_num(e, "number")?,
            ("baseline", "grid_resolution") => cfg.grid_resolution = positive_usize(e)?,
            ("baseline", "density_grid") => cfg.density_grid = positive_usize(e)?,
            _ => {
                return Err(Error::Config {
                    line: e.line,
                    message: format!("unknown key `{}` in section [{}]", e.key, e.section),
                })
            }
        }
    }
    match (latent_kind, latent_size) {
        (None, None) => {}
        (Some((kind, line)), size) => {
            let n = size.map(|(n, _)| n).unwrap_or(match cfg.latent {
                LatentSpec::DiscreteOneHot(k) => k,
                LatentSpec::ContinuousBox(d) => d,
            });
            cfg.latent = match kind.as_str() {
                "discrete" => LatentSpec::DiscreteOneHot(n),
                "continuous" => LatentSpec::ContinuousBox(n),
                other => {
                    return Err(Error::Config {
                        line,
                        message: format!("unknown latent kind `{other}`"),
                    })
                }
            };
        }
        (None, Some((n, _))) => {
            cfg.latent = match cfg.latent {
                LatentSpec::DiscreteOneHot(_) => LatentSpec::DiscreteOneHot(n),
                LatentSpec::ContinuousBox(_) => LatentSpec::ContinuousBox(n),
            };
        }
    }
    cfg.validate()?;
    Ok(cfg)
}
