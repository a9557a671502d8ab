//! Evaluation metrics, figure-data exporters, and the exact bound oracle.

pub mod theorem;

use std::path::Path;

use crate::discriminator::{Discriminator, Latent};
use crate::envs::{EnvConfig, EnvInstance, Goal, StateVec};
use crate::error::{Error, Result};
use crate::perception::GoalCodec;
use crate::policy::SacAgent;
use crate::rng::SplitRng;

/// Distances are divided by the arena's bounding-box diagonal so scores are
/// comparable across environments of different physical size.
pub fn normalization_scale(bounds: (f64, f64, f64, f64)) -> f64 {
    let (x0, x1, y0, y1) = bounds;
    ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt()
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn goal_coord(goal: &Goal) -> Result<&[f64]> {
    goal.coordinate().ok_or_else(|| {
        Error::Unsupported("this metric compares coordinates; the goal has none".into())
    })
}

/// Final-state metric: mean over goals of L2(final state, goal) / scale.
/// A pure function of rollout data.
pub fn metric_static(finals: &[StateVec], goals: &[Goal], scale: f64) -> Result<f64> {
    if finals.len() != goals.len() || finals.is_empty() {
        return Err(Error::contract("one final state per goal required"));
    }
    let mut total = 0.0;
    for (s, g) in finals.iter().zip(goals.iter()) {
        let c = goal_coord(g)?;
        total += l2(c, &s[..c.len()]) / scale;
    }
    Ok(total / finals.len() as f64)
}

/// Trajectory-tracking metric: mean over time and goals of
/// L2(state after step t, goal issued at step t) / scale. `states[i]` holds
/// the post-step states of rollout i, aligned with `goal_seqs[i]`.
pub fn metric_dynamic(
    states: &[Vec<StateVec>],
    goal_seqs: &[Vec<Goal>],
    scale: f64,
) -> Result<f64> {
    if states.len() != goal_seqs.len() || states.is_empty() {
        return Err(Error::contract(
            "one state trajectory per goal sequence required",
        ));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (traj, goals) in states.iter().zip(goal_seqs.iter()) {
        if traj.len() != goals.len() {
            return Err(Error::contract(format!(
                "trajectory length {} does not match goal sequence length {}",
                traj.len(),
                goals.len()
            )));
        }
        for (s, g) in traj.iter().zip(goals.iter()) {
            let c = goal_coord(g)?;
            total += l2(c, &s[..c.len()]) / scale;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Plain distance between an exploration goal and an imitation final state.
pub fn delta_d(step_i_goal: &Goal, step_ii_final: &[f64]) -> Result<f64> {
    let c = goal_coord(step_i_goal)?;
    if c.len() > step_ii_final.len() {
        return Err(Error::shape(
            &[c.len()],
            &[step_ii_final.len()],
            "final state",
        ));
    }
    Ok(l2(c, &step_ii_final[..c.len()]))
}

/// Aggregate of one evaluation pass per seed.
#[derive(Clone, Debug)]
pub struct EvalReport {
    /// Normalized per-goal distances, pooled over seeds.
    pub per_goal: Vec<f64>,
    /// Mean per seed, in seed order.
    pub seed_means: Vec<f64>,
    pub mean: f64,
    /// Half-width of the 95% interval across seeds (1.96 * stderr).
    pub ci_half_width: f64,
    pub scale: f64,
    pub actor_steps: usize,
}

fn summarize(
    per_goal: Vec<f64>,
    seed_means: Vec<f64>,
    scale: f64,
    actor_steps: usize,
) -> EvalReport {
    let n = seed_means.len() as f64;
    let mean = seed_means.iter().sum::<f64>() / n;
    let ci_half_width = if seed_means.len() > 1 {
        let var = seed_means
            .iter()
            .map(|m| (m - mean) * (m - mean))
            .sum::<f64>()
            / (n - 1.0);
        1.96 * (var / n).sqrt()
    } else {
        0.0
    };
    EvalReport {
        per_goal,
        seed_means,
        mean,
        ci_half_width,
        scale,
        actor_steps,
    }
}

/// Roll the goal-conditioned policy deterministically against each goal,
/// once per seed, and report the normalized final distances. The condition
/// is the goal's codec embedding when a codec is given, else the raw goal.
pub fn evaluate_policy(
    policy: &SacAgent,
    codec: Option<&GoalCodec>,
    env_cfg: &EnvConfig,
    goals: &[Goal],
    seeds: &[u64],
    actor_steps: usize,
) -> Result<EvalReport> {
    if goals.is_empty() || seeds.is_empty() {
        return Err(Error::contract("evaluation needs goals and seeds"));
    }
    let scale = normalization_scale(env_cfg.bounds);
    let mut per_goal = Vec::with_capacity(goals.len() * seeds.len());
    let mut seed_means = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut env = EnvInstance::new(env_cfg.clone(), SplitRng::from_seed(seed))?;
        let mut rng = SplitRng::from_seed(seed).split("eval");
        let mut finals = Vec::with_capacity(goals.len());
        for goal in goals {
            let gvec = goal.to_vec();
            let cond = match codec {
                Some(c) => c.encode_mean(&gvec)?,
                None => gvec,
            };
            let mut state = env.reset(None)?;
            for _ in 0..env.spec().path_length {
                let action = policy.act(&state, &cond, true, &mut rng)?;
                state = env.step(&action)?.0;
            }
            finals.push(state);
        }
        let m = metric_static(&finals, goals, scale)?;
        for (s, g) in finals.iter().zip(goals.iter()) {
            let c = goal_coord(g)?;
            per_goal.push(l2(c, &s[..c.len()]) / scale);
        }
        seed_means.push(m);
    }
    Ok(summarize(per_goal, seed_means, scale, actor_steps))
}

/// Reward of one latent over a grid of hypothetical final positions.
#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap {
    pub bounds: (f64, f64, f64, f64),
    pub resolution: usize,
    /// Row-major, `resolution * resolution`, y outer, x inner.
    pub values: Vec<f64>,
}

impl Heatmap {
    pub fn cell_center(&self, ix: usize, iy: usize) -> (f64, f64) {
        let (x0, x1, y0, y1) = self.bounds;
        let r = self.resolution as f64;
        (
            x0 + (ix as f64 + 0.5) * (x1 - x0) / r,
            y0 + (iy as f64 + 0.5) * (y1 - y0) / r,
        )
    }

    /// Cell center with the highest reward.
    pub fn argmax(&self) -> (f64, f64) {
        let mut best = (0usize, f64::NEG_INFINITY);
        for (i, &v) in self.values.iter().enumerate() {
            if v > best.1 {
                best = (i, v);
            }
        }
        self.cell_center(best.0 % self.resolution, best.0 / self.resolution)
    }
}

/// Evaluate the imitation reward at every grid cell, treating the cell
/// center as the agent position (2-coordinate states only). The reward is
/// computed on the cell's perceptual relabeling, matching training; cells
/// without a percept score the chance-level reward of zero.
pub fn reward_heatmap(
    disc: &Discriminator,
    omega: &Latent,
    env_cfg: &EnvConfig,
    resolution: usize,
) -> Result<Heatmap> {
    if resolution == 0 {
        return Err(Error::contract("heatmap resolution must be positive"));
    }
    let env = EnvInstance::new(env_cfg.clone(), SplitRng::from_seed(0))?;
    if env.spec().state_dim != 2 {
        return Err(Error::Unsupported(
            "reward heatmaps require planar states".into(),
        ));
    }
    let mut values = Vec::with_capacity(resolution * resolution);
    let map = Heatmap {
        bounds: env_cfg.bounds,
        resolution,
        values: Vec::new(),
    };
    for iy in 0..resolution {
        for ix in 0..resolution {
            let (x, y) = map.cell_center(ix, iy);
            let value = match env.relabel(&[x, y]) {
                Ok(g) => disc.reward_theta(omega, &g.to_vec())?,
                Err(Error::Unlabelable) => 0.0,
                Err(e) => return Err(e),
            };
            values.push(value);
        }
    }
    Ok(Heatmap { values, ..map })
}

pub fn write_heatmap_csv(path: &Path, map: &Heatmap) -> Result<()> {
    let mut out = String::from("x,y,value\n");
    for iy in 0..map.resolution {
        for ix in 0..map.resolution {
            let (x, y) = map.cell_center(ix, iy);
            out.push_str(&format!(
                "{x},{y},{}\n",
                map.values[iy * map.resolution + ix]
            ));
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_heatmap_csv(path: &Path, bounds: (f64, f64, f64, f64)) -> Result<Heatmap> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next() != Some("x,y,value") {
        return Err(Error::contract("heatmap file is missing its header"));
    }
    let values: Vec<f64> = lines
        .map(|l| {
            l.rsplit(',')
                .next()
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::contract(format!("malformed heatmap row: {l}")))
        })
        .collect::<Result<_>>()?;
    let resolution = (values.len() as f64).sqrt() as usize;
    if resolution * resolution != values.len() {
        return Err(Error::contract("heatmap cell count is not square"));
    }
    Ok(Heatmap {
        bounds,
        resolution,
        values,
    })
}

/// Fraction of reachable cells touched by at least one goal.
#[derive(Clone, Debug)]
pub struct Coverage {
    pub resolution: usize,
    pub occupied: Vec<bool>,
    pub reachable_cells: usize,
    pub occupied_cells: usize,
    pub fraction: f64,
}

pub fn goal_coverage(goals: &[Goal], env_cfg: &EnvConfig, resolution: usize) -> Result<Coverage> {
    if resolution == 0 {
        return Err(Error::contract("coverage resolution must be positive"));
    }
    let (x0, x1, y0, y1) = env_cfg.bounds;
    let mut occupied = vec![false; resolution * resolution];
    // Reachable cells: centers inside the bounds and not strictly inside a
    // wall.
    let mut reachable = 0usize;
    let mut reachable_mask = vec![false; resolution * resolution];
    for iy in 0..resolution {
        for ix in 0..resolution {
            let x = x0 + (ix as f64 + 0.5) * (x1 - x0) / resolution as f64;
            let y = y0 + (iy as f64 + 0.5) * (y1 - y0) / resolution as f64;
            if !env_cfg.walls.iter().any(|w| w.contains(x, y)) {
                reachable_mask[iy * resolution + ix] = true;
                reachable += 1;
            }
        }
    }
    for g in goals {
        let c = goal_coord(g)?;
        let ix = (((c[0] - x0) / (x1 - x0) * resolution as f64) as isize)
            .clamp(0, resolution as isize - 1) as usize;
        let iy = (((c[1] - y0) / (y1 - y0) * resolution as f64) as isize)
            .clamp(0, resolution as isize - 1) as usize;
        if reachable_mask[iy * resolution + ix] {
            occupied[iy * resolution + ix] = true;
        }
    }
    let occupied_cells = occupied.iter().filter(|&&o| o).count();
    Ok(Coverage {
        resolution,
        occupied,
        reachable_cells: reachable,
        occupied_cells,
        fraction: occupied_cells as f64 / reachable as f64,
    })
}

pub fn write_coverage_csv(path: &Path, cov: &Coverage) -> Result<()> {
    let mut out = String::from("ix,iy,occupied\n");
    for iy in 0..cov.resolution {
        for ix in 0..cov.resolution {
            let o = cov.occupied[iy * cov.resolution + ix] as u8;
            out.push_str(&format!("{ix},{iy},{o}\n"));
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Latent embedding of each goal (posterior mean), one CSV row per goal:
/// goal components then embedding components.
pub fn write_embeddings_csv(path: &Path, codec: &GoalCodec, goals: &[Goal]) -> Result<()> {
    let mut header = Vec::new();
    for i in 0..codec.goal_dim() {
        header.push(format!("g{i}"));
    }
    for i in 0..codec.latent_dim() {
        header.push(format!("z{i}"));
    }
    let mut out = header.join(",");
    out.push('\n');
    for goal in goals {
        let gvec = goal.to_vec();
        let z = codec.encode_mean(&gvec)?;
        let row: Vec<String> = gvec
            .iter()
            .chain(z.iter())
            .map(|v| format!("{v}"))
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Minimal JSON run summary: the config hash plus flat numeric entries,
/// written with sorted keys so identical inputs give identical bytes.
pub fn write_run_summary(path: &Path, config_hash: u64, entries: &[(String, f64)]) -> Result<()> {
    let mut sorted: Vec<&(String, f64)> = entries.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    let mut out = String::from("{\n");
    out.push_str(&format!("  \"config_hash\": \"{config_hash:016x}\""));
    for (k, v) in sorted {
        out.push_str(&format!(",\n  \"{k}\": {v}"));
    }
    out.push_str("\n}\n");
    std::fs::write(path, out)?;
    Ok(())
}
