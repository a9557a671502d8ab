//! Exact-enumeration check of the imagined-vs-true performance bound.
//!
//! On a fully enumerable MDP with a deterministic exploration policy and a
//! bijective relabeling, every quantity in the bound
//! `eta_hat - eta <= 2 * R_max * sqrt(eps / 2)` can be computed in closed
//! form by summing over the joint tables; no sampling, no tolerance games.

use crate::error::{Error, Result};

/// A finite deterministic MDP small enough to enumerate exactly.
#[derive(Clone, Debug)]
pub struct TinyMdp {
    pub n_states: usize,
    pub n_actions: usize,
    /// `next[s][a]` - total and deterministic.
    pub next: Vec<Vec<usize>>,
    pub horizon: usize,
    /// Bijection on states: goal index of state s.
    pub relabel: Vec<usize>,
    pub initial_state: usize,
    pub n_latents: usize,
    /// Latent prior, length `n_latents`.
    pub p_omega: Vec<f64>,
}

impl TinyMdp {
    pub fn validate(&self) -> Result<()> {
        if self.n_states == 0 || self.n_states > 200 {
            return Err(Error::contract("state count must be in 1..=200"));
        }
        if self.n_actions == 0 || self.n_actions > 5 {
            return Err(Error::contract("action count must be in 1..=5"));
        }
        if self.n_latents == 0 || self.n_latents > 8 {
            return Err(Error::contract("latent support must be in 1..=8"));
        }
        if self.initial_state >= self.n_states {
            return Err(Error::contract("initial state out of range"));
        }
        if self.next.len() != self.n_states
            || self.next.iter().any(|row| row.len() != self.n_actions)
        {
            return Err(Error::contract("transition table must be total"));
        }
        if self.next.iter().flatten().any(|&s| s >= self.n_states) {
            return Err(Error::contract("transition target out of range"));
        }
        if self.relabel.len() != self.n_states {
            return Err(Error::contract("relabel table must cover every state"));
        }
        let mut seen = vec![false; self.n_states];
        for &g in &self.relabel {
            if g >= self.n_states || seen[g] {
                return Err(Error::contract("relabel table must be a bijection"));
            }
            seen[g] = true;
        }
        if self.p_omega.len() != self.n_latents
            || self.p_omega.iter().any(|&p| p < 0.0)
            || (self.p_omega.iter().sum::<f64>() - 1.0).abs() > 1e-12
        {
            return Err(Error::contract("latent prior must be a distribution"));
        }
        Ok(())
    }
}

/// Deterministic latent-conditioned policy: `action[omega][state]`.
#[derive(Clone, Debug)]
pub struct MuTable {
    pub action: Vec<Vec<usize>>,
}

impl MuTable {
    /// Build from per-(latent, state) action distributions, rejecting any
    /// row that is not a point mass. The bound's assumptions require a
    /// deterministic exploration policy.
    pub fn from_distributions(dists: &[Vec<Vec<f64>>]) -> Result<MuTable> {
        let mut action = Vec::with_capacity(dists.len());
        for per_state in dists {
            let mut row = Vec::with_capacity(per_state.len());
            for d in per_state {
                let ones = d.iter().filter(|&&p| p == 1.0).count();
                let zeros = d.iter().filter(|&&p| p == 0.0).count();
                if ones != 1 || ones + zeros != d.len() {
                    return Err(Error::contract(
                        "the exploration policy must be deterministic for the exact bound",
                    ));
                }
                row.push(d.iter().position(|&p| p == 1.0).unwrap());
            }
            action.push(row);
        }
        Ok(MuTable { action })
    }
}

/// Stochastic goal-conditioned policy: `probs[goal][state]` is a
/// distribution over actions.
#[derive(Clone, Debug)]
pub struct ThetaTable {
    pub probs: Vec<Vec<Vec<f64>>>,
}

impl ThetaTable {
    pub fn validate(&self, mdp: &TinyMdp) -> Result<()> {
        if self.probs.len() != mdp.n_states {
            return Err(Error::contract("the imitator needs a row per goal"));
        }
        for per_state in &self.probs {
            if per_state.len() != mdp.n_states {
                return Err(Error::contract("the imitator needs a row per state"));
            }
            for d in per_state {
                if d.len() != mdp.n_actions
                    || d.iter().any(|&p| p < 0.0)
                    || (d.iter().sum::<f64>() - 1.0).abs() > 1e-12
                {
                    return Err(Error::contract("action rows must be distributions"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TheoremReport {
    /// True performance: mutual information between goal and final state
    /// when goals come from the test prior.
    pub eta: f64,
    /// Imagined performance: mutual information between latent and final
    /// state under the training model.
    pub eta_hat: f64,
    /// Expected divergence of the exploration-reached states from the test
    /// prior. With a deterministic explorer each term is -log p'(s(omega)).
    pub epsilon: f64,
    /// Largest reward magnitude over either model's support.
    pub r_max: f64,
    /// 2 * R_max * sqrt(epsilon / 2).
    pub bound: f64,
    /// eta_hat - eta; the bound asserts gap <= bound.
    pub gap: f64,
}

impl TheoremReport {
    pub fn holds(&self) -> bool {
        self.gap <= self.bound + 1e-12
    }
}

/// Final state of the deterministic explorer under each latent.
fn mu_final_states(mdp: &TinyMdp, mu: &MuTable) -> Vec<usize> {
    (0..mdp.n_latents)
        .map(|w| {
            let mut s = mdp.initial_state;
            for _ in 0..mdp.horizon {
                s = mdp.next[s][mu.action[w][s]];
            }
            s
        })
        .collect()
}

/// Exact distribution of the imitator's final state under goal g.
fn theta_final_dist(mdp: &TinyMdp, theta: &ThetaTable, g: usize) -> Vec<f64> {
    let mut p = vec![0.0; mdp.n_states];
    p[mdp.initial_state] = 1.0;
    for _ in 0..mdp.horizon {
        let mut q = vec![0.0; mdp.n_states];
        for s in 0..mdp.n_states {
            if p[s] == 0.0 {
                continue;
            }
            for a in 0..mdp.n_actions {
                q[mdp.next[s][a]] += p[s] * theta.probs[g][s][a];
            }
        }
        p = q;
    }
    p
}

/// The training goal marginal: push the latent prior through the explorer
/// and the relabeling.
pub fn matched_prior(mdp: &TinyMdp, mu: &MuTable) -> Result<Vec<f64>> {
    mdp.validate()?;
    let finals = mu_final_states(mdp, mu);
    let mut p = vec![0.0; mdp.n_states];
    for (w, &s) in finals.iter().enumerate() {
        p[mdp.relabel[s]] += mdp.p_omega[w];
    }
    Ok(p)
}

/// Mutual information of a joint table by direct summation,
/// sum p(x,y) log(p(x,y) / (p(x) p(y))). Kept deliberately independent of
/// the posterior-based computation below as a cross-check.
pub fn mutual_information_direct(joint: &[Vec<f64>]) -> f64 {
    let rows = joint.len();
    let cols = joint.first().map_or(0, Vec::len);
    let px: Vec<f64> = joint.iter().map(|r| r.iter().sum()).collect();
    let py: Vec<f64> = (0..cols)
        .map(|j| joint.iter().map(|r| r[j]).sum())
        .collect();
    let mut mi = 0.0;
    for i in 0..rows {
        for j in 0..cols {
            let p = joint[i][j];
            if p > 0.0 {
                mi += p * (p / (px[i] * py[j])).ln();
            }
        }
    }
    mi
}

/// Expected log posterior-to-prior ratio over a joint table: the same
/// mutual information computed through the reward decomposition
/// E[log p(x|y) - log p(x)].
fn mi_via_posterior(joint: &[Vec<f64>]) -> f64 {
    let cols = joint.first().map_or(0, Vec::len);
    let px: Vec<f64> = joint.iter().map(|r| r.iter().sum()).collect();
    let py: Vec<f64> = (0..cols)
        .map(|j| joint.iter().map(|r| r[j]).sum())
        .collect();
    let mut total = 0.0;
    for (i, row) in joint.iter().enumerate() {
        for (j, &p) in row.iter().enumerate() {
            if p > 0.0 {
                let posterior = p / py[j];
                total += p * (posterior.ln() - px[i].ln());
            }
        }
    }
    total
}

/// Exact evaluation of every quantity in the performance bound.
///
/// Training model: omega ~ p(omega); the deterministic explorer reaches
/// s(omega); its relabeled goal conditions the imitator, whose final-state
/// distribution is enumerated by forward dynamic programming. Test model:
/// goals drawn from `prior_goal` condition the same imitator.
pub fn theorem_oracle(
    mdp: &TinyMdp,
    mu: &MuTable,
    theta: &ThetaTable,
    prior_goal: &[f64],
) -> Result<TheoremReport> {
    mdp.validate()?;
    theta.validate(mdp)?;
    if mu.action.len() != mdp.n_latents
        || mu.action.iter().any(|r| r.len() != mdp.n_states)
        || mu.action.iter().flatten().any(|&a| a >= mdp.n_actions)
    {
        return Err(Error::contract("explorer table shape mismatch"));
    }
    if prior_goal.len() != mdp.n_states
        || prior_goal.iter().any(|&p| p < 0.0)
        || (prior_goal.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(Error::contract(
            "the goal prior must be a distribution over goals",
        ));
    }

    let finals = mu_final_states(mdp, mu);
    let train_goals: Vec<usize> = finals.iter().map(|&s| mdp.relabel[s]).collect();
    let final_dists: Vec<Vec<f64>> = (0..mdp.n_states)
        .map(|g| theta_final_dist(mdp, theta, g))
        .collect();

    // Training joint over (omega, final state).
    let joint_model: Vec<Vec<f64>> = (0..mdp.n_latents)
        .map(|w| {
            final_dists[train_goals[w]]
                .iter()
                .map(|&p| p * mdp.p_omega[w])
                .collect()
        })
        .collect();
    let eta_hat = mi_via_posterior(&joint_model);

    // Test joint over (goal, final state).
    let joint_prior: Vec<Vec<f64>> = (0..mdp.n_states)
        .map(|g| final_dists[g].iter().map(|&p| p * prior_goal[g]).collect())
        .collect();
    let eta = mi_via_posterior(&joint_prior);

    // Deterministic explorer: each KL term collapses to -log p'(s(omega)),
    // expressed through the bijective relabeling.
    let mut epsilon = 0.0;
    for (w, &g) in train_goals.iter().enumerate() {
        if mdp.p_omega[w] == 0.0 {
            continue;
        }
        if prior_goal[g] == 0.0 {
            return Err(Error::contract(
                "the goal prior must support every goal the explorer reaches",
            ));
        }
        epsilon += mdp.p_omega[w] * (-prior_goal[g].ln());
    }

    // Largest reward magnitude across both models' supports.
    let mut r_max: f64 = 0.0;
    for (joint, marginal) in [
        (&joint_prior, prior_goal.to_vec()),
        (&joint_model, {
            let mut p = vec![0.0; mdp.n_latents];
            p.copy_from_slice(&mdp.p_omega);
            p
        }),
    ] {
        let cols = joint.first().map_or(0, Vec::len);
        let py: Vec<f64> = (0..cols)
            .map(|j| joint.iter().map(|r| r[j]).sum())
            .collect();
        for (i, row) in joint.iter().enumerate() {
            for (j, &p) in row.iter().enumerate() {
                if p > 0.0 {
                    let reward = (p / py[j]).ln() - marginal[i].ln();
                    r_max = r_max.max(reward.abs());
                }
            }
        }
    }

    let bound = 2.0 * r_max * (epsilon / 2.0).sqrt();
    Ok(TheoremReport {
        eta,
        eta_hat,
        epsilon,
        r_max,
        bound,
        gap: eta_hat - eta,
    })
}

/// Cross-check value: the imagined performance recomputed by the direct
/// mutual-information summation on the same joint table.
pub fn eta_hat_direct(mdp: &TinyMdp, mu: &MuTable, theta: &ThetaTable) -> Result<f64> {
    mdp.validate()?;
    theta.validate(mdp)?;
    let finals = mu_final_states(mdp, mu);
    let joint: Vec<Vec<f64>> = (0..mdp.n_latents)
        .map(|w| {
            theta_final_dist(mdp, theta, mdp.relabel[finals[w]])
                .iter()
                .map(|&p| p * mdp.p_omega[w])
                .collect()
        })
        .collect();
    Ok(mutual_information_direct(&joint))
}
