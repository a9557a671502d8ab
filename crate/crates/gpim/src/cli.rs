//! Command-line surface: experiment orchestration, persistence, export.
//!
//! Every run leaves a self-describing directory behind: the exact config
//! text, its hash, the seed list, the source revision, the metric log, and
//! checkpoints. A rerun of `train` on an existing run directory resumes from
//! the latest checkpoint and is bit-identical to an uninterrupted run.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::analysis::theorem::{theorem_oracle, MuTable, ThetaTable, TinyMdp};
use crate::analysis::{
    goal_coverage, reward_heatmap, write_embeddings_csv, write_heatmap_csv, write_run_summary,
};
use crate::baselines::train_baseline;
use crate::config::{parse_config, ExperimentConfig, Method};
use crate::discriminator::{Latent, LatentSpec};
use crate::envs::EnvInstance;
use crate::error::{Error, Result};
use crate::rng::SplitRng;
use crate::trainer::{sample_reachable_goal, write_metrics, Trainer};

#[derive(Parser)]
#[command(
    name = "gpim",
    about = "Goal-conditioned policies from self-generated goals"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Override the config's seed list with a single seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run (or resume) training for every configured seed.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Stop after this many additional cycles (checkpoint and exit).
        #[arg(long)]
        max_cycles: Option<usize>,
        /// Run seeds on parallel threads instead of sequentially.
        #[arg(long)]
        parallel: bool,
    },
    /// Evaluate a checkpoint against freshly sampled goals.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Summary output path (JSON).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export the imitation reward of one skill over a position grid.
    Heatmap {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Skill: an index for discrete spaces, comma-separated coordinates
        /// for continuous ones.
        #[arg(long, default_value = "0")]
        skill: String,
        /// Grid resolution per axis.
        #[arg(long, default_value_t = 50)]
        grid: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample reachable goals and report their state-space coverage.
    Goals {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Coverage grid resolution per axis.
        #[arg(long, default_value_t = 10)]
        grid: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Verify the performance bound by exact enumeration on small MDPs.
    TheoryCheck {
        /// Number of randomized instances beyond the fixed fixtures.
        #[arg(long, default_value_t = 100)]
        instances: usize,
        /// Optional CSV report of per-instance margins.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Export goal embeddings and a run summary from a checkpoint.
    Export {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Output directory for the exported files.
        #[arg(long)]
        out: PathBuf,
    },
}

/// Entry point used by the binary. Parses arguments from the process.
pub fn run() -> Result<()> {
    let cli = Cli::parse();
    dispatch(cli)
}

/// Testable entry point.
pub fn run_from<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::ConfigGeneral(e.to_string()))?;
    dispatch(cli)
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            cfg,
            out,
            max_cycles,
            parallel,
        } => {
            let mut exp = load_config(&cfg)?;
            if let Some(dir) = out {
                exp.output_dir = dir;
            }
            cmd_train(&exp, max_cycles, parallel)
        }
        Command::Eval {
            cfg,
            checkpoint,
            out,
        } => {
            let exp = load_config(&cfg)?;
            cmd_eval(&exp, &checkpoint, out.as_deref())
        }
        Command::Heatmap {
            cfg,
            checkpoint,
            skill,
            grid,
            out,
        } => {
            let exp = load_config(&cfg)?;
            cmd_heatmap(&exp, &checkpoint, &skill, grid, &out)
        }
        Command::Goals { cfg, grid, out } => {
            let exp = load_config(&cfg)?;
            cmd_goals(&exp, grid, &out)
        }
        Command::TheoryCheck {
            instances,
            out,
            seed,
        } => cmd_theory_check(instances, seed, out.as_deref()),
        Command::Export {
            cfg,
            checkpoint,
            out,
        } => {
            let exp = load_config(&cfg)?;
            cmd_export(&exp, &checkpoint, &out)
        }
    }
}

fn load_config(args: &ConfigArgs) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(&args.config)?;
    let mut cfg = parse_config(&text)?;
    if let Some(seed) = args.seed {
        cfg.seeds = vec![seed];
    }
    Ok(cfg)
}

fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .unwrap_or_else(|| "unknown".to_string())
}

fn write_run_manifest(run_dir: &Path, cfg: &ExperimentConfig) -> Result<()> {
    fs::create_dir_all(run_dir)?;
    fs::write(run_dir.join("config.ini"), cfg.serialize())?;
    fs::write(
        run_dir.join("config_hash.txt"),
        format!("{:016x}\n", cfg.fingerprint()),
    )?;
    let seeds: Vec<String> = cfg.seeds.iter().map(|s| s.to_string()).collect();
    fs::write(run_dir.join("seeds.txt"), format!("{}\n", seeds.join(" ")))?;
    fs::write(run_dir.join("git.txt"), format!("{}\n", git_describe()))?;
    Ok(())
}

/// Refuse to reuse a run directory whose recorded config differs.
fn check_snapshot(run_dir: &Path, cfg: &ExperimentConfig) -> Result<()> {
    let path = run_dir.join("config_hash.txt");
    if !path.exists() {
        return Ok(());
    }
    let recorded = fs::read_to_string(&path)?;
    let current = format!("{:016x}", cfg.fingerprint());
    if recorded.trim() != current {
        return Err(Error::ConfigGeneral(format!(
            "run directory {} was created with a different configuration",
            run_dir.display()
        )));
    }
    Ok(())
}

fn train_one_seed(cfg: &ExperimentConfig, seed: u64, max_cycles: Option<usize>) -> Result<()> {
    let run_dir = cfg.output_dir.join(format!("run-{seed}"));
    check_snapshot(&run_dir, cfg)?;
    write_run_manifest(&run_dir, cfg)?;
    if cfg.method != Method::Gpim {
        let rows = train_baseline(cfg.to_baseline_config(seed)?, &run_dir)?;
        log::info!("seed {seed}: {} baseline rows", rows.len());
        return Ok(());
    }
    let tcfg = cfg.to_train_config(seed);
    let ck = run_dir.join("checkpoint.bin");
    let mut trainer = if ck.exists() {
        Trainer::resume(tcfg, &ck)?
    } else {
        let t = Trainer::new(tcfg)?;
        t.save(&run_dir.join("checkpoint-initial.bin"))?;
        t
    };
    let stop = max_cycles.map_or(cfg.cycles, |m| cfg.cycles.min(trainer.cycle() + m));
    while trainer.cycle() < stop {
        trainer.run_cycle()?;
    }
    write_metrics(&run_dir.join("metrics.csv"), trainer.metrics())?;
    trainer.save(&ck)?;
    log::info!(
        "seed {seed}: cycle {}/{} ({} actor steps)",
        trainer.cycle(),
        cfg.cycles,
        trainer.actor_steps()
    );
    Ok(())
}

fn cmd_train(cfg: &ExperimentConfig, max_cycles: Option<usize>, parallel: bool) -> Result<()> {
    cfg.validate()?;
    if parallel {
        std::thread::scope(|scope| {
            let handles: Vec<_> = cfg
                .seeds
                .iter()
                .map(|&seed| scope.spawn(move || train_one_seed(cfg, seed, max_cycles)))
                .collect();
            for h in handles {
                h.join()
                    .map_err(|_| Error::contract("a training thread panicked"))??;
            }
            Ok(())
        })
    } else {
        for &seed in &cfg.seeds {
            train_one_seed(cfg, seed, max_cycles)?;
        }
        Ok(())
    }
}

fn cmd_eval(cfg: &ExperimentConfig, checkpoint: &Path, out: Option<&Path>) -> Result<()> {
    if cfg.method != Method::Gpim {
        return Err(Error::Unsupported(
            "checkpoint evaluation covers the main method".into(),
        ));
    }
    let seed = cfg.seeds[0];
    let mut trainer = Trainer::resume(cfg.to_train_config(seed), checkpoint)?;
    let dist = trainer.evaluate()?;
    println!("dist_final = {dist}");
    if let Some(path) = out {
        write_run_summary(
            path,
            cfg.fingerprint(),
            &[
                ("dist_final".to_string(), dist),
                ("cycle".to_string(), trainer.cycle() as f64),
                ("actor_steps".to_string(), trainer.actor_steps() as f64),
            ],
        )?;
    }
    Ok(())
}

fn parse_skill(spec: LatentSpec, text: &str) -> Result<Latent> {
    match spec {
        LatentSpec::DiscreteOneHot(k) => {
            let i: usize = text
                .parse()
                .map_err(|_| Error::ConfigGeneral(format!("`{text}` is not a skill index")))?;
            if i >= k {
                return Err(Error::ConfigGeneral(format!(
                    "skill index {i} out of range 0..{k}"
                )));
            }
            Ok(Latent::Index(i))
        }
        LatentSpec::ContinuousBox(d) => {
            let v: Vec<f64> = text
                .split(',')
                .map(|p| {
                    p.trim().parse().map_err(|_| {
                        Error::ConfigGeneral(format!("`{p}` is not a skill coordinate"))
                    })
                })
                .collect::<Result<_>>()?;
            if v.len() != d {
                return Err(Error::ConfigGeneral(format!(
                    "the skill space has {d} dimensions, got {}",
                    v.len()
                )));
            }
            Ok(Latent::Vector(v))
        }
    }
}

fn cmd_heatmap(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    skill: &str,
    grid: usize,
    out: &Path,
) -> Result<()> {
    let seed = cfg.seeds[0];
    let trainer = Trainer::resume(cfg.to_train_config(seed), checkpoint)?;
    let omega = parse_skill(cfg.latent, skill)?;
    let env_cfg = crate::envs::EnvConfig::defaults(cfg.env);
    let map = reward_heatmap(trainer.discriminator(), &omega, &env_cfg, grid)?;
    write_heatmap_csv(out, &map)?;
    let (x, y) = map.argmax();
    println!("argmax = ({x}, {y})");
    Ok(())
}

fn cmd_goals(cfg: &ExperimentConfig, grid: usize, out: &Path) -> Result<()> {
    let seed = cfg.seeds[0];
    let env_cfg = crate::envs::EnvConfig::defaults(cfg.env);
    let root = SplitRng::from_seed(seed);
    let mut env = EnvInstance::new(env_cfg.clone(), root.split("goal_env"))?;
    let mut rng = root.split("goal_sample");
    let mut goals = Vec::with_capacity(cfg.eval_goals);
    for _ in 0..cfg.eval_goals {
        goals.push(sample_reachable_goal(&mut env, &mut rng)?);
    }
    let mut text = String::from("goal\n");
    for g in &goals {
        let row: Vec<String> = g.to_vec().iter().map(|v| v.to_string()).collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    fs::write(out, text)?;
    if goals.iter().all(|g| g.coordinate().is_some()) {
        let cov = goal_coverage(&goals, &env_cfg, grid)?;
        println!(
            "coverage = {} ({}/{} cells)",
            cov.fraction, cov.occupied_cells, cov.reachable_cells
        );
    } else {
        println!("coverage = n/a (non-coordinate goals)");
    }
    Ok(())
}

fn random_distribution(rng: &mut SplitRng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.uniform(0.1, 1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

fn random_theorem_instance(rng: &mut SplitRng) -> (TinyMdp, MuTable, ThetaTable, Vec<f64>) {
    let n = 4 + rng.gen_range(12);
    let na = 2 + rng.gen_range(3);
    let k = 2 + rng.gen_range(4);
    let mdp = TinyMdp {
        n_states: n,
        n_actions: na,
        next: (0..n)
            .map(|_| (0..na).map(|_| rng.gen_range(n)).collect())
            .collect(),
        horizon: 1 + rng.gen_range(4),
        relabel: rng.sample_indices(n, n),
        initial_state: rng.gen_range(n),
        n_latents: k,
        p_omega: random_distribution(rng, k),
    };
    let mu = MuTable {
        action: (0..k)
            .map(|_| (0..n).map(|_| rng.gen_range(na)).collect())
            .collect(),
    };
    let theta = ThetaTable {
        probs: (0..n)
            .map(|_| (0..n).map(|_| random_distribution(rng, na)).collect())
            .collect(),
    };
    let prior = random_distribution(rng, n);
    (mdp, mu, theta, prior)
}

fn cmd_theory_check(instances: usize, seed: u64, out: Option<&Path>) -> Result<()> {
    let mut rng = SplitRng::from_seed(seed);
    let mut rows = String::from("instance,eta,eta_hat,epsilon,r_max,bound,gap,margin\n");
    let mut violations = 0usize;
    // Fixture: a matched-prior instance must close the gap entirely.
    {
        let ring = TinyMdp {
            n_states: 6,
            n_actions: 3,
            next: (0..6).map(|s| vec![s, (s + 1) % 6, (s + 5) % 6]).collect(),
            horizon: 4,
            relabel: (0..6).collect(),
            initial_state: 0,
            n_latents: 3,
            p_omega: vec![1.0 / 3.0; 3],
        };
        let mu = MuTable {
            action: (0..3)
                .map(|w| (0..6).map(|s| usize::from(s < w)).collect())
                .collect(),
        };
        let theta = ThetaTable {
            probs: (0..6)
                .map(|g| {
                    (0..6)
                        .map(|s| {
                            if s == g {
                                vec![1.0, 0.0, 0.0]
                            } else {
                                vec![0.2, 0.8, 0.0]
                            }
                        })
                        .collect()
                })
                .collect(),
        };
        let prior = crate::analysis::theorem::matched_prior(&ring, &mu)?;
        let r = theorem_oracle(&ring, &mu, &theta, &prior)?;
        if r.gap.abs() > 1e-9 || !r.holds() {
            violations += 1;
        }
        rows.push_str(&format!(
            "matched,{},{},{},{},{},{},{}\n",
            r.eta,
            r.eta_hat,
            r.epsilon,
            r.r_max,
            r.bound,
            r.gap,
            r.bound - r.gap
        ));
        println!("matched: gap {} (bound {})", r.gap, r.bound);
    }
    for i in 0..instances {
        let (mdp, mu, theta, prior) = random_theorem_instance(&mut rng);
        let r = theorem_oracle(&mdp, &mu, &theta, &prior)?;
        if !r.holds() {
            violations += 1;
            println!("instance {i}: VIOLATION gap {} > bound {}", r.gap, r.bound);
        }
        rows.push_str(&format!(
            "{i},{},{},{},{},{},{},{}\n",
            r.eta,
            r.eta_hat,
            r.epsilon,
            r.r_max,
            r.bound,
            r.gap,
            r.bound - r.gap
        ));
    }
    println!(
        "checked {} instances, {violations} violations",
        instances + 1
    );
    if let Some(path) = out {
        fs::write(path, rows)?;
    }
    if violations > 0 {
        return Err(Error::contract(format!("{violations} bound violations")));
    }
    Ok(())
}

fn cmd_export(cfg: &ExperimentConfig, checkpoint: &Path, out: &Path) -> Result<()> {
    let seed = cfg.seeds[0];
    let trainer = Trainer::resume(cfg.to_train_config(seed), checkpoint)?;
    fs::create_dir_all(out)?;
    let env_cfg = crate::envs::EnvConfig::defaults(cfg.env);
    let root = SplitRng::from_seed(seed);
    let mut env = EnvInstance::new(env_cfg, root.split("export_env"))?;
    let mut rng = root.split("export");
    let goals: Vec<_> = (0..cfg.eval_goals)
        .map(|_| sample_reachable_goal(&mut env, &mut rng))
        .collect::<Result<_>>()?;
    write_embeddings_csv(&out.join("embeddings.csv"), trainer.codec(), &goals)?;
    write_run_summary(
        &out.join("summary.json"),
        cfg.fingerprint(),
        &[
            ("cycle".to_string(), trainer.cycle() as f64),
            ("actor_steps".to_string(), trainer.actor_steps() as f64),
            ("goals_exported".to_string(), goals.len() as f64),
        ],
    )?;
    Ok(())
}

/// Logging level from `GPIM_LOG_LEVEL` (error, info, debug; default error).
pub fn init_logging() {
    let level = match std::env::var("GPIM_LOG_LEVEL").as_deref() {
        Ok("debug") => "debug",
        Ok("info") => "info",
        _ => "error",
    };
    let _ = env_logger::Builder::new().parse_filters(level).try_init();
}
