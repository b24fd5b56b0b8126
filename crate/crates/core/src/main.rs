//! Command-line front end for the peg-transfer laboratory. Every subcommand
//! is a thin wrapper over library calls; artifacts land under the output
//! directory in the same digest-keyed layout the ablation matrix uses, so
//! stages invoked by hand and stages run by `ablate` share their caches.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use peglab::config::Config;
use peglab::dataset::{read_dataset, write_dataset};
use peglab::harness::{
    evaluate, ratio_cells, run_ablation_matrix, standard_cells, Pipeline, SALT_REVERSE,
};
use peglab::nn::gradcheck_all;
use peglab::reversal::reverse_dataset_with;
use peglab::rl::{peg_meta, resolve_objects, train_pih, train_residual, PihOptions, Policy};
use peglab::rng::RandomStream;
use peglab::sensors::pca::calibrate;
use peglab::types::Task;

#[derive(Parser)]
#[command(name = "peglab", about = "Desk-scale peg insertion and extraction laboratory")]
struct Cli {
    /// Configuration file (flat key = value lines); defaults apply when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Run seed for single-run subcommands.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Output directory for artifacts and reports.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Pin the run to the deterministic single-threaded path.
    #[arg(long, global = true)]
    deterministic: bool,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train the extraction policy for the run seed.
    TrainPooh {
        /// Override the extraction training budget, environment steps.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Roll the extraction policy out into a demonstration dataset.
    Collect {
        /// Checkpoint to roll out; defaults to this seed's extraction policy,
        /// training it first if missing.
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Output dataset; defaults to seed-<seed>/raw.ds.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Reverse an extraction dataset into insertion demonstrations.
    Reverse {
        /// Input dataset; defaults to seed-<seed>/raw.ds.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Output dataset; defaults to seed-<seed>/expert-r<pct>.ds.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Fraction of reversed trajectories that receive a poke pair;
        /// defaults to the configured randomized_fraction.
        #[arg(long)]
        ratio: Option<f64>,
    },
    /// Train the insertion policy from demonstrations plus environment steps.
    TrainPih(TrainPihArgs),
    /// Train one of the comparison baselines.
    Baseline {
        #[command(subcommand)]
        which: BaselineCmd,
    },
    /// Evaluate a policy checkpoint over repeated trials.
    Eval {
        /// Checkpoint to evaluate; defaults to seed-<seed>/pih.ckpt.
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Object set to evaluate on.
        #[arg(long, value_enum, default_value_t = ObjectSet::Seen)]
        objects: ObjectSet,
        /// Task to evaluate.
        #[arg(long, value_enum, default_value_t = TaskArg::Insert)]
        task: TaskArg,
    },
    /// Train and evaluate the full comparison matrix over all configured seeds.
    Ablate {
        /// Sweep randomization ratios instead of the standard method cells.
        #[arg(long)]
        ratios: bool,
    },
    /// Fit the tactile feature model and persist it.
    CalibrateTactile,
    /// Compare analytic gradients against central finite differences.
    Gradcheck,
}

#[derive(Args)]
struct TrainPihArgs {
    /// Demonstration dataset; defaults to this seed's reversed dataset,
    /// building it (and its prerequisites) if missing.
    #[arg(long)]
    expert: Option<PathBuf>,
    /// Override the insertion training budget, environment steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Disable expert draws in replay minibatches.
    #[arg(long)]
    no_hybrid: bool,
    /// Disable the behavior-cloning auxiliary updates.
    #[arg(long)]
    no_bc: bool,
    /// Zero the camera input.
    #[arg(long)]
    no_vision: bool,
    /// Zero the tactile input.
    #[arg(long)]
    no_tactile: bool,
}

#[derive(Subcommand)]
enum BaselineCmd {
    /// Insertion policy trained from scratch, no demonstrations.
    Direct {
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Supervised policy regressed onto the demonstration actions.
    Sl,
    /// Learned correction on top of the frozen supervised policy.
    Residual {
        #[arg(long)]
        steps: Option<usize>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ObjectSet {
    Seen,
    Unseen,
    All,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TaskArg {
    Insert,
    Extract,
}

fn main() {
    if let Err(e) = run() {
        eprintln!("peglab: {e:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    let mut cfg = match &cli.config {
        Some(p) => Config::from_file(p).with_context(|| format!("loading {}", p.display()))?,
        None => Config::default(),
    };
    if cli.deterministic {
        cfg.deterministic = true;
    }
    let seed = cli.seed;
    let out = cli.out.clone();

    match cli.cmd {
        Cmd::TrainPooh { steps } => {
            if let Some(s) = steps {
                cfg.pooh_steps = s;
            }
            let pipe = Pipeline::new(&cfg, &out)?;
            let (_, final_reward, trained_now) = pipe.ensure_pooh(seed)?;
            let verb = if trained_now { "trained" } else { "loaded" };
            println!(
                "{verb} extraction policy, seed {seed}: final window reward {final_reward:.4}"
            );
            println!("checkpoint: {}", pipe.seed_dir(seed).join("pooh.ckpt").display());
        }
        Cmd::Collect { policy, output } => {
            let pipe = Pipeline::new(&cfg, &out)?;
            let trajs = match policy {
                None => pipe.ensure_raw(seed)?,
                Some(ckpt) => {
                    let (p, _) = Policy::load(&ckpt, &cfg)
                        .with_context(|| format!("loading {}", ckpt.display()))?;
                    let master =
                        RandomStream::new(seed).derive(peglab::harness::SALT_COLLECT).seed();
                    let (trajs, stats) =
                        peglab::rl::collect_dataset(&cfg, pipe.pca(), &p, master)?;
                    for (id, kept, attempts) in &stats.per_object {
                        println!("{id}: kept {kept} of {attempts} attempts");
                    }
                    let path = match output {
                        Some(p) => p,
                        None => {
                            std::fs::create_dir_all(pipe.seed_dir(seed))?;
                            pipe.seed_dir(seed).join("raw.ds")
                        }
                    };
                    write_dataset(&trajs, &path)?;
                    println!("dataset: {}", path.display());
                    return Ok(());
                }
            };
            println!(
                "collected {} extraction trajectories: {}",
                trajs.len(),
                pipe.seed_dir(seed).join("raw.ds").display()
            );
        }
        Cmd::Reverse { input, output, ratio } => {
            let pipe = Pipeline::new(&cfg, &out)?;
            let ratio = ratio.unwrap_or(cfg.randomized_fraction);
            if !(0.0..=1.0).contains(&ratio) {
                bail!("--ratio must be in [0, 1]");
            }
            let pct = (ratio * 100.0).round() as u32;
            let input = input.unwrap_or_else(|| pipe.seed_dir(seed).join("raw.ds"));
            let raw = read_dataset(&input)
                .with_context(|| format!("reading {}", input.display()))?;
            let master = RandomStream::new(seed).derive(SALT_REVERSE).derive(pct as u64).seed();
            let (rev, stats) = reverse_dataset_with(&raw, &cfg, pipe.pca(), ratio, master)?;
            let path =
                output.unwrap_or_else(|| pipe.seed_dir(seed).join(format!("expert-r{pct}.ds")));
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir)?;
            }
            write_dataset(&rev, &path)?;
            println!(
                "input {}, randomized {}, fallback {}, dropped {}",
                stats.input, stats.randomized, stats.fallback, stats.dropped
            );
            println!("dataset: {}", path.display());
        }
        Cmd::TrainPih(args) => {
            if let Some(s) = args.steps {
                cfg.pih_steps = s;
            }
            let pipe = Pipeline::new(&cfg, &out)?;
            let expert = match &args.expert {
                Some(p) => {
                    read_dataset(p).with_context(|| format!("reading {}", p.display()))?
                }
                None => pipe.ensure_expert(seed, cfg.randomized_fraction)?,
            };
            let opts = PihOptions {
                hybrid: !args.no_hybrid,
                bc: !args.no_bc,
                mask_vision: args.no_vision,
                mask_tactile: args.no_tactile,
            };
            let dir = pipe.seed_dir(seed);
            std::fs::create_dir_all(&dir)?;
            let diag = dir.join("pih-diagnostic.ckpt");
            let trained = train_pih(&cfg, seed, pipe.pca(), &expert, &opts, Some(&diag))?;
            finish_training(&cfg, &dir, "pih", trained, opts.mask_vision, opts.mask_tactile)?;
        }
        Cmd::Baseline { which } => {
            match which {
                BaselineCmd::Direct { steps } => {
                    if let Some(s) = steps {
                        cfg.pih_steps = s;
                    }
                    let pipe = Pipeline::new(&cfg, &out)?;
                    let dir = pipe.seed_dir(seed);
                    std::fs::create_dir_all(&dir)?;
                    let trained = peglab::rl::train_direct(&cfg, seed, pipe.pca())?;
                    finish_training(&cfg, &dir, "direct", trained, false, false)?;
                }
                BaselineCmd::Sl => {
                    let pipe = Pipeline::new(&cfg, &out)?;
                    let (_, trained_now) = pipe.ensure_sl(seed, cfg.randomized_fraction)?;
                    let pct = (cfg.randomized_fraction * 100.0).round() as u32;
                    let verb = if trained_now { "trained" } else { "loaded" };
                    println!(
                        "{verb} supervised policy: {}",
                        pipe.seed_dir(seed).join(format!("sl-r{pct}.ckpt")).display()
                    );
                }
                BaselineCmd::Residual { steps } => {
                    if let Some(s) = steps {
                        cfg.pih_steps = s;
                    }
                    let pipe = Pipeline::new(&cfg, &out)?;
                    let (sl_policy, _) = pipe.ensure_sl(seed, cfg.randomized_fraction)?;
                    let sl = match sl_policy {
                        Policy::Sl(s) => s,
                        _ => unreachable!("sl artifact holds a supervised policy"),
                    };
                    let dir = pipe.seed_dir(seed);
                    let diag = dir.join("residual-diagnostic.ckpt");
                    let trained =
                        train_residual(&cfg, seed, pipe.pca(), sl, Some(&diag))?;
                    finish_training(&cfg, &dir, "residual", trained, false, false)?;
                }
            };
        }
        Cmd::Eval { policy, objects, task } => {
            let pipe = Pipeline::new(&cfg, &out)?;
            let ckpt = policy.unwrap_or_else(|| pipe.seed_dir(seed).join("pih.ckpt"));
            let (p, meta) = Policy::load(&ckpt, &cfg)
                .with_context(|| format!("loading {}", ckpt.display()))?;
            let ids: Vec<String> = match objects {
                ObjectSet::Seen => cfg.objects_seen.clone(),
                ObjectSet::Unseen => cfg.objects_unseen.clone(),
                ObjectSet::All => {
                    let mut v = cfg.objects_seen.clone();
                    v.extend(cfg.objects_unseen.iter().cloned());
                    v
                }
            };
            let pairs = resolve_objects(&ids)?;
            let task = match task {
                TaskArg::Insert => Task::Insert,
                TaskArg::Extract => Task::Extract,
            };
            let report = evaluate(
                &cfg,
                pipe.pca(),
                &pairs,
                task,
                &p,
                meta.mask_vision,
                meta.mask_tactile,
            )?;
            let set = match objects {
                ObjectSet::Seen => "seen",
                ObjectSet::Unseen => "unseen",
                ObjectSet::All => "all",
            };
            let dir = pipe.seed_dir(seed).join(format!("eval-{set}"));
            report.write(&dir, "eval")?;
            print!("{}", report.to_text());
            println!("reports under: {}", dir.display());
        }
        Cmd::Ablate { ratios } => {
            let cells = if ratios { ratio_cells() } else { standard_cells(&cfg) };
            let report = run_ablation_matrix(&cfg, &cells, &out)?;
            print!("{}", report.to_text());
            println!("reports under: {}", out.display());
        }
        Cmd::CalibrateTactile => {
            std::fs::create_dir_all(&out)?;
            let model = calibrate(&cfg)?;
            let path = out.join("pca.txt");
            model.save(&path)?;
            std::fs::write(out.join("pca.digest"), cfg.digest())?;
            let total: f64 = model.explained.iter().sum();
            let lead: f64 = model.explained.iter().take(3).sum();
            println!(
                "fit {} components over {} raw dims; top 3 carry {:.1}% of captured variance",
                model.output_dim(),
                model.input_dim(),
                100.0 * lead / total
            );
            println!("model: {}", path.display());
        }
        Cmd::Gradcheck => {
            let mut worst = 0.0f64;
            for (name, err) in gradcheck_all(seed) {
                println!("{name:<22} max relative error {err:.3e}");
                worst = worst.max(err);
            }
            if worst >= 1e-4 {
                bail!("gradient check failed: worst relative error {worst:.3e}");
            }
            println!("all layer gradients within 1e-4 of finite differences");
        }
    }
    Ok(())
}

/// Persists a finished training run: TrainLog CSV next to the checkpoint.
fn finish_training(
    cfg: &Config,
    dir: &Path,
    stem: &str,
    trained: peglab::rl::Trained,
    mask_vision: bool,
    mask_tactile: bool,
) -> Result<()> {
    let log_path = dir.join(format!("{stem}-log.csv"));
    let ckpt = dir.join(format!("{stem}.ckpt"));
    trained.log.write_csv(&log_path)?;
    let meta = peg_meta(cfg, trained.policy.kind(), mask_vision, mask_tactile);
    trained.policy.save(&ckpt, &meta)?;
    let fin = trained.log.final_window_mean(cfg.final_window_frac);
    println!(
        "trained over {} steps, {} episodes: final window reward {fin:.4}",
        trained.log.rows.len(),
        trained.log.completed_episodes()
    );
    println!("checkpoint: {}", ckpt.display());
    println!("log: {}", log_path.display());
    Ok(())
}
