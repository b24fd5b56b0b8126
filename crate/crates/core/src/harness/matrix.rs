//! Train-and-evaluate matrix over method variants and ablation cells.
//!
//! Every stage persists its artifact under the output directory and is keyed
//! by the configuration digest, so re-running a finished matrix loads
//! everything from disk and performs no training. Cells fail independently:
//! a broken cell-seed pair is recorded and the rest of the matrix continues.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::config::Config;
use crate::dataset::{read_dataset, write_dataset};
use crate::reversal::reverse_dataset_with;
use crate::rl::{
    collect_dataset, train_direct, train_pih, train_pooh, train_residual, train_sl,
    PihOptions, Policy, RlError, TrainLog,
};
use crate::rng::RandomStream;
use crate::sensors::pca::{calibrate, PcaModel};
use crate::types::{Task, Trajectory};

use super::evaluate::{evaluate, EvalReport};
use super::HarnessError;

/// Method selector for one matrix cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Ours,
    DirectRl,
    Sl,
    Residual,
}

/// One column of the matrix: a method plus its dataset and trainer switches.
#[derive(Debug, Clone)]
pub struct Cell {
    pub name: String,
    pub method: Method,
    /// Fraction of reversed demonstrations that receive action randomization.
    pub ratio: f64,
    pub opts: PihOptions,
}

impl Cell {
    pub fn new(name: &str, method: Method, ratio: f64, opts: PihOptions) -> Cell {
        Cell { name: name.to_string(), method, ratio, opts }
    }
}

/// The standard comparison set: the full method, its single-switch ablations,
/// and the three baselines.
pub fn standard_cells(cfg: &Config) -> Vec<Cell> {
    let r = cfg.randomized_fraction;
    let d = PihOptions::default();
    vec![
        Cell::new("ours", Method::Ours, r, d),
        Cell::new("ratio-0", Method::Ours, 0.0, d),
        Cell::new("no-hybrid", Method::Ours, r, PihOptions { hybrid: false, ..d }),
        Cell::new("no-bc", Method::Ours, r, PihOptions { bc: false, ..d }),
        Cell::new("no-vision", Method::Ours, r, PihOptions { mask_vision: true, ..d }),
        Cell::new("no-tactile", Method::Ours, r, PihOptions { mask_tactile: true, ..d }),
        Cell::new("direct_rl", Method::DirectRl, r, d),
        Cell::new("sl", Method::Sl, r, d),
        Cell::new("residual", Method::Residual, r, d),
    ]
}

/// Randomization-ratio sweep.
pub fn ratio_cells() -> Vec<Cell> {
    [0.0f64, 0.25, 0.5, 0.75, 1.0]
        .iter()
        .map(|&r| {
            let pct = (r * 100.0).round() as u32;
            Cell::new(&format!("ratio-{pct}"), Method::Ours, r, PihOptions::default())
        })
        .collect()
}

/// One trained-and-evaluated cell-seed pair.
#[derive(Debug, Clone)]
pub struct CellSeedResult {
    pub seed: u64,
    pub trials: usize,
    pub successes: usize,
    pub rate: f64,
    pub mean_max_force: f64,
    pub force_trials_used: usize,
    /// Mean step reward over the trailing window of the training log.
    pub final_reward: f64,
    /// False when the policy was loaded from a digest-matched checkpoint.
    pub trained_now: bool,
}

/// All seeds of one cell.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub cell: String,
    pub per_seed: Vec<CellSeedResult>,
    pub failures: Vec<String>,
    pub mean_rate: f64,
    pub mean_max_force: f64,
}

/// The full matrix outcome plus the extraction-phase reward summaries.
#[derive(Debug, Clone)]
pub struct MatrixReport {
    pub cells: Vec<CellResult>,
    /// Per seed: trailing-window mean reward of the extraction training run.
    pub pooh_final: Vec<(u64, f64)>,
}

impl MatrixReport {
    pub fn get(&self, name: &str) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.cell == name)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "cell,seed,trials,successes,rate,mean_max_force,force_trials_used,final_reward\n",
        );
        for c in &self.cells {
            for s in &c.per_seed {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    c.cell,
                    s.seed,
                    s.trials,
                    s.successes,
                    s.rate,
                    s.mean_max_force,
                    s.force_trials_used,
                    s.final_reward
                );
            }
            let _ = writeln!(
                out,
                "{},mean,,,{},{},,",
                c.cell, c.mean_rate, c.mean_max_force
            );
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<14} {:>9} {:>14} {:>8}", "cell", "mean rate", "mean max force", "seeds");
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{:<14} {:>9.3} {:>14.4} {:>8}",
                c.cell,
                c.mean_rate,
                c.mean_max_force,
                c.per_seed.len()
            );
            for f in &c.failures {
                let _ = writeln!(out, "  failure: {f}");
            }
        }
        if !self.pooh_final.is_empty() {
            let mean =
                self.pooh_final.iter().map(|(_, r)| r).sum::<f64>() / self.pooh_final.len() as f64;
            let _ = writeln!(out, "extraction final reward, seed mean: {mean:.4}");
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<(), HarnessError> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("matrix.csv"), self.to_csv())?;
        std::fs::write(dir.join("matrix.txt"), self.to_text())?;
        Ok(())
    }
}

/// Stage-seed salts for deriving independent random streams per pipeline
/// stage from the run seed. Public so the command-line tool reproduces the
/// same artifacts when a stage is invoked on its own.
pub const SALT_COLLECT: u64 = 10;
pub const SALT_REVERSE: u64 = 11;
pub const SALT_SL: u64 = 12;

/// On-disk pipeline around one output directory. All artifacts are keyed by
/// the configuration digest; a stale or missing artifact is rebuilt.
pub struct Pipeline<'a> {
    cfg: &'a Config,
    out: PathBuf,
    digest: String,
    pca: PcaModel,
}

impl<'a> Pipeline<'a> {
    pub fn new(cfg: &'a Config, out: &Path) -> Result<Pipeline<'a>, HarnessError> {
        std::fs::create_dir_all(out)?;
        let digest = cfg.digest();
        let pca_path = out.join("pca.txt");
        let sidecar = out.join("pca.digest");
        let pca = match (PcaModel::load(&pca_path), std::fs::read_to_string(&sidecar)) {
            (Ok(m), Ok(d)) if d.trim() == digest => m,
            _ => {
                let m = calibrate(cfg)?;
                m.save(&pca_path)?;
                std::fs::write(&sidecar, &digest)?;
                m
            }
        };
        Ok(Pipeline { cfg, out: out.to_path_buf(), digest, pca })
    }

    pub fn pca(&self) -> &PcaModel {
        &self.pca
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }

    pub fn seed_dir(&self, seed: u64) -> PathBuf {
        self.out.join(format!("seed-{seed}"))
    }

    fn load_policy(&self, path: &Path) -> Option<Policy> {
        match Policy::load(path, self.cfg) {
            Ok((p, meta)) if meta.cfg_digest == self.digest => Some(p),
            _ => None,
        }
    }

    fn load_traj(&self, path: &Path) -> Option<Vec<Trajectory>> {
        match read_dataset(path) {
            Ok(t) if !t.is_empty() && t.iter().all(|x| x.env_digest == self.digest) => Some(t),
            _ => None,
        }
    }

    /// Extraction policy for one seed, trained once and reused.
    /// Returns the policy, its trailing-window reward, and whether training
    /// ran just now.
    pub fn ensure_pooh(&self, seed: u64) -> Result<(Policy, f64, bool), HarnessError> {
        let dir = self.seed_dir(seed);
        std::fs::create_dir_all(&dir)?;
        let ckpt = dir.join("pooh.ckpt");
        let log_path = dir.join("pooh-log.csv");
        if let Some(p) = self.load_policy(&ckpt) {
            let log = TrainLog::read_csv(&log_path)?;
            return Ok((p, log.final_window_mean(self.cfg.final_window_frac), false));
        }
        let trained = train_pooh(self.cfg, seed, &self.pca)?;
        trained.log.write_csv(&log_path)?;
        let meta = crate::rl::peg_meta(self.cfg, trained.policy.kind(), false, false);
        trained.policy.save(&ckpt, &meta)?;
        let fin = trained.log.final_window_mean(self.cfg.final_window_frac);
        Ok((trained.policy, fin, true))
    }

    /// Raw extraction demonstrations for one seed.
    pub fn ensure_raw(&self, seed: u64) -> Result<Vec<Trajectory>, HarnessError> {
        let dir = self.seed_dir(seed);
        let path = dir.join("raw.ds");
        if let Some(t) = self.load_traj(&path) {
            return Ok(t);
        }
        let (pooh, _, _) = self.ensure_pooh(seed)?;
        let master = RandomStream::new(seed).derive(SALT_COLLECT).seed();
        let (trajs, stats) = collect_dataset(self.cfg, &self.pca, &pooh, master)?;
        if trajs.is_empty() {
            return Err(HarnessError::Rl(RlError::EmptyExpert));
        }
        write_dataset(&trajs, &path)?;
        let mut note = String::new();
        for (id, kept, attempts) in &stats.per_object {
            let _ = writeln!(note, "{id}: kept {kept} of {attempts} attempts");
        }
        std::fs::write(dir.join("collect.txt"), note)?;
        Ok(trajs)
    }

    /// Reversed (insertion) demonstrations at one randomization ratio.
    pub fn ensure_expert(&self, seed: u64, ratio: f64) -> Result<Vec<Trajectory>, HarnessError> {
        let pct = (ratio * 100.0).round() as u32;
        let path = self.seed_dir(seed).join(format!("expert-r{pct}.ds"));
        if let Some(t) = self.load_traj(&path) {
            return Ok(t);
        }
        let raw = self.ensure_raw(seed)?;
        let master = RandomStream::new(seed).derive(SALT_REVERSE).derive(pct as u64).seed();
        let (rev, _stats) = reverse_dataset_with(&raw, self.cfg, &self.pca, ratio, master)?;
        if rev.is_empty() {
            return Err(HarnessError::Rl(RlError::EmptyExpert));
        }
        write_dataset(&rev, &path)?;
        Ok(rev)
    }

    /// Frozen supervised policy for one seed and ratio, shared by the `sl`
    /// and `residual` cells.
    pub fn ensure_sl(&self, seed: u64, ratio: f64) -> Result<(Policy, bool), HarnessError> {
        let pct = (ratio * 100.0).round() as u32;
        let ckpt = self.seed_dir(seed).join(format!("sl-r{pct}.ckpt"));
        if let Some(p) = self.load_policy(&ckpt) {
            return Ok((p, false));
        }
        let expert = self.ensure_expert(seed, ratio)?;
        let sl_seed = RandomStream::new(seed).derive(SALT_SL).seed();
        let (sl, _losses) = train_sl(self.cfg, &self.pca, &expert, sl_seed)?;
        let policy = Policy::Sl(sl);
        let meta = crate::rl::peg_meta(self.cfg, policy.kind(), false, false);
        policy.save(&ckpt, &meta)?;
        Ok((policy, true))
    }

    /// Trains (or loads) one cell for one seed and returns the policy, the
    /// trailing-window training reward, and whether any training ran.
    pub fn ensure_cell_policy(
        &self,
        cell: &Cell,
        seed: u64,
    ) -> Result<(Policy, f64, bool), HarnessError> {
        let dir = self.seed_dir(seed).join(format!("cell-{}", cell.name));
        std::fs::create_dir_all(&dir)?;
        let ckpt = dir.join("policy.ckpt");
        let log_path = dir.join("log.csv");
        if let Some(p) = self.load_policy(&ckpt) {
            let fin = if log_path.exists() {
                TrainLog::read_csv(&log_path)?.final_window_mean(self.cfg.final_window_frac)
            } else {
                0.0
            };
            return Ok((p, fin, false));
        }
        let diag = dir.join("diagnostic.ckpt");
        let trained = match cell.method {
            Method::Ours => {
                let expert = self.ensure_expert(seed, cell.ratio)?;
                train_pih(self.cfg, seed, &self.pca, &expert, &cell.opts, Some(&diag))?
            }
            Method::DirectRl => train_direct(self.cfg, seed, &self.pca)?,
            Method::Sl => {
                let (policy, trained_now) = self.ensure_sl(seed, cell.ratio)?;
                let meta = crate::rl::peg_meta(self.cfg, policy.kind(), false, false);
                policy.save(&ckpt, &meta)?;
                return Ok((policy, 0.0, trained_now));
            }
            Method::Residual => {
                let (sl_policy, _) = self.ensure_sl(seed, cell.ratio)?;
                let sl = match sl_policy {
                    Policy::Sl(s) => s,
                    _ => unreachable!("sl artifact holds an sl policy"),
                };
                train_residual(self.cfg, seed, &self.pca, sl, Some(&diag))?
            }
        };
        trained.log.write_csv(&log_path)?;
        let meta = crate::rl::peg_meta(
            self.cfg,
            trained.policy.kind(),
            cell.opts.mask_vision,
            cell.opts.mask_tactile,
        );
        trained.policy.save(&ckpt, &meta)?;
        let fin = trained.log.final_window_mean(self.cfg.final_window_frac);
        Ok((trained.policy, fin, true))
    }

    /// Runs one cell-seed pair end to end and writes the evaluation files.
    pub fn run_cell_seed(
        &self,
        cell: &Cell,
        seed: u64,
    ) -> Result<(EvalReport, CellSeedResult), HarnessError> {
        let (policy, final_reward, trained_now) = self.ensure_cell_policy(cell, seed)?;
        let objects = crate::rl::resolve_objects(&self.cfg.objects_seen)
            .map_err(HarnessError::Rl)?;
        let report = evaluate(
            self.cfg,
            &self.pca,
            &objects,
            Task::Insert,
            &policy,
            cell.opts.mask_vision,
            cell.opts.mask_tactile,
        )?;
        let dir = self.seed_dir(seed).join(format!("cell-{}", cell.name));
        report.write(&dir, "eval")?;
        let result = CellSeedResult {
            seed,
            trials: report.total_trials,
            successes: report.total_successes,
            rate: report.rate,
            mean_max_force: report.mean_max_force,
            force_trials_used: report.force_trials_used,
            final_reward,
            trained_now,
        };
        Ok((report, result))
    }
}

/// Runs every cell over every configured seed. Cell-seed failures are
/// recorded in the report and do not stop the matrix.
pub fn run_ablation_matrix(
    cfg: &Config,
    cells: &[Cell],
    out: &Path,
) -> Result<MatrixReport, HarnessError> {
    let pipe = Pipeline::new(cfg, out)?;
    let mut pooh_final = Vec::new();
    let needs_expert = cells.iter().any(|c| c.method != Method::DirectRl);
    if needs_expert {
        for &seed in &cfg.seeds {
            match pipe.ensure_pooh(seed) {
                Ok((_, fin, _)) => pooh_final.push((seed, fin)),
                Err(e) => {
                    // Cells depending on this seed will re-trigger and record
                    // the failure themselves.
                    let _ = e;
                }
            }
        }
    }
    let mut results = Vec::new();
    for cell in cells {
        let mut per_seed = Vec::new();
        let mut failures = Vec::new();
        for &seed in &cfg.seeds {
            match pipe.run_cell_seed(cell, seed) {
                Ok((_, r)) => per_seed.push(r),
                Err(e) => failures.push(format!("seed {seed}: {e}")),
            }
        }
        let n = per_seed.len().max(1) as f64;
        let mean_rate = per_seed.iter().map(|r| r.rate).sum::<f64>() / n;
        let mean_force = per_seed.iter().map(|r| r.mean_max_force).sum::<f64>() / n;
        results.push(CellResult {
            cell: cell.name.clone(),
            per_seed,
            failures,
            mean_rate,
            mean_max_force: mean_force,
        });
    }
    let report = MatrixReport { cells: results, pooh_final };
    report.write(out)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::serialize_trajectory;

    fn tiny_cfg() -> Config {
        let mut cfg = Config::default();
        cfg.image_h = 16;
        cfg.image_w = 16;
        cfg.aa_samples = 1;
        cfg.calib_frames = 300;
        cfg.pooh_steps = 260;
        cfg.pih_steps = 260;
        cfg.start_steps = 120;
        cfg.batch_size = 16;
        cfg.expert_per_object = 2;
        cfg.trials_per_object = 2;
        cfg.episode_len = 30;
        // A 260-step extraction policy cannot be expected to succeed; keep
        // whatever it produced so the pipeline mechanics stay testable.
        cfg.collect_only_success = false;
        cfg.seeds = vec![0];
        cfg.objects_seen = vec!["cube".into()];
        cfg.clearance = 0.002;
        cfg.conv_channels1 = 4;
        cfg.conv_channels2 = 4;
        cfg.img_feat = 16;
        cfg.vec_hidden = 16;
        cfg.fusion_hidden = 32;
        cfg.sl_epochs = 10;
        cfg
    }

    #[test]
    fn matrix_trains_then_resumes_without_training() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_cfg();
        let cells = vec![Cell::new(
            "direct_rl",
            Method::DirectRl,
            cfg.randomized_fraction,
            PihOptions::default(),
        )];
        let first = run_ablation_matrix(&cfg, &cells, dir.path()).unwrap();
        assert_eq!(first.cells.len(), 1);
        let c = &first.cells[0];
        assert!(c.failures.is_empty(), "{:?}", c.failures);
        assert_eq!(c.per_seed.len(), 1);
        assert!(c.per_seed[0].trained_now);
        assert_eq!(c.per_seed[0].trials, 2);

        let second = run_ablation_matrix(&cfg, &cells, dir.path()).unwrap();
        let c2 = &second.cells[0];
        assert!(!c2.per_seed[0].trained_now, "resume retrained");
        assert_eq!(c2.per_seed[0].rate, c.per_seed[0].rate);
        assert!(dir.path().join("matrix.csv").exists());
        assert!(dir.path().join("matrix.txt").exists());
    }

    #[test]
    fn failed_cells_are_recorded_and_the_matrix_continues() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_cfg();
        // Zero demonstrations per object starves every expert-driven cell.
        cfg.expert_per_object = 0;
        let cells = vec![
            Cell::new("sl", Method::Sl, 0.5, PihOptions::default()),
            Cell::new("direct_rl", Method::DirectRl, 0.5, PihOptions::default()),
        ];
        let report = run_ablation_matrix(&cfg, &cells, dir.path()).unwrap();
        let sl = report.get("sl").unwrap();
        assert_eq!(sl.per_seed.len(), 0);
        assert_eq!(sl.failures.len(), 1);
        let direct = report.get("direct_rl").unwrap();
        assert!(direct.failures.is_empty(), "{:?}", direct.failures);
        assert_eq!(direct.per_seed.len(), 1);
    }

    #[test]
    fn zero_ratio_reversal_is_byte_identical_regardless_of_cell_name() {
        // The unrandomized cell is the ratio-0 cell by definition: the same
        // reversal call with the same draws must produce the same bytes.
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_cfg();
        let pipe = Pipeline::new(&cfg, dir.path()).unwrap();
        let a = pipe.ensure_expert(0, 0.0).unwrap();
        let master = RandomStream::new(0).derive(SALT_REVERSE).derive(0).seed();
        let raw = pipe.ensure_raw(0).unwrap();
        let (b, _) = reverse_dataset_with(&raw, &cfg, pipe.pca(), 0.0, master).unwrap();
        let ser = |ts: &[Trajectory]| {
            let mut buf = Vec::new();
            for t in ts {
                serialize_trajectory(t, &mut buf).unwrap();
            }
            buf
        };
        assert_eq!(ser(&a), ser(&b));
        assert!(a.iter().all(|t| t.transitions.iter().all(|x| !x.randomized)));
    }

    #[test]
    fn cell_constructors_cover_the_comparison_set() {
        let cfg = Config::default();
        let names: Vec<String> =
            standard_cells(&cfg).into_iter().map(|c| c.name).collect();
        for want in
            ["ours", "ratio-0", "no-hybrid", "no-bc", "no-vision", "no-tactile", "direct_rl", "sl", "residual"]
        {
            assert!(names.iter().any(|n| n == want), "missing {want}");
        }
        let ratios: Vec<String> = ratio_cells().into_iter().map(|c| c.name).collect();
        assert_eq!(ratios, vec!["ratio-0", "ratio-25", "ratio-50", "ratio-75", "ratio-100"]);
    }
}
