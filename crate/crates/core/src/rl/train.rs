//! Training drivers: the generic actor-critic loop shared by every variant,
//! the extraction and insertion trainers, the supervised and residual
//! baselines, and dataset collection from a trained extraction policy.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::env::{by_id, Env, ObjectPair};
use crate::rng::RandomStream;
use crate::sensors::pca::PcaModel;
use crate::types::{Action, Observation, Task, Trajectory, Transition};

use super::buffer::{HybridBuffer, Source, StoredTransition};
use super::envs::{PegEnvAdapter, PointGoal, ResidualWrap, RlEnv};
use super::featurize::{Feat, Featurizer};
use super::policy::{encoder_spec, Policy, SlPolicy};
use super::sac::{Losses, Sac, SacCfg};
use super::{LinearSchedule, RlError};

/// One logged training step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainRow {
    pub step: usize,
    pub episode: usize,
    pub reward: f64,
    pub critic1: f64,
    pub critic2: f64,
    pub actor: f64,
    pub alpha: f64,
    pub rho: f64,
    pub lambda: f64,
    pub success: u8,
}

/// Step-indexed training record, one row per environment step.
#[derive(Debug, Clone, Default)]
pub struct TrainLog {
    pub rows: Vec<TrainRow>,
}

impl TrainLog {
    pub const CSV_HEADER: &'static str =
        "step,episode,reward,critic1,critic2,actor,alpha,rho,lambda,success";

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.rows.len() * 64);
        out.push_str(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.step,
                r.episode,
                r.reward,
                r.critic1,
                r.critic2,
                r.actor,
                r.alpha,
                r.rho,
                r.lambda,
                r.success
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), RlError> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn from_csv(text: &str) -> Result<TrainLog, RlError> {
        let bad = |m: &str| RlError::BadLog(m.to_string());
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h == Self::CSV_HEADER => {}
            other => return Err(bad(&format!("unexpected header {other:?}"))),
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 10 {
                return Err(bad(&format!("row {i}: {} fields", f.len())));
            }
            let e = |m: String| RlError::BadLog(format!("row {i}: {m}"));
            rows.push(TrainRow {
                step: f[0].parse().map_err(|x| e(format!("step: {x}")))?,
                episode: f[1].parse().map_err(|x| e(format!("episode: {x}")))?,
                reward: f[2].parse().map_err(|x| e(format!("reward: {x}")))?,
                critic1: f[3].parse().map_err(|x| e(format!("critic1: {x}")))?,
                critic2: f[4].parse().map_err(|x| e(format!("critic2: {x}")))?,
                actor: f[5].parse().map_err(|x| e(format!("actor: {x}")))?,
                alpha: f[6].parse().map_err(|x| e(format!("alpha: {x}")))?,
                rho: f[7].parse().map_err(|x| e(format!("rho: {x}")))?,
                lambda: f[8].parse().map_err(|x| e(format!("lambda: {x}")))?,
                success: f[9].parse().map_err(|x| e(format!("success: {x}")))?,
            });
        }
        Ok(TrainLog { rows })
    }

    pub fn read_csv(path: &Path) -> Result<TrainLog, RlError> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }

    /// Mean step reward over the trailing fraction of the run.
    pub fn final_window_mean(&self, frac: f64) -> f64 {
        self.window_mean(1.0 - frac.clamp(0.0, 1.0), 1.0)
    }

    /// Mean step reward over the leading fraction of the run.
    pub fn initial_window_mean(&self, frac: f64) -> f64 {
        self.window_mean(0.0, frac.clamp(0.0, 1.0))
    }

    fn window_mean(&self, lo: f64, hi: f64) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        let n = self.rows.len();
        let a = ((lo * n as f64).floor() as usize).min(n - 1);
        let b = ((hi * n as f64).ceil() as usize).clamp(a + 1, n);
        let slice = &self.rows[a..b];
        slice.iter().map(|r| r.reward).sum::<f64>() / slice.len() as f64
    }

    /// Success fraction over the last `n` completed episodes.
    pub fn success_rate_last_episodes(&self, n: usize) -> f64 {
        let ends: Vec<u8> = self
            .rows
            .iter()
            .zip(self.rows.iter().skip(1).map(Some).chain([None]))
            .filter(|(r, next)| match next {
                Some(nx) => nx.episode != r.episode,
                None => false,
            })
            .map(|(r, _)| r.success)
            .collect();
        if ends.is_empty() {
            return 0.0;
        }
        let tail = &ends[ends.len().saturating_sub(n)..];
        tail.iter().map(|&s| s as usize).sum::<usize>() as f64 / tail.len() as f64
    }

    pub fn completed_episodes(&self) -> usize {
        let mut count = 0;
        for w in self.rows.windows(2) {
            if w[1].episode != w[0].episode {
                count += 1;
            }
        }
        count
    }
}

/// Core rollout-and-update loop. The same loop drives the extraction and
/// insertion trainers and all actor-critic baselines; variants differ only
/// in their buffers, schedules, and environments.
#[allow(clippy::too_many_arguments)]
pub fn train_sac_loop(
    env: &mut dyn RlEnv,
    agent: &mut Sac,
    buf: &mut HybridBuffer,
    rho: &LinearSchedule,
    lambda: &LinearSchedule,
    bc_per_episode: usize,
    steps: usize,
    start_steps: usize,
    stream: &mut RandomStream,
    diag_path: Option<&Path>,
) -> Result<TrainLog, RlError> {
    use rand::Rng;
    let bounds = env.action_bounds();
    let batch_size = agent.batch_size();
    let mut log = TrainLog::default();
    let mut cur = env.reset()?;
    let mut episode = 0usize;
    for t in 0..steps {
        let rho_t = rho.at(t);
        let lam_t = lambda.at(t);
        let a_env: [f64; 6] = if t < start_steps {
            let mut a = [0.0; 6];
            for (i, b) in bounds.iter().enumerate() {
                a[i] = stream.policy().gen_range(-b..*b);
            }
            a
        } else {
            agent.act_explore(&cur, stream.policy())?
        };
        let out = env.step(&a_env)?;
        buf.push_agent(StoredTransition {
            obs: cur.clone(),
            action: out.performed,
            reward: out.reward,
            next: out.feat.clone(),
            done: out.done,
            src: Source::Agent,
        });
        let mut losses = Losses::default();
        if t >= start_steps {
            let batch = buf.sample(batch_size, rho_t, stream.policy())?;
            losses = match agent.update(&batch, stream.policy()) {
                Ok(l) => l,
                Err(e) => {
                    if let Some(p) = diag_path {
                        let _ = agent.save_diagnostic(p);
                    }
                    return Err(e);
                }
            };
        }
        log.rows.push(TrainRow {
            step: t,
            episode,
            reward: out.reward,
            critic1: losses.critic1,
            critic2: losses.critic2,
            actor: losses.actor,
            alpha: agent.alpha(),
            rho: rho_t,
            lambda: lam_t,
            success: (out.done && out.success) as u8,
        });
        if out.done {
            episode += 1;
            if bc_per_episode > 0 && lam_t > 0.0 {
                for _ in 0..bc_per_episode {
                    let eb = buf.sample_expert(batch_size, stream.policy())?;
                    if let Err(e) = agent.bc_update(&eb, lam_t) {
                        if let Some(p) = diag_path {
                            let _ = agent.save_diagnostic(p);
                        }
                        return Err(e);
                    }
                }
            }
            cur = env.reset()?;
        } else {
            cur = out.feat;
        }
    }
    Ok(log)
}

/// A finished training run: the deployable policy and its step log.
pub struct Trained {
    pub policy: Policy,
    pub log: TrainLog,
}

pub fn resolve_objects(ids: &[String]) -> Result<Vec<ObjectPair>, RlError> {
    ids.iter().map(|id| by_id(id).map_err(RlError::from)).collect()
}

/// Extraction-policy trainer: standard buffer, no demonstrations.
pub fn train_pooh(cfg: &Config, seed: u64, pca: &PcaModel) -> Result<Trained, RlError> {
    let objects = resolve_objects(&cfg.objects_seen)?;
    let mut stream = RandomStream::new(seed);
    let env_seed = stream.derive(1).seed();
    let mut env =
        PegEnvAdapter::new(cfg, &objects, Task::Extract, env_seed, pca, false, false)?;
    let spec = encoder_spec(cfg, Featurizer::vec_dim(), Some((cfg.image_h, cfg.image_w)));
    let mut agent =
        Sac::new(&spec, &env.action_bounds(), SacCfg::from_config(cfg), stream.policy());
    let mut buf = HybridBuffer::new(cfg.buffer_capacity);
    let zero = LinearSchedule::constant(0.0);
    let log = train_sac_loop(
        &mut env,
        &mut agent,
        &mut buf,
        &zero,
        &zero,
        0,
        cfg.pooh_steps,
        cfg.start_steps,
        &mut stream,
        None,
    )?;
    let policy = Policy::Sac(agent.into_policy());
    Ok(Trained { policy, log })
}

/// Variant switches for the insertion trainer; the full method enables the
/// expert-mixed minibatches and the cloning refreshes.
#[derive(Debug, Clone, Copy)]
pub struct PihOptions {
    pub hybrid: bool,
    pub bc: bool,
    pub mask_vision: bool,
    pub mask_tactile: bool,
}

impl Default for PihOptions {
    fn default() -> PihOptions {
        PihOptions { hybrid: true, bc: true, mask_vision: false, mask_tactile: false }
    }
}

/// Converts raw demonstration trajectories into featurized expert storage,
/// sharing each boundary observation between adjacent transitions.
pub fn featurize_expert(
    cfg: &Config,
    pca: &PcaModel,
    trajs: &[Trajectory],
    mask_vision: bool,
    mask_tactile: bool,
) -> Vec<StoredTransition> {
    let fz = Featurizer::new(
        cfg.nominal_insert_pose(),
        pca.scales(),
        true,
        mask_vision,
        mask_tactile,
    );
    let mut out = Vec::new();
    for traj in trajs {
        let mut prev: Option<Feat> = None;
        for tr in &traj.transitions {
            let obs = prev.take().unwrap_or_else(|| fz.featurize(&tr.obs));
            let next = fz.featurize(&tr.next_obs);
            out.push(StoredTransition {
                obs,
                action: tr.action.0,
                reward: tr.reward,
                next: next.clone(),
                done: tr.done,
                src: Source::Expert,
            });
            prev = Some(next);
        }
    }
    out
}

/// Insertion-policy trainer over demonstrations produced by reversal.
pub fn train_pih(
    cfg: &Config,
    seed: u64,
    pca: &PcaModel,
    expert: &[Trajectory],
    opts: &PihOptions,
    diag_path: Option<&Path>,
) -> Result<Trained, RlError> {
    if expert.is_empty() {
        return Err(RlError::EmptyExpert);
    }
    let store = featurize_expert(cfg, pca, expert, opts.mask_vision, opts.mask_tactile);
    if store.is_empty() {
        return Err(RlError::EmptyExpert);
    }
    let objects = resolve_objects(&cfg.objects_seen)?;
    let mut stream = RandomStream::new(seed);
    let env_seed = stream.derive(2).seed();
    let mut env = PegEnvAdapter::new(
        cfg,
        &objects,
        Task::Insert,
        env_seed,
        pca,
        opts.mask_vision,
        opts.mask_tactile,
    )?;
    let spec = encoder_spec(cfg, Featurizer::vec_dim(), Some((cfg.image_h, cfg.image_w)));
    let mut agent =
        Sac::new(&spec, &env.action_bounds(), SacCfg::from_config(cfg), stream.policy());
    let mut buf = HybridBuffer::with_expert(cfg.buffer_capacity, store);
    let rho = if opts.hybrid {
        LinearSchedule::new(cfg.rho_start, cfg.rho_end, cfg.pih_steps)
    } else {
        LinearSchedule::constant(0.0)
    };
    let lambda = if opts.bc {
        LinearSchedule::new(cfg.bc_lambda_start, cfg.bc_lambda_end, cfg.pih_steps)
    } else {
        LinearSchedule::constant(0.0)
    };
    let bc_n = if opts.bc { cfg.bc_updates_per_episode } else { 0 };
    let log = train_sac_loop(
        &mut env,
        &mut agent,
        &mut buf,
        &rho,
        &lambda,
        bc_n,
        cfg.pih_steps,
        cfg.start_steps,
        &mut stream,
        diag_path,
    )?;
    let policy = Policy::Sac(agent.into_policy());
    Ok(Trained { policy, log })
}

/// Insertion from scratch: standard buffer, no demonstrations, no cloning.
pub fn train_direct(cfg: &Config, seed: u64, pca: &PcaModel) -> Result<Trained, RlError> {
    let objects = resolve_objects(&cfg.objects_seen)?;
    let mut stream = RandomStream::new(seed);
    let env_seed = stream.derive(2).seed();
    let mut env =
        PegEnvAdapter::new(cfg, &objects, Task::Insert, env_seed, pca, false, false)?;
    let spec = encoder_spec(cfg, Featurizer::vec_dim(), Some((cfg.image_h, cfg.image_w)));
    let mut agent =
        Sac::new(&spec, &env.action_bounds(), SacCfg::from_config(cfg), stream.policy());
    let mut buf = HybridBuffer::new(cfg.buffer_capacity);
    let zero = LinearSchedule::constant(0.0);
    let log = train_sac_loop(
        &mut env,
        &mut agent,
        &mut buf,
        &zero,
        &zero,
        0,
        cfg.pih_steps,
        cfg.start_steps,
        &mut stream,
        None,
    )?;
    let policy = Policy::Sac(agent.into_policy());
    Ok(Trained { policy, log })
}

/// Point-goal sanity trainer used to validate the actor-critic machinery in
/// isolation from contact physics.
pub fn train_point_goal(seed: u64, steps: usize) -> Result<TrainLog, RlError> {
    let mut stream = RandomStream::new(seed);
    let mut env = PointGoal::new(stream.derive(3).seed(), 50);
    let spec = crate::nn::encoder::EncoderSpec {
        image: None,
        vec_dim: 3,
        conv1: 2,
        conv2: 2,
        img_feat: 4,
        vec_hidden: 32,
        fusion_hidden: 64,
    };
    let c = SacCfg {
        gamma: 0.99,
        tau: 0.005,
        batch: 64,
        lr: 1e-3,
        alpha_init: 0.2,
        alpha_auto: true,
        reward_scale: 100.0,
        log_std_min: -5.0,
        log_std_max: 2.0,
    };
    let mut agent = Sac::new(&spec, &env.action_bounds(), c, stream.policy());
    let mut buf = HybridBuffer::new(100_000);
    let zero = LinearSchedule::constant(0.0);
    train_sac_loop(
        &mut env,
        &mut agent,
        &mut buf,
        &zero,
        &zero,
        0,
        steps,
        300,
        &mut stream,
        None,
    )
}

/// Supervised baseline: encoder plus linear head regressed onto expert
/// actions with full-batch steps. Examples are accumulated in a canonical
/// content order, so permuting the dataset cannot change the result.
pub fn train_sl(
    cfg: &Config,
    pca: &PcaModel,
    expert: &[Trajectory],
    seed: u64,
) -> Result<(SlPolicy, Vec<f64>), RlError> {
    if expert.is_empty() {
        return Err(RlError::EmptyExpert);
    }
    let store = featurize_expert(cfg, pca, expert, false, false);
    if store.is_empty() {
        return Err(RlError::EmptyExpert);
    }
    let bounds = Action::bounds();
    let mut examples: Vec<(Feat, Vec<f64>)> = store
        .into_iter()
        .map(|t| {
            let target: Vec<f64> = (0..6).map(|i| t.action[i] / bounds[i]).collect();
            (t.obs, target)
        })
        .collect();
    examples.sort_by_cached_key(|(f, target)| {
        let mut h = Sha256::new();
        for v in f.vec.iter() {
            h.update(v.to_le_bytes());
        }
        if let Some(img) = &f.img {
            for v in img.iter() {
                h.update(v.to_le_bytes());
            }
        }
        for v in target {
            h.update(v.to_le_bytes());
        }
        h.finalize().to_vec()
    });

    let mut sl = SlPolicy::new(cfg, Featurizer::vec_dim(), Some((cfg.image_h, cfg.image_w)), seed);
    let mut opt = crate::nn::Adam::new(cfg.sl_lr);
    let n = examples.len() as f64;
    let mut losses = Vec::with_capacity(cfg.sl_epochs);
    for _ in 0..cfg.sl_epochs {
        let mut loss = 0.0;
        for (feat, target) in &examples {
            let cache = sl.enc.forward(feat.img_slice(), &feat.vec)?;
            let mut y = Vec::new();
            sl.head.forward(&cache.feat, &mut y);
            let mut dy = vec![0.0; 6];
            for i in 0..6 {
                let e = y[i] - target[i];
                loss += e * e / (6.0 * n);
                dy[i] = 2.0 * e / (6.0 * n);
            }
            let mut dfeat = vec![0.0; sl.enc.out_dim()];
            sl.head.backward(&cache.feat, &dy, Some(&mut dfeat));
            sl.enc.backward(&cache, &dfeat);
        }
        if !loss.is_finite() {
            return Err(RlError::NonFinite { step: losses.len(), what: "regression loss".into() });
        }
        opt.step(&mut sl.params_mut())?;
        losses.push(loss);
    }
    Ok((sl, losses))
}

/// Residual baseline: the supervised policy stays frozen while an
/// actor-critic agent learns bounded corrections on top of it.
pub fn train_residual(
    cfg: &Config,
    seed: u64,
    pca: &PcaModel,
    sl: SlPolicy,
    diag_path: Option<&Path>,
) -> Result<Trained, RlError> {
    let objects = resolve_objects(&cfg.objects_seen)?;
    let mut stream = RandomStream::new(seed);
    let env_seed = stream.derive(2).seed();
    let inner =
        PegEnvAdapter::new(cfg, &objects, Task::Insert, env_seed, pca, false, false)?;
    let mut env = ResidualWrap::new(inner, sl, cfg.residual_scale);
    let spec = encoder_spec(cfg, Featurizer::vec_dim(), Some((cfg.image_h, cfg.image_w)));
    let mut agent =
        Sac::new(&spec, &env.action_bounds(), SacCfg::from_config(cfg), stream.policy());
    let mut buf = HybridBuffer::new(cfg.buffer_capacity);
    let zero = LinearSchedule::constant(0.0);
    let log = train_sac_loop(
        &mut env,
        &mut agent,
        &mut buf,
        &zero,
        &zero,
        0,
        cfg.pih_steps,
        cfg.start_steps,
        &mut stream,
        diag_path,
    )?;
    let (_, sl) = env.into_parts();
    let policy = Policy::Residual { sl, res: agent.into_policy() };
    Ok(Trained { policy, log })
}

/// Outcome counts from rolling out the extraction policy for demonstrations.
#[derive(Debug, Clone, Default)]
pub struct CollectStats {
    pub per_object: Vec<(String, usize, usize)>,
}

/// Rolls out a trained extraction policy deterministically and keeps
/// (by default) only successful episodes, up to the configured count per
/// object, giving up after the attempt cap.
pub fn collect_dataset(
    cfg: &Config,
    pca: &PcaModel,
    policy: &Policy,
    master_seed: u64,
) -> Result<(Vec<Trajectory>, CollectStats), RlError> {
    let objects = resolve_objects(&cfg.objects_seen)?;
    let base = RandomStream::new(master_seed);
    let mut trajs = Vec::new();
    let mut stats = CollectStats::default();
    for (oi, object) in objects.iter().enumerate() {
        let per_obj = base.derive(oi as u64);
        let mut kept = 0usize;
        let mut attempts = 0usize;
        let cap = cfg.expert_per_object * cfg.collect_max_attempts_factor.max(1);
        while kept < cfg.expert_per_object && attempts < cap {
            let env_seed = per_obj.derive(attempts as u64).seed();
            attempts += 1;
            let mut env =
                Env::with_pca(cfg.clone(), object.clone(), Task::Extract, env_seed, pca.clone())?;
            let first = env.reset()?;
            let fz = Featurizer::new(
                env.goal_agent().clone(),
                env.tactile_scales(),
                true,
                false,
                false,
            );
            let mut cur: Observation = first;
            let mut transitions: Vec<Transition> = Vec::new();
            let success = loop {
                let feat = fz.featurize(&cur);
                let a = policy.act(&feat)?;
                let cmd = Action::clip(&a)?;
                let out = env.step(&cmd)?;
                transitions.push(Transition {
                    obs: cur,
                    action: cmd,
                    reward: out.reward,
                    next_obs: out.obs.clone(),
                    done: out.done,
                    randomized: false,
                });
                cur = out.obs;
                if out.done {
                    break out.success;
                }
            };
            if success || !cfg.collect_only_success {
                trajs.push(Trajectory {
                    task: Task::Extract,
                    object_id: object.id.clone(),
                    seed: env_seed,
                    env_digest: cfg.digest(),
                    transitions,
                });
                kept += 1;
            }
        }
        stats.per_object.push((object.id.clone(), kept, attempts));
    }
    Ok((trajs, stats))
}
