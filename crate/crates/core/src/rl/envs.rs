//! Environment adapters behind one training-facing trait. Policies see
//! featurized observations and act in environment units; adapters quantize,
//! step the simulator, and report the performed command so replay storage
//! matches what actually happened.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::config::Config;
use crate::env::{Env, ObjectPair};
use crate::rng::RandomStream;
use crate::sensors::pca::PcaModel;
use crate::types::{Action, Task};

use super::featurize::{Feat, Featurizer, POS_SCALE};
use super::policy::SlPolicy;
use super::RlError;

/// One environment step as the trainer consumes it.
#[derive(Debug, Clone)]
pub struct StepF {
    pub feat: Feat,
    /// Command actually executed, environment units. For residual agents this
    /// is the residual component, not the composite.
    pub performed: [f64; 6],
    pub reward: f64,
    pub done: bool,
    pub success: bool,
    /// Total contact reaction magnitude during the step.
    pub contact_mag: f64,
}

pub trait RlEnv {
    fn vec_dim(&self) -> usize;
    fn img_hw(&self) -> Option<(usize, usize)>;
    /// Per-component positive action half-widths, environment units.
    fn action_bounds(&self) -> Vec<f64>;
    fn reset(&mut self) -> Result<Feat, RlError>;
    fn step(&mut self, a: &[f64]) -> Result<StepF, RlError>;
}

/// Peg environments round-robined per episode over an object set, featurized
/// with the agent-visible goal and optional modality masks.
pub struct PegEnvAdapter {
    envs: Vec<Env>,
    feats: Vec<Featurizer>,
    cur: usize,
    episode: usize,
    img_hw: (usize, usize),
}

impl PegEnvAdapter {
    pub fn new(
        cfg: &Config,
        objects: &[ObjectPair],
        task: Task,
        seed: u64,
        pca: &PcaModel,
        mask_vision: bool,
        mask_tactile: bool,
    ) -> Result<PegEnvAdapter, RlError> {
        assert!(!objects.is_empty(), "adapter needs at least one object");
        let base = RandomStream::new(seed);
        let mut envs = Vec::with_capacity(objects.len());
        let mut feats = Vec::with_capacity(objects.len());
        for (i, obj) in objects.iter().enumerate() {
            let env_seed = base.derive(i as u64).seed();
            let env = Env::with_pca(cfg.clone(), obj.clone(), task, env_seed, pca.clone())?;
            let fz = Featurizer::new(
                env.goal_agent().clone(),
                env.tactile_scales(),
                true,
                mask_vision,
                mask_tactile,
            );
            envs.push(env);
            feats.push(fz);
        }
        let img_hw = (cfg.image_h, cfg.image_w);
        Ok(PegEnvAdapter { envs, feats, cur: 0, episode: 0, img_hw })
    }

    /// Fixed-seed single-environment adapter for evaluation trials.
    pub fn for_trial(
        cfg: &Config,
        object: &ObjectPair,
        task: Task,
        seed: u64,
        pca: &PcaModel,
        mask_vision: bool,
        mask_tactile: bool,
    ) -> Result<PegEnvAdapter, RlError> {
        PegEnvAdapter::new(cfg, std::slice::from_ref(object), task, seed, pca, mask_vision, mask_tactile)
    }

    pub fn current_object(&self) -> &ObjectPair {
        self.envs[self.cur].object()
    }

    pub fn current_env(&self) -> &Env {
        &self.envs[self.cur]
    }
}

impl RlEnv for PegEnvAdapter {
    fn vec_dim(&self) -> usize {
        Featurizer::vec_dim()
    }

    fn img_hw(&self) -> Option<(usize, usize)> {
        Some(self.img_hw)
    }

    fn action_bounds(&self) -> Vec<f64> {
        Action::bounds().to_vec()
    }

    fn reset(&mut self) -> Result<Feat, RlError> {
        self.cur = self.episode % self.envs.len();
        self.episode += 1;
        let obs = self.envs[self.cur].reset()?;
        let goal = self.envs[self.cur].goal_agent().clone();
        self.feats[self.cur].set_goal(goal);
        Ok(self.feats[self.cur].featurize(&obs))
    }

    fn step(&mut self, a: &[f64]) -> Result<StepF, RlError> {
        let mut raw = [0.0; 6];
        raw.copy_from_slice(&a[..6]);
        let cmd = Action::clip(&raw)?;
        let out = self.envs[self.cur].step(&cmd)?;
        Ok(StepF {
            feat: self.feats[self.cur].featurize(&out.obs),
            performed: cmd.0,
            reward: out.reward,
            done: out.done,
            success: out.success,
            contact_mag: out.contact.magnitude(),
        })
    }
}

/// Contact-free 3-D point-to-goal task used as a trainer sanity check.
/// Observations are the scaled goal-relative offset; rewards are negative
/// squared distances, mirroring the peg tasks' shaping.
pub struct PointGoal {
    pos: [f64; 3],
    goal: [f64; 3],
    steps: usize,
    episode_len: usize,
    rng: ChaCha12Rng,
}

impl PointGoal {
    pub const BOUND: f64 = 0.02;
    pub const BOX_HALF: f64 = 0.1;
    pub const SUCCESS_R: f64 = 0.01;

    pub fn new(seed: u64, episode_len: usize) -> PointGoal {
        PointGoal {
            pos: [0.0; 3],
            goal: [0.0; 3],
            steps: 0,
            episode_len,
            rng: ChaCha12Rng::seed_from_u64(seed),
        }
    }

    fn feat(&self) -> Feat {
        let v: Vec<f64> =
            (0..3).map(|i| (self.pos[i] - self.goal[i]) / POS_SCALE).collect();
        Feat::from_vec(v)
    }

    fn dist(&self) -> f64 {
        (0..3)
            .map(|i| (self.pos[i] - self.goal[i]).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

impl RlEnv for PointGoal {
    fn vec_dim(&self) -> usize {
        3
    }

    fn img_hw(&self) -> Option<(usize, usize)> {
        None
    }

    fn action_bounds(&self) -> Vec<f64> {
        vec![Self::BOUND; 3]
    }

    fn reset(&mut self) -> Result<Feat, RlError> {
        let half = Self::BOX_HALF;
        loop {
            for i in 0..3 {
                self.pos[i] = self.rng.gen_range(-half..half);
                self.goal[i] = self.rng.gen_range(-half..half);
            }
            // Spawning already at the goal would score a fake success.
            if self.dist() > 3.0 * Self::SUCCESS_R {
                break;
            }
        }
        self.steps = 0;
        Ok(self.feat())
    }

    fn step(&mut self, a: &[f64]) -> Result<StepF, RlError> {
        let half = Self::BOX_HALF;
        for i in 0..3 {
            let d = a[i].clamp(-Self::BOUND, Self::BOUND);
            self.pos[i] = (self.pos[i] + d).clamp(-half, half);
        }
        self.steps += 1;
        let d = self.dist();
        let success = d < Self::SUCCESS_R;
        let done = success || self.steps >= self.episode_len;
        let mut performed = [0.0; 6];
        for i in 0..3 {
            performed[i] = a[i].clamp(-Self::BOUND, Self::BOUND);
        }
        Ok(StepF {
            feat: self.feat(),
            performed,
            reward: -d * d,
            done,
            success,
            contact_mag: 0.0,
        })
    }
}

/// Residual control: the executed command is the frozen base policy's action
/// plus the agent's bounded correction, clipped to the full action box. The
/// agent's own action space is the correction.
pub struct ResidualWrap {
    inner: PegEnvAdapter,
    base: SlPolicy,
    res_bounds: Vec<f64>,
    full_bounds: Vec<f64>,
    cur: Option<Feat>,
}

impl ResidualWrap {
    pub fn new(inner: PegEnvAdapter, base: SlPolicy, scale: f64) -> ResidualWrap {
        let full_bounds = inner.action_bounds();
        let res_bounds = full_bounds.iter().map(|b| b * scale).collect();
        ResidualWrap { inner, base, res_bounds, full_bounds, cur: None }
    }

    pub fn current_object(&self) -> &ObjectPair {
        self.inner.current_object()
    }

    /// Recovers the wrapped adapter and the frozen base policy.
    pub fn into_parts(self) -> (PegEnvAdapter, SlPolicy) {
        (self.inner, self.base)
    }
}

impl RlEnv for ResidualWrap {
    fn vec_dim(&self) -> usize {
        self.inner.vec_dim()
    }

    fn img_hw(&self) -> Option<(usize, usize)> {
        self.inner.img_hw()
    }

    fn action_bounds(&self) -> Vec<f64> {
        self.res_bounds.clone()
    }

    fn reset(&mut self) -> Result<Feat, RlError> {
        let f = self.inner.reset()?;
        self.cur = Some(f.clone());
        Ok(f)
    }

    fn step(&mut self, a: &[f64]) -> Result<StepF, RlError> {
        let cur = self.cur.as_ref().expect("step before reset");
        let base = self.base.act(cur)?;
        let mut res = [0.0; 6];
        let mut full = [0.0; 6];
        for i in 0..6 {
            res[i] = a[i].clamp(-self.res_bounds[i], self.res_bounds[i]);
            full[i] = (base[i] + res[i]).clamp(-self.full_bounds[i], self.full_bounds[i]);
        }
        let mut out = self.inner.step(&full)?;
        out.performed = res;
        self.cur = Some(out.feat.clone());
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_goal_reports_success_only_inside_radius() {
        let mut env = PointGoal::new(0, 50);
        let f0 = env.reset().unwrap();
        assert_eq!(f0.vec.len(), 3);
        // Walk straight at the goal at full speed.
        let mut done = false;
        let mut success = false;
        for _ in 0..50 {
            let v = env.feat();
            let a: Vec<f64> =
                v.vec.iter().map(|e| (-e * POS_SCALE).clamp(-0.02, 0.02)).collect();
            let out = env.step(&a).unwrap();
            if out.done {
                done = true;
                success = out.success;
                break;
            }
        }
        assert!(done && success, "straight-line walk reaches the goal");
    }

    #[test]
    fn point_goal_rewards_are_negative_squared_distances() {
        let mut env = PointGoal::new(3, 50);
        env.reset().unwrap();
        let out = env.step(&[0.0, 0.0, 0.0]).unwrap();
        let d2: f64 = out
            .feat
            .vec
            .iter()
            .map(|e| (e * POS_SCALE).powi(2))
            .sum();
        assert!((out.reward + d2).abs() < 1e-12);
    }

    #[test]
    fn point_goal_never_spawns_already_succeeded() {
        let mut env = PointGoal::new(11, 50);
        for _ in 0..200 {
            env.reset().unwrap();
            assert!(env.dist() > PointGoal::SUCCESS_R);
        }
    }
}
