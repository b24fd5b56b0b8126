//! The unified manipulation environment. One peg, one board with a
//! clearance-fit hole, a stiff position-controlled gripper, and three
//! synchronized sensing channels per step: the achieved gripper pose, a
//! rendered camera frame, and the projected tactile feature vector.
//!
//! The same environment serves both tasks. Extraction episodes start with the
//! peg seated in the hole and sample a raised goal pose nearby; insertion
//! episodes start from a raised posture and target the seated pose. The board
//! is placed with a small per-episode error: rewards and success always use
//! the true hole, while the insertion goal the agent is told is the nominal
//! seated pose, so closing the last millimeter takes vision or touch.
//!
//! Episode randomness is split over named sub-streams (board placement,
//! lighting, goal sampling) so recorded trajectories replay bit for bit under
//! the same seed and config.

pub mod catalog;
pub mod contact;

pub use catalog::{builtin_catalog, by_id, CatalogError, ObjectPair};
pub use contact::{ContactParams, ContactSummary, Hole};

use crate::config::{Config, ConfigError};
use crate::rng::RandomStream;
use crate::sensors::pca::{calibrate, PcaError, PcaModel};
use crate::sensors::render::{render, Scene};
use crate::sensors::tactile::{GelLoad, MarkerField};
use crate::types::{Action, Observation, Pose, Task, TypeError, TACTILE_DIM};
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("catalog: {0}")]
    Catalog(#[from] CatalogError),
    #[error("tactile calibration: {0}")]
    Pca(#[from] PcaError),
    #[error("action: {0}")]
    Action(#[from] TypeError),
    #[error("tactile model outputs {got} features, observations carry {want}")]
    TactileDim { got: usize, want: usize },
    #[error("step before reset")]
    NotReset,
    #[error("no feasible start pose after {0} draws")]
    ResetFailed(usize),
    #[error("replay start pose is not a valid placement")]
    BadReplayStart,
}

/// Everything a controller learns from one step.
#[derive(Debug, Clone)]
pub struct StepOut {
    pub obs: Observation,
    pub reward: f64,
    /// Episode over, for either reason below.
    pub done: bool,
    /// Task success test passed at the new state.
    pub success: bool,
    /// Step budget exhausted.
    pub timeout: bool,
    pub contact: ContactSummary,
}

pub struct Env {
    cfg: Config,
    object: ObjectPair,
    task: Task,
    params: ContactParams,
    markers: MarkerField,
    pca: PcaModel,
    streams: RandomStream,
    started: bool,
    peg: Pose,
    hole: Hole,
    goal_true: Pose,
    goal_agent: Pose,
    color_gain: [f32; 3],
    steps: usize,
    contact: ContactSummary,
}

impl Env {
    /// Builds an environment, running the tactile calibration sweep. Use
    /// [`Env::with_pca`] to share one fitted model across environments.
    pub fn new(cfg: Config, object: ObjectPair, task: Task, seed: u64) -> Result<Env, EnvError> {
        cfg.check()?;
        let pca = calibrate(&cfg)?;
        Env::with_pca(cfg, object, task, seed, pca)
    }

    /// Builds an environment around an already fitted tactile model. The
    /// model must match the config's marker layout and the observation
    /// feature width.
    pub fn with_pca(
        cfg: Config,
        object: ObjectPair,
        task: Task,
        seed: u64,
        pca: PcaModel,
    ) -> Result<Env, EnvError> {
        cfg.check()?;
        object.validate()?;
        let markers = MarkerField::new(&cfg);
        if pca.input_dim() != markers.raw_dim() || pca.output_dim() != TACTILE_DIM {
            return Err(EnvError::TactileDim { got: pca.output_dim(), want: TACTILE_DIM });
        }
        let params = ContactParams {
            stiffness: cfg.contact_stiffness,
            friction_mu: cfg.friction_mu,
            tilt_max: cfg.tilt_max,
            torsion_stiffness: cfg.torsion_stiffness,
        };
        Ok(Env {
            params,
            markers,
            pca,
            streams: RandomStream::new(seed),
            started: false,
            peg: Pose::zero(),
            hole: Hole {
                center: [cfg.hole_x, cfg.hole_y],
                top_z: cfg.board_top_z,
                bottom_z: cfg.board_top_z - cfg.hole_depth,
                clearance: object.clearance,
            },
            goal_true: Pose::zero(),
            goal_agent: Pose::zero(),
            color_gain: [1.0; 3],
            steps: 0,
            contact: ContactSummary::none(),
            cfg,
            object,
            task,
        })
    }

    /// Starts a new episode and returns its first observation.
    pub fn reset(&mut self) -> Result<Observation, EnvError> {
        self.steps = 0;
        self.contact = ContactSummary::none();
        self.started = true;

        // Board placement error.
        let j = self.cfg.hole_jitter;
        let (jx, jy) = if j > 0.0 {
            let r = self.streams.env_init();
            (r.gen_range(-j..=j), r.gen_range(-j..=j))
        } else {
            (0.0, 0.0)
        };
        self.hole.center = [self.cfg.hole_x + jx, self.cfg.hole_y + jy];
        let seated = Pose::new(
            [self.hole.center[0], self.hole.center[1], self.hole.bottom_z],
            [0.0; 3],
        );

        // Lighting.
        let (lo, hi) = (self.cfg.color_jitter_min, self.cfg.color_jitter_max);
        {
            let r = self.streams.domain_rand();
            for g in &mut self.color_gain {
                *g = r.gen_range(lo..=hi) as f32;
            }
        }

        // Start and goal. Both tasks draw the lateral/rise offset in the same
        // order from the same stream, so one seed describes one extraction
        // goal and the matching insertion start.
        match self.task {
            Task::Extract => {
                let off = self.draw_offset();
                self.peg = seated;
                self.goal_true = Pose::new(
                    [seated.pos[0] + off[0], seated.pos[1] + off[1], seated.pos[2] + off[2]],
                    [0.0; 3],
                );
                self.goal_agent = self.goal_true;
            }
            Task::Insert => {
                self.goal_true = seated;
                self.goal_agent = self.cfg.nominal_insert_pose();
                let mut placed = false;
                for _ in 0..=self.cfg.reset_retries {
                    let off = self.draw_offset();
                    let w = {
                        let r = self.streams.goal_sampling();
                        r.gen_range(self.cfg.posture_weight_min..=self.cfg.posture_weight_max)
                    };
                    let start = Pose::new(
                        [
                            seated.pos[0] + w * off[0],
                            seated.pos[1] + w * off[1],
                            seated.pos[2] + w * off[2],
                        ],
                        [0.0; 3],
                    );
                    if contact::placement_ok(&self.object.section, &self.hole, &start) {
                        self.peg = start;
                        placed = true;
                        break;
                    }
                }
                if !placed {
                    return Err(EnvError::ResetFailed(self.cfg.reset_retries + 1));
                }
            }
        }
        Ok(self.observe())
    }

    /// Dx, rise, dy, drawn in that order; rise is along +z.
    fn draw_offset(&mut self) -> [f64; 3] {
        let c = &self.cfg;
        let r = self.streams.goal_sampling();
        let dx = r.gen_range(c.goal_dx_min..=c.goal_dx_max);
        let rise = r.gen_range(c.goal_rise_min..=c.goal_rise_max);
        let dy = r.gen_range(c.goal_dy_min..=c.goal_dy_max);
        [dx, dy, rise]
    }

    /// Applies one commanded pose delta. In free space the achieved pose
    /// equals the command bit for bit; in contact the command is projected
    /// and the blocked part becomes the reported reaction loads.
    pub fn step(&mut self, action: &Action) -> Result<StepOut, EnvError> {
        if !self.started {
            return Err(EnvError::NotReset);
        }
        action.validate()?;
        let target = self.peg.offset(&action.0);
        let (achieved, contact) =
            contact::resolve(&self.object.section, &self.hole, &self.params, &self.peg, &target);
        self.peg = achieved;
        self.contact = contact;
        self.steps += 1;

        let reward = -self.peg.sq_dist(&self.goal_true, self.cfg.rotation_weight);
        let success = self.is_success();
        let timeout = self.steps >= self.cfg.episode_len;
        Ok(StepOut {
            obs: self.observe(),
            reward,
            done: success || timeout,
            success,
            timeout,
            contact,
        })
    }

    /// Restarts the current episode from a recorded pose instead of the
    /// sampled start, for replaying trajectories against the same board
    /// placement. Call after `reset` so episode randomness is already drawn.
    /// Returns the observation at the new pose.
    pub fn begin_replay(&mut self, start: &Pose) -> Result<Observation, EnvError> {
        if !self.started {
            return Err(EnvError::NotReset);
        }
        start.validate()?;
        if !contact::placement_ok(&self.object.section, &self.hole, start) {
            return Err(EnvError::BadReplayStart);
        }
        self.peg = *start;
        self.contact = ContactSummary::none();
        self.steps = 0;
        Ok(self.observe())
    }

    /// Tip depth below the hole mouth, meters; zero when clear.
    pub fn depth(&self) -> f64 {
        (self.hole.top_z - self.peg.pos[2]).max(0.0)
    }

    pub fn is_success(&self) -> bool {
        match self.task {
            // Clear of the hole and close to the commanded raise pose.
            Task::Extract => self.depth() == 0.0 && self.peg.trans_dist(&self.goal_true) <= 0.005,
            // Seated deeper than half the hole.
            Task::Insert => self.depth() > 0.5 * self.cfg.hole_depth,
        }
    }

    fn observe(&mut self) -> Observation {
        let load = GelLoad {
            pressure: self.contact.normal + self.contact.lateral_magnitude(),
            shear: [
                self.contact.lateral[0],
                self.contact.normal + self.contact.friction,
            ],
            twist: self.contact.torque,
        };
        let raw = self.markers.flow(&load, self.streams.domain_rand());
        let c = self.pca.project(&raw).expect("flow length fixed at construction");
        let scene = Scene {
            section: &self.object.section,
            peg_color: self.object.color,
            clearance: self.object.clearance,
            hole_center: self.hole.center,
            peg: &self.peg,
            color_gain: self.color_gain,
        };
        let v = render(&self.cfg, &scene);
        Observation { k: self.peg, v, c }
    }

    pub fn cfg(&self) -> &Config {
        &self.cfg
    }

    pub fn object(&self) -> &ObjectPair {
        &self.object
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn peg(&self) -> &Pose {
        &self.peg
    }

    pub fn hole(&self) -> &Hole {
        &self.hole
    }

    /// Goal used by reward and success (true board placement).
    pub fn goal_true(&self) -> &Pose {
        &self.goal_true
    }

    /// Goal the controller is conditioned on. Matches `goal_true` for
    /// extraction; for insertion it is the nominal seated pose.
    pub fn goal_agent(&self) -> &Pose {
        &self.goal_agent
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    pub fn last_contact(&self) -> &ContactSummary {
        &self.contact
    }

    pub fn pca(&self) -> &PcaModel {
        &self.pca
    }

    /// Per-component tactile feature scales, for whitening.
    pub fn tactile_scales(&self) -> Vec<f64> {
        self.pca.scales()
    }
}
