//! Shared motion and trajectory types: poses, bounded pose-delta actions,
//! multimodal observations, transitions, and trajectories.

use thiserror::Error;

/// Half-width of the per-step translation box, meters per component.
pub const TRANS_STEP_MAX: f64 = 0.02;
/// Half-width of the per-step rotation box, radians per component.
pub const ROT_STEP_MAX: f64 = 0.05;

/// Grid quantum for action components. Policies emit actions snapped to this
/// grid so that sums and differences of actions are exact in f64, which keeps
/// the reversal algebra (`a' + a'' + a_t = 0`) exact rather than approximate.
/// One quantum is just under a micrometer, far below any physical effect here.
pub const ACTION_QUANTUM: f64 = 1.0 / (1 << 20) as f64;

/// Number of tactile feature dimensions carried in every observation.
pub const TACTILE_DIM: usize = 15;

#[derive(Debug, Error, PartialEq)]
pub enum TypeError {
    #[error("{0} contains a non-finite value")]
    NonFinite(&'static str),
    #[error("action component {index} = {value} exceeds the per-step bound {bound}")]
    ActionBound { index: usize, value: f64, bound: f64 },
    #[error("action component {index} = {value} is not on the action grid")]
    ActionGrid { index: usize, value: f64 },
    #[error("tactile vector has length {got}, expected {want}")]
    TactileLen { got: usize, want: usize },
    #[error("image data length {got} does not match {h}x{w}x3")]
    ImageLen { got: usize, h: usize, w: usize },
    #[error("image value {value} at index {index} outside [0, 1]")]
    ImageRange { index: usize, value: f32 },
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    if a > -std::f64::consts::PI && a <= std::f64::consts::PI {
        return a;
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut r = a.rem_euclid(two_pi);
    if r > std::f64::consts::PI {
        r -= two_pi;
    }
    // rem_euclid yields [0, 2pi); the branch above maps (pi, 2pi) to (-pi, 0).
    // Exactly 0 maps to 0, exactly 2pi wraps to 0. -pi cannot be produced.
    r
}

/// Rigid pose: position in meters plus extrinsic fixed-axis XYZ rotations in
/// radians, each angle kept in `(-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub pos: [f64; 3],
    pub rot: [f64; 3],
}

impl Pose {
    pub fn new(pos: [f64; 3], rot: [f64; 3]) -> Self {
        Pose { pos, rot: [wrap_angle(rot[0]), wrap_angle(rot[1]), wrap_angle(rot[2])] }
    }

    pub fn zero() -> Self {
        Pose { pos: [0.0; 3], rot: [0.0; 3] }
    }

    pub fn validate(&self) -> Result<(), TypeError> {
        for v in self.pos.iter().chain(self.rot.iter()) {
            if !v.is_finite() {
                return Err(TypeError::NonFinite("pose"));
            }
        }
        Ok(())
    }

    /// Applies a 6-component delta (translation then per-axis rotation), with
    /// rotation results wrapped back into `(-pi, pi]`.
    pub fn offset(&self, d: &[f64; 6]) -> Pose {
        Pose {
            pos: [self.pos[0] + d[0], self.pos[1] + d[1], self.pos[2] + d[2]],
            rot: [
                wrap_angle(self.rot[0] + d[3]),
                wrap_angle(self.rot[1] + d[4]),
                wrap_angle(self.rot[2] + d[5]),
            ],
        }
    }

    /// Componentwise delta that takes `from` onto `self`, rotation parts
    /// wrapped to the shortest representative.
    pub fn delta_from(&self, from: &Pose) -> [f64; 6] {
        [
            self.pos[0] - from.pos[0],
            self.pos[1] - from.pos[1],
            self.pos[2] - from.pos[2],
            wrap_angle(self.rot[0] - from.rot[0]),
            wrap_angle(self.rot[1] - from.rot[1]),
            wrap_angle(self.rot[2] - from.rot[2]),
        ]
    }

    /// Squared pose distance: translation in meters squared plus
    /// `rot_weight` times the squared wrapped rotation difference.
    pub fn sq_dist(&self, other: &Pose, rot_weight: f64) -> f64 {
        let d = self.delta_from(other);
        d[0] * d[0]
            + d[1] * d[1]
            + d[2] * d[2]
            + rot_weight * (d[3] * d[3] + d[4] * d[4] + d[5] * d[5])
    }

    /// Translation-only Euclidean distance in meters.
    pub fn trans_dist(&self, other: &Pose) -> f64 {
        let dx = self.pos[0] - other.pos[0];
        let dy = self.pos[1] - other.pos[1];
        let dz = self.pos[2] - other.pos[2];
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    pub fn as_vec6(&self) -> [f64; 6] {
        [self.pos[0], self.pos[1], self.pos[2], self.rot[0], self.rot[1], self.rot[2]]
    }

    pub fn from_vec6(v: &[f64; 6]) -> Pose {
        Pose::new([v[0], v[1], v[2]], [v[3], v[4], v[5]])
    }
}

/// Snaps a raw value onto the action grid, rounding toward zero so the
/// result never grows in magnitude.
pub fn quantize_toward_zero(x: f64) -> f64 {
    (x / ACTION_QUANTUM).trunc() * ACTION_QUANTUM
}

/// Commanded pose delta for one control step. Components are clipped to the
/// per-step box and live on the action grid; see [`ACTION_QUANTUM`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Action(pub [f64; 6]);

impl Action {
    /// Bound for each component: translation axes then rotation axes.
    pub fn component_bound(index: usize) -> f64 {
        if index < 3 {
            TRANS_STEP_MAX
        } else {
            ROT_STEP_MAX
        }
    }

    pub fn bounds() -> [f64; 6] {
        [
            TRANS_STEP_MAX,
            TRANS_STEP_MAX,
            TRANS_STEP_MAX,
            ROT_STEP_MAX,
            ROT_STEP_MAX,
            ROT_STEP_MAX,
        ]
    }

    /// Clips a raw 6-vector into the per-step box and snaps it to the grid.
    /// Errors if any component is non-finite.
    pub fn clip(raw: &[f64; 6]) -> Result<Action, TypeError> {
        let mut out = [0.0; 6];
        for (i, &v) in raw.iter().enumerate() {
            if !v.is_finite() {
                return Err(TypeError::NonFinite("action"));
            }
            let b = Action::component_bound(i);
            out[i] = quantize_toward_zero(v.clamp(-b, b));
        }
        Ok(Action(out))
    }

    /// Validates bounds, grid membership, and finiteness of an existing value.
    pub fn validate(&self) -> Result<(), TypeError> {
        for (i, &v) in self.0.iter().enumerate() {
            if !v.is_finite() {
                return Err(TypeError::NonFinite("action"));
            }
            let b = Action::component_bound(i);
            if v.abs() > b {
                return Err(TypeError::ActionBound { index: i, value: v, bound: b });
            }
            let steps = v / ACTION_QUANTUM;
            if steps != steps.round() {
                return Err(TypeError::ActionGrid { index: i, value: v });
            }
        }
        Ok(())
    }

    /// Exact negation; the grid is symmetric so the result stays valid.
    pub fn negate(&self) -> Action {
        let mut d = [0.0; 6];
        for i in 0..6 {
            d[i] = -self.0[i];
        }
        Action(d)
    }
}

/// Camera frame: height x width x 3 channels, row-major, values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub h: usize,
    pub w: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn zeros(h: usize, w: usize) -> Image {
        Image { h, w, data: vec![0.0; h * w * 3] }
    }

    pub fn validate(&self) -> Result<(), TypeError> {
        if self.data.len() != self.h * self.w * 3 {
            return Err(TypeError::ImageLen { got: self.data.len(), h: self.h, w: self.w });
        }
        for (i, &v) in self.data.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(TypeError::ImageRange { index: i, value: v });
            }
        }
        Ok(())
    }
}

/// One observation: end-effector pose `k`, camera image `v`, and the
/// 15-dimensional tactile feature vector `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub k: Pose,
    pub v: Image,
    pub c: Vec<f64>,
}

impl Observation {
    pub fn validate(&self) -> Result<(), TypeError> {
        self.k.validate()?;
        self.v.validate()?;
        if self.c.len() != TACTILE_DIM {
            return Err(TypeError::TactileLen { got: self.c.len(), want: TACTILE_DIM });
        }
        if self.c.iter().any(|x| !x.is_finite()) {
            return Err(TypeError::NonFinite("tactile"));
        }
        Ok(())
    }
}

/// One step of experience. `randomized` marks records inserted or rewritten
/// by reversal-time action randomization.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Observation,
    pub action: Action,
    pub reward: f64,
    pub next_obs: Observation,
    pub done: bool,
    pub randomized: bool,
}

/// Task direction for an episode or dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    /// Start inserted, move the peg to a free-space goal.
    Extract,
    /// Start outside, drive the peg to the fully inserted pose.
    Insert,
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::Extract => "pooh",
            Task::Insert => "pih",
        }
    }

    pub fn from_name(s: &str) -> Option<Task> {
        match s {
            "pooh" => Some(Task::Extract),
            "pih" => Some(Task::Insert),
            _ => None,
        }
    }
}

/// Desired peg and hole poses used by the privileged reward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoalSpec {
    pub peg: Pose,
    pub hole: Pose,
}

/// An ordered episode of transitions plus identifying metadata.
/// `env_digest` fingerprints the environment configuration that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub task: Task,
    pub object_id: String,
    pub seed: u64,
    pub env_digest: String,
    pub transitions: Vec<Transition>,
}

#[derive(Debug, Error, PartialEq)]
pub enum TrajectoryError {
    #[error("transition {0}: {1}")]
    Transition(usize, TypeError),
    #[error("kinematic chain broken at transition {0}: next_obs differs from following obs")]
    Chain(usize),
    #[error("trajectory has {got} transitions, cap is {cap}")]
    TooLong { got: usize, cap: usize },
}

impl Trajectory {
    /// Structural validation: per-transition field validity and full chain
    /// consistency (`next_obs[i] == obs[i+1]`, all modalities). `cap` is the
    /// episode length cap; reversal may legitimately add one record, so
    /// callers pass the cap they expect.
    pub fn validate(&self, cap: usize) -> Result<(), TrajectoryError> {
        if self.transitions.len() > cap {
            return Err(TrajectoryError::TooLong { got: self.transitions.len(), cap });
        }
        for (i, t) in self.transitions.iter().enumerate() {
            t.obs.validate().map_err(|e| TrajectoryError::Transition(i, e))?;
            t.next_obs.validate().map_err(|e| TrajectoryError::Transition(i, e))?;
            t.action.validate().map_err(|e| TrajectoryError::Transition(i, e))?;
            if !t.reward.is_finite() {
                return Err(TrajectoryError::Transition(i, TypeError::NonFinite("reward")));
            }
        }
        for i in 0..self.transitions.len().saturating_sub(1) {
            if self.transitions[i].next_obs != self.transitions[i + 1].obs {
                return Err(TrajectoryError::Chain(i));
            }
        }
        Ok(())
    }
}
