//! Flat key-value run configuration. Every tunable constant of the
//! environment, sensors, reversal, training stack, and evaluation harness
//! lives here so a single text file pins an entire run. Unknown keys are
//! rejected rather than ignored; silent typos in experiment configs are how
//! results stop being reproducible.

use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {0}: expected `key = value`")]
    Syntax(usize),
    #[error("line {0}: unknown key `{1}`")]
    UnknownKey(usize, String),
    #[error("line {0}: key `{1}` given more than once")]
    DuplicateKey(usize, String),
    #[error("line {0}: invalid value for `{1}`: {2}")]
    BadValue(usize, String, String),
    #[error("config io: {0}")]
    Io(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

trait ConfigValue: Sized {
    fn parse_cfg(s: &str) -> Result<Self, String>;
    fn emit_cfg(&self) -> String;
}

impl ConfigValue for f64 {
    fn parse_cfg(s: &str) -> Result<Self, String> {
        s.parse::<f64>().map_err(|e| e.to_string()).and_then(|v| {
            if v.is_finite() {
                Ok(v)
            } else {
                Err("must be finite".into())
            }
        })
    }
    fn emit_cfg(&self) -> String {
        format!("{}", self)
    }
}

impl ConfigValue for usize {
    fn parse_cfg(s: &str) -> Result<Self, String> {
        s.parse::<usize>().map_err(|e| e.to_string())
    }
    fn emit_cfg(&self) -> String {
        format!("{}", self)
    }
}

impl ConfigValue for u64 {
    fn parse_cfg(s: &str) -> Result<Self, String> {
        s.parse::<u64>().map_err(|e| e.to_string())
    }
    fn emit_cfg(&self) -> String {
        format!("{}", self)
    }
}

impl ConfigValue for bool {
    fn parse_cfg(s: &str) -> Result<Self, String> {
        match s {
            "true" | "1" => Ok(true),
            "false" | "0" => Ok(false),
            _ => Err("expected true/false".into()),
        }
    }
    fn emit_cfg(&self) -> String {
        format!("{}", self)
    }
}

impl ConfigValue for String {
    fn parse_cfg(s: &str) -> Result<Self, String> {
        Ok(s.to_string())
    }
    fn emit_cfg(&self) -> String {
        self.clone()
    }
}

impl ConfigValue for Vec<u64> {
    fn parse_cfg(s: &str) -> Result<Self, String> {
        if s.trim().is_empty() {
            return Err("expected a comma-separated list".into());
        }
        s.split(',').map(|p| p.trim().parse::<u64>().map_err(|e| e.to_string())).collect()
    }
    fn emit_cfg(&self) -> String {
        self.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
    }
}

impl ConfigValue for Vec<String> {
    fn parse_cfg(s: &str) -> Result<Self, String> {
        if s.trim().is_empty() {
            return Err("expected a comma-separated list".into());
        }
        Ok(s.split(',').map(|p| p.trim().to_string()).collect())
    }
    fn emit_cfg(&self) -> String {
        self.join(",")
    }
}

macro_rules! config {
    ($( $name:ident : $ty:ty = $default:expr ),+ $(,)?) => {
        /// Run configuration; see module docs. Field names are the file keys.
        #[derive(Debug, Clone, PartialEq)]
        pub struct Config {
            $( pub $name: $ty, )+
        }

        impl Default for Config {
            fn default() -> Config {
                Config { $( $name: $default, )+ }
            }
        }

        impl Config {
            fn apply(&mut self, key: &str, value: &str, line: usize) -> Result<(), ConfigError> {
                match key {
                    $( stringify!($name) => {
                        self.$name = <$ty as ConfigValue>::parse_cfg(value).map_err(|e| {
                            ConfigError::BadValue(line, key.to_string(), e)
                        })?;
                        Ok(())
                    } )+
                    _ => Err(ConfigError::UnknownKey(line, key.to_string())),
                }
            }

            /// Canonical text form: every key, declaration order, one per line.
            pub fn to_text(&self) -> String {
                let mut out = String::new();
                $( let _ = writeln!(out, "{} = {}", stringify!($name), ConfigValue::emit_cfg(&self.$name)); )+
                out
            }
        }
    };
}

config! {
    // Episode and world geometry. The nominal fully inserted peg-tip pose is
    // (hole_x, hole_y, board_top_z - hole_depth) with zero rotations.
    episode_len: usize = 50,
    board_top_z: f64 = 0.22,
    hole_depth: f64 = 0.02,
    hole_x: f64 = 0.5,
    hole_y: f64 = 0.1,
    // Per-episode uniform board placement error on each lateral axis, meters.
    // The agent-visible insertion goal stays nominal, so fine alignment must
    // come from vision and touch rather than proprioception alone.
    hole_jitter: f64 = 0.0015,
    peg_len: f64 = 0.06,
    board_half_extent: f64 = 0.08,
    clearance: f64 = 0.001,

    // Contact model.
    contact_stiffness: f64 = 1000.0,
    friction_mu: f64 = 0.3,
    tilt_max: f64 = 0.1,
    torsion_stiffness: f64 = 10.0,

    // Reward.
    rotation_weight: f64 = 1.0,

    // Goal sampling offsets from the initial pose: two lateral axes and the
    // rise along the extraction axis, meters.
    goal_dx_min: f64 = -0.02,
    goal_dx_max: f64 = 0.02,
    goal_dy_min: f64 = -0.02,
    goal_dy_max: f64 = 0.02,
    goal_rise_min: f64 = 0.02,
    goal_rise_max: f64 = 0.04,

    // Insertion episodes start from a goal-shaped offset scaled by a posture
    // weight drawn from this range.
    posture_weight_min: f64 = 0.8,
    posture_weight_max: f64 = 1.2,
    reset_retries: usize = 20,

    // Rendering.
    image_h: usize = 32,
    image_w: usize = 32,
    aa_samples: usize = 3,
    // Narrow enough that millimeter board-placement error moves edges by
    // about a pixel at the default resolution.
    view_half_extent: f64 = 0.025,
    oblique_x: f64 = 0.35,
    oblique_y: f64 = 0.2,
    color_jitter_min: f64 = 0.8,
    color_jitter_max: f64 = 1.2,

    // Tactile marker field.
    marker_grid: usize = 7,
    fingers: usize = 2,
    marker_pitch: f64 = 0.002,
    // Gains sized for contact loads of 0..~20 N and torques of 0..~0.6 N.m:
    // peak displacements sit an order of magnitude above marker noise while
    // staying under the elastomer excursion cap.
    gain_dilate: f64 = 1e-3,
    gain_shear: f64 = 5e-5,
    gain_twist: f64 = 0.5,
    marker_noise: f64 = 1e-5,
    elastomer_cap: f64 = 0.002,

    // Tactile feature extraction.
    pca_dim: usize = 15,
    calib_frames: usize = 2100,
    calib_profiles: usize = 21,
    pca_seed: u64 = 7,

    // Trajectory reversal.
    trigger_dist: f64 = 0.01,
    poke_offset_max: f64 = 0.02,
    randomized_fraction: f64 = 0.5,
    poke_retries: usize = 10,
    replay_tol: f64 = 1e-6,

    // Actor-critic training.
    // Rewards are squared distances in meters (1e-4..1e-2 per step); this
    // scale is applied to temporal-difference targets only, never to stored
    // transitions, so value magnitudes compete with the entropy term.
    reward_scale: f64 = 100.0,
    gamma: f64 = 0.99,
    polyak_tau: f64 = 0.005,
    batch_size: usize = 64,
    lr: f64 = 3e-4,
    alpha_init: f64 = 0.2,
    alpha_auto: bool = true,
    buffer_capacity: usize = 100000,
    start_steps: usize = 300,
    log_std_min: f64 = -5.0,
    log_std_max: f64 = 2.0,
    rho_start: f64 = 0.3,
    rho_end: f64 = 0.0,
    bc_lambda_start: f64 = 0.05,
    bc_lambda_end: f64 = 0.0,
    bc_updates_per_episode: usize = 2,

    // Network sizes.
    conv_channels1: usize = 8,
    conv_channels2: usize = 16,
    img_feat: usize = 64,
    vec_hidden: usize = 64,
    fusion_hidden: usize = 128,

    // Desk-scale training budgets, environment steps.
    pooh_steps: usize = 2600,
    pih_steps: usize = 2600,

    // Expert data collection.
    expert_per_object: usize = 100,
    collect_only_success: bool = true,
    collect_max_attempts_factor: usize = 5,

    // Supervised and residual baselines.
    sl_epochs: usize = 60,
    sl_lr: f64 = 1e-3,
    residual_scale: f64 = 0.5,

    // Evaluation harness.
    trials_per_object: usize = 20,
    seeds: Vec<u64> = vec![0, 25, 50, 75, 100],
    eval_seed_base: u64 = 900000,
    wilson_z: f64 = 1.96,
    objects_seen: Vec<String> = vec!["cube".into(), "dshape".into()],
    objects_unseen: Vec<String> = vec![
        "cylinder".into(),
        "hexagon".into(),
        "triangle".into(),
        "cube2".into(),
    ],
    final_window_frac: f64 = 0.2,
    force_trials: usize = 10,

    deterministic: bool = false,
}

impl Config {
    pub fn from_text(text: &str) -> Result<Config, ConfigError> {
        let mut cfg = Config::default();
        let mut seen: Vec<String> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax(line_no))?;
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() {
                return Err(ConfigError::Syntax(line_no));
            }
            if seen.iter().any(|k| k == key) {
                return Err(ConfigError::DuplicateKey(line_no, key.to_string()));
            }
            cfg.apply(key, value, line_no)?;
            seen.push(key.to_string());
        }
        cfg.check()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(e.to_string()))?;
        Config::from_text(&text)
    }

    /// Cross-field sanity checks that a bare key parse cannot express.
    pub fn check(&self) -> Result<(), ConfigError> {
        if self.image_h < 16 || self.image_w < 16 {
            return Err(ConfigError::Invalid("image_h and image_w must be at least 16".into()));
        }
        if self.episode_len == 0 {
            return Err(ConfigError::Invalid("episode_len must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.randomized_fraction) {
            return Err(ConfigError::Invalid("randomized_fraction must be in [0, 1]".into()));
        }
        if self.goal_rise_min <= 0.0 || self.goal_rise_max < self.goal_rise_min {
            return Err(ConfigError::Invalid("goal rise range must be positive".into()));
        }
        if self.hole_depth <= 0.0 || self.hole_depth >= self.board_top_z {
            return Err(ConfigError::Invalid("hole_depth must sit inside the board".into()));
        }
        if self.pca_dim == 0 || self.pca_dim > self.tactile_raw_dim() {
            return Err(ConfigError::Invalid("pca_dim must be in [1, raw flow dim]".into()));
        }
        if self.batch_size == 0 {
            return Err(ConfigError::Invalid("batch_size must be positive".into()));
        }
        if self.aa_samples == 0 {
            return Err(ConfigError::Invalid("aa_samples must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(ConfigError::Invalid("seeds must not be empty".into()));
        }
        Ok(())
    }

    /// Raw marker-flow dimension: fingers x grid x grid x 2 components.
    pub fn tactile_raw_dim(&self) -> usize {
        self.fingers * self.marker_grid * self.marker_grid * 2
    }

    /// Nominal fully inserted peg-tip pose; also the agent-visible insertion
    /// goal and the reference the insertion task starts above.
    pub fn nominal_insert_pose(&self) -> crate::types::Pose {
        crate::types::Pose::new(
            [self.hole_x, self.hole_y, self.board_top_z - self.hole_depth],
            [0.0; 3],
        )
    }

    /// Hex digest of the canonical text; fingerprints a configuration.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(self.to_text().as_bytes());
        let out = h.finalize();
        out.iter().take(8).map(|b| format!("{:02x}", b)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_text() {
        let cfg = Config::default();
        let text = cfg.to_text();
        let back = Config::from_text(&text).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(cfg.digest(), back.digest());
    }

    #[test]
    fn unknown_keys_are_errors() {
        let err = Config::from_text("episode_len = 50\nepisod_len = 49\n").unwrap_err();
        assert_eq!(err, ConfigError::UnknownKey(2, "episod_len".into()));
    }

    #[test]
    fn duplicate_keys_are_errors() {
        let err = Config::from_text("gamma = 0.9\ngamma = 0.99\n").unwrap_err();
        assert_eq!(err, ConfigError::DuplicateKey(2, "gamma".into()));
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let cfg = Config::from_text("# full line comment\n\n  gamma = 0.95 # trailing\n").unwrap();
        assert_eq!(cfg.gamma, 0.95);
    }

    #[test]
    fn bad_values_name_the_key_and_line() {
        let err = Config::from_text("gamma = fast\n").unwrap_err();
        assert!(matches!(err, ConfigError::BadValue(1, ref k, _) if k == "gamma"));
        let err = Config::from_text("seeds = 1,2,x\n").unwrap_err();
        assert!(matches!(err, ConfigError::BadValue(1, ref k, _) if k == "seeds"));
    }

    #[test]
    fn cross_field_checks_fire() {
        assert!(Config::from_text("image_h = 8\n").is_err());
        assert!(Config::from_text("randomized_fraction = 1.5\n").is_err());
    }

    #[test]
    fn lists_parse_and_emit() {
        let cfg = Config::from_text("seeds = 3, 5 ,8\nobjects_seen = cube , hexagon\n").unwrap();
        assert_eq!(cfg.seeds, vec![3, 5, 8]);
        assert_eq!(cfg.objects_seen, vec!["cube".to_string(), "hexagon".to_string()]);
        let text = cfg.to_text();
        assert!(text.contains("seeds = 3,5,8"));
    }

    #[test]
    fn digest_changes_with_any_field() {
        let a = Config::default();
        let mut b = a.clone();
        b.gamma = 0.98;
        assert_ne!(a.digest(), b.digest());
    }

    #[test]
    fn nominal_insert_pose_matches_geometry() {
        let cfg = Config::default();
        let p = cfg.nominal_insert_pose();
        assert_eq!(p.pos, [0.5, 0.1, 0.2]);
        assert_eq!(p.rot, [0.0; 3]);
    }
}
