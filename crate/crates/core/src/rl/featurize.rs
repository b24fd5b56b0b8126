//! Conversion of raw observations into network inputs. The vector branch
//! carries the goal-relative pose (wrapped, scaled to order one) and the
//! whitened tactile features; the image branch carries the camera frame in
//! planes-major layout. Modality masking zeroes the affected input while
//! keeping its shape, so masked and unmasked policies share one architecture.

use std::sync::Arc;

use crate::types::{Observation, Pose, TACTILE_DIM};

/// Divisor bringing goal-relative translations (meters) to order one.
pub const POS_SCALE: f64 = 0.05;
/// Divisor bringing goal-relative rotations (radians) to order one.
pub const ROT_SCALE: f64 = 0.2;

/// Featurized observation. Shared pointers keep replay storage cheap: the
/// `next` field of one stored transition is the `obs` of the following one.
#[derive(Debug, Clone)]
pub struct Feat {
    /// Planes-major RGB frame, or `None` for vector-only environments.
    pub img: Option<Arc<Vec<f32>>>,
    pub vec: Arc<Vec<f64>>,
}

impl Feat {
    pub fn from_vec(v: Vec<f64>) -> Feat {
        Feat { img: None, vec: Arc::new(v) }
    }

    /// Image slice in the form the encoder consumes.
    pub fn img_slice(&self) -> Option<&[f32]> {
        self.img.as_deref().map(|v| v.as_slice())
    }
}

/// Observation-to-feature map for the peg environments. The goal is the
/// agent-visible one and changes per episode for extraction tasks.
#[derive(Debug, Clone)]
pub struct Featurizer {
    goal: Pose,
    tactile_scale: Vec<f64>,
    attach_image: bool,
    mask_vision: bool,
    mask_tactile: bool,
}

impl Featurizer {
    pub fn new(
        goal: Pose,
        tactile_scale: Vec<f64>,
        attach_image: bool,
        mask_vision: bool,
        mask_tactile: bool,
    ) -> Featurizer {
        assert_eq!(tactile_scale.len(), TACTILE_DIM);
        Featurizer { goal, tactile_scale, attach_image, mask_vision, mask_tactile }
    }

    /// Vector-branch width: six pose components plus the tactile features.
    pub const fn vec_dim() -> usize {
        6 + TACTILE_DIM
    }

    pub fn set_goal(&mut self, goal: Pose) {
        self.goal = goal;
    }

    pub fn goal(&self) -> &Pose {
        &self.goal
    }

    pub fn featurize(&self, obs: &Observation) -> Feat {
        let mut v = Vec::with_capacity(Self::vec_dim());
        let err = obs.k.delta_from(&self.goal);
        for (i, e) in err.iter().enumerate() {
            let scale = if i < 3 { POS_SCALE } else { ROT_SCALE };
            v.push(e / scale);
        }
        for (c, s) in obs.c.iter().zip(&self.tactile_scale) {
            if self.mask_tactile {
                v.push(0.0);
            } else {
                v.push(c / s.max(1e-9));
            }
        }
        let img = if self.attach_image {
            let (h, w) = (obs.v.h, obs.v.w);
            let mut planes = vec![0.0f32; 3 * h * w];
            if !self.mask_vision {
                for y in 0..h {
                    for x in 0..w {
                        let px = (y * w + x) * 3;
                        for ch in 0..3 {
                            planes[ch * h * w + y * w + x] = obs.v.data[px + ch];
                        }
                    }
                }
            }
            Some(Arc::new(planes))
        } else {
            None
        };
        Feat { img, vec: Arc::new(v) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Image;

    fn obs_with(k: Pose, c: Vec<f64>, img: Image) -> Observation {
        Observation { k, v: img, c }
    }

    #[test]
    fn pose_error_is_goal_relative_and_scaled() {
        let goal = Pose::new([0.5, 0.1, 0.2], [0.0, 0.0, 0.0]);
        let f = Featurizer::new(goal, vec![1.0; TACTILE_DIM], false, false, false);
        let obs = obs_with(
            Pose::new([0.51, 0.1, 0.17], [0.0, 0.0, 0.1]),
            vec![0.0; TACTILE_DIM],
            Image::zeros(2, 2),
        );
        let feat = f.featurize(&obs);
        assert!((feat.vec[0] - 0.01 / POS_SCALE).abs() < 1e-12);
        assert!((feat.vec[1]).abs() < 1e-12);
        assert!((feat.vec[2] + 0.03 / POS_SCALE).abs() < 1e-12);
        assert!((feat.vec[5] - 0.1 / ROT_SCALE).abs() < 1e-12);
        assert!(feat.img.is_none());
    }

    #[test]
    fn tactile_components_are_whitened_by_their_scales() {
        let goal = Pose::new([0.0; 3], [0.0; 3]);
        let mut scales = vec![2.0; TACTILE_DIM];
        scales[3] = 0.0; // degenerate component must not divide by zero
        let f = Featurizer::new(goal, scales, false, false, false);
        let mut c = vec![4.0; TACTILE_DIM];
        c[3] = 5.0;
        let obs = obs_with(Pose::new([0.0; 3], [0.0; 3]), c, Image::zeros(2, 2));
        let feat = f.featurize(&obs);
        assert!((feat.vec[6] - 2.0).abs() < 1e-12);
        assert!(feat.vec[6 + 3].is_finite());
    }

    #[test]
    fn image_is_transposed_to_planes_major() {
        let goal = Pose::new([0.0; 3], [0.0; 3]);
        let f = Featurizer::new(goal, vec![1.0; TACTILE_DIM], true, false, false);
        let mut img = Image::zeros(2, 3);
        // Pixel (y=1, x=2) gets a distinctive color.
        let px = (1 * 3 + 2) * 3;
        img.data[px] = 0.25;
        img.data[px + 1] = 0.5;
        img.data[px + 2] = 0.75;
        let obs = obs_with(Pose::new([0.0; 3], [0.0; 3]), vec![0.0; TACTILE_DIM], img);
        let feat = f.featurize(&obs);
        let planes = feat.img.as_ref().unwrap();
        let hw = 2 * 3;
        assert_eq!(planes[0 * hw + 1 * 3 + 2], 0.25);
        assert_eq!(planes[1 * hw + 1 * 3 + 2], 0.5);
        assert_eq!(planes[2 * hw + 1 * 3 + 2], 0.75);
    }

    #[test]
    fn masking_zeroes_inputs_without_changing_shapes() {
        let goal = Pose::new([0.0; 3], [0.0; 3]);
        let f = Featurizer::new(goal, vec![1.0; TACTILE_DIM], true, true, true);
        let mut img = Image::zeros(4, 4);
        for v in img.data.iter_mut() {
            *v = 0.9;
        }
        let obs = obs_with(
            Pose::new([0.01, 0.0, 0.0], [0.0; 3]),
            vec![3.0; TACTILE_DIM],
            img,
        );
        let feat = f.featurize(&obs);
        assert_eq!(feat.vec.len(), Featurizer::vec_dim());
        assert!(feat.vec[6..].iter().all(|&x| x == 0.0));
        assert!(feat.vec[0] != 0.0, "pose stays visible under modality masks");
        let planes = feat.img.as_ref().unwrap();
        assert_eq!(planes.len(), 3 * 16);
        assert!(planes.iter().all(|&x| x == 0.0));
    }
}
