//! Deployable policies and their on-disk form. A policy file is a tensor
//! checkpoint whose metadata string carries a small JSON header describing
//! the kind, input shapes, and modality masks; loading rebuilds the network
//! from the current configuration and restores weights by tensor name.

use std::path::Path;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::nn::checkpoint::{load_tensors, restore_params, save_tensors};
use crate::nn::encoder::{Encoder, EncoderSpec};
use crate::nn::heads::GaussianHead;
use crate::nn::layers::Dense;
use crate::nn::Param;
use crate::types::Action;

use super::featurize::{Feat, Featurizer};
use super::RlError;

/// Shape and provenance header stored with every policy file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PolicyMeta {
    pub kind: String,
    pub vec_dim: usize,
    pub image: Option<(usize, usize)>,
    pub mask_vision: bool,
    pub mask_tactile: bool,
    pub cfg_digest: String,
}

/// Builds the encoder architecture for the configured widths.
pub fn encoder_spec(cfg: &Config, vec_dim: usize, image: Option<(usize, usize)>) -> EncoderSpec {
    EncoderSpec {
        image,
        vec_dim,
        conv1: cfg.conv_channels1,
        conv2: cfg.conv_channels2,
        img_feat: cfg.img_feat,
        vec_hidden: cfg.vec_hidden,
        fusion_hidden: cfg.fusion_hidden,
    }
}

/// Stochastic-policy snapshot: encoder plus squashed Gaussian head on the
/// unit box, scaled to environment units on the way out.
pub struct SacPolicy {
    pub enc: Encoder,
    pub pi: GaussianHead,
    pub env_bounds: Vec<f64>,
}

impl SacPolicy {
    /// Deterministic action: squashed mean, environment units.
    pub fn act(&self, feat: &Feat) -> Result<[f64; 6], RlError> {
        let cache = self.enc.forward(feat.img_slice(), &feat.vec)?;
        let m = self.pi.mean_action(&cache.feat);
        let mut out = [0.0; 6];
        for (i, v) in m.iter().enumerate() {
            out[i] = v * self.env_bounds[i];
        }
        Ok(out)
    }

    fn tensors(&self) -> Vec<(&str, &[f64])> {
        let mut ps = self.enc.params();
        ps.extend(self.pi.params());
        ps.iter().map(|p| (p.name.as_str(), p.w.as_slice())).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut ps = self.enc.params_mut();
        ps.extend(self.pi.params_mut());
        ps
    }
}

/// Deterministic supervised policy: encoder plus one linear layer trained by
/// action regression. Outputs are clipped to the unit box before scaling.
pub struct SlPolicy {
    pub enc: Encoder,
    pub head: Dense,
    pub env_bounds: Vec<f64>,
}

impl SlPolicy {
    pub fn new(cfg: &Config, vec_dim: usize, image: Option<(usize, usize)>, seed: u64) -> SlPolicy {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let spec = encoder_spec(cfg, vec_dim, image);
        let enc = Encoder::new("sl_enc", &spec, &mut rng);
        let head = Dense::new("sl_head", enc.out_dim(), 6, &mut rng);
        SlPolicy { enc, head, env_bounds: Action::bounds().to_vec() }
    }

    pub fn act(&self, feat: &Feat) -> Result<[f64; 6], RlError> {
        let cache = self.enc.forward(feat.img_slice(), &feat.vec)?;
        let mut y = Vec::new();
        self.head.forward(&cache.feat, &mut y);
        let mut out = [0.0; 6];
        for i in 0..6 {
            out[i] = y[i].clamp(-1.0, 1.0) * self.env_bounds[i];
        }
        Ok(out)
    }

    fn tensors(&self) -> Vec<(&str, &[f64])> {
        let mut ps = self.enc.params();
        ps.extend(self.head.params());
        ps.iter().map(|p| (p.name.as_str(), p.w.as_slice())).collect()
    }

    pub(crate) fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut ps = self.enc.params_mut();
        ps.extend(self.head.params_mut());
        ps
    }
}

/// Any deployable policy, dispatched by file header on load.
pub enum Policy {
    Sac(SacPolicy),
    Sl(SlPolicy),
    Residual { sl: SlPolicy, res: SacPolicy },
}

impl Policy {
    pub fn kind(&self) -> &'static str {
        match self {
            Policy::Sac(_) => "sac",
            Policy::Sl(_) => "sl",
            Policy::Residual { .. } => "residual",
        }
    }

    /// Deterministic action in environment units; the composite for residual
    /// policies is clipped to the full action box.
    pub fn act(&self, feat: &Feat) -> Result<[f64; 6], RlError> {
        match self {
            Policy::Sac(p) => p.act(feat),
            Policy::Sl(p) => p.act(feat),
            Policy::Residual { sl, res } => {
                let base = sl.act(feat)?;
                let corr = res.act(feat)?;
                let full = Action::bounds();
                let mut out = [0.0; 6];
                for i in 0..6 {
                    out[i] = (base[i] + corr[i]).clamp(-full[i], full[i]);
                }
                Ok(out)
            }
        }
    }

    pub fn save(&self, path: &Path, meta: &PolicyMeta) -> Result<(), RlError> {
        let header = serde_json::to_string(meta)
            .map_err(|e| RlError::BadPolicy(format!("meta encode: {e}")))?;
        let tensors = match self {
            Policy::Sac(p) => p.tensors(),
            Policy::Sl(p) => p.tensors(),
            Policy::Residual { sl, res } => {
                let mut t = sl.tensors();
                t.extend(res.tensors());
                t
            }
        };
        save_tensors(path, &header, &tensors)?;
        Ok(())
    }

    pub fn load(path: &Path, cfg: &Config) -> Result<(Policy, PolicyMeta), RlError> {
        let (header, tensors) = load_tensors(path)?;
        let meta: PolicyMeta = serde_json::from_str(&header)
            .map_err(|e| RlError::BadPolicy(format!("meta decode: {e}")))?;
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let spec = encoder_spec(cfg, meta.vec_dim, meta.image);
        let policy = match meta.kind.as_str() {
            "sac" => {
                let mut p = SacPolicy {
                    enc: Encoder::new("enc", &spec, &mut rng),
                    pi: GaussianHead::new(
                        "pi",
                        spec.fusion_hidden,
                        &[1.0; 6],
                        cfg.log_std_min,
                        cfg.log_std_max,
                        &mut rng,
                    ),
                    env_bounds: Action::bounds().to_vec(),
                };
                restore_params(&mut p.params_mut(), &tensors)?;
                Policy::Sac(p)
            }
            "sl" => {
                let mut p = SlPolicy::new(cfg, meta.vec_dim, meta.image, 0);
                restore_params(&mut p.params_mut(), &tensors)?;
                Policy::Sl(p)
            }
            "residual" => {
                let mut sl = SlPolicy::new(cfg, meta.vec_dim, meta.image, 0);
                restore_params(&mut sl.params_mut(), &tensors)?;
                let res_bounds: Vec<f64> =
                    Action::bounds().iter().map(|b| b * cfg.residual_scale).collect();
                let mut res = SacPolicy {
                    enc: Encoder::new("enc", &spec, &mut rng),
                    pi: GaussianHead::new(
                        "pi",
                        spec.fusion_hidden,
                        &[1.0; 6],
                        cfg.log_std_min,
                        cfg.log_std_max,
                        &mut rng,
                    ),
                    env_bounds: res_bounds,
                };
                restore_params(&mut res.params_mut(), &tensors)?;
                Policy::Residual { sl, res }
            }
            other => return Err(RlError::BadPolicy(format!("unknown policy kind `{other}`"))),
        };
        Ok((policy, meta))
    }
}

/// Meta header for peg-task policies under the given masks.
pub fn peg_meta(cfg: &Config, kind: &str, mask_vision: bool, mask_tactile: bool) -> PolicyMeta {
    PolicyMeta {
        kind: kind.to_string(),
        vec_dim: Featurizer::vec_dim(),
        image: Some((cfg.image_h, cfg.image_w)),
        mask_vision,
        mask_tactile,
        cfg_digest: cfg.digest(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn tiny_cfg() -> Config {
        let mut cfg = Config::default();
        cfg.image_h = 8;
        cfg.image_w = 8;
        cfg.conv_channels1 = 2;
        cfg.conv_channels2 = 3;
        cfg.img_feat = 8;
        cfg.vec_hidden = 8;
        cfg.fusion_hidden = 12;
        cfg
    }

    fn feat_for(cfg: &Config) -> Feat {
        let hw = cfg.image_h * cfg.image_w;
        Feat {
            img: Some(std::sync::Arc::new(vec![0.3f32; 3 * hw])),
            vec: std::sync::Arc::new((0..Featurizer::vec_dim()).map(|i| 0.1 * i as f64).collect()),
        }
    }

    #[test]
    fn sl_policy_round_trips_through_disk_bitwise() {
        let cfg = tiny_cfg();
        let sl = SlPolicy::new(&cfg, Featurizer::vec_dim(), Some((8, 8)), 7);
        let feat = feat_for(&cfg);
        let before = sl.act(&feat).unwrap();
        let dir = tempdir().unwrap();
        let path = dir.path().join("sl.policy");
        let meta = peg_meta(&cfg, "sl", false, false);
        Policy::Sl(sl).save(&path, &meta).unwrap();
        let (loaded, got_meta) = Policy::load(&path, &cfg).unwrap();
        assert_eq!(got_meta, meta);
        let after = loaded.act(&feat).unwrap();
        assert_eq!(before.to_vec(), after.to_vec());
    }

    #[test]
    fn residual_policy_act_is_clipped_composite() {
        let cfg = tiny_cfg();
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let spec = encoder_spec(&cfg, Featurizer::vec_dim(), Some((8, 8)));
        let sl = SlPolicy::new(&cfg, Featurizer::vec_dim(), Some((8, 8)), 1);
        let res = SacPolicy {
            enc: Encoder::new("enc", &spec, &mut rng),
            pi: GaussianHead::new("pi", spec.fusion_hidden, &[1.0; 6], -5.0, 2.0, &mut rng),
            env_bounds: Action::bounds().iter().map(|b| b * 0.5).collect(),
        };
        let feat = feat_for(&cfg);
        let base = sl.act(&feat).unwrap();
        let corr = res.act(&feat).unwrap();
        let p = Policy::Residual { sl, res };
        let act = p.act(&feat).unwrap();
        let full = Action::bounds();
        for i in 0..6 {
            let want = (base[i] + corr[i]).clamp(-full[i], full[i]);
            assert_eq!(act[i], want);
            assert!(act[i].abs() <= full[i]);
        }
    }

    #[test]
    fn unknown_policy_kind_is_refused() {
        let cfg = tiny_cfg();
        let dir = tempdir().unwrap();
        let path = dir.path().join("p.policy");
        let sl = SlPolicy::new(&cfg, Featurizer::vec_dim(), Some((8, 8)), 7);
        let mut meta = peg_meta(&cfg, "sl", false, false);
        meta.kind = "mystery".into();
        Policy::Sl(sl).save(&path, &meta).unwrap();
        let err = Policy::load(&path, &cfg);
        assert!(matches!(err, Err(RlError::BadPolicy(_))));
    }

    #[test]
    fn shape_mismatch_on_load_is_an_error() {
        let cfg = tiny_cfg();
        let dir = tempdir().unwrap();
        let path = dir.path().join("p.policy");
        let sl = SlPolicy::new(&cfg, Featurizer::vec_dim(), Some((8, 8)), 7);
        let meta = peg_meta(&cfg, "sl", false, false);
        Policy::Sl(sl).save(&path, &meta).unwrap();
        let mut wider = cfg.clone();
        wider.fusion_hidden = 24;
        assert!(Policy::load(&path, &wider).is_err());
    }
}
