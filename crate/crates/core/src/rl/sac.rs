//! Soft actor-critic over the shared encoder. The encoder is trained by
//! critic gradients only; the actor and the behavior-cloning objective see
//! detached features. Twin critics with polyak-averaged targets bound the
//! temporal-difference target, and the entropy temperature either stays
//! fixed or tracks a target entropy of minus the action dimension.
//!
//! The policy head lives on the unit action box; physical scaling happens at
//! the environment boundary. Reward scaling applies when targets are formed,
//! never to stored transitions.

use std::path::Path;

use rand_chacha::ChaCha12Rng;

use crate::config::Config;
use crate::nn::checkpoint::save_tensors;
use crate::nn::encoder::{Encoder, EncoderSpec};
use crate::nn::heads::{CriticHead, GaussianHead};
use crate::nn::{polyak, Adam, Param};

use super::buffer::{Source, StoredTransition};
use super::featurize::Feat;
use super::policy::SacPolicy;
use super::RlError;

/// Trainer constants, distilled from the run configuration.
#[derive(Debug, Clone, Copy)]
pub struct SacCfg {
    pub gamma: f64,
    pub tau: f64,
    pub batch: usize,
    pub lr: f64,
    pub alpha_init: f64,
    pub alpha_auto: bool,
    pub reward_scale: f64,
    pub log_std_min: f64,
    pub log_std_max: f64,
}

impl SacCfg {
    pub fn from_config(cfg: &Config) -> SacCfg {
        SacCfg {
            gamma: cfg.gamma,
            tau: cfg.polyak_tau,
            batch: cfg.batch_size,
            lr: cfg.lr,
            alpha_init: cfg.alpha_init,
            alpha_auto: cfg.alpha_auto,
            reward_scale: cfg.reward_scale,
            log_std_min: cfg.log_std_min,
            log_std_max: cfg.log_std_max,
        }
    }
}

/// Per-update scalars for the training log.
#[derive(Debug, Clone, Copy, Default)]
pub struct Losses {
    pub critic1: f64,
    pub critic2: f64,
    pub actor: f64,
}

pub struct Sac {
    pub enc: Encoder,
    enc_t: Encoder,
    pub pi: GaussianHead,
    q1: CriticHead,
    q2: CriticHead,
    q1_t: CriticHead,
    q2_t: CriticHead,
    log_alpha: Param,
    alpha_fixed: Option<f64>,
    opt_critic: Adam,
    opt_actor: Adam,
    opt_alpha: Adam,
    target_entropy: f64,
    env_bounds: Vec<f64>,
    act_dim: usize,
    c: SacCfg,
    updates: usize,
}

impl Sac {
    pub fn new(spec: &EncoderSpec, env_bounds: &[f64], c: SacCfg, rng: &mut ChaCha12Rng) -> Sac {
        let act_dim = env_bounds.len();
        assert!(act_dim > 0 && env_bounds.iter().all(|b| *b > 0.0));
        let enc = Encoder::new("enc", spec, rng);
        let mut enc_t = Encoder::new("enc_t", spec, rng);
        let unit = vec![1.0; act_dim];
        let pi = GaussianHead::new("pi", spec.fusion_hidden, &unit, c.log_std_min, c.log_std_max, rng);
        let qin = spec.fusion_hidden + act_dim;
        let q1 = CriticHead::new("q1", qin, spec.fusion_hidden, rng);
        let q2 = CriticHead::new("q2", qin, spec.fusion_hidden, rng);
        let mut q1_t = CriticHead::new("q1_t", qin, spec.fusion_hidden, rng);
        let mut q2_t = CriticHead::new("q2_t", qin, spec.fusion_hidden, rng);
        polyak(&mut enc_t.params_mut(), &enc.params(), 1.0);
        polyak(&mut q1_t.params_mut(), &q1.params(), 1.0);
        polyak(&mut q2_t.params_mut(), &q2.params(), 1.0);
        // A fixed temperature is used verbatim, including zero; the tuned
        // temperature lives in log space.
        let alpha_fixed = if c.alpha_auto { None } else { Some(c.alpha_init) };
        let log_alpha = Param::new("log_alpha", vec![c.alpha_init.max(1e-8).ln()]);
        Sac {
            enc,
            enc_t,
            pi,
            q1,
            q2,
            q1_t,
            q2_t,
            log_alpha,
            alpha_fixed,
            opt_critic: Adam::new(c.lr),
            opt_actor: Adam::new(c.lr),
            opt_alpha: Adam::new(c.lr),
            target_entropy: -(act_dim as f64),
            env_bounds: env_bounds.to_vec(),
            act_dim,
            c,
            updates: 0,
        }
    }

    pub fn batch_size(&self) -> usize {
        self.c.batch
    }

    pub fn alpha(&self) -> f64 {
        self.alpha_fixed.unwrap_or_else(|| self.log_alpha.w[0].exp())
    }

    fn normalize(&self, a: &[f64; 6]) -> Vec<f64> {
        (0..self.act_dim).map(|i| a[i] / self.env_bounds[i]).collect()
    }

    fn scale_out(&self, a: &[f64]) -> [f64; 6] {
        let mut out = [0.0; 6];
        for i in 0..self.act_dim {
            out[i] = a[i] * self.env_bounds[i];
        }
        out
    }

    /// Stochastic action for rollouts, environment units.
    pub fn act_explore(&self, feat: &Feat, rng: &mut ChaCha12Rng) -> Result<[f64; 6], RlError> {
        let cache = self.enc.forward(feat.img_slice(), &feat.vec)?;
        let s = self.pi.sample(&cache.feat, rng);
        Ok(self.scale_out(&s.a))
    }

    /// Deterministic action (squashed mean), environment units.
    pub fn act_mean(&self, feat: &Feat) -> Result<[f64; 6], RlError> {
        let cache = self.enc.forward(feat.img_slice(), &feat.vec)?;
        let m = self.pi.mean_action(&cache.feat);
        Ok(self.scale_out(&m))
    }

    fn non_finite(&self, what: &str) -> RlError {
        RlError::NonFinite { step: self.updates, what: what.to_string() }
    }

    /// One gradient step on critics (which also trains the encoder), actor,
    /// and temperature, followed by a polyak target sync.
    pub fn update(
        &mut self,
        batch: &[&StoredTransition],
        rng: &mut ChaCha12Rng,
    ) -> Result<Losses, RlError> {
        assert!(!batch.is_empty());
        let b = batch.len() as f64;
        let alpha = self.alpha();
        let fdim = self.enc.out_dim();

        // Temporal-difference targets from the target networks; the fresh
        // next action comes from the current policy on online features.
        let mut ys = Vec::with_capacity(batch.len());
        for t in batch {
            let next_on = self.enc.forward(t.next.img_slice(), &t.next.vec)?;
            let s = self.pi.sample(&next_on.feat, rng);
            let next_tg = self.enc_t.forward(t.next.img_slice(), &t.next.vec)?;
            let mut x = next_tg.feat;
            x.extend_from_slice(&s.a);
            let q1 = self.q1_t.forward(&x).q;
            let q2 = self.q2_t.forward(&x).q;
            let cont = if t.done { 0.0 } else { 1.0 };
            ys.push(
                self.c.reward_scale * t.reward
                    + self.c.gamma * cont * (q1.min(q2) - alpha * s.log_prob),
            );
        }

        // Critic regression; encoder gradients flow from both critics.
        let mut c1_loss = 0.0;
        let mut c2_loss = 0.0;
        let mut feats = Vec::with_capacity(batch.len());
        for (t, y) in batch.iter().zip(&ys) {
            let ec = self.enc.forward(t.obs.img_slice(), &t.obs.vec)?;
            let a_norm = self.normalize(&t.action);
            let mut x = ec.feat.clone();
            x.extend_from_slice(&a_norm);
            let k1 = self.q1.forward(&x);
            let k2 = self.q2.forward(&x);
            let e1 = k1.q - y;
            let e2 = k2.q - y;
            c1_loss += e1 * e1 / b;
            c2_loss += e2 * e2 / b;
            let mut dx1 = vec![0.0; x.len()];
            self.q1.backward(&k1, 2.0 * e1 / b, Some(&mut dx1));
            let mut dx2 = vec![0.0; x.len()];
            self.q2.backward(&k2, 2.0 * e2 / b, Some(&mut dx2));
            let mut dfeat = vec![0.0; fdim];
            for j in 0..fdim {
                dfeat[j] = dx1[j] + dx2[j];
            }
            self.enc.backward(&ec, &dfeat);
            feats.push(ec.feat);
        }
        if !c1_loss.is_finite() || !c2_loss.is_finite() {
            return Err(self.non_finite("critic loss"));
        }
        {
            let mut ps = self.enc.params_mut();
            ps.extend(self.q1.params_mut());
            ps.extend(self.q2.params_mut());
            self.opt_critic.step(&mut ps)?;
        }

        // Actor step on detached features; critic parameters only provide
        // the action gradient, they are not updated here.
        let mut actor_loss = 0.0;
        let mut ent_gap = 0.0;
        for f in &feats {
            let s = self.pi.sample(f, rng);
            let mut x = f.clone();
            x.extend_from_slice(&s.a);
            let k1 = self.q1.forward(&x);
            let k2 = self.q2.forward(&x);
            let use1 = k1.q <= k2.q;
            let qmin = if use1 { k1.q } else { k2.q };
            actor_loss += (alpha * s.log_prob - qmin) / b;
            ent_gap += (s.log_prob + self.target_entropy) / b;
            let mut dx = vec![0.0; x.len()];
            if use1 {
                self.q1.backward_input(&k1, -1.0 / b, &mut dx);
            } else {
                self.q2.backward_input(&k2, -1.0 / b, &mut dx);
            }
            self.pi.backward_sample(&s, &dx[fdim..], alpha / b);
        }
        if !actor_loss.is_finite() {
            return Err(self.non_finite("actor loss"));
        }
        self.opt_actor.step(&mut self.pi.params_mut())?;

        // Temperature tracks the entropy target in log space.
        if self.alpha_fixed.is_none() {
            if !ent_gap.is_finite() {
                return Err(self.non_finite("temperature gradient"));
            }
            self.log_alpha.g[0] = -ent_gap;
            self.opt_alpha.step(&mut [&mut self.log_alpha])?;
        }

        self.sync_targets(self.c.tau);
        self.updates += 1;
        Ok(Losses { critic1: c1_loss, critic2: c2_loss, actor: actor_loss })
    }

    /// One behavior-cloning step on the actor head alone: gradient of
    /// −λ·mean log-likelihood of expert actions, skipped entirely at λ = 0.
    pub fn bc_update(
        &mut self,
        batch: &[&StoredTransition],
        lambda: f64,
    ) -> Result<f64, RlError> {
        if lambda == 0.0 {
            return Ok(0.0);
        }
        assert!(!batch.is_empty());
        let b = batch.len() as f64;
        let mut loss = 0.0;
        for t in batch {
            assert_eq!(t.src, Source::Expert, "behavior cloning consumes expert data only");
            let ec = self.enc.forward(t.obs.img_slice(), &t.obs.vec)?;
            let a_norm = self.normalize(&t.action);
            let lp = self.pi.log_prob(&ec.feat, &a_norm);
            loss += -lambda * lp.log_prob / b;
            self.pi.backward_log_prob(&lp, -lambda / b);
        }
        if !loss.is_finite() {
            return Err(self.non_finite("behavior-cloning loss"));
        }
        self.opt_actor.step(&mut self.pi.params_mut())?;
        Ok(loss)
    }

    pub fn sync_targets(&mut self, tau: f64) {
        polyak(&mut self.enc_t.params_mut(), &self.enc.params(), tau);
        polyak(&mut self.q1_t.params_mut(), &self.q1.params(), tau);
        polyak(&mut self.q2_t.params_mut(), &self.q2.params(), tau);
    }

    /// Full parameter snapshot for failure diagnostics.
    pub fn save_diagnostic(&self, path: &Path) -> Result<(), RlError> {
        let mut ps = self.enc.params();
        ps.extend(self.enc_t.params());
        ps.extend(self.pi.params());
        ps.extend(self.q1.params());
        ps.extend(self.q2.params());
        ps.extend(self.q1_t.params());
        ps.extend(self.q2_t.params());
        let mut tensors: Vec<(&str, &[f64])> =
            ps.iter().map(|p| (p.name.as_str(), p.w.as_slice())).collect();
        tensors.push((self.log_alpha.name.as_str(), self.log_alpha.w.as_slice()));
        save_tensors(path, "diagnostic snapshot", &tensors)?;
        Ok(())
    }

    /// Extracts the deployable policy, dropping critics and targets.
    pub fn into_policy(self) -> SacPolicy {
        SacPolicy { enc: self.enc, pi: self.pi, env_bounds: self.env_bounds }
    }
}
