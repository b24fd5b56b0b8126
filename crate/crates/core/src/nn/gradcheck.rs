//! Runtime gradient verification across every layer type. The command-line
//! `gradcheck` subcommand and the acceptance suite both call this; the same
//! central-difference comparisons also run as unit tests.
//!
//! Rectified layers are only piecewise smooth: a pre-activation that lands
//! within the finite-difference window of a kink makes a single probe point
//! report a large error on perfectly correct code, and a zero bias atop a
//! fully dead layer parks the kink exactly at the evaluation point. Two
//! countermeasures keep the check sound: every parameter is re-drawn from a
//! continuous distribution (no exact zeros), and each layer type is probed
//! at several independent points, scoring the minimum. A genuine gradient
//! bug is systematic and fails at every point; a kink graze is specific to
//! one.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

use super::encoder::{Encoder, EncoderSpec};
use super::heads::{CriticHead, GaussianHead, HALF_LN_2PI};
use super::layers::{Conv2, Dense};
use super::{log_one_minus_tanh_sq, max_grad_rel_err, Param};

const PROBES: u64 = 3;
const PROBE_STRIDE: u64 = 0x9E3779B97F4A7C15;

/// Worst relative error per layer type, each the minimum over independent
/// probe points. Every entry should sit below 1e-4.
pub fn gradcheck_all(seed: u64) -> Vec<(&'static str, f64)> {
    vec![
        ("dense", probe_min(seed, dense_err)),
        ("conv", probe_min(seed, conv_err)),
        ("encoder-fused", probe_min(seed, |s| encoder_err(s, true))),
        ("encoder-vectors", probe_min(seed, |s| encoder_err(s, false))),
        ("gaussian-sample-path", probe_min(seed, sample_err)),
        ("gaussian-log-prob", probe_min(seed, logprob_err)),
        ("critic", probe_min(seed, critic_err)),
    ]
}

fn probe_min(seed: u64, f: impl Fn(u64) -> f64) -> f64 {
    (1..=PROBES)
        .map(|i| f(seed.wrapping_add(PROBE_STRIDE.wrapping_mul(i))))
        .fold(f64::INFINITY, f64::min)
}

/// Replaces every parameter with a continuous nonzero draw so no rectifier
/// kink coincides with the evaluation point.
fn scatter(params: Vec<&mut Param>, rng: &mut ChaCha12Rng) {
    for p in params {
        for v in &mut p.w {
            *v = rng.gen_range(-0.5..0.5);
        }
    }
}

fn coef(n: usize) -> Vec<f64> {
    (0..n).map(|i| 1.0 + 0.37 * i as f64).collect()
}

fn dense_err(seed: u64) -> f64 {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut layer = Dense::new("d", 5, 4, &mut rng);
    scatter(layer.params_mut(), &mut rng);
    let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let c = coef(4);
    struct M {
        layer: Dense,
        x: Vec<f64>,
        c: Vec<f64>,
    }
    let mut m = M { layer, x, c: c.clone() };
    m.layer.backward(&m.x.clone(), &c, None);
    max_grad_rel_err(
        &mut m,
        |m| m.layer.params_mut(),
        |m| {
            let mut y = Vec::new();
            m.layer.forward(&m.x, &mut y);
            y.iter().zip(&m.c).map(|(a, b)| a * b).sum()
        },
        1e-5,
    )
}

fn conv_err(seed: u64) -> f64 {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut layer = Conv2::new("c", 3, 2, &mut rng);
    scatter(layer.params_mut(), &mut rng);
    let (h, w) = (6, 6);
    let x: Vec<f64> = (0..3 * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let c = coef(layer.out_len(h, w));
    struct M {
        layer: Conv2,
        x: Vec<f64>,
        c: Vec<f64>,
    }
    let mut m = M { layer, x, c: c.clone() };
    m.layer.backward(&m.x.clone(), h, w, &c, None);
    max_grad_rel_err(
        &mut m,
        |m| m.layer.params_mut(),
        |m| {
            let mut y = Vec::new();
            m.layer.forward(&m.x, 6, 6, &mut y);
            y.iter().zip(&m.c).map(|(a, b)| a * b).sum()
        },
        1e-5,
    )
}

fn encoder_err(seed: u64, with_image: bool) -> f64 {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let spec = EncoderSpec {
        image: if with_image { Some((6, 6)) } else { None },
        vec_dim: 4,
        conv1: 2,
        conv2: 3,
        img_feat: 5,
        vec_hidden: 4,
        fusion_hidden: 6,
    };
    let mut enc = Encoder::new("enc", &spec, &mut rng);
    scatter(enc.params_mut(), &mut rng);
    let img: Vec<f32> = (0..3 * 6 * 6).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
    let vec_in: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let img_arg = with_image.then_some(img.as_slice());
    let cache = enc.forward(img_arg, &vec_in).unwrap();
    let dfeat = vec![1.0; cache.feat.len()];
    enc.backward(&cache, &dfeat);
    struct M {
        enc: Encoder,
        img: Vec<f32>,
        vec_in: Vec<f64>,
        with_image: bool,
    }
    let mut m = M { enc, img, vec_in, with_image };
    max_grad_rel_err(
        &mut m,
        |m| m.enc.params_mut(),
        |m| {
            let img = m.with_image.then_some(m.img.as_slice());
            m.enc.forward(img, &m.vec_in).unwrap().feat.iter().sum()
        },
        1e-5,
    )
}

fn sample_err(seed: u64) -> f64 {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut h = GaussianHead::new("pi", 5, &[1.0, 0.5, 2.0], -5.0, 2.0, &mut rng);
    scatter(h.params_mut(), &mut rng);
    let feat: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let s = h.sample(&feat, &mut rng);
    let c = coef(h.action_dim());
    struct M {
        h: GaussianHead,
        feat: Vec<f64>,
        eps: Vec<f64>,
        c: Vec<f64>,
    }
    impl M {
        fn loss(&mut self) -> f64 {
            let (mean, log_std, _) = self.h.mean_and_log_std(&self.feat);
            let mut l = 0.0;
            for i in 0..self.h.action_dim() {
                let u = mean[i] + log_std[i].exp() * self.eps[i];
                let a = self.h.bounds[i] * u.tanh();
                let lp = -log_std[i] - HALF_LN_2PI - 0.5 * self.eps[i] * self.eps[i]
                    - self.h.bounds[i].ln()
                    - log_one_minus_tanh_sq(u);
                l += self.c[i] * a + 0.3 * lp;
            }
            l
        }
    }
    let mut m = M { h, feat, eps: s.eps.clone(), c: c.clone() };
    m.h.backward_sample(&s, &c, 0.3);
    max_grad_rel_err(&mut m, |m| m.h.params_mut(), M::loss, 1e-5)
}

fn logprob_err(seed: u64) -> f64 {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut h = GaussianHead::new("pi", 5, &[1.0, 0.5, 2.0], -5.0, 2.0, &mut rng);
    scatter(h.params_mut(), &mut rng);
    let feat: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let a: Vec<f64> = h.bounds.iter().map(|b| b * rng.gen_range(-0.9..0.9)).collect();
    let cache = h.log_prob(&feat, &a);
    struct M {
        h: GaussianHead,
        feat: Vec<f64>,
        a: Vec<f64>,
    }
    let mut m = M { h, feat, a };
    m.h.backward_log_prob(&cache, -1.0);
    max_grad_rel_err(
        &mut m,
        |m| m.h.params_mut(),
        |m| -m.h.log_prob(&m.feat, &m.a).log_prob,
        1e-5,
    )
}

fn critic_err(seed: u64) -> f64 {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut critic = CriticHead::new("q", 7, 8, &mut rng);
    scatter(critic.params_mut(), &mut rng);
    let x: Vec<f64> = (0..7).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let cache = critic.forward(&x);
    critic.backward(&cache, 1.0, None);
    struct M {
        critic: CriticHead,
        x: Vec<f64>,
    }
    let mut m = M { critic, x };
    max_grad_rel_err(&mut m, |m| m.critic.params_mut(), |m| m.critic.forward(&m.x).q, 1e-5)
}
