//! Small fixed-architecture neural stack: dense and strided convolution
//! layers, a fused two-branch encoder, Gaussian policy and critic heads, an
//! Adam optimizer, binary checkpoints, and a finite-difference gradient
//! checker. Reverse-mode gradients are hand-written per layer; there is no
//! general autodiff graph. Everything is 64-bit and single-threaded, so
//! training is bit-reproducible under a fixed seed.

pub mod checkpoint;
pub mod encoder;
pub mod gradcheck;
pub mod heads;
pub mod layers;

pub use checkpoint::{load_tensors, save_tensors};
pub use encoder::{EncCache, Encoder};
pub use gradcheck::gradcheck_all;
pub use heads::{CriticCache, CriticHead, GaussianHead, HeadSample};
pub use layers::{Conv2, Dense};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("{what}: expected {want} values, got {got}")]
    Shape { what: &'static str, got: usize, want: usize },
    #[error("non-finite gradient in `{0}`; parameters left untouched")]
    NanGradient(String),
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format: {0}")]
    Format(String),
    #[error("checkpoint tensor `{0}` missing or mis-sized")]
    BadTensor(String),
}

/// One learnable tensor: value, gradient accumulator, Adam moments.
#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub w: Vec<f64>,
    pub g: Vec<f64>,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Param {
    pub fn new(name: impl Into<String>, w: Vec<f64>) -> Param {
        let n = w.len();
        Param { name: name.into(), w, g: vec![0.0; n], m: vec![0.0; n], v: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.g.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// Adam with the standard constants. One instance per parameter group; the
/// step counter is shared by the whole group.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
}

impl Adam {
    pub fn new(lr: f64) -> Adam {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0 }
    }

    /// Applies one update from the accumulated gradients, then clears them.
    /// Any non-finite gradient aborts before touching a single parameter.
    pub fn step(&mut self, params: &mut [&mut Param]) -> Result<(), NnError> {
        for p in params.iter() {
            if p.g.iter().any(|g| !g.is_finite()) {
                return Err(NnError::NanGradient(p.name.clone()));
            }
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for p in params.iter_mut() {
            for i in 0..p.w.len() {
                let g = p.g[i];
                p.m[i] = self.beta1 * p.m[i] + (1.0 - self.beta1) * g;
                p.v[i] = self.beta2 * p.v[i] + (1.0 - self.beta2) * g * g;
                let mh = p.m[i] / bc1;
                let vh = p.v[i] / bc2;
                p.w[i] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
            p.zero_grad();
        }
        Ok(())
    }
}

/// Polyak averaging of a target parameter group toward its online twin:
/// target ← (1−τ)·target + τ·online. τ = 1 copies outright.
pub fn polyak(target: &mut [&mut Param], online: &[&Param], tau: f64) {
    debug_assert_eq!(target.len(), online.len());
    for (t, o) in target.iter_mut().zip(online) {
        debug_assert_eq!(t.w.len(), o.w.len());
        for (tw, ow) in t.w.iter_mut().zip(&o.w) {
            *tw = (1.0 - tau) * *tw + tau * ow;
        }
    }
}

/// Numerically stable ln(1 + e^x).
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// ln(1 − tanh²(u)) without catastrophic cancellation at large |u|.
pub fn log_one_minus_tanh_sq(u: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u))
}

/// Central-difference check of accumulated gradients. The caller runs one
/// forward/backward pass leaving analytic gradients in each `Param::g`, then
/// hands over closures that expose the parameter group and recompute the
/// scalar loss. Returns the worst relative error; pairs where both the
/// analytic and numeric value sit below the difference noise floor count as
/// exact.
pub fn max_grad_rel_err<M>(
    model: &mut M,
    mut params_of: impl FnMut(&mut M) -> Vec<&mut Param>,
    mut loss_of: impl FnMut(&mut M) -> f64,
    h: f64,
) -> f64 {
    let n_groups = params_of(model).len();
    let mut worst: f64 = 0.0;
    for pi in 0..n_groups {
        let len = params_of(model)[pi].len();
        for i in 0..len {
            let (orig, g) = {
                let ps = params_of(model);
                (ps[pi].w[i], ps[pi].g[i])
            };
            params_of(model)[pi].w[i] = orig + h;
            let lp = loss_of(model);
            params_of(model)[pi].w[i] = orig - h;
            let lm = loss_of(model);
            params_of(model)[pi].w[i] = orig;
            let fd = (lp - lm) / (2.0 * h);
            let denom = g.abs().max(fd.abs());
            if denom > 1e-7 {
                worst = worst.max((g - fd).abs() / denom);
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_leaves_fresh_parameters_alone_on_zero_gradient() {
        let mut p = Param::new("p", vec![1.0, -2.0, 3.0]);
        let before = p.w.clone();
        let mut opt = Adam::new(1e-3);
        opt.step(&mut [&mut p]).unwrap();
        assert_eq!(p.w, before);
    }

    #[test]
    fn adam_moments_decay_without_gradient_signal() {
        let mut p = Param::new("p", vec![1.0, -2.0, 3.0]);
        p.m = vec![0.5; 3];
        p.v = vec![0.25; 3];
        let mut opt = Adam::new(1e-3);
        opt.step(&mut [&mut p]).unwrap();
        assert!(p.m.iter().all(|&m| (m - 0.45).abs() < 1e-15));
        assert!(p.v.iter().all(|&v| (v - 0.24975).abs() < 1e-15));
        // Remembered momentum still moves the weights; the step honours the
        // bias-corrected moment ratio.
        let expect = 1e-3 * (0.45 / 0.1) / ((0.24975f64 / 1e-3).sqrt() + 1e-8);
        for w in &p.w {
            let moved = (w - w.round()).abs();
            assert!((moved - expect).abs() < 1e-12, "step {moved} vs {expect}");
        }
    }

    #[test]
    fn adam_step_size_approaches_lr_under_constant_gradient() {
        let mut p = Param::new("p", vec![0.0]);
        let mut opt = Adam::new(1e-3);
        let mut prev = 0.0;
        let mut last_step = 0.0;
        for _ in 0..5000 {
            p.g[0] = 3.7;
            opt.step(&mut [&mut p]).unwrap();
            last_step = prev - p.w[0];
            prev = p.w[0];
        }
        // Constant positive gradient: per-step movement tends to lr·sign(g).
        assert!((last_step - 1e-3).abs() < 1e-6, "step {last_step}");
    }

    #[test]
    fn adam_is_deterministic() {
        let run = || {
            let mut p = Param::new("p", vec![0.2, -0.4]);
            let mut opt = Adam::new(3e-4);
            for k in 0..200 {
                p.g[0] = (k as f64 * 0.1).sin();
                p.g[1] = (k as f64 * 0.2).cos();
                opt.step(&mut [&mut p]).unwrap();
            }
            p.w
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn nan_gradient_is_rejected_before_any_update() {
        let mut a = Param::new("a", vec![1.0]);
        let mut b = Param::new("b", vec![2.0]);
        a.g[0] = 0.5;
        b.g[0] = f64::NAN;
        let mut opt = Adam::new(1e-3);
        let err = opt.step(&mut [&mut a, &mut b]).unwrap_err();
        assert!(matches!(err, NnError::NanGradient(ref n) if n == "b"));
        assert_eq!(a.w[0], 1.0);
        assert_eq!(b.w[0], 2.0);
    }

    #[test]
    fn squash_log_term_matches_naive_form_and_stays_finite() {
        for &u in &[-0.9f64, -0.1, 0.0, 0.3, 1.7] {
            let naive = (1.0 - u.tanh() * u.tanh()).ln();
            assert!((log_one_minus_tanh_sq(u) - naive).abs() < 1e-12);
        }
        // Naive form underflows to ln(0) here; the stable form does not.
        assert!(log_one_minus_tanh_sq(25.0).is_finite());
        assert!((log_one_minus_tanh_sq(25.0) + 2.0 * (25.0 - std::f64::consts::LN_2)).abs() < 1e-9);
    }
}
