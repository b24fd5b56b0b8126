//! Policy and value heads. The Gaussian head emits a diagonal Gaussian in an
//! unbounded pre-action space and squashes samples into the action box with
//! per-component tanh scaling; log-densities carry the change-of-variables
//! correction. The critic head scores a (feature, action) pair and can run
//! its backward pass without touching parameters, which lets actor updates
//! differentiate through a frozen critic.

use super::layers::{relu, relu_backward, Dense};
use super::{log_one_minus_tanh_sq, Param};
use rand::Rng;
use rand_distr::StandardNormal;

pub(crate) const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Diagonal Gaussian with tanh squashing onto `[-bounds_i, bounds_i]`.
pub struct GaussianHead {
    pub lin: Dense,
    pub bounds: Vec<f64>,
    pub log_std_min: f64,
    pub log_std_max: f64,
}

/// One reparameterized draw with everything its backward pass needs.
pub struct HeadSample {
    /// Squashed, scaled action.
    pub a: Vec<f64>,
    /// Pre-squash Gaussian draw u = μ + σ·ε.
    pub u: Vec<f64>,
    pub eps: Vec<f64>,
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
    /// Clamp active on log-std i: its gradient path is cut.
    pub clamped: Vec<bool>,
    pub log_prob: f64,
    feat: Vec<f64>,
}

/// Cache for the density of a given (feature, action) pair.
pub struct LogProbCache {
    pub log_prob: f64,
    u: Vec<f64>,
    mean: Vec<f64>,
    log_std: Vec<f64>,
    clamped: Vec<bool>,
    feat: Vec<f64>,
}

impl GaussianHead {
    pub fn new<R: Rng>(
        name: &str,
        feat_dim: usize,
        bounds: &[f64],
        log_std_min: f64,
        log_std_max: f64,
        rng: &mut R,
    ) -> GaussianHead {
        assert!(bounds.iter().all(|&b| b > 0.0));
        GaussianHead {
            lin: Dense::new(name, feat_dim, 2 * bounds.len(), rng),
            bounds: bounds.to_vec(),
            log_std_min,
            log_std_max,
        }
    }

    pub fn action_dim(&self) -> usize {
        self.bounds.len()
    }

    pub(crate) fn mean_and_log_std(&self, feat: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<bool>) {
        let d = self.action_dim();
        let mut pre = Vec::new();
        self.lin.forward(feat, &mut pre);
        let mean = pre[..d].to_vec();
        let mut log_std = Vec::with_capacity(d);
        let mut clamped = Vec::with_capacity(d);
        for &raw in &pre[d..] {
            let c = raw.clamp(self.log_std_min, self.log_std_max);
            clamped.push(c != raw);
            log_std.push(c);
        }
        (mean, log_std, clamped)
    }

    /// Reparameterized draw: a = bound · tanh(μ + σ·ε), ε ~ N(0, 1).
    pub fn sample<R: Rng>(&self, feat: &[f64], rng: &mut R) -> HeadSample {
        let (mean, log_std, clamped) = self.mean_and_log_std(feat);
        let d = self.action_dim();
        let mut u = Vec::with_capacity(d);
        let mut eps = Vec::with_capacity(d);
        let mut a = Vec::with_capacity(d);
        let mut log_prob = 0.0;
        for i in 0..d {
            let e: f64 = rng.sample(StandardNormal);
            let ui = mean[i] + log_std[i].exp() * e;
            eps.push(e);
            u.push(ui);
            a.push(self.bounds[i] * ui.tanh());
            log_prob += -log_std[i] - HALF_LN_2PI - 0.5 * e * e
                - self.bounds[i].ln()
                - log_one_minus_tanh_sq(ui);
        }
        HeadSample { a, u, eps, mean, log_std, clamped, log_prob, feat: feat.to_vec() }
    }

    /// Deterministic action: the squashed mean.
    pub fn mean_action(&self, feat: &[f64]) -> Vec<f64> {
        let (mean, _, _) = self.mean_and_log_std(feat);
        mean.iter().zip(&self.bounds).map(|(m, b)| b * m.tanh()).collect()
    }

    /// Log-density of a stored action (behavior cloning). Components are
    /// un-squashed through atanh; the grid-bounded action space keeps the
    /// ratio strictly inside ±1.
    pub fn log_prob(&self, feat: &[f64], a: &[f64]) -> LogProbCache {
        let (mean, log_std, clamped) = self.mean_and_log_std(feat);
        let d = self.action_dim();
        let mut u = Vec::with_capacity(d);
        let mut log_prob = 0.0;
        for i in 0..d {
            let r = (a[i] / self.bounds[i]).clamp(-(1.0 - 1e-12), 1.0 - 1e-12);
            let ui = r.atanh();
            let z = (ui - mean[i]) / log_std[i].exp();
            log_prob += -log_std[i] - HALF_LN_2PI - 0.5 * z * z
                - self.bounds[i].ln()
                - log_one_minus_tanh_sq(ui);
            u.push(ui);
        }
        LogProbCache { log_prob, u, mean, log_std, clamped, feat: feat.to_vec() }
    }

    /// Backward through a reparameterized draw. `dl_da` is the loss gradient
    /// on the squashed action, `dl_dlogp` on the sample's log-density.
    /// Accumulates into the head's parameters; feature gradients are
    /// deliberately unavailable, the encoder never learns from the actor.
    pub fn backward_sample(&mut self, s: &HeadSample, dl_da: &[f64], dl_dlogp: f64) {
        let d = self.action_dim();
        let mut dpre = vec![0.0; 2 * d];
        for i in 0..d {
            let t = s.u[i].tanh();
            let sech2 = 1.0 - t * t;
            let sigma = s.log_std[i].exp();
            // d log π / du: the Gaussian factor has no u-dependence at fixed
            // ε; only the squash correction contributes, 2·tanh(u).
            let du = dl_da[i] * self.bounds[i] * sech2 + dl_dlogp * 2.0 * t;
            dpre[i] = du;
            if !s.clamped[i] {
                dpre[d + i] = du * sigma * s.eps[i] - dl_dlogp;
            }
        }
        self.lin.backward(&s.feat, &dpre, None);
    }

    /// Backward through a stored-action log-density.
    pub fn backward_log_prob(&mut self, c: &LogProbCache, dl_dlogp: f64) {
        let d = self.action_dim();
        let mut dpre = vec![0.0; 2 * d];
        for i in 0..d {
            let z = (c.u[i] - c.mean[i]) / c.log_std[i].exp();
            dpre[i] = dl_dlogp * z / c.log_std[i].exp();
            if !c.clamped[i] {
                dpre[d + i] = dl_dlogp * (z * z - 1.0);
            }
        }
        self.lin.backward(&c.feat, &dpre, None);
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.lin.params_mut()
    }

    pub fn params(&self) -> Vec<&Param> {
        self.lin.params()
    }
}

/// Q head: (feature ⧺ action) → hidden → scalar.
pub struct CriticHead {
    pub l1: Dense,
    pub l2: Dense,
}

pub struct CriticCache {
    x: Vec<f64>,
    h: Vec<f64>,
    pub q: f64,
}

impl CriticHead {
    pub fn new<R: Rng>(name: &str, in_dim: usize, hidden: usize, rng: &mut R) -> CriticHead {
        CriticHead {
            l1: Dense::new(&format!("{name}.l1"), in_dim, hidden, rng),
            l2: Dense::new(&format!("{name}.l2"), hidden, 1, rng),
        }
    }

    pub fn forward(&self, x: &[f64]) -> CriticCache {
        let mut h = Vec::new();
        self.l1.forward(x, &mut h);
        relu(&mut h);
        let mut q = Vec::new();
        self.l2.forward(&h, &mut q);
        CriticCache { x: x.to_vec(), h, q: q[0] }
    }

    /// Accumulates parameter gradients; optionally returns the input
    /// gradient (feature and action parts concatenated).
    pub fn backward(&mut self, c: &CriticCache, dq: f64, dx: Option<&mut [f64]>) {
        let mut dh = vec![0.0; c.h.len()];
        self.l2.backward(&c.h, &[dq], Some(&mut dh));
        relu_backward(&c.h, &mut dh);
        self.l1.backward(&c.x, &dh, dx);
    }

    /// Input gradient only, parameters frozen: how Q moves with its input.
    pub fn backward_input(&self, c: &CriticCache, dq: f64, dx: &mut [f64]) {
        let mut dh = vec![0.0; c.h.len()];
        self.l2.backward_input(&[dq], &mut dh);
        relu_backward(&c.h, &mut dh);
        self.l1.backward_input(&dh, dx);
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.l1.params_mut();
        v.extend(self.l2.params_mut());
        v
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut v = self.l1.params();
        v.extend(self.l2.params());
        v
    }
}
