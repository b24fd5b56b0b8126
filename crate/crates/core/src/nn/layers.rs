//! Dense and strided-convolution layers with hand-written backward passes.
//! Forward methods are `&self` and write into caller buffers; backward
//! methods accumulate into the layer's gradient buffers, so one optimizer
//! step can consume a whole minibatch of accumulated sample gradients.

use super::Param;
use rand::Rng;

fn he_uniform<R: Rng>(n: usize, fan_in: usize, rng: &mut R) -> Vec<f64> {
    let limit = (6.0 / fan_in as f64).sqrt();
    (0..n).map(|_| rng.gen_range(-limit..=limit)).collect()
}

/// Fully connected layer, weights stored row-major `[out][in]`.
#[derive(Debug, Clone)]
pub struct Dense {
    pub w: Param,
    pub b: Param,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Dense {
    pub fn new<R: Rng>(name: &str, in_dim: usize, out_dim: usize, rng: &mut R) -> Dense {
        Dense {
            w: Param::new(format!("{name}.w"), he_uniform(out_dim * in_dim, in_dim, rng)),
            b: Param::new(format!("{name}.b"), vec![0.0; out_dim]),
            in_dim,
            out_dim,
        }
    }

    pub fn forward(&self, x: &[f64], y: &mut Vec<f64>) {
        debug_assert_eq!(x.len(), self.in_dim);
        y.clear();
        y.reserve(self.out_dim);
        for o in 0..self.out_dim {
            let row = &self.w.w[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = self.b.w[o];
            for (wi, xi) in row.iter().zip(x) {
                acc += wi * xi;
            }
            y.push(acc);
        }
    }

    /// Accumulates parameter gradients and optionally the input gradient.
    pub fn backward(&mut self, x: &[f64], dy: &[f64], mut dx: Option<&mut [f64]>) {
        debug_assert_eq!(dy.len(), self.out_dim);
        if let Some(dx) = dx.as_deref_mut() {
            dx.iter_mut().for_each(|d| *d = 0.0);
        }
        for o in 0..self.out_dim {
            let d = dy[o];
            self.b.g[o] += d;
            let base = o * self.in_dim;
            for i in 0..self.in_dim {
                self.w.g[base + i] += d * x[i];
            }
            if let Some(dx) = dx.as_deref_mut() {
                for i in 0..self.in_dim {
                    dx[i] += d * self.w.w[base + i];
                }
            }
        }
    }

    /// Input gradient only; parameters untouched. Lets a frozen layer sit on
    /// a differentiation path, as when steering an actor through a critic.
    pub fn backward_input(&self, dy: &[f64], dx: &mut [f64]) {
        debug_assert_eq!(dy.len(), self.out_dim);
        dx.iter_mut().for_each(|d| *d = 0.0);
        for o in 0..self.out_dim {
            let d = dy[o];
            let base = o * self.in_dim;
            for i in 0..self.in_dim {
                dx[i] += d * self.w.w[base + i];
            }
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w, &mut self.b]
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.w, &self.b]
    }
}

/// 3×3 convolution, stride 2, zero padding 1, channel-major layout
/// `[channel][row][col]`. Halves each spatial dimension (rounding up).
#[derive(Debug, Clone)]
pub struct Conv2 {
    pub w: Param,
    pub b: Param,
    pub c_in: usize,
    pub c_out: usize,
}

pub fn conv_out_side(side: usize) -> usize {
    (side + 1) / 2
}

impl Conv2 {
    pub fn new<R: Rng>(name: &str, c_in: usize, c_out: usize, rng: &mut R) -> Conv2 {
        Conv2 {
            w: Param::new(format!("{name}.w"), he_uniform(c_out * c_in * 9, c_in * 9, rng)),
            b: Param::new(format!("{name}.b"), vec![0.0; c_out]),
            c_in,
            c_out,
        }
    }

    pub fn out_len(&self, h: usize, w: usize) -> usize {
        self.c_out * conv_out_side(h) * conv_out_side(w)
    }

    pub fn forward(&self, x: &[f64], h: usize, w: usize, y: &mut Vec<f64>) {
        debug_assert_eq!(x.len(), self.c_in * h * w);
        let (ho, wo) = (conv_out_side(h), conv_out_side(w));
        y.clear();
        y.resize(self.c_out * ho * wo, 0.0);
        for co in 0..self.c_out {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = self.b.w[co];
                    for ci in 0..self.c_in {
                        let wbase = ((co * self.c_in + ci) * 3) * 3;
                        for ky in 0..3 {
                            let yi = (2 * oy + ky) as isize - 1;
                            if yi < 0 || yi >= h as isize {
                                continue;
                            }
                            for kx in 0..3 {
                                let xi = (2 * ox + kx) as isize - 1;
                                if xi < 0 || xi >= w as isize {
                                    continue;
                                }
                                acc += self.w.w[wbase + ky * 3 + kx]
                                    * x[(ci * h + yi as usize) * w + xi as usize];
                            }
                        }
                    }
                    y[(co * ho + oy) * wo + ox] = acc;
                }
            }
        }
    }

    /// Accumulates parameter gradients and optionally the input gradient.
    pub fn backward(
        &mut self,
        x: &[f64],
        h: usize,
        w: usize,
        dy: &[f64],
        mut dx: Option<&mut [f64]>,
    ) {
        let (ho, wo) = (conv_out_side(h), conv_out_side(w));
        debug_assert_eq!(dy.len(), self.c_out * ho * wo);
        if let Some(dx) = dx.as_deref_mut() {
            dx.iter_mut().for_each(|d| *d = 0.0);
        }
        for co in 0..self.c_out {
            for oy in 0..ho {
                for ox in 0..wo {
                    let d = dy[(co * ho + oy) * wo + ox];
                    self.b.g[co] += d;
                    for ci in 0..self.c_in {
                        let wbase = ((co * self.c_in + ci) * 3) * 3;
                        for ky in 0..3 {
                            let yi = (2 * oy + ky) as isize - 1;
                            if yi < 0 || yi >= h as isize {
                                continue;
                            }
                            for kx in 0..3 {
                                let xi = (2 * ox + kx) as isize - 1;
                                if xi < 0 || xi >= w as isize {
                                    continue;
                                }
                                let xidx = (ci * h + yi as usize) * w + xi as usize;
                                self.w.g[wbase + ky * 3 + kx] += d * x[xidx];
                                if let Some(dx) = dx.as_deref_mut() {
                                    dx[xidx] += d * self.w.w[wbase + ky * 3 + kx];
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w, &mut self.b]
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.w, &self.b]
    }
}

/// In-place rectifier.
pub fn relu(x: &mut [f64]) {
    for v in x {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Gradient gate for a rectifier given its output: zero where the unit was
/// clipped. Post-activation values fully determine the mask.
pub fn relu_backward(out: &[f64], d: &mut [f64]) {
    for (o, d) in out.iter().zip(d) {
        if *o <= 0.0 {
            *d = 0.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::max_grad_rel_err;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn zero_parameters_give_zero_output() {
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let mut d = Dense::new("d", 4, 3, &mut rng);
        d.w.w.iter_mut().for_each(|w| *w = 0.0);
        let mut y = Vec::new();
        d.forward(&[1.0, -2.0, 3.0, 4.0], &mut y);
        assert_eq!(y, vec![0.0; 3]);

        let mut c = Conv2::new("c", 2, 3, &mut rng);
        c.w.w.iter_mut().for_each(|w| *w = 0.0);
        let mut y = Vec::new();
        c.forward(&vec![1.0; 2 * 5 * 5], 5, 5, &mut y);
        assert_eq!(y, vec![0.0; 3 * 3 * 3]);
    }

    #[test]
    fn relu_clips_negatives_and_gates_gradients() {
        let mut x = vec![-3.0, -0.5, 0.0, 0.5, 3.0];
        relu(&mut x);
        assert_eq!(x, vec![0.0, 0.0, 0.0, 0.5, 3.0]);
        let mut d = vec![1.0; 5];
        relu_backward(&x, &mut d);
        assert_eq!(d, vec![0.0, 0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn dense_gradient_matches_linear_closed_form() {
        // Loss ‖Wx − y‖² over a bias-free map: dW = 2(Wx − y)xᵀ.
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let mut d = Dense::new("d", 3, 2, &mut rng);
        d.b.w.iter_mut().for_each(|b| *b = 0.0);
        let x = [0.3, -0.7, 1.1];
        let target = [0.5, -0.2];
        let mut y = Vec::new();
        d.forward(&x, &mut y);
        let dy: Vec<f64> = y.iter().zip(&target).map(|(a, b)| 2.0 * (a - b)).collect();
        d.backward(&x, &dy, None);
        for o in 0..2 {
            for i in 0..3 {
                let want = 2.0 * (y[o] - target[o]) * x[i];
                assert!((d.w.g[o * 3 + i] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conv_output_shape_and_padding_behave() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let c = Conv2::new("c", 1, 1, &mut rng);
        // A single centered impulse on 5×5: output 3×3, center output sees
        // the kernel center, corner outputs see the impulse through the
        // matching kernel corner.
        let mut x = vec![0.0; 25];
        x[2 * 5 + 2] = 1.0;
        let mut y = Vec::new();
        c.forward(&x, 5, 5, &mut y);
        assert_eq!(y.len(), 9);
        let k = |ky: usize, kx: usize| c.w.w[ky * 3 + kx];
        let b = c.b.w[0];
        assert!((y[4] - (b + k(1, 1))).abs() < 1e-15, "center tap");
        assert!((y[0] - b).abs() < 1e-15, "impulse out of reach of corner");
        // Output (0,1): centers at input (0,2); impulse (2,2) is at ky=3 —
        // outside the kernel, so only bias.
        assert!((y[1] - b).abs() < 1e-15);
        // Output (1,1) centers at (2,2) exactly.
        assert!((y[4] - (b + k(1, 1))).abs() < 1e-15);
    }

    struct Probe {
        dense: Dense,
        conv: Conv2,
        x: Vec<f64>,
    }

    impl Probe {
        // Scalar pipeline: conv(3×4 input) → relu → dense → sum.
        fn loss(&mut self) -> f64 {
            let mut c = Vec::new();
            self.conv.forward(&self.x, 3, 4, &mut c);
            relu(&mut c);
            let mut y = Vec::new();
            self.dense.forward(&c, &mut y);
            y.iter().sum()
        }
    }

    #[test]
    fn layer_gradients_match_central_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let conv = Conv2::new("c", 2, 3, &mut rng);
        let x: Vec<f64> = (0..2 * 3 * 4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dense = Dense::new("d", conv.out_len(3, 4), 2, &mut rng);
        let mut probe = Probe { dense, conv, x };

        // Analytic pass.
        let mut c = Vec::new();
        probe.conv.forward(&probe.x, 3, 4, &mut c);
        let mut a = c.clone();
        relu(&mut a);
        let mut y = Vec::new();
        probe.dense.forward(&a, &mut y);
        let dy = vec![1.0; 2];
        let mut da = vec![0.0; a.len()];
        probe.dense.backward(&a, &dy, Some(&mut da));
        relu_backward(&a, &mut da);
        probe.conv.backward(&probe.x, 3, 4, &da, None);

        let worst = max_grad_rel_err(
            &mut probe,
            |p| {
                let mut v = p.dense.params_mut();
                v.extend(p.conv.params_mut());
                v
            },
            Probe::loss,
            1e-5,
        );
        assert!(worst < 1e-4, "max relative error {worst}");
    }

    #[test]
    fn conv_input_gradient_matches_central_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let mut conv = Conv2::new("c", 1, 2, &mut rng);
        let x: Vec<f64> = (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut y = Vec::new();
        conv.forward(&x, 4, 5, &mut y);
        let dy = vec![1.0; y.len()];
        let mut dx = vec![0.0; x.len()];
        conv.backward(&x, 4, 5, &dy, Some(&mut dx));

        for i in 0..x.len() {
            let mut xp = x.clone();
            xp[i] += 1e-6;
            let mut yp = Vec::new();
            conv.forward(&xp, 4, 5, &mut yp);
            xp[i] -= 2e-6;
            let mut ym = Vec::new();
            conv.forward(&xp, 4, 5, &mut ym);
            let fd = (yp.iter().sum::<f64>() - ym.iter().sum::<f64>()) / 2e-6;
            assert!((dx[i] - fd).abs() < 1e-6, "input {i}: {} vs {}", dx[i], fd);
        }
    }

    #[test]
    fn dense_backward_input_equals_full_backward_input_grad() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let mut d = Dense::new("d", 6, 4, &mut rng);
        let x: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dy: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut dx_full = vec![0.0; 6];
        d.backward(&x, &dy, Some(&mut dx_full));
        let mut dx_only = vec![0.0; 6];
        d.backward_input(&dy, &mut dx_only);
        assert_eq!(dx_full, dx_only);
        // And the input-only path accumulated nothing.
        let g_after = d.w.g.clone();
        d.backward_input(&dy, &mut dx_only);
        assert_eq!(d.w.g, g_after);
    }
}
