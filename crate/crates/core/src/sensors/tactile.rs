//! Marker-based tactile sensing. Two elastomer finger pads grip the peg from
//! opposite sides; each pad carries a square grid of painted markers whose
//! in-plane displacement field responds to the load transmitted through the
//! grip. Pads lie in the peg's x-z plane: the pad u axis follows world x
//! (mirrored on the second finger, which faces the other way) and the pad v
//! axis follows world z.
//!
//! Displacement model per marker at pad position p (relative to pad center):
//! a radial dilation term proportional to pressure, a uniform shear term
//! proportional to in-plane load, and a rotational term proportional to
//! twist, plus Gaussian noise. The second finger sees the u shear component
//! and the twist with opposite sign. Total displacement is capped radially at
//! the elastomer excursion limit.

use crate::config::Config;
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Load transmitted to the finger pads for one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GelLoad {
    /// Compressive load on the pads, N. Dilates the marker field radially.
    pub pressure: f64,
    /// In-plane shear load, N: u follows world x, v follows world z.
    pub shear: [f64; 2],
    /// Torsional load about the peg axis, N.m.
    pub twist: f64,
}

impl GelLoad {
    pub fn zero() -> GelLoad {
        GelLoad { pressure: 0.0, shear: [0.0, 0.0], twist: 0.0 }
    }
}

/// Fixed marker layout plus response gains, built from the config.
#[derive(Debug, Clone)]
pub struct MarkerField {
    grid: usize,
    fingers: usize,
    pitch: f64,
    gain_dilate: f64,
    gain_shear: f64,
    gain_twist: f64,
    noise: f64,
    cap: f64,
}

impl MarkerField {
    pub fn new(cfg: &Config) -> MarkerField {
        MarkerField {
            grid: cfg.marker_grid,
            fingers: cfg.fingers,
            pitch: cfg.marker_pitch,
            gain_dilate: cfg.gain_dilate,
            gain_shear: cfg.gain_shear,
            gain_twist: cfg.gain_twist,
            noise: cfg.marker_noise,
            cap: cfg.elastomer_cap,
        }
    }

    /// Flow vector length: fingers x grid x grid markers, two components each.
    pub fn raw_dim(&self) -> usize {
        self.fingers * self.grid * self.grid * 2
    }

    /// Marker pad coordinates (u, v) for row-major index m, centered on zero.
    fn marker_pos(&self, m: usize) -> [f64; 2] {
        let row = m / self.grid;
        let col = m % self.grid;
        let half = (self.grid as f64 - 1.0) / 2.0;
        [(col as f64 - half) * self.pitch, (row as f64 - half) * self.pitch]
    }

    /// Displacement field for one load, flattened finger-major then marker
    /// row-major, (du, dv) per marker.
    pub fn flow<R: Rng>(&self, load: &GelLoad, rng: &mut R) -> Vec<f64> {
        let normal = Normal::new(0.0, self.noise).expect("noise sigma is finite");
        let mut out = Vec::with_capacity(self.raw_dim());
        for f in 0..self.fingers {
            let s = if f % 2 == 0 { 1.0 } else { -1.0 };
            for m in 0..self.grid * self.grid {
                let p = self.marker_pos(m);
                let mut du = self.gain_dilate * load.pressure * p[0]
                    + self.gain_shear * load.shear[0] * s
                    + self.gain_twist * load.twist * (-p[1]) * s
                    + normal.sample(rng);
                let mut dv = self.gain_dilate * load.pressure * p[1]
                    + self.gain_shear * load.shear[1]
                    + self.gain_twist * load.twist * p[0] * s
                    + normal.sample(rng);
                let mag = du.hypot(dv);
                if mag > self.cap {
                    let k = self.cap / mag;
                    du *= k;
                    dv *= k;
                }
                out.push(du);
                out.push(dv);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn field() -> MarkerField {
        MarkerField::new(&Config::default())
    }

    fn noiseless() -> MarkerField {
        let mut f = field();
        f.noise = 1e-300; // Normal::new(0, 0) is fine but keep it strictly positive
        f
    }

    #[test]
    fn dimensions_match_the_grid() {
        let f = field();
        assert_eq!(f.raw_dim(), 2 * 7 * 7 * 2);
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        assert_eq!(f.flow(&GelLoad::zero(), &mut rng).len(), f.raw_dim());
    }

    #[test]
    fn pressure_dilates_radially() {
        let f = noiseless();
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let load = GelLoad { pressure: 10.0, shear: [0.0, 0.0], twist: 0.0 };
        let flow = f.flow(&load, &mut rng);
        // Corner marker of finger 0: row 0 col 0 at (-3p, -3p).
        let du = flow[0];
        let dv = flow[1];
        let expect = f.gain_dilate * 10.0 * (-3.0 * f.pitch);
        assert!((du - expect).abs() < 1e-12);
        assert!((dv - expect).abs() < 1e-12);
        // Center marker does not move under pure pressure.
        let mid = (7 * 7) / 2;
        assert!(flow[2 * mid].abs() < 1e-12 && flow[2 * mid + 1].abs() < 1e-12);
    }

    #[test]
    fn second_finger_mirrors_u_shear_and_twist() {
        let f = noiseless();
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let load = GelLoad { pressure: 0.0, shear: [5.0, 2.0], twist: 0.2 };
        let flow = f.flow(&load, &mut rng);
        let per_finger = 7 * 7 * 2;
        for m in 0..49 {
            let p = f.marker_pos(m);
            let u0 = flow[2 * m];
            let v0 = flow[2 * m + 1];
            let u1 = flow[per_finger + 2 * m];
            let v1 = flow[per_finger + 2 * m + 1];
            let shear_u = f.gain_shear * 5.0;
            let shear_v = f.gain_shear * 2.0;
            let twist_u = f.gain_twist * 0.2 * (-p[1]);
            let twist_v = f.gain_twist * 0.2 * p[0];
            assert!((u0 - (shear_u + twist_u)).abs() < 1e-12);
            assert!((v0 - (shear_v + twist_v)).abs() < 1e-12);
            assert!((u1 - (-shear_u - twist_u)).abs() < 1e-12);
            assert!((v1 - (shear_v - twist_v)).abs() < 1e-12);
        }
    }

    #[test]
    fn excursion_is_capped() {
        let f = noiseless();
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let load = GelLoad { pressure: 0.0, shear: [1e6, 0.0], twist: 0.0 };
        let flow = f.flow(&load, &mut rng);
        for pair in flow.chunks(2) {
            assert!(pair[0].hypot(pair[1]) <= f.cap + 1e-12);
        }
    }

    #[test]
    fn identical_rng_states_give_identical_noise() {
        let f = field();
        let load = GelLoad { pressure: 3.0, shear: [1.0, -2.0], twist: 0.1 };
        let a = f.flow(&load, &mut ChaCha12Rng::seed_from_u64(42));
        let b = f.flow(&load, &mut ChaCha12Rng::seed_from_u64(42));
        assert_eq!(a, b);
    }
}
