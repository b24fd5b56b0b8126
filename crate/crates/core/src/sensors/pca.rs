//! Linear feature extraction for the marker flow field. A model is fitted
//! once on a synthetic calibration sweep that exercises pressure, shear, and
//! twist loads across their working ranges, then frozen; at run time each raw
//! flow vector is centered and projected onto the top principal directions.
//!
//! Conventions: components are orthonormal rows sorted by descending
//! explained variance (sample variance, n-1 denominator); each component's
//! largest-magnitude entry is made positive so fits are reproducible up to
//! eigenvalue ties. Models persist to a plain text format that round-trips
//! every float bit-exactly.

use crate::config::Config;
use crate::rng::RandomStream;
use crate::sensors::tactile::{GelLoad, MarkerField};
use nalgebra::DMatrix;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PcaError {
    #[error("need at least 2 frames, got {0}")]
    TooFewFrames(usize),
    #[error("frame {index} has {got} values, expected {want}")]
    FrameDim { index: usize, got: usize, want: usize },
    #[error("requested {k} components from {d}-dimensional data")]
    TooManyComponents { k: usize, d: usize },
    #[error("component {index} is rank deficient (eigenvalue {value:.3e})")]
    RankDeficient { index: usize, value: f64 },
    #[error("projection input has {got} values, expected {want}")]
    InputDim { got: usize, want: usize },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {0}: {1}")]
    Parse(usize, String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Orthonormal rows, one per retained component, descending variance.
    pub components: Vec<Vec<f64>>,
    /// Sample variance captured by each component.
    pub explained: Vec<f64>,
}

impl PcaModel {
    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.components.len()
    }

    /// Fits the top `k` principal components of `rows` (one frame per row).
    pub fn fit(rows: &[Vec<f64>], k: usize) -> Result<PcaModel, PcaError> {
        let n = rows.len();
        if n < 2 {
            return Err(PcaError::TooFewFrames(n));
        }
        let d = rows[0].len();
        for (i, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(PcaError::FrameDim { index: i, got: r.len(), want: d });
            }
        }
        if k > d {
            return Err(PcaError::TooManyComponents { k, d });
        }

        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }

        // Covariance with the sample (n-1) denominator.
        let mut x = DMatrix::<f64>::zeros(n, d);
        for (r, row) in rows.iter().enumerate() {
            for c in 0..d {
                x[(r, c)] = row[c] - mean[c];
            }
        }
        let cov = x.tr_mul(&x) / (n as f64 - 1.0);

        let eig = cov.symmetric_eigen();
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());

        let scale_ref = eig.eigenvalues[order[0]].max(0.0);
        let mut components = Vec::with_capacity(k);
        let mut explained = Vec::with_capacity(k);
        for (rank, &idx) in order.iter().take(k).enumerate() {
            let lambda = eig.eigenvalues[idx];
            if lambda <= scale_ref * 1e-12 || lambda <= 0.0 {
                return Err(PcaError::RankDeficient { index: rank, value: lambda });
            }
            let col = eig.eigenvectors.column(idx);
            let mut comp: Vec<f64> = col.iter().copied().collect();
            let peak = comp
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
                .map(|(i, _)| i)
                .unwrap();
            if comp[peak] < 0.0 {
                for v in &mut comp {
                    *v = -*v;
                }
            }
            components.push(comp);
            explained.push(lambda);
        }
        Ok(PcaModel { mean, components, explained })
    }

    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>, PcaError> {
        let d = self.input_dim();
        if x.len() != d {
            return Err(PcaError::InputDim { got: x.len(), want: d });
        }
        let mut out = Vec::with_capacity(self.output_dim());
        for comp in &self.components {
            let mut acc = 0.0;
            for i in 0..d {
                acc += comp[i] * (x[i] - self.mean[i]);
            }
            out.push(acc);
        }
        Ok(out)
    }

    /// Per-component standard deviations, for whitening projections.
    pub fn scales(&self) -> Vec<f64> {
        self.explained.iter().map(|&v| v.max(f64::MIN_POSITIVE).sqrt()).collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("pca v1\n");
        out.push_str(&format!("dim {} {}\n", self.input_dim(), self.output_dim()));
        out.push_str("mean");
        for v in &self.mean {
            out.push_str(&format!(" {}", v));
        }
        out.push('\n');
        out.push_str("explained");
        for v in &self.explained {
            out.push_str(&format!(" {}", v));
        }
        out.push('\n');
        for (i, comp) in self.components.iter().enumerate() {
            out.push_str(&format!("component {}", i));
            for v in comp {
                out.push_str(&format!(" {}", v));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<PcaModel, PcaError> {
        fn expect<'a>(
            got: Option<(usize, &'a str)>,
            what: &str,
        ) -> Result<(usize, &'a str), PcaError> {
            got.ok_or_else(|| PcaError::Parse(0, format!("missing {what}")))
        }
        let mut lines = text.lines().enumerate();
        let (ln, first) = expect(lines.next(), "magic line")?;
        if first.trim() != "pca v1" {
            return Err(PcaError::Parse(ln + 1, "expected `pca v1`".into()));
        }
        let (ln, dims) = expect(lines.next(), "dim line")?;
        let parts: Vec<&str> = dims.split_whitespace().collect();
        if parts.len() != 3 || parts[0] != "dim" {
            return Err(PcaError::Parse(ln + 1, "expected `dim <in> <out>`".into()));
        }
        let parse_usize = |s: &str, ln: usize| {
            s.parse::<usize>().map_err(|e| PcaError::Parse(ln + 1, e.to_string()))
        };
        let d = parse_usize(parts[1], ln)?;
        let k = parse_usize(parts[2], ln)?;

        let parse_floats = |line: &str, ln: usize, tag: &str, want: usize| {
            let mut it = line.split_whitespace();
            let head = it.next().unwrap_or("");
            if head != tag {
                return Err(PcaError::Parse(ln + 1, format!("expected `{tag}` line")));
            }
            let vals: Result<Vec<f64>, _> = it
                .map(|s| s.parse::<f64>().map_err(|e| PcaError::Parse(ln + 1, e.to_string())))
                .collect();
            let vals = vals?;
            if vals.len() != want {
                return Err(PcaError::Parse(
                    ln + 1,
                    format!("expected {want} values, got {}", vals.len()),
                ));
            }
            Ok(vals)
        };

        let (ln, mline) = expect(lines.next(), "mean line")?;
        let mean = parse_floats(mline, ln, "mean", d)?;
        let (ln, eline) = expect(lines.next(), "explained line")?;
        let explained = parse_floats(eline, ln, "explained", k)?;
        let mut components = Vec::with_capacity(k);
        for i in 0..k {
            let (ln, cline) = expect(lines.next(), "component line")?;
            let mut it = cline.split_whitespace();
            if it.next() != Some("component") || it.next() != Some(&i.to_string()[..]) {
                return Err(PcaError::Parse(ln + 1, format!("expected `component {i}`")));
            }
            let vals: Result<Vec<f64>, _> = it
                .map(|s| s.parse::<f64>().map_err(|e| PcaError::Parse(ln + 1, e.to_string())))
                .collect();
            let vals = vals?;
            if vals.len() != d {
                return Err(PcaError::Parse(ln + 1, format!("expected {d} values")));
            }
            components.push(vals);
        }
        Ok(PcaModel { mean, components, explained })
    }

    pub fn save(&self, path: &Path) -> Result<(), PcaError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<PcaModel, PcaError> {
        let text = std::fs::read_to_string(path)?;
        PcaModel::from_text(&text)
    }
}

/// Builds the calibration sweep and fits the projection model. The sweep runs
/// `calib_profiles` load directions, each ramped from zero to its peak over
/// the per-profile frame budget, covering pressure in [0, 25] N, shear in
/// [-20, 20] N per axis, and twist in [-0.6, 0.6] N.m, with fresh marker
/// noise on every frame. Deterministic in `pca_seed`.
pub fn calibrate(cfg: &Config) -> Result<PcaModel, PcaError> {
    let field = MarkerField::new(cfg);
    let mut streams = RandomStream::new(cfg.pca_seed);
    let per = cfg.calib_frames / cfg.calib_profiles;
    let mut rows = Vec::with_capacity(per * cfg.calib_profiles);
    for i in 0..cfg.calib_profiles {
        let theta = 2.0 * std::f64::consts::PI * (i as f64 + 0.5) / cfg.calib_profiles as f64;
        let peak = GelLoad {
            pressure: 12.5 * (1.0 + theta.sin()),
            shear: [20.0 * theta.cos(), 20.0 * (2.0 * theta).sin()],
            twist: 0.6 * (3.0 * theta).sin(),
        };
        for j in 0..per {
            let r = if per > 1 { j as f64 / (per as f64 - 1.0) } else { 1.0 };
            let load = GelLoad {
                pressure: r * peak.pressure,
                shear: [r * peak.shear[0], r * peak.shear[1]],
                twist: r * peak.twist,
            };
            rows.push(field.flow(&load, streams.domain_rand()));
        }
    }
    PcaModel::fit(&rows, cfg.pca_dim)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_first_component_and_variance() {
        // Points along (0.6, 0.8) with projections {-2,-1,0,1,2}, plus a tiny
        // orthogonal wobble so the spectrum has rank 2.
        let u = [0.6, 0.8];
        let w = [-0.8, 0.6];
        let mut rows = Vec::new();
        for (i, t) in [-2.0, -1.0, 0.0, 1.0, 2.0].iter().enumerate() {
            let e = if i % 2 == 0 { 1e-4 } else { -1e-4 };
            rows.push(vec![t * u[0] + e * w[0], t * u[1] + e * w[1]]);
        }
        let m = PcaModel::fit(&rows, 2).unwrap();
        assert!((m.components[0][0] - 0.6).abs() < 1e-6);
        assert!((m.components[0][1] - 0.8).abs() < 1e-6);
        // Sample variance of {-2,-1,0,1,2} is 2.5.
        assert!((m.explained[0] - 2.5).abs() < 1e-6);
        assert!(m.explained[1] < 1e-6);
    }

    #[test]
    fn components_are_orthonormal_and_centered() {
        let mut rows = Vec::new();
        let mut s = 1u64;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 33) as f64 / (1u64 << 31) as f64 - 1.0
        };
        for _ in 0..60 {
            rows.push((0..5).map(|_| next()).collect::<Vec<f64>>());
        }
        let m = PcaModel::fit(&rows, 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..5).map(|d| m.components[i][d] * m.components[j][d]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-9, "component {i}.{j} dot {dot}");
            }
        }
        assert!(m.project(&m.mean).unwrap().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn rank_deficiency_is_an_error() {
        let rows: Vec<Vec<f64>> =
            (0..10).map(|i| vec![i as f64, 2.0 * i as f64, -i as f64]).collect();
        match PcaModel::fit(&rows, 2) {
            Err(PcaError::RankDeficient { index: 1, .. }) => {}
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn text_round_trip_is_bit_exact() {
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|i| {
                let t = i as f64 * 0.37;
                vec![t.sin(), t.cos(), (2.0 * t).sin() * 0.3, 0.1 * t]
            })
            .collect();
        let m = PcaModel::fit(&rows, 3).unwrap();
        let back = PcaModel::from_text(&m.to_text()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn calibration_is_deterministic_and_sized() {
        let cfg = Config::default();
        let a = calibrate(&cfg).unwrap();
        let b = calibrate(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.input_dim(), 2 * 7 * 7 * 2);
        assert_eq!(a.output_dim(), 15);
        for w in a.explained.windows(2) {
            assert!(w[0] >= w[1]);
        }
        assert!(a.explained[0] > 0.0);
    }

    #[test]
    fn projection_separates_load_directions() {
        let cfg = Config::default();
        let m = calibrate(&cfg).unwrap();
        let field = MarkerField::new(&cfg);
        let mut streams = RandomStream::new(99);
        let a = field
            .flow(&GelLoad { pressure: 15.0, shear: [0.0, 0.0], twist: 0.0 }, streams.domain_rand());
        let b = field
            .flow(&GelLoad { pressure: 0.0, shear: [15.0, 0.0], twist: 0.0 }, streams.domain_rand());
        let pa = m.project(&a).unwrap();
        let pb = m.project(&b).unwrap();
        let dist: f64 = pa.iter().zip(&pb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        let noise_floor: f64 = 10.0 * cfg.marker_noise * (m.input_dim() as f64).sqrt();
        assert!(dist > noise_floor, "dist {dist} vs floor {noise_floor}");
    }
}
