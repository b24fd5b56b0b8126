//! Synthetic camera. An oblique orthographic projection looks straight down
//! at the board: a world point maps to the image plane as its x-y position
//! plus a height-proportional skew, so vertical structure reads as sideways
//! displacement instead of vanishing. The camera is bolted to the nominal
//! hole position; board placement error therefore shows up in the image,
//! which is what makes vision informative for fine alignment.
//!
//! The scene is painted per subsample back to front: background, board
//! square, hole opening, peg silhouette (the convex hull of the projected
//! bottom and top cross-sections). A per-episode RGB gain models lighting
//! variation. Anti-aliasing averages aa x aa subsamples per pixel.

use crate::config::Config;
use crate::geom::{convex_hull, dist_to_convex, point_in_convex, Section};
use crate::types::{Image, Pose};
use nalgebra::{Rotation3, Vector3};

const BACKGROUND: [f32; 3] = [0.12, 0.12, 0.14];
const BOARD: [f32; 3] = [0.45, 0.38, 0.30];
const HOLE: [f32; 3] = [0.04, 0.04, 0.05];

/// Sides used to outline circular sections.
const CIRCLE_SIDES: usize = 24;

pub struct Scene<'a> {
    pub section: &'a Section,
    pub peg_color: [f32; 3],
    pub clearance: f64,
    /// True hole center; the board square is drawn around it.
    pub hole_center: [f64; 2],
    pub peg: &'a Pose,
    /// Per-episode lighting gain applied to every surface.
    pub color_gain: [f32; 3],
}

fn outline(section: &Section, yaw: f64) -> Vec<[f64; 2]> {
    match section {
        Section::Circle { radius } => (0..CIRCLE_SIDES)
            .map(|i| {
                let a = 2.0 * std::f64::consts::PI * i as f64 / CIRCLE_SIDES as f64;
                [radius * a.cos(), radius * a.sin()]
            })
            .collect(),
        Section::Polygon { .. } => section.placed_verts([0.0, 0.0], yaw),
    }
}

/// Renders one frame at the config's resolution.
pub fn render(cfg: &Config, scene: &Scene) -> Image {
    let (h, w) = (cfg.image_h, cfg.image_w);
    let ext = cfg.view_half_extent;
    let cx = cfg.hole_x;
    let cy = cfg.hole_y;
    let top = cfg.board_top_z;
    let project = |p: [f64; 3]| -> [f64; 2] {
        [p[0] - cx + cfg.oblique_x * (p[2] - top), p[1] - cy + cfg.oblique_y * (p[2] - top)]
    };

    // Peg silhouette: bottom ring at the tip, top ring one peg length along
    // the axis, both approximated as planar (small tilts).
    let axis = Rotation3::from_euler_angles(scene.peg.rot[0], scene.peg.rot[1], scene.peg.rot[2])
        * Vector3::z();
    let ring = outline(scene.section, scene.peg.rot[2]);
    let tip = scene.peg.pos;
    let head = [
        tip[0] + cfg.peg_len * axis.x,
        tip[1] + cfg.peg_len * axis.y,
        tip[2] + cfg.peg_len * axis.z,
    ];
    let mut pts = Vec::with_capacity(ring.len() * 2);
    for &[rx, ry] in &ring {
        pts.push(project([tip[0] + rx, tip[1] + ry, tip[2]]));
        pts.push(project([head[0] + rx, head[1] + ry, head[2]]));
    }
    let hull = convex_hull(&pts);

    let hole_off = [scene.hole_center[0] - cx, scene.hole_center[1] - cy];
    let board_he = cfg.board_half_extent;
    let hole_verts = match scene.section {
        Section::Circle { .. } => Vec::new(),
        Section::Polygon { verts } => verts.clone(),
    };
    let in_hole = |u: f64, v: f64| -> bool {
        let p = [u - hole_off[0], v - hole_off[1]];
        match scene.section {
            Section::Circle { radius } => {
                p[0] * p[0] + p[1] * p[1] <= (radius + scene.clearance).powi(2)
            }
            Section::Polygon { .. } => dist_to_convex(p, &hole_verts) <= scene.clearance,
        }
    };

    let aa = cfg.aa_samples.max(1);
    let mut img = Image::zeros(h, w);
    for r in 0..h {
        for c in 0..w {
            let mut acc = [0.0f32; 3];
            for sy in 0..aa {
                for sx in 0..aa {
                    let fx = (c as f64 + (sx as f64 + 0.5) / aa as f64) / w as f64;
                    let fy = (r as f64 + (sy as f64 + 0.5) / aa as f64) / h as f64;
                    let u = (fx - 0.5) * 2.0 * ext;
                    let v = (0.5 - fy) * 2.0 * ext;
                    let mut color = BACKGROUND;
                    if (u - hole_off[0]).abs() <= board_he && (v - hole_off[1]).abs() <= board_he {
                        color = BOARD;
                    }
                    if in_hole(u, v) {
                        color = HOLE;
                    }
                    if hull.len() >= 3 && point_in_convex([u, v], &hull) {
                        color = scene.peg_color;
                    }
                    for ch in 0..3 {
                        acc[ch] += color[ch];
                    }
                }
            }
            let n = (aa * aa) as f32;
            let idx = (r * w + c) * 3;
            for ch in 0..3 {
                img.data[idx + ch] = (acc[ch] / n * scene.color_gain[ch]).clamp(0.0, 1.0);
            }
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::catalog::by_id;

    fn scene_at<'a>(section: &'a Section, peg: &'a Pose, hole: [f64; 2]) -> Scene<'a> {
        Scene {
            section,
            peg_color: [0.85, 0.25, 0.2],
            clearance: 0.001,
            hole_center: hole,
            peg,
            color_gain: [1.0, 1.0, 1.0],
        }
    }

    fn centroid_of_reddish(img: &Image) -> Option<(f64, f64)> {
        let mut n = 0.0;
        let (mut sr, mut sc) = (0.0, 0.0);
        for r in 0..img.h {
            for c in 0..img.w {
                let i = (r * img.w + c) * 3;
                if img.data[i] > 0.6 && img.data[i + 1] < 0.35 {
                    n += 1.0;
                    sr += r as f64;
                    sc += c as f64;
                }
            }
        }
        if n == 0.0 {
            None
        } else {
            Some((sr / n, sc / n))
        }
    }

    #[test]
    fn frames_are_valid_images() {
        let cfg = Config::default();
        let obj = by_id("cube").unwrap();
        let peg = Pose::new([0.5, 0.1, 0.24], [0.0; 3]);
        let img = render(&cfg, &scene_at(&obj.section, &peg, [0.5, 0.1]));
        img.validate().unwrap();
        assert_eq!(img.h, cfg.image_h);
        assert_eq!(img.w, cfg.image_w);
    }

    #[test]
    fn peg_is_visible_and_tracks_position() {
        let cfg = Config::default();
        let obj = by_id("cube").unwrap();
        let left = Pose::new([0.49, 0.1, 0.24], [0.0; 3]);
        let right = Pose::new([0.51, 0.1, 0.24], [0.0; 3]);
        let a = centroid_of_reddish(&render(&cfg, &scene_at(&obj.section, &left, [0.5, 0.1])))
            .expect("peg visible");
        let b = centroid_of_reddish(&render(&cfg, &scene_at(&obj.section, &right, [0.5, 0.1])))
            .expect("peg visible");
        assert!(b.1 - a.1 > 5.0, "left col {} right col {}", a.1, b.1);
    }

    #[test]
    fn height_reads_as_oblique_shift() {
        // Short peg so the whole silhouette stays inside the view at both
        // heights; 20 mm of height at oblique_x 0.35 is 7 mm of skew, about
        // 4.5 columns at the default 50 mm view over 32 px.
        let mut cfg = Config::default();
        cfg.peg_len = 0.02;
        let obj = by_id("cube").unwrap();
        let lowp = Pose::new([0.5, 0.1, 0.225], [0.0; 3]);
        let high = Pose::new([0.5, 0.1, 0.245], [0.0; 3]);
        let a = centroid_of_reddish(&render(&cfg, &scene_at(&obj.section, &lowp, [0.5, 0.1])))
            .expect("peg visible");
        let b = centroid_of_reddish(&render(&cfg, &scene_at(&obj.section, &high, [0.5, 0.1])))
            .expect("peg visible");
        assert!(b.1 - a.1 > 3.0, "low col {} high col {}", a.1, b.1);
    }

    #[test]
    fn board_placement_error_moves_the_dark_opening() {
        let cfg = Config::default();
        let obj = by_id("cube").unwrap();
        // Park the peg far outside the view so the opening is unobstructed.
        let peg = Pose::new([0.8, 0.4, 0.3], [0.0; 3]);
        let dark_centroid = |hole: [f64; 2]| {
            let img = render(&cfg, &scene_at(&obj.section, &peg, hole));
            let mut n = 0.0;
            let (mut sr, mut sc) = (0.0, 0.0);
            for r in 0..img.h {
                for c in 0..img.w {
                    let i = (r * img.w + c) * 3;
                    if img.data[i] < 0.1 && img.data[i + 1] < 0.1 {
                        n += 1.0;
                        sr += r as f64;
                        sc += c as f64;
                    }
                }
            }
            assert!(n > 0.0, "opening not visible");
            (sr / n, sc / n)
        };
        let a = dark_centroid([0.5, 0.1]);
        let b = dark_centroid([0.503, 0.1]);
        assert!(b.1 - a.1 > 1.0, "centered col {} offset col {}", a.1, b.1);
    }

    #[test]
    fn lighting_gain_scales_brightness() {
        let cfg = Config::default();
        let obj = by_id("cube").unwrap();
        let peg = Pose::new([0.5, 0.1, 0.24], [0.0; 3]);
        let mut bright_scene = scene_at(&obj.section, &peg, [0.5, 0.1]);
        bright_scene.color_gain = [1.2, 1.2, 1.2];
        let mut dim_scene = scene_at(&obj.section, &peg, [0.5, 0.1]);
        dim_scene.color_gain = [0.8, 0.8, 0.8];
        let bright = render(&cfg, &bright_scene);
        let dim = render(&cfg, &dim_scene);
        let sum = |img: &Image| img.data.iter().map(|&v| v as f64).sum::<f64>();
        assert!(sum(&bright) > sum(&dim) * 1.2);
    }
}
