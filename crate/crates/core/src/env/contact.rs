//! Quasi-static contact resolution for a gripped peg over a board with one
//! clearance-fit hole. The gripper is position controlled and stiff, so each
//! step projects a commanded pose onto the feasible set instead of
//! integrating dynamics; reaction forces are synthesized from the blocked
//! part of the command through a linear stiffness.
//!
//! Geometry model: the board occupies z below `top_z` and is laterally
//! unbounded (the drawn board square is cosmetic). The hole is the peg
//! section dilated by the pair clearance, axis aligned, running from `top_z`
//! down to `bottom_z`. While the tip is below the mouth the peg touches the
//! walls through two cross-sections, one at the tip and one at the mouth
//! plane; both must fit, which caps tilt in proportion to depth.
//!
//! Each step resolves in two phases. Phase L applies the lateral and
//! rotational part of the command at constant height, bisecting along the
//! command path for the first wall contact. Phase Z then applies the vertical
//! part: descent across the mouth requires the section to fit and tilt to be
//! at most `tilt_max`, vertical motion inside the hole jams whenever tilt
//! exceeds `tilt_max`, and the floor stops descent at `bottom_z`. Contact-free
//! steps return the commanded pose bit for bit, which the trajectory record
//! format relies on.

use crate::geom::{fits_with_clearance, Section};
use crate::types::Pose;
use nalgebra::{Rotation3, Vector3};

/// Height classification slack, meters. Far below the action grid, so it only
/// absorbs repeated-contact rounding, never a real command.
const Z_EPS: f64 = 1e-9;

const BISECT_ITERS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hole {
    pub center: [f64; 2],
    pub top_z: f64,
    pub bottom_z: f64,
    pub clearance: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct ContactParams {
    /// Reaction per meter of blocked translation, N/m.
    pub stiffness: f64,
    /// Kinetic friction ratio applied when sliding under load.
    pub friction_mu: f64,
    /// Tilt gate for crossing the mouth and for vertical motion inside.
    pub tilt_max: f64,
    /// Reaction per radian of blocked yaw, N.m/rad.
    pub torsion_stiffness: f64,
}

/// Reactions synthesized from the blocked part of one command.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactSummary {
    /// Vertical reaction, N, nonnegative (floor, surface, mouth, or jam).
    pub normal: f64,
    /// Lateral wall reaction, N, pointing against the removed motion.
    pub lateral: [f64; 2],
    /// Friction from sliding while loaded, N, nonnegative.
    pub friction: f64,
    /// Yaw reaction, N.m, signed against the removed rotation.
    pub torque: f64,
}

impl ContactSummary {
    pub fn none() -> ContactSummary {
        ContactSummary { normal: 0.0, lateral: [0.0, 0.0], friction: 0.0, torque: 0.0 }
    }

    pub fn lateral_magnitude(&self) -> f64 {
        (self.lateral[0] * self.lateral[0] + self.lateral[1] * self.lateral[1]).sqrt()
    }

    /// Single load scalar used by force statistics.
    pub fn magnitude(&self) -> f64 {
        (self.normal * self.normal
            + self.lateral[0] * self.lateral[0]
            + self.lateral[1] * self.lateral[1]
            + self.friction * self.friction)
            .sqrt()
    }

    pub fn in_contact(&self) -> bool {
        self.normal > 0.0 || self.lateral_magnitude() > 0.0 || self.torque != 0.0
    }
}

/// Peg axis direction for roll/pitch/yaw applied as Rz(yaw) Ry(pitch) Rx(roll).
fn axis(rot: [f64; 3]) -> Vector3<f64> {
    Rotation3::from_euler_angles(rot[0], rot[1], rot[2]) * Vector3::z()
}

pub fn tilt(rot: [f64; 3]) -> f64 {
    rot[0].hypot(rot[1])
}

/// Wall feasibility for a tip pose at a given height: both the tip section
/// and the section at the mouth plane must fit inside the dilated opening.
/// Heights at or above the mouth are always feasible (free space).
pub fn wall_ok(section: &Section, hole: &Hole, pos: [f64; 3], rot: [f64; 3]) -> bool {
    if pos[2] >= hole.top_z - Z_EPS {
        return true;
    }
    let off_tip = [pos[0] - hole.center[0], pos[1] - hole.center[1]];
    if !fits_with_clearance(section, off_tip, rot[2], hole.clearance) {
        return false;
    }
    let a = axis(rot);
    if a.z <= 0.5 {
        // Tilt far beyond anything reachable; treat as infeasible outright.
        return false;
    }
    let depth = hole.top_z - pos[2];
    let lever = depth / a.z;
    let off_mouth = [off_tip[0] + lever * a.x, off_tip[1] + lever * a.y];
    fits_with_clearance(section, off_mouth, rot[2], hole.clearance)
}

/// Whether a pose is a valid resting placement: free space, or a feasible
/// in-hole pose above the floor. Used to vet sampled start poses.
pub fn placement_ok(section: &Section, hole: &Hole, pose: &Pose) -> bool {
    if pose.pos[2] >= hole.top_z - Z_EPS {
        return true;
    }
    pose.pos[2] >= hole.bottom_z - Z_EPS && wall_ok(section, hole, pose.pos, pose.rot)
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

/// Projects the commanded pose `to` onto the feasible set reachable from
/// `from`, returning the achieved pose and the synthesized reactions.
pub fn resolve(
    section: &Section,
    hole: &Hole,
    params: &ContactParams,
    from: &Pose,
    to: &Pose,
) -> (Pose, ContactSummary) {
    let mut contact = ContactSummary::none();

    // Phase L: lateral translation and all rotations at the current height.
    let (lat_pos, rot, blocked_lat, blocked_yaw) = if from.pos[2] >= hole.top_z - Z_EPS {
        ([to.pos[0], to.pos[1]], to.rot, [0.0, 0.0], 0.0)
    } else {
        let feasible = |t: f64| {
            let p = [
                lerp(from.pos[0], to.pos[0], t),
                lerp(from.pos[1], to.pos[1], t),
                from.pos[2],
            ];
            let r = [
                lerp(from.rot[0], to.rot[0], t),
                lerp(from.rot[1], to.rot[1], t),
                lerp(from.rot[2], to.rot[2], t),
            ];
            wall_ok(section, hole, p, r)
        };
        if feasible(1.0) {
            ([to.pos[0], to.pos[1]], to.rot, [0.0, 0.0], 0.0)
        } else {
            // Invariant: the current pose is feasible, so t = 0 always is.
            let mut lo = 0.0;
            let mut hi = 1.0;
            for _ in 0..BISECT_ITERS {
                let mid = 0.5 * (lo + hi);
                if feasible(mid) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let t = lo;
            let p = [lerp(from.pos[0], to.pos[0], t), lerp(from.pos[1], to.pos[1], t)];
            let r = [
                lerp(from.rot[0], to.rot[0], t),
                lerp(from.rot[1], to.rot[1], t),
                lerp(from.rot[2], to.rot[2], t),
            ];
            let blocked = [(1.0 - t) * (to.pos[0] - from.pos[0]), (1.0 - t) * (to.pos[1] - from.pos[1])];
            let byaw = (1.0 - t) * (to.rot[2] - from.rot[2]);
            (p, r, blocked, byaw)
        }
    };
    contact.lateral = [-params.stiffness * blocked_lat[0], -params.stiffness * blocked_lat[1]];
    contact.torque = -params.torsion_stiffness * blocked_yaw;

    // Phase Z: vertical motion with the phase L result held fixed.
    let zc = from.pos[2];
    let zt = to.pos[2];
    let peg_tilt = tilt(rot);
    let inside = zc < hole.top_z - Z_EPS;
    let z_final = if zt < zc {
        if inside {
            if peg_tilt > params.tilt_max {
                zc // jammed
            } else {
                descend(section, hole, lat_pos, rot, zc, zt)
            }
        } else {
            let entry_fit = fits_with_clearance(
                section,
                [lat_pos[0] - hole.center[0], lat_pos[1] - hole.center[1]],
                rot[2],
                hole.clearance,
            );
            if zt >= hole.top_z {
                zt // stays in free space
            } else if entry_fit && peg_tilt <= params.tilt_max {
                descend(section, hole, lat_pos, rot, hole.top_z, zt)
            } else {
                hole.top_z // lands on the surface or a blocked mouth
            }
        }
    } else if zt > zc {
        if inside && peg_tilt > params.tilt_max {
            zc // jammed upward too
        } else {
            zt
        }
    } else {
        zt
    };

    let blocked_z = (z_final - zt).abs();
    contact.normal = params.stiffness * blocked_z;

    let slid_lat = lat_pos[0] != from.pos[0] || lat_pos[1] != from.pos[1];
    let slid_z = z_final != zc;
    let mut friction = 0.0;
    if slid_z && contact.lateral_magnitude() > 0.0 {
        friction += params.friction_mu * contact.lateral_magnitude();
    }
    if slid_lat && contact.normal > 0.0 {
        friction += params.friction_mu * contact.normal;
    }
    contact.friction = friction;

    let achieved = Pose { pos: [lat_pos[0], lat_pos[1], z_final], rot };
    (achieved, contact)
}

/// Lowest reachable height in [zt, z_hi] going down from z_hi, respecting the
/// floor and the depth-dependent wall fit. Wall feasibility is monotone in
/// depth for a fixed lateral pose, so bisection is exact up to iteration
/// count. Returns `zt` itself when nothing blocks, preserving its bits.
fn descend(section: &Section, hole: &Hole, lat: [f64; 2], rot: [f64; 3], z_hi: f64, zt: f64) -> f64 {
    let z_floor = zt.max(hole.bottom_z);
    if wall_ok(section, hole, [lat[0], lat[1], z_floor], rot) {
        return z_floor;
    }
    let mut lo = z_floor; // infeasible end
    let mut hi = z_hi; // feasible end (mouth plane or current height)
    for _ in 0..BISECT_ITERS {
        let mid = 0.5 * (lo + hi);
        if wall_ok(section, hole, [lat[0], lat[1], mid], rot) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}
