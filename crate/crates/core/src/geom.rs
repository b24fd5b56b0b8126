//! Planar geometry for peg cross-sections and hole openings. Holes are the
//! peg section dilated by the clearance, so containment reduces to distance
//! tests against the base section: a convex shape fits inside the dilation
//! exactly when every boundary point lies within `clearance` of the base.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SectionError {
    #[error("circle radius must be positive, got {0}")]
    BadRadius(f64),
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("polygon is not convex and counter-clockwise at vertex {0}")]
    NotConvex(usize),
    #[error("polygon must contain the origin strictly inside")]
    OriginOutside,
    #[error("section contains a non-finite coordinate")]
    NonFinite,
}

/// Convex peg cross-section in its own frame, origin inside.
#[derive(Debug, Clone, PartialEq)]
pub enum Section {
    Circle { radius: f64 },
    /// Counter-clockwise convex vertex loop.
    Polygon { verts: Vec<[f64; 2]> },
}

impl Section {
    pub fn validate(&self) -> Result<(), SectionError> {
        match self {
            Section::Circle { radius } => {
                if !radius.is_finite() {
                    return Err(SectionError::NonFinite);
                }
                if *radius <= 0.0 {
                    return Err(SectionError::BadRadius(*radius));
                }
                Ok(())
            }
            Section::Polygon { verts } => {
                if verts.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(SectionError::NonFinite);
                }
                if verts.len() < 3 {
                    return Err(SectionError::TooFewVertices(verts.len()));
                }
                let n = verts.len();
                for i in 0..n {
                    let a = verts[i];
                    let b = verts[(i + 1) % n];
                    let c = verts[(i + 2) % n];
                    if cross(sub(b, a), sub(c, b)) <= 0.0 {
                        return Err(SectionError::NotConvex((i + 1) % n));
                    }
                }
                if !point_in_convex([0.0, 0.0], verts) {
                    return Err(SectionError::OriginOutside);
                }
                Ok(())
            }
        }
    }

    /// Maximum distance from the origin to the section boundary.
    pub fn outer_radius(&self) -> f64 {
        match self {
            Section::Circle { radius } => *radius,
            Section::Polygon { verts } => verts
                .iter()
                .map(|v| (v[0] * v[0] + v[1] * v[1]).sqrt())
                .fold(0.0, f64::max),
        }
    }

    /// Vertices of the section rotated by `yaw` and shifted by `offset`.
    /// Circles return an empty list; their tests are radial.
    pub fn placed_verts(&self, offset: [f64; 2], yaw: f64) -> Vec<[f64; 2]> {
        match self {
            Section::Circle { .. } => Vec::new(),
            Section::Polygon { verts } => {
                let (s, c) = yaw.sin_cos();
                verts
                    .iter()
                    .map(|v| {
                        [c * v[0] - s * v[1] + offset[0], s * v[0] + c * v[1] + offset[1]]
                    })
                    .collect()
            }
        }
    }
}

pub fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

pub fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Point containment for a counter-clockwise convex polygon (boundary counts
/// as inside).
pub fn point_in_convex(p: [f64; 2], verts: &[[f64; 2]]) -> bool {
    let n = verts.len();
    for i in 0..n {
        let a = verts[i];
        let b = verts[(i + 1) % n];
        if cross(sub(b, a), sub(p, a)) < 0.0 {
            return false;
        }
    }
    true
}

/// Distance from a point to a convex polygon; zero when inside.
pub fn dist_to_convex(p: [f64; 2], verts: &[[f64; 2]]) -> f64 {
    if point_in_convex(p, verts) {
        return 0.0;
    }
    let n = verts.len();
    let mut best = f64::INFINITY;
    for i in 0..n {
        let d = dist_point_segment(p, verts[i], verts[(i + 1) % n]);
        if d < best {
            best = d;
        }
    }
    best
}

pub fn dist_point_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = sub(b, a);
    let ap = sub(p, a);
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 {
        ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let q = [a[0] + t * ab[0], a[1] + t * ab[1]];
    let d = sub(p, q);
    (d[0] * d[0] + d[1] * d[1]).sqrt()
}

/// Slack absorbing rounding from vertex placement arithmetic; far below any
/// physical clearance, so boundary contacts never flip on the last bit.
pub const FIT_SLACK: f64 = 1e-12;

/// Whether the peg section, rotated by `yaw` and displaced by `offset` in the
/// hole frame, fits inside the hole opening (the same section dilated by
/// `clearance`). Exact for convex sections: circles reduce to an offset test,
/// polygons to per-vertex distance against the base polygon.
pub fn fits_with_clearance(section: &Section, offset: [f64; 2], yaw: f64, clearance: f64) -> bool {
    match section {
        Section::Circle { .. } => {
            (offset[0] * offset[0] + offset[1] * offset[1]).sqrt() <= clearance + FIT_SLACK
        }
        Section::Polygon { verts } => {
            let placed = section.placed_verts(offset, yaw);
            placed.iter().all(|&p| dist_to_convex(p, verts) <= clearance + FIT_SLACK)
        }
    }
}

/// Andrew monotone-chain convex hull; returns a counter-clockwise loop.
/// Collinear points on the hull edge are dropped.
pub fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts: Vec<[f64; 2]> = points.to_vec();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<[f64; 2]> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2
            && cross(sub(lower[lower.len() - 1], lower[lower.len() - 2]), sub(p, lower[lower.len() - 2])) <= 0.0
        {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2
            && cross(sub(upper[upper.len() - 1], upper[upper.len() - 2]), sub(p, upper[upper.len() - 2])) <= 0.0
        {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}
