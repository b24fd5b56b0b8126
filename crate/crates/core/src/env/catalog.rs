//! Peg-and-hole object pairs. Each pair is a convex cross-section extruded
//! into a peg, plus a board hole shaped as the same section dilated by the
//! pair's clearance. A small builtin catalog covers the shape classes used by
//! the training and evaluation splits; catalogs can also be saved to and
//! loaded from a plain text format.

use crate::geom::{Section, SectionError};
use std::path::Path;
use thiserror::Error;

/// Clearances a pair may declare, meters. Manufacturing comes in these three
/// grades; validation pins them so configs cannot drift silently.
pub const ALLOWED_CLEARANCES: [f64; 3] = [0.0005, 0.001, 0.002];

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("object `{id}`: {err}")]
    Section { id: String, err: SectionError },
    #[error("object `{id}`: clearance {got} is not one of the allowed grades")]
    Clearance { id: String, got: f64 },
    #[error("object `{id}`: color component out of [0,1]")]
    Color { id: String },
    #[error("duplicate object id `{0}`")]
    Duplicate(String),
    #[error("line {0}: {1}")]
    Parse(usize, String),
    #[error("unknown object id `{0}`")]
    Unknown(String),
}

/// One peg/hole pair: section geometry, fit clearance, and display color.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectPair {
    pub id: String,
    pub section: Section,
    pub clearance: f64,
    pub color: [f32; 3],
}

impl ObjectPair {
    pub fn validate(&self) -> Result<(), CatalogError> {
        self.section
            .validate()
            .map_err(|err| CatalogError::Section { id: self.id.clone(), err })?;
        if !ALLOWED_CLEARANCES.iter().any(|&c| c == self.clearance) {
            return Err(CatalogError::Clearance { id: self.id.clone(), got: self.clearance });
        }
        if self.color.iter().any(|&c| !(0.0..=1.0).contains(&c)) {
            return Err(CatalogError::Color { id: self.id.clone() });
        }
        Ok(())
    }
}

fn square(half: f64) -> Section {
    Section::Polygon { verts: vec![[-half, -half], [half, -half], [half, half], [-half, half]] }
}

fn hexagon(circumradius: f64) -> Section {
    let verts = (0..6)
        .map(|i| {
            let a = i as f64 * std::f64::consts::FRAC_PI_3;
            [circumradius * a.cos(), circumradius * a.sin()]
        })
        .collect();
    Section::Polygon { verts }
}

/// The six builtin pairs. The first two form the seen split used for expert
/// collection and training; the rest are held out for generalization runs.
pub fn builtin_catalog() -> Vec<ObjectPair> {
    vec![
        ObjectPair {
            id: "cube".into(),
            section: square(0.0125),
            clearance: 0.001,
            color: [0.85, 0.25, 0.2],
        },
        ObjectPair {
            id: "dshape".into(),
            section: Section::Polygon {
                verts: vec![
                    [-0.008, -0.009],
                    [0.002, -0.012],
                    [0.009, -0.008],
                    [0.012, 0.0],
                    [0.009, 0.008],
                    [0.002, 0.012],
                    [-0.008, 0.009],
                ],
            },
            clearance: 0.001,
            color: [0.3, 0.75, 0.35],
        },
        ObjectPair {
            id: "cylinder".into(),
            section: Section::Circle { radius: 0.0125 },
            clearance: 0.001,
            color: [0.2, 0.45, 0.85],
        },
        ObjectPair {
            id: "hexagon".into(),
            section: hexagon(0.0125),
            clearance: 0.001,
            color: [0.95, 0.8, 0.2],
        },
        ObjectPair {
            id: "triangle".into(),
            section: Section::Polygon {
                verts: vec![[-0.011, -0.009], [0.013, -0.007], [-0.002, 0.013]],
            },
            clearance: 0.002,
            color: [0.7, 0.3, 0.8],
        },
        ObjectPair {
            id: "cube2".into(),
            section: square(0.0125),
            clearance: 0.0005,
            color: [0.95, 0.95, 0.95],
        },
    ]
}

pub fn by_id(id: &str) -> Result<ObjectPair, CatalogError> {
    builtin_catalog()
        .into_iter()
        .find(|o| o.id == id)
        .ok_or_else(|| CatalogError::Unknown(id.to_string()))
}

pub fn save_catalog(objects: &[ObjectPair], path: &Path) -> Result<(), CatalogError> {
    let mut out = String::from("# peglab object catalog v1\n");
    for o in objects {
        o.validate()?;
        out.push_str(&format!("object {}\n", o.id));
        match &o.section {
            Section::Circle { radius } => out.push_str(&format!("circle {}\n", radius)),
            Section::Polygon { verts } => {
                out.push_str("polygon");
                for v in verts {
                    out.push_str(&format!(" {} {}", v[0], v[1]));
                }
                out.push('\n');
            }
        }
        out.push_str(&format!("clearance {}\n", o.clearance));
        out.push_str(&format!("color {} {} {}\n", o.color[0], o.color[1], o.color[2]));
        out.push_str("end\n");
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn load_catalog(path: &Path) -> Result<Vec<ObjectPair>, CatalogError> {
    let text = std::fs::read_to_string(path)?;
    let mut objects: Vec<ObjectPair> = Vec::new();
    let mut current: Option<ObjectPair> = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let word = parts.next().unwrap();
        let rest: Vec<&str> = parts.collect();
        let parse_f = |s: &str| {
            s.parse::<f64>().map_err(|e| CatalogError::Parse(line_no, format!("`{s}`: {e}")))
        };
        match word {
            "object" => {
                if current.is_some() {
                    return Err(CatalogError::Parse(line_no, "previous object not ended".into()));
                }
                if rest.len() != 1 {
                    return Err(CatalogError::Parse(line_no, "object takes one id".into()));
                }
                current = Some(ObjectPair {
                    id: rest[0].to_string(),
                    section: Section::Circle { radius: 1.0 },
                    clearance: 0.0,
                    color: [0.0; 3],
                });
            }
            "circle" => {
                let cur = current
                    .as_mut()
                    .ok_or_else(|| CatalogError::Parse(line_no, "circle outside object".into()))?;
                if rest.len() != 1 {
                    return Err(CatalogError::Parse(line_no, "circle takes one radius".into()));
                }
                cur.section = Section::Circle { radius: parse_f(rest[0])? };
            }
            "polygon" => {
                let cur = current
                    .as_mut()
                    .ok_or_else(|| CatalogError::Parse(line_no, "polygon outside object".into()))?;
                if rest.is_empty() || rest.len() % 2 != 0 {
                    return Err(CatalogError::Parse(line_no, "polygon takes x y pairs".into()));
                }
                let mut verts = Vec::with_capacity(rest.len() / 2);
                for pair in rest.chunks(2) {
                    verts.push([parse_f(pair[0])?, parse_f(pair[1])?]);
                }
                cur.section = Section::Polygon { verts };
            }
            "clearance" => {
                let cur = current.as_mut().ok_or_else(|| {
                    CatalogError::Parse(line_no, "clearance outside object".into())
                })?;
                if rest.len() != 1 {
                    return Err(CatalogError::Parse(line_no, "clearance takes one value".into()));
                }
                cur.clearance = parse_f(rest[0])?;
            }
            "color" => {
                let cur = current
                    .as_mut()
                    .ok_or_else(|| CatalogError::Parse(line_no, "color outside object".into()))?;
                if rest.len() != 3 {
                    return Err(CatalogError::Parse(line_no, "color takes r g b".into()));
                }
                for (k, s) in rest.iter().enumerate() {
                    cur.color[k] = parse_f(s)? as f32;
                }
            }
            "end" => {
                let done = current
                    .take()
                    .ok_or_else(|| CatalogError::Parse(line_no, "end outside object".into()))?;
                done.validate()?;
                if objects.iter().any(|o| o.id == done.id) {
                    return Err(CatalogError::Duplicate(done.id));
                }
                objects.push(done);
            }
            other => {
                return Err(CatalogError::Parse(line_no, format!("unknown directive `{other}`")));
            }
        }
    }
    if let Some(cur) = current {
        return Err(CatalogError::Parse(text.lines().count(), format!("object `{}` not ended", cur.id)));
    }
    Ok(objects)
}
