//! Trajectory file format: UTF-8, line oriented, self-describing.
//!
//! Line 1 is a JSON header `{format_version, task, object_id, seed, image_h,
//! image_w, tactile_dim, n_transitions, env_digest}`. Each of the next
//! `n_transitions` lines is one transition as 31 tab-separated fields in
//! fixed order: `k[6]`, the image as base64 of row-major little-endian f32,
//! `c[15]`, `action[6]`, `reward`, `done`, `randomized`. Transition records
//! carry the pre-step observation; the following record's observation is the
//! post-step one, so one trailing 22-field line (`k[6]`, image, `c[15]`)
//! stores the terminal observation of the final transition. Floats use
//! shortest round-trip decimal formatting, booleans are `0`/`1`, so
//! serialize-then-deserialize reproduces every field bit-exactly.

use crate::types::{
    Action, Image, Observation, Pose, Task, Trajectory, Transition, TACTILE_DIM,
};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;
use thiserror::Error;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line 1: bad header: {0}")]
    Header(String),
    #[error("unsupported format version {0}, this build reads {FORMAT_VERSION}")]
    Version(u32),
    #[error("line {line}: expected {want} fields, found {got}")]
    FieldCount { line: usize, want: usize, got: usize },
    #[error("line {line}, field {field}: {msg}")]
    Field { line: usize, field: usize, msg: String },
    #[error("header says {expected} transitions, file has {got}")]
    CountMismatch { expected: usize, got: usize },
    #[error("missing terminal observation line")]
    MissingTerminal,
    #[error("unexpected content after terminal observation at line {0}")]
    TrailingContent(usize),
    #[error("unknown task name `{0}`")]
    Task(String),
    #[error("serialize: {0}")]
    Invalid(String),
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    task: String,
    object_id: String,
    seed: u64,
    image_h: usize,
    image_w: usize,
    tactile_dim: usize,
    n_transitions: usize,
    env_digest: String,
}

const TRANSITION_FIELDS: usize = 6 + 1 + TACTILE_DIM + 6 + 3;
const TERMINAL_FIELDS: usize = 6 + 1 + TACTILE_DIM;

fn encode_image(img: &Image) -> String {
    let mut bytes = Vec::with_capacity(img.data.len() * 4);
    for v in &img.data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    B64.encode(&bytes)
}

fn decode_image(s: &str, h: usize, w: usize, line: usize, field: usize) -> Result<Image, DatasetError> {
    let bytes = B64
        .decode(s.as_bytes())
        .map_err(|e| DatasetError::Field { line, field, msg: format!("base64: {e}") })?;
    if bytes.len() != h * w * 3 * 4 {
        return Err(DatasetError::Field {
            line,
            field,
            msg: format!("image byte length {} does not match {h}x{w}x3", bytes.len()),
        });
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(Image { h, w, data })
}

fn write_obs_fields(out: &mut String, obs: &Observation) {
    use std::fmt::Write as _;
    for v in obs.k.as_vec6() {
        let _ = write!(out, "{}\t", v);
    }
    out.push_str(&encode_image(&obs.v));
    for v in &obs.c {
        let _ = write!(out, "\t{}", v);
    }
}

fn parse_f64(fields: &[&str], idx: usize, line: usize) -> Result<f64, DatasetError> {
    fields[idx]
        .parse::<f64>()
        .map_err(|e| DatasetError::Field { line, field: idx + 1, msg: e.to_string() })
}

fn parse_bool01(fields: &[&str], idx: usize, line: usize) -> Result<bool, DatasetError> {
    match fields[idx] {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(DatasetError::Field {
            line,
            field: idx + 1,
            msg: format!("expected 0 or 1, found `{other}`"),
        }),
    }
}

fn parse_obs(fields: &[&str], h: usize, w: usize, line: usize) -> Result<Observation, DatasetError> {
    let mut k = [0.0; 6];
    for (i, slot) in k.iter_mut().enumerate() {
        *slot = parse_f64(fields, i, line)?;
    }
    let v = decode_image(fields[6], h, w, line, 7)?;
    let mut c = Vec::with_capacity(TACTILE_DIM);
    for i in 0..TACTILE_DIM {
        c.push(parse_f64(fields, 7 + i, line)?);
    }
    Ok(Observation { k: Pose::from_vec6(&k), v, c })
}

/// Writes a trajectory. Validates the full observation chain first: records
/// store only the pre-step observation, so any mismatch between a record's
/// `next_obs` and its successor's `obs` would be silently lost on disk.
pub fn serialize_trajectory<W: Write>(traj: &Trajectory, mut out: W) -> Result<(), DatasetError> {
    for (i, t) in traj.transitions.iter().enumerate() {
        if i + 1 < traj.transitions.len() && t.next_obs != traj.transitions[i + 1].obs {
            return Err(DatasetError::Invalid(format!(
                "observation chain broken between transitions {} and {}",
                i,
                i + 1
            )));
        }
        if t.obs.c.len() != TACTILE_DIM || t.next_obs.c.len() != TACTILE_DIM {
            return Err(DatasetError::Invalid(format!("transition {i}: bad tactile length")));
        }
    }
    let (h, w) = traj
        .transitions
        .first()
        .map(|t| (t.obs.v.h, t.obs.v.w))
        .unwrap_or((0, 0));
    for (i, t) in traj.transitions.iter().enumerate() {
        for (which, v) in [&t.obs.v, &t.next_obs.v].into_iter().enumerate() {
            if v.h != h || v.w != w {
                return Err(DatasetError::Invalid(format!(
                    "transition {i}: image {} dims {}x{} differ from header {}x{}",
                    if which == 0 { "obs" } else { "next_obs" },
                    v.h,
                    v.w,
                    h,
                    w
                )));
            }
        }
    }

    let header = Header {
        format_version: FORMAT_VERSION,
        task: traj.task.name().to_string(),
        object_id: traj.object_id.clone(),
        seed: traj.seed,
        image_h: h,
        image_w: w,
        tactile_dim: TACTILE_DIM,
        n_transitions: traj.transitions.len(),
        env_digest: traj.env_digest.clone(),
    };
    let mut line = serde_json::to_string(&header).map_err(|e| DatasetError::Header(e.to_string()))?;
    line.push('\n');
    out.write_all(line.as_bytes())?;

    for t in &traj.transitions {
        let mut row = String::new();
        write_obs_fields(&mut row, &t.obs);
        use std::fmt::Write as _;
        for v in t.action.0 {
            let _ = write!(row, "\t{}", v);
        }
        let _ = write!(
            row,
            "\t{}\t{}\t{}\n",
            t.reward,
            if t.done { 1 } else { 0 },
            if t.randomized { 1 } else { 0 }
        );
        out.write_all(row.as_bytes())?;
    }

    if let Some(last) = traj.transitions.last() {
        let mut row = String::new();
        write_obs_fields(&mut row, &last.next_obs);
        row.push('\n');
        out.write_all(row.as_bytes())?;
    }
    Ok(())
}

pub fn write_trajectory(traj: &Trajectory, path: &Path) -> Result<(), DatasetError> {
    let file = std::fs::File::create(path)?;
    let mut buf = std::io::BufWriter::new(file);
    serialize_trajectory(traj, &mut buf)?;
    buf.flush()?;
    Ok(())
}

/// Writes several trajectories into one file, back to back. Each block is a
/// header line plus its records, so readers just loop.
pub fn write_dataset(trajs: &[Trajectory], path: &Path) -> Result<(), DatasetError> {
    let file = std::fs::File::create(path)?;
    let mut buf = std::io::BufWriter::new(file);
    for t in trajs {
        serialize_trajectory(t, &mut buf)?;
    }
    buf.flush()?;
    Ok(())
}

struct LineReader<B> {
    inner: B,
    line_no: usize,
}

impl<B: BufRead> LineReader<B> {
    fn next_line(&mut self) -> Result<Option<String>, DatasetError> {
        let mut s = String::new();
        let n = self.inner.read_line(&mut s)?;
        if n == 0 {
            return Ok(None);
        }
        self.line_no += 1;
        while s.ends_with('\n') || s.ends_with('\r') {
            s.pop();
        }
        Ok(Some(s))
    }
}

fn read_one<B: BufRead>(reader: &mut LineReader<B>) -> Result<Option<Trajectory>, DatasetError> {
    let header_line = match reader.next_line()? {
        None => return Ok(None),
        Some(l) => l,
    };
    let header: Header =
        serde_json::from_str(&header_line).map_err(|e| DatasetError::Header(e.to_string()))?;
    if header.format_version != FORMAT_VERSION {
        return Err(DatasetError::Version(header.format_version));
    }
    if header.tactile_dim != TACTILE_DIM {
        return Err(DatasetError::Header(format!(
            "tactile_dim {} unsupported, expected {TACTILE_DIM}",
            header.tactile_dim
        )));
    }
    let task = Task::from_name(&header.task).ok_or_else(|| DatasetError::Task(header.task.clone()))?;

    struct Row {
        obs: Observation,
        action: Action,
        reward: f64,
        done: bool,
        randomized: bool,
    }
    let mut rows: Vec<Row> = Vec::with_capacity(header.n_transitions);
    for _ in 0..header.n_transitions {
        let line_no = reader.line_no + 1;
        let line = reader.next_line()?.ok_or(DatasetError::CountMismatch {
            expected: header.n_transitions,
            got: rows.len(),
        })?;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != TRANSITION_FIELDS {
            return Err(DatasetError::FieldCount {
                line: line_no,
                want: TRANSITION_FIELDS,
                got: fields.len(),
            });
        }
        let obs = parse_obs(&fields, header.image_h, header.image_w, line_no)?;
        let mut a = [0.0; 6];
        for (i, slot) in a.iter_mut().enumerate() {
            *slot = parse_f64(&fields, 7 + TACTILE_DIM + i, line_no)?;
        }
        let base = 7 + TACTILE_DIM + 6;
        let reward = parse_f64(&fields, base, line_no)?;
        let done = parse_bool01(&fields, base + 1, line_no)?;
        let randomized = parse_bool01(&fields, base + 2, line_no)?;
        let action = Action(a);
        action.validate().map_err(|e| DatasetError::Field {
            line: line_no,
            field: 7 + TACTILE_DIM + 1,
            msg: e.to_string(),
        })?;
        rows.push(Row { obs, action, reward, done, randomized });
    }

    let terminal = if rows.is_empty() {
        None
    } else {
        let line_no = reader.line_no + 1;
        let line = reader.next_line()?.ok_or(DatasetError::MissingTerminal)?;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != TERMINAL_FIELDS {
            return Err(DatasetError::FieldCount {
                line: line_no,
                want: TERMINAL_FIELDS,
                got: fields.len(),
            });
        }
        Some(parse_obs(&fields, header.image_h, header.image_w, line_no)?)
    };

    let mut transitions = Vec::with_capacity(rows.len());
    let n = rows.len();
    for i in 0..n {
        let next_obs = if i + 1 < n {
            rows[i + 1].obs.clone()
        } else {
            terminal.clone().ok_or(DatasetError::MissingTerminal)?
        };
        let row = &rows[i];
        transitions.push(Transition {
            obs: row.obs.clone(),
            action: row.action,
            reward: row.reward,
            next_obs,
            done: row.done,
            randomized: row.randomized,
        });
    }

    Ok(Some(Trajectory {
        task,
        object_id: header.object_id,
        seed: header.seed,
        env_digest: header.env_digest,
        transitions,
    }))
}

pub fn deserialize_trajectory<B: BufRead>(reader: B) -> Result<Trajectory, DatasetError> {
    let mut lr = LineReader { inner: reader, line_no: 0 };
    let traj = read_one(&mut lr)?.ok_or_else(|| DatasetError::Header("empty input".into()))?;
    if let Some(_) = lr.next_line()? {
        return Err(DatasetError::TrailingContent(lr.line_no));
    }
    Ok(traj)
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory, DatasetError> {
    let file = std::fs::File::open(path)?;
    deserialize_trajectory(std::io::BufReader::new(file))
}

/// Reads every trajectory block in the file.
pub fn read_dataset(path: &Path) -> Result<Vec<Trajectory>, DatasetError> {
    let file = std::fs::File::open(path)?;
    let mut lr = LineReader { inner: std::io::BufReader::new(file), line_no: 0 };
    let mut out = Vec::new();
    while let Some(t) = read_one(&mut lr)? {
        out.push(t);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::GoalSpec;

    pub(crate) fn tiny_obs(x: f64, fill: f32) -> Observation {
        let mut v = Image::zeros(16, 16);
        for (i, p) in v.data.iter_mut().enumerate() {
            *p = ((fill as usize * 31 + i * 7) % 255) as f32 / 255.0;
        }
        let c: Vec<f64> = (0..TACTILE_DIM).map(|i| x * 0.1 + i as f64 * 1e-3).collect();
        Observation { k: Pose::new([x, -x, 0.2 + x], [0.01 * x, 0.0, -0.02 * x]), v, c }
    }

    pub(crate) fn chain_trajectory(n: usize) -> Trajectory {
        let mut transitions = Vec::new();
        let mut obs = tiny_obs(0.0, 3.0);
        for i in 0..n {
            let next = tiny_obs((i + 1) as f64 * 0.001, (i % 5) as f32);
            let a = Action::clip(&[0.001, -0.0005, 0.002, 0.0, 0.01, -0.02]).unwrap();
            transitions.push(Transition {
                obs: obs.clone(),
                action: a,
                reward: -0.5 / (i + 1) as f64,
                next_obs: next.clone(),
                done: i + 1 == n,
                randomized: i == 1,
            });
            obs = next;
        }
        Trajectory {
            task: Task::Extract,
            object_id: "cube".into(),
            seed: 9,
            env_digest: "abc123".into(),
            transitions,
        }
    }

    #[test]
    fn round_trip_is_field_exact() {
        let traj = chain_trajectory(4);
        let mut buf = Vec::new();
        serialize_trajectory(&traj, &mut buf).unwrap();
        let back = deserialize_trajectory(std::io::Cursor::new(&buf)).unwrap();
        assert_eq!(traj, back);
    }

    #[test]
    fn record_count_matches_independent_line_scan() {
        let traj = chain_trajectory(7);
        let mut buf = Vec::new();
        serialize_trajectory(&traj, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let records = text
            .lines()
            .filter(|l| l.split('\t').count() == TRANSITION_FIELDS)
            .count();
        assert_eq!(records, 7);
        let header: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(header["n_transitions"], 7);
        assert_eq!(header["format_version"], 1);
        assert_eq!(header["task"], "pooh");
        // header + records + terminal observation line
        assert_eq!(text.lines().count(), 1 + 7 + 1);
    }

    #[test]
    fn empty_trajectory_is_header_only() {
        let traj = Trajectory {
            task: Task::Insert,
            object_id: "cyl".into(),
            seed: 1,
            env_digest: "d".into(),
            transitions: vec![],
        };
        let mut buf = Vec::new();
        serialize_trajectory(&traj, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 1);
        let back = deserialize_trajectory(std::io::Cursor::new(&buf)).unwrap();
        assert_eq!(traj, back);
    }

    #[test]
    fn version_mismatch_is_a_distinct_error() {
        let traj = chain_trajectory(1);
        let mut buf = Vec::new();
        serialize_trajectory(&traj, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let bumped = text.replacen("\"format_version\":1", "\"format_version\":2", 1);
        let err = deserialize_trajectory(std::io::Cursor::new(bumped.into_bytes())).unwrap_err();
        assert!(matches!(err, DatasetError::Version(2)));
    }

    #[test]
    fn malformed_records_name_the_line() {
        let traj = chain_trajectory(2);
        let mut buf = Vec::new();
        serialize_trajectory(&traj, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines: Vec<String> = text.lines().map(|s| s.to_string()).collect();
        lines[2] = lines[2].rsplit_once('\t').unwrap().0.to_string();
        let doctored = lines.join("\n") + "\n";
        let err = deserialize_trajectory(std::io::Cursor::new(doctored.into_bytes())).unwrap_err();
        assert!(matches!(err, DatasetError::FieldCount { line: 3, .. }));

        let mut lines: Vec<String> = text.lines().map(|s| s.to_string()).collect();
        lines[1] = lines[1].replacen("0.001", "zeroish", 1);
        let doctored = lines.join("\n") + "\n";
        let err = deserialize_trajectory(std::io::Cursor::new(doctored.into_bytes())).unwrap_err();
        assert!(matches!(err, DatasetError::Field { line: 2, .. }));
    }

    #[test]
    fn truncated_files_are_rejected() {
        let traj = chain_trajectory(3);
        let mut buf = Vec::new();
        serialize_trajectory(&traj, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let cut: Vec<&str> = text.lines().take(3).collect();
        let err =
            deserialize_trajectory(std::io::Cursor::new(cut.join("\n").into_bytes())).unwrap_err();
        assert!(matches!(err, DatasetError::CountMismatch { .. }));
    }

    #[test]
    fn chain_breaks_are_rejected_at_serialize_time() {
        let mut traj = chain_trajectory(3);
        traj.transitions[1].next_obs = tiny_obs(9.0, 1.0);
        let mut buf = Vec::new();
        let err = serialize_trajectory(&traj, &mut buf).unwrap_err();
        assert!(matches!(err, DatasetError::Invalid(_)));
    }

    #[test]
    fn multi_trajectory_files_read_back() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("set.txt");
        let trajs = vec![chain_trajectory(2), chain_trajectory(5)];
        write_dataset(&trajs, &path).unwrap();
        let back = read_dataset(&path).unwrap();
        assert_eq!(trajs, back);
    }

    #[test]
    fn goalspec_is_plain_data() {
        let g = GoalSpec { peg: Pose::zero(), hole: Pose::zero() };
        assert_eq!(g.peg, g.hole);
    }
}
