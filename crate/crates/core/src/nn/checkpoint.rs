//! Parameter checkpoints: a small binary container of named 64-bit tensors
//! plus a free-form metadata string, round-tripping values bit for bit.

use super::{NnError, Param};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"PGNN";
const VERSION: u32 = 1;

fn write_bytes<W: Write>(w: &mut W, bytes: &[u8]) -> Result<(), NnError> {
    w.write_all(&(bytes.len() as u32).to_le_bytes())?;
    w.write_all(bytes)?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, NnError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, NnError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_bytes<R: Read>(r: &mut R, cap: usize, what: &str) -> Result<Vec<u8>, NnError> {
    let n = read_u32(r)? as usize;
    if n > cap {
        return Err(NnError::Format(format!("{what} length {n} exceeds cap {cap}")));
    }
    let mut v = vec![0u8; n];
    r.read_exact(&mut v)?;
    Ok(v)
}

/// Writes named tensors with a metadata string. Order is preserved.
pub fn save_tensors(
    path: &Path,
    meta: &str,
    tensors: &[(&str, &[f64])],
) -> Result<(), NnError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    write_bytes(&mut w, meta.as_bytes())?;
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for (name, vals) in tensors {
        write_bytes(&mut w, name.as_bytes())?;
        w.write_all(&(vals.len() as u64).to_le_bytes())?;
        for v in *vals {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a checkpoint back: metadata plus tensors in stored order.
pub fn load_tensors(path: &Path) -> Result<(String, Vec<(String, Vec<f64>)>), NnError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(NnError::Format("bad magic; not a checkpoint file".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(NnError::Format(format!("unsupported checkpoint version {version}")));
    }
    let meta = String::from_utf8(read_bytes(&mut r, 1 << 20, "metadata")?)
        .map_err(|e| NnError::Format(format!("metadata not utf-8: {e}")))?;
    let count = read_u32(&mut r)? as usize;
    if count > 4096 {
        return Err(NnError::Format(format!("implausible tensor count {count}")));
    }
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let name = String::from_utf8(read_bytes(&mut r, 4096, "tensor name")?)
            .map_err(|e| NnError::Format(format!("tensor name not utf-8: {e}")))?;
        let n = read_u64(&mut r)? as usize;
        if n > (1 << 27) {
            return Err(NnError::Format(format!("tensor `{name}` implausibly large ({n})")));
        }
        let mut vals = Vec::with_capacity(n);
        let mut b = [0u8; 8];
        for _ in 0..n {
            r.read_exact(&mut b)?;
            vals.push(f64::from_le_bytes(b));
        }
        tensors.push((name, vals));
    }
    // Anything left over means a corrupt or mismatched writer.
    let mut rest = [0u8; 1];
    match r.read(&mut rest)? {
        0 => Ok((meta, tensors)),
        _ => Err(NnError::Format("trailing bytes after last tensor".into())),
    }
}

/// Copies loaded tensors into a parameter group, matching by name and size.
pub fn restore_params(
    params: &mut [&mut Param],
    tensors: &[(String, Vec<f64>)],
) -> Result<(), NnError> {
    for p in params.iter_mut() {
        let t = tensors
            .iter()
            .find(|(name, _)| *name == p.name)
            .ok_or_else(|| NnError::BadTensor(p.name.clone()))?;
        if t.1.len() != p.w.len() {
            return Err(NnError::BadTensor(p.name.clone()));
        }
        p.w.copy_from_slice(&t.1);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensors_round_trip_bit_for_bit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.bin");
        let a = vec![1.5, -2.25, 1e-300, f64::MIN_POSITIVE, 0.1 + 0.2];
        let b = vec![0.0; 7];
        save_tensors(&path, "net=test\ndim=3\n", &[("enc.w", &a), ("enc.b", &b)]).unwrap();
        let (meta, tensors) = load_tensors(&path).unwrap();
        assert_eq!(meta, "net=test\ndim=3\n");
        assert_eq!(tensors.len(), 2);
        assert_eq!(tensors[0].0, "enc.w");
        assert!(tensors[0].1.iter().zip(&a).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_eq!(tensors[1].1, b);
    }

    #[test]
    fn corrupt_and_truncated_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.bin");
        save_tensors(&path, "m", &[("t", &[1.0, 2.0])]).unwrap();
        let bytes = std::fs::read(&path).unwrap();

        let bad_magic = [b"XXXX".to_vec(), bytes[4..].to_vec()].concat();
        std::fs::write(&path, bad_magic).unwrap();
        assert!(matches!(load_tensors(&path), Err(NnError::Format(_))));

        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(load_tensors(&path), Err(NnError::Io(_))));

        let trailing = [bytes.clone(), vec![0u8]].concat();
        std::fs::write(&path, trailing).unwrap();
        assert!(matches!(load_tensors(&path), Err(NnError::Format(_))));
    }

    #[test]
    fn restore_matches_by_name_and_rejects_size_mismatch() {
        let mut p = Param::new("x", vec![0.0; 3]);
        let good = vec![("x".to_string(), vec![1.0, 2.0, 3.0])];
        restore_params(&mut [&mut p], &good).unwrap();
        assert_eq!(p.w, vec![1.0, 2.0, 3.0]);

        let short = vec![("x".to_string(), vec![1.0])];
        assert!(restore_params(&mut [&mut p], &short).is_err());
        let missing = vec![("y".to_string(), vec![1.0, 2.0, 3.0])];
        assert!(restore_params(&mut [&mut p], &missing).is_err());
    }
}
