use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{AffordanceError, AffordanceMap, MapKind, MapSource};
use crate::grid::Grid;

pub const LEARNED_MAP_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"AFFD";

/// Writes the little-endian map format: magic, version, rows, cols, kind,
/// angle (NaN for suction), then row-major f32 values.
pub fn write_learned_map<W: Write>(map: &AffordanceMap, mut w: W) -> Result<(), AffordanceError> {
    map.validate()?;
    let (rows, cols) = map.dims();
    w.write_all(MAGIC)?;
    for v in [LEARNED_MAP_VERSION, rows as u32, cols as u32, kind_code(map.kind)] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&(map.angle.map_or(f32::NAN, |a| a as f32)).to_le_bytes())?;
    for v in map.values.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn save_learned_map(map: &AffordanceMap, path: impl AsRef<Path>) -> Result<(), AffordanceError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_learned_map(map, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Reads a map, checking dimensions when `expected` is given. Non-finite
/// values are rejected; finite ones are clamped to `[0, 1]`.
pub fn read_learned_map<R: Read>(mut r: R, expected: Option<(usize, usize)>) -> Result<AffordanceMap, AffordanceError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != MAGIC {
        return Err(AffordanceError::Format("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != LEARNED_MAP_VERSION {
        return Err(AffordanceError::Format(format!("unsupported version {version}")));
    }
    let rows = read_u32(&mut r)? as usize;
    let cols = read_u32(&mut r)? as usize;
    if let Some(e) = expected {
        if e != (rows, cols) {
            return Err(AffordanceError::DimensionMismatch { expected: e, got: (rows, cols) });
        }
    }
    let kind = match read_u32(&mut r)? {
        0 => MapKind::Suction,
        1 => MapKind::Grasp,
        k => return Err(AffordanceError::Format(format!("unknown map kind {k}"))),
    };
    let angle = f32::from_le_bytes(read_bytes(&mut r)?);
    let angle = match kind {
        MapKind::Suction => None,
        MapKind::Grasp if angle.is_finite() => Some(angle as f64),
        MapKind::Grasp => return Err(AffordanceError::Format("grasp map without a finite angle".into())),
    };
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| AffordanceError::Format("dimensions overflow".into()))?;
    let mut bytes = Vec::new();
    r.take(count as u64 * 4).read_to_end(&mut bytes)?;
    if bytes.len() != count * 4 {
        return Err(AffordanceError::Format("truncated values".into()));
    }
    let mut values = Vec::with_capacity(count);
    for (i, chunk) in bytes.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        if !v.is_finite() {
            return Err(AffordanceError::NonFinite(i));
        }
        values.push(v.clamp(0.0, 1.0));
    }
    Ok(AffordanceMap {
        values: Grid::from_vec(rows, cols, values).expect("sized above"),
        kind,
        angle,
        source: MapSource::LearnedFile,
    })
}

pub fn load_learned_map(path: impl AsRef<Path>, expected: Option<(usize, usize)>) -> Result<AffordanceMap, AffordanceError> {
    read_learned_map(BufReader::new(File::open(path)?), expected)
}

fn kind_code(kind: MapKind) -> u32 {
    match kind {
        MapKind::Suction => 0,
        MapKind::Grasp => 1,
    }
}

fn truncated(e: std::io::Error) -> AffordanceError {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        AffordanceError::Format("truncated header".into())
    } else {
        AffordanceError::Io(e)
    }
}

fn read_bytes<R: Read>(r: &mut R) -> Result<[u8; 4], AffordanceError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(b)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, AffordanceError> {
    Ok(u32::from_le_bytes(read_bytes(r)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grasp_map() -> AffordanceMap {
        AffordanceMap {
            values: Grid::from_fn(3, 4, |r, c| (r * 4 + c) as f32 / 11.0),
            kind: MapKind::Grasp,
            angle: Some(std::f64::consts::PI / 8.0),
            source: MapSource::Baseline,
        }
    }

    fn raw(kind: u32, angle: f32, values: &[f32], rows: u32, cols: u32) -> Vec<u8> {
        let mut b = b"AFFD".to_vec();
        for v in [1, rows, cols, kind] {
            b.extend(v.to_le_bytes());
        }
        b.extend(angle.to_le_bytes());
        for v in values {
            b.extend(v.to_le_bytes());
        }
        b
    }

    #[test]
    fn uniform_file() {
        let bytes = raw(0, f32::NAN, &[0.5; 6], 2, 3);
        let m = read_learned_map(&bytes[..], Some((2, 3))).unwrap();
        assert!(m.values.iter().all(|&v| v == 0.5));
        assert_eq!(m.kind, MapKind::Suction);
        assert_eq!(m.angle, None);
        assert_eq!(m.source, MapSource::LearnedFile);
    }

    #[test]
    fn nan_rejected_and_range_clamped() {
        let bytes = raw(0, f32::NAN, &[0.5, f32::NAN], 1, 2);
        assert!(matches!(read_learned_map(&bytes[..], None), Err(AffordanceError::NonFinite(1))));
        let bytes = raw(0, f32::NAN, &[-0.5, 2.0], 1, 2);
        let m = read_learned_map(&bytes[..], None).unwrap();
        assert_eq!(m.values.data(), &[0.0, 1.0]);
    }

    #[test]
    fn dimension_mismatch() {
        let bytes = raw(0, f32::NAN, &[0.5; 6], 2, 3);
        assert!(matches!(
            read_learned_map(&bytes[..], Some((3, 2))),
            Err(AffordanceError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let m = grasp_map();
        let mut buf = Vec::new();
        write_learned_map(&m, &mut buf).unwrap();
        assert_eq!(buf.len(), 24 + 12 * 4);
        let back = read_learned_map(&buf[..], Some((3, 4))).unwrap();
        assert_eq!(back.angle.map(|a| a as f32), m.angle.map(|a| a as f32));
        for (a, b) in back.values.iter().zip(m.values.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        let mut again = Vec::new();
        write_learned_map(&back, &mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.affd");
        save_learned_map(&grasp_map(), &path).unwrap();
        let m = load_learned_map(&path, None).unwrap();
        assert_eq!(m.dims(), (3, 4));
    }

    #[test]
    fn corrupt_headers() {
        assert!(matches!(read_learned_map(&b"NOPE"[..], None), Err(AffordanceError::Format(_))));
        assert!(matches!(read_learned_map(&b"AF"[..], None), Err(AffordanceError::Format(_))));
        let bytes = raw(1, f32::NAN, &[0.5], 1, 1);
        assert!(read_learned_map(&bytes[..], None).is_err());
        let mut bytes = raw(0, f32::NAN, &[0.5; 6], 2, 3);
        bytes.truncate(bytes.len() - 2);
        assert!(read_learned_map(&bytes[..], None).is_err());
    }
}
