//! Little-endian binary formats for feature vectors ("FEAT") and embedding
//! models ("EMBD").

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};

use super::{EmbeddingModel, FeatureSource, FeatureVector, RecognitionError};

pub const FEATURE_FILE_VERSION: u32 = 1;
pub const MODEL_FILE_VERSION: u32 = 1;

fn read_u32(r: &mut impl Read) -> Result<u32, RecognitionError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f32s(r: &mut impl Read, n: usize) -> Result<Vec<f32>, RecognitionError> {
    let mut buf = vec![0u8; n * 4];
    r.read_exact(&mut buf)?;
    let out: Vec<f32> = buf.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(RecognitionError::NonFinite);
    }
    Ok(out)
}

fn check_magic(r: &mut impl Read, magic: &[u8; 4], version: u32) -> Result<(), RecognitionError> {
    let mut m = [0u8; 4];
    r.read_exact(&mut m)?;
    if &m != magic {
        return Err(RecognitionError::Format(format!("bad magic {m:?}")));
    }
    let v = read_u32(r)?;
    if v != version {
        return Err(RecognitionError::Format(format!("unsupported version {v}")));
    }
    Ok(())
}

pub fn write_features(w: &mut impl Write, features: &[FeatureVector]) -> Result<(), RecognitionError> {
    let d = features.first().map_or(0, |f| f.values.len());
    w.write_all(b"FEAT")?;
    w.write_all(&FEATURE_FILE_VERSION.to_le_bytes())?;
    w.write_all(&(d as u32).to_le_bytes())?;
    w.write_all(&(features.len() as u32).to_le_bytes())?;
    for f in features {
        if f.values.len() != d {
            return Err(RecognitionError::Dimension { expected: d, got: f.values.len() });
        }
        let id = f.object_id.as_bytes();
        let len = u16::try_from(id.len()).map_err(|_| RecognitionError::Format("object id too long".into()))?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(id)?;
        for v in &f.values {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Reads a feature file; every vector is tagged with `source`.
pub fn read_features(r: &mut impl Read, source: FeatureSource) -> Result<Vec<FeatureVector>, RecognitionError> {
    check_magic(r, b"FEAT", FEATURE_FILE_VERSION)?;
    let d = read_u32(r)? as usize;
    let count = read_u32(r)? as usize;
    let mut out = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let mut lb = [0u8; 2];
        r.read_exact(&mut lb)?;
        let mut id = vec![0u8; u16::from_le_bytes(lb) as usize];
        r.read_exact(&mut id)?;
        let object_id = String::from_utf8(id).map_err(|_| RecognitionError::Format("object id is not UTF-8".into()))?;
        out.push(FeatureVector {
            object_id,
            source,
            values: read_f32s(r, d)?,
        });
    }
    Ok(out)
}

/// Weights and bias are stored as f32, row-major.
pub fn write_model(w: &mut impl Write, model: &EmbeddingModel) -> Result<(), RecognitionError> {
    model.validate()?;
    w.write_all(b"EMBD")?;
    w.write_all(&MODEL_FILE_VERSION.to_le_bytes())?;
    w.write_all(&(model.d_out() as u32).to_le_bytes())?;
    w.write_all(&(model.d_in() as u32).to_le_bytes())?;
    w.write_all(&[model.trained as u8])?;
    for r in 0..model.d_out() {
        for c in 0..model.d_in() {
            w.write_all(&(model.weights[(r, c)] as f32).to_le_bytes())?;
        }
    }
    for v in model.bias.iter() {
        w.write_all(&(*v as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn read_model(r: &mut impl Read) -> Result<EmbeddingModel, RecognitionError> {
    check_magic(r, b"EMBD", MODEL_FILE_VERSION)?;
    let rows = read_u32(r)? as usize;
    let cols = read_u32(r)? as usize;
    if rows == 0 || cols == 0 || rows.saturating_mul(cols) > 1 << 26 {
        return Err(RecognitionError::Format(format!("bad model shape {rows}x{cols}")));
    }
    let mut t = [0u8; 1];
    r.read_exact(&mut t)?;
    let w = read_f32s(r, rows * cols)?;
    let b = read_f32s(r, rows)?;
    Ok(EmbeddingModel {
        weights: DMatrix::from_row_iterator(rows, cols, w.into_iter().map(f64::from)),
        bias: DVector::from_iterator(rows, b.into_iter().map(f64::from)),
        trained: t[0] != 0,
    })
}
