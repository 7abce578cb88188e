//! On-disk frame layout: `NNN.color.png` (8-bit RGB), `NNN.depth.png`
//! (16-bit grayscale, millimeters, 0 = missing) and `NNN.meta.json`
//! (intrinsics and camera-to-world pose).

use std::fs;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma, Rgb};
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CameraIntrinsics, GeometryError, RgbdFrame, RigidTransform};
use crate::grid::Grid;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Image { path: PathBuf, source: image::ImageError },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

impl IoError {
    pub fn format(path: &Path, message: impl Into<String>) -> Self {
        IoError::Format { path: path.to_path_buf(), message: message.into() }
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let text = fs::read_to_string(path).map_err(|source| IoError::Io { path: path.into(), source })?;
    serde_json::from_str(&text).map_err(|source| IoError::Json { path: path.into(), source })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| IoError::Json { path: path.into(), source })?;
    text.push('\n');
    fs::write(path, text).map_err(|source| IoError::Io { path: path.into(), source })
}

/// Per-frame calibration as stored in `NNN.meta.json`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameMeta {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Row-major camera-to-world rotation.
    pub rotation: [f64; 9],
    /// Camera center in world coordinates, meters.
    pub translation: [f64; 3],
}

impl FrameMeta {
    pub fn from_frame(frame: &RgbdFrame) -> Self {
        let k = frame.intrinsics;
        let r = frame.pose.rotation;
        Self {
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            rotation: [r[(0, 0)], r[(0, 1)], r[(0, 2)], r[(1, 0)], r[(1, 1)], r[(1, 2)], r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            translation: [frame.pose.translation.x, frame.pose.translation.y, frame.pose.translation.z],
        }
    }

    pub fn intrinsics(&self, width: usize, height: usize) -> CameraIntrinsics {
        CameraIntrinsics { fx: self.fx, fy: self.fy, cx: self.cx, cy: self.cy, width, height }
    }

    pub fn pose(&self) -> Result<RigidTransform, GeometryError> {
        RigidTransform::new(Matrix3::from_row_slice(&self.rotation), Vector3::from(self.translation))
    }
}

pub fn frame_paths(dir: &Path, stem: &str) -> [PathBuf; 3] {
    [
        dir.join(format!("{stem}.color.png")),
        dir.join(format!("{stem}.depth.png")),
        dir.join(format!("{stem}.meta.json")),
    ]
}

fn depth_to_mm(d: f64) -> u16 {
    (d * 1000.0).round().clamp(0.0, u16::MAX as f64) as u16
}

pub fn write_color_png(path: &Path, color: &Grid<[u8; 3]>) -> Result<(), IoError> {
    let img: ImageBuffer<Rgb<u8>, Vec<u8>> =
        ImageBuffer::from_fn(color.cols() as u32, color.rows() as u32, |x, y| Rgb(color[(y as usize, x as usize)]));
    img.save(path).map_err(|source| IoError::Image { path: path.into(), source })
}

pub fn read_color_png(path: &Path) -> Result<Grid<[u8; 3]>, IoError> {
    let img = image::open(path).map_err(|source| IoError::Image { path: path.into(), source })?;
    let img = match img {
        image::DynamicImage::ImageRgb8(i) => i,
        other => return Err(IoError::format(path, format!("expected 8-bit RGB, got {:?}", other.color()))),
    };
    let (w, h) = img.dimensions();
    Ok(Grid::from_fn(h as usize, w as usize, |r, c| img.get_pixel(c as u32, r as u32).0))
}

/// Depth in meters written as whole millimeters.
pub fn write_depth_png(path: &Path, depth: &Grid<f64>) -> Result<(), IoError> {
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_fn(depth.cols() as u32, depth.rows() as u32, |x, y| Luma([depth_to_mm(depth[(y as usize, x as usize)])]));
    img.save(path).map_err(|source| IoError::Image { path: path.into(), source })
}

pub fn read_depth_png(path: &Path) -> Result<Grid<f64>, IoError> {
    let img = image::open(path).map_err(|source| IoError::Image { path: path.into(), source })?;
    let img = match img {
        image::DynamicImage::ImageLuma16(i) => i,
        other => return Err(IoError::format(path, format!("expected 16-bit grayscale, got {:?}", other.color()))),
    };
    let (w, h) = img.dimensions();
    Ok(Grid::from_fn(h as usize, w as usize, |r, c| img.get_pixel(c as u32, r as u32).0[0] as f64 / 1000.0))
}

pub fn write_frame(dir: &Path, stem: &str, frame: &RgbdFrame) -> Result<(), IoError> {
    frame.validate()?;
    let [color, depth, meta] = frame_paths(dir, stem);
    write_color_png(&color, &frame.color)?;
    write_depth_png(&depth, &frame.depth)?;
    write_json(&meta, &FrameMeta::from_frame(frame))
}

pub fn read_frame(dir: &Path, stem: &str) -> Result<RgbdFrame, IoError> {
    let [color_p, depth_p, meta_p] = frame_paths(dir, stem);
    let color = read_color_png(&color_p)?;
    let depth = read_depth_png(&depth_p)?;
    if color.dims() != depth.dims() {
        return Err(IoError::format(&depth_p, format!("depth {:?} does not match color {:?}", depth.dims(), color.dims())));
    }
    let meta: FrameMeta = read_json(&meta_p)?;
    let (rows, cols) = color.dims();
    Ok(RgbdFrame::new(color, depth, meta.intrinsics(cols, rows), meta.pose()?)?)
}

/// Sorted stems of every `*.color.png` in `dir`.
pub fn frame_stems(dir: &Path) -> Result<Vec<String>, IoError> {
    let entries = fs::read_dir(dir).map_err(|source| IoError::Io { path: dir.into(), source })?;
    let mut stems = Vec::new();
    for e in entries {
        let e = e.map_err(|source| IoError::Io { path: dir.into(), source })?;
        let name = e.file_name().to_string_lossy().into_owned();
        if let Some(stem) = name.strip_suffix(".color.png") {
            stems.push(stem.to_string());
        }
    }
    stems.sort();
    Ok(stems)
}

/// All frames in `dir`, in stem order.
pub fn read_frames(dir: &Path) -> Result<Vec<RgbdFrame>, IoError> {
    frame_stems(dir)?.iter().map(|s| read_frame(dir, s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Point3;

    fn frame() -> RgbdFrame {
        let k = CameraIntrinsics { fx: 50.0, fy: 51.0, cx: 4.5, cy: 3.0, width: 9, height: 7 };
        let pose = RigidTransform::look_at(Point3::new(0.1, 0.2, 1.0), Point3::new(0.1, 0.25, 0.0), Vector3::y());
        let depth = Grid::from_fn(7, 9, |r, c| if (r + c) % 5 == 0 { 0.0 } else { 0.5 + 0.001 * (r * 9 + c) as f64 });
        let color = Grid::from_fn(7, 9, |r, c| [r as u8 * 30, c as u8 * 20, 7]);
        RgbdFrame::new(color, depth, k, pose).unwrap()
    }

    #[test]
    fn frame_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let f = frame();
        write_frame(dir.path(), "000", &f).unwrap();
        write_frame(dir.path(), "001", &f).unwrap();
        let back = read_frame(dir.path(), "000").unwrap();
        assert_eq!(back.color, f.color);
        assert_eq!(back.intrinsics, f.intrinsics);
        assert_eq!(back.pose, f.pose);
        for (a, b) in back.depth.iter().zip(f.depth.iter()) {
            assert!((a - b).abs() <= 0.0005 + 1e-12);
        }
        assert_eq!(frame_stems(dir.path()).unwrap(), vec!["000", "001"]);
        assert_eq!(read_frames(dir.path()).unwrap().len(), 2);
    }

    #[test]
    fn missing_and_corrupt_files() {
        let dir = tempfile::tempdir().unwrap();
        assert!(read_frame(dir.path(), "000").is_err());
        write_frame(dir.path(), "000", &frame()).unwrap();
        fs::write(dir.path().join("000.meta.json"), "{").unwrap();
        assert!(matches!(read_frame(dir.path(), "000"), Err(IoError::Json { .. })));
        write_frame(dir.path(), "000", &frame()).unwrap();
        write_color_png(&dir.path().join("000.depth.png"), &frame().color).unwrap();
        assert!(matches!(read_frame(dir.path(), "000"), Err(IoError::Format { .. })));
    }
}
