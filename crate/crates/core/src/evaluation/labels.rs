use std::f64::consts::PI;
use std::path::Path;

use image::{GrayImage, Luma};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::grid::Grid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

/// Dense suction label. On disk: 0 = neither, 128 = negative, 255 = positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum SuctionLabel {
    #[default]
    Neither,
    Negative,
    Positive,
}

impl SuctionLabel {
    pub fn to_byte(self) -> u8 {
        match self {
            SuctionLabel::Neither => 0,
            SuctionLabel::Negative => 128,
            SuctionLabel::Positive => 255,
        }
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(SuctionLabel::Neither),
            128 => Some(SuctionLabel::Negative),
            255 => Some(SuctionLabel::Positive),
            _ => None,
        }
    }
}

pub type SuctionLabelMask = Grid<SuctionLabel>;

pub fn write_suction_mask(path: &Path, mask: &SuctionLabelMask) -> Result<(), EvalError> {
    let img = GrayImage::from_fn(mask.cols() as u32, mask.rows() as u32, |x, y| Luma([mask[(y as usize, x as usize)].to_byte()]));
    img.save(path).map_err(|e| EvalError::Format(format!("{}: {e}", path.display())))
}

pub fn read_suction_mask(path: &Path) -> Result<SuctionLabelMask, EvalError> {
    let img = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => EvalError::Io(format!("{}: {io}", path.display())),
        other => EvalError::Format(format!("{}: {other}", path.display())),
    })?;
    let image::DynamicImage::ImageLuma8(img) = img else {
        return Err(EvalError::Format(format!("{}: label mask must be 8-bit grayscale", path.display())));
    };
    let (w, h) = img.dimensions();
    let mut out = Grid::new(h as usize, w as usize, SuctionLabel::Neither);
    for (x, y, p) in img.enumerate_pixels() {
        out[(y as usize, x as usize)] = SuctionLabel::from_byte(p.0[0])
            .ok_or_else(|| EvalError::Format(format!("{}: value {} at ({y}, {x}) is not 0, 128 or 255", path.display(), p.0[0])))?;
    }
    Ok(out)
}

/// A labelled grasp: heightmap pixel, closing-axis angle in `[0, pi)` and
/// polarity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraspLabel {
    pub row: usize,
    pub col: usize,
    pub angle_rad: f64,
    pub polarity: Polarity,
}

impl GraspLabel {
    pub fn new(row: usize, col: usize, angle: f64, polarity: Polarity) -> Self {
        Self { row, col, angle_rad: angle.rem_euclid(PI), polarity }
    }

    pub fn validate(&self, dims: (usize, usize)) -> Result<(), EvalError> {
        if self.row >= dims.0 || self.col >= dims.1 {
            return Err(EvalError::Format(format!("grasp label ({}, {}) outside {dims:?}", self.row, self.col)));
        }
        if !(0.0..PI).contains(&self.angle_rad) {
            return Err(EvalError::Format(format!("grasp label angle {} outside [0, pi)", self.angle_rad)));
        }
        Ok(())
    }
}

pub fn write_grasp_labels(path: &Path, labels: &[GraspLabel]) -> Result<(), EvalError> {
    let mut text = serde_json::to_string_pretty(labels).map_err(|e| EvalError::Format(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| EvalError::Io(format!("{}: {e}", path.display())))
}

pub fn read_grasp_labels(path: &Path) -> Result<Vec<GraspLabel>, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|e| EvalError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| EvalError::Format(format!("{}: {e}", path.display())))
}

/// `count` copies of `label` shifted by integer pixel offsets drawn
/// uniformly from the lattice points of the disc of radius
/// `max_jitter / resolution`, clipped to a `dims` map.
pub fn jitter_augment(
    label: &GraspLabel,
    max_jitter: f64,
    resolution: f64,
    count: usize,
    dims: (usize, usize),
    rng: &mut impl Rng,
) -> Vec<GraspLabel> {
    let radius = (max_jitter / resolution).max(0.0);
    let reach = radius.floor() as i64;
    let mut offsets = Vec::new();
    for dr in -reach..=reach {
        for dc in -reach..=reach {
            if ((dr * dr + dc * dc) as f64) <= radius * radius + 1e-9 {
                offsets.push((dr, dc));
            }
        }
    }
    (0..count)
        .map(|_| {
            let (dr, dc) = offsets[rng.random_range(0..offsets.len())];
            GraspLabel {
                row: (label.row as i64 + dr).clamp(0, dims.0 as i64 - 1) as usize,
                col: (label.col as i64 + dc).clamp(0, dims.1 as i64 - 1) as usize,
                ..*label
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mask_round_trip_and_rejects_other_values() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        let labels = [SuctionLabel::Neither, SuctionLabel::Negative, SuctionLabel::Positive];
        let mask = Grid::from_fn(5, 7, |r, c| labels[(r * 7 + c) % 3]);
        write_suction_mask(&p, &mask).unwrap();
        assert_eq!(read_suction_mask(&p).unwrap(), mask);
        GrayImage::from_pixel(3, 3, Luma([127])).save(&p).unwrap();
        assert!(matches!(read_suction_mask(&p), Err(EvalError::Format(_))));
        assert!(matches!(read_suction_mask(&dir.path().join("none.png")), Err(EvalError::Io(_))));
    }

    #[test]
    fn grasp_json_shape() {
        let l = GraspLabel::new(3, 4, 0.5, Polarity::Negative);
        let text = serde_json::to_string(&[l]).unwrap();
        assert_eq!(text, r#"[{"row":3,"col":4,"angle_rad":0.5,"polarity":"negative"}]"#);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.json");
        write_grasp_labels(&p, &[l]).unwrap();
        assert_eq!(read_grasp_labels(&p).unwrap(), vec![l]);
        assert_eq!(GraspLabel::new(0, 0, PI + 0.25, Polarity::Positive).angle_rad, 0.25);
        assert!(GraspLabel::new(9, 0, 0.0, Polarity::Positive).validate((9, 9)).is_err());
    }

    #[test]
    fn jitter_stays_in_disc() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let l = GraspLabel::new(50, 50, 1.0, Polarity::Positive);
        let out = jitter_augment(&l, 0.016, 0.002, 500, (100, 100), &mut rng);
        assert_eq!(out.len(), 500);
        let mut max = 0.0f64;
        for j in &out {
            let d = ((j.row as f64 - 50.0).powi(2) + (j.col as f64 - 50.0).powi(2)).sqrt();
            max = max.max(d);
            assert_eq!((j.angle_rad, j.polarity), (l.angle_rad, l.polarity));
        }
        assert!(max <= 8.0 && max > 6.0, "{max}");
        assert_eq!(jitter_augment(&l, 0.0, 0.002, 4, (100, 100), &mut rng), vec![l; 4]);
        let corner = GraspLabel::new(0, 99, 1.0, Polarity::Positive);
        assert!(jitter_augment(&corner, 0.016, 0.002, 100, (100, 100), &mut rng).iter().all(|j| j.row < 100 && j.col < 100));
        let a = jitter_augment(&l, 0.016, 0.002, 20, (100, 100), &mut ChaCha8Rng::seed_from_u64(3));
        let b = jitter_augment(&l, 0.016, 0.002, 20, (100, 100), &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
    }
}
