use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{EvalError, GraspLabel, Polarity, SuctionLabel, SuctionLabelMask};
use crate::affordance::{GraspProposal, SuctionProposal};

pub const MATCH_PIXELS: f64 = 4.0;
pub const MATCH_ANGLE_DEG: f64 = 11.25;
const BOUNDARY_EPS: f64 = 1e-9;

/// Leading slice of a ranked proposal list.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TopSlice {
    Top1,
    /// Fraction of the list, rounded up: `ceil(f * n)`.
    Fraction(f64),
}

impl TopSlice {
    pub const TABLE: [TopSlice; 4] = [TopSlice::Top1, TopSlice::Fraction(0.01), TopSlice::Fraction(0.05), TopSlice::Fraction(0.10)];

    pub fn len(self, n: usize) -> usize {
        match self {
            TopSlice::Top1 => n.min(1),
            TopSlice::Fraction(f) => (((f * n as f64) - 1e-9).ceil().max(0.0) as usize).min(n),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
}

impl Counts {
    /// `TP / (TP + FP)`, undefined when nothing was counted.
    pub fn precision(self) -> Option<f64> {
        let n = self.tp + self.fp;
        (n > 0).then(|| self.tp as f64 / n as f64)
    }
}

impl std::ops::AddAssign for Counts {
    fn add_assign(&mut self, o: Counts) {
        self.tp += o.tp;
        self.fp += o.fp;
    }
}

/// Counts over the slice of `ranked`: each proposal's source pixel is looked
/// up in the mask of its frame; "neither" pixels are skipped.
pub fn suction_counts(ranked: &[SuctionProposal], masks: &[SuctionLabelMask], slice: TopSlice) -> Result<Counts, EvalError> {
    let mut c = Counts::default();
    for p in &ranked[..slice.len(ranked.len())] {
        let s = p.source.ok_or(EvalError::MissingSource)?;
        let mask = masks
            .get(s.frame as usize)
            .ok_or_else(|| EvalError::Format(format!("no suction mask for frame {}", s.frame)))?;
        let label = mask
            .get(s.row as usize, s.col as usize)
            .ok_or_else(|| EvalError::Format(format!("pixel ({}, {}) outside mask {:?}", s.row, s.col, mask.dims())))?;
        match label {
            SuctionLabel::Positive => c.tp += 1,
            SuctionLabel::Negative => c.fp += 1,
            SuctionLabel::Neither => {}
        }
    }
    Ok(c)
}

pub fn suction_precision(ranked: &[SuctionProposal], masks: &[SuctionLabelMask], slice: TopSlice) -> Result<Option<f64>, EvalError> {
    Ok(suction_counts(ranked, masks, slice)?.precision())
}

/// Angle between two grasp axes, modulo pi, in `[0, pi/2]`.
pub fn axis_angle_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(PI);
    d.min(PI - d)
}

/// Within 4 px (Euclidean, heightmap pixels) and 11.25 degrees (mod pi).
pub fn grasp_matches(row: usize, col: usize, angle: f64, label: &GraspLabel) -> bool {
    let dr = row as f64 - label.row as f64;
    let dc = col as f64 - label.col as f64;
    (dr * dr + dc * dc).sqrt() <= MATCH_PIXELS + BOUNDARY_EPS
        && axis_angle_distance(angle, label.angle_rad) <= MATCH_ANGLE_DEG.to_radians() + BOUNDARY_EPS
}

/// True positive if a positive label matches, else false positive if a
/// negative label matches, else not counted.
pub fn grasp_outcome(row: usize, col: usize, angle: f64, labels: &[GraspLabel]) -> Option<Polarity> {
    let mut neg = false;
    for l in labels.iter().filter(|l| grasp_matches(row, col, angle, l)) {
        match l.polarity {
            Polarity::Positive => return Some(Polarity::Positive),
            Polarity::Negative => neg = true,
        }
    }
    neg.then_some(Polarity::Negative)
}

pub fn grasp_counts(ranked: &[GraspProposal], labels: &[GraspLabel], slice: TopSlice) -> Counts {
    let mut c = Counts::default();
    for p in &ranked[..slice.len(ranked.len())] {
        match grasp_outcome(p.row, p.col, p.angle, labels) {
            Some(Polarity::Positive) => c.tp += 1,
            Some(Polarity::Negative) => c.fp += 1,
            None => {}
        }
    }
    c
}

pub fn grasp_precision(ranked: &[GraspProposal], labels: &[GraspLabel], slice: TopSlice) -> Option<f64> {
    grasp_counts(ranked, labels, slice).precision()
}

/// TP/FP totals over many scenes for each column of the precision table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PrecisionCounts(pub [Counts; 4]);

impl PrecisionCounts {
    pub fn add_suction(&mut self, ranked: &[SuctionProposal], masks: &[SuctionLabelMask]) -> Result<(), EvalError> {
        for (i, s) in TopSlice::TABLE.iter().enumerate() {
            self.0[i] += suction_counts(ranked, masks, *s)?;
        }
        Ok(())
    }

    pub fn add_grasp(&mut self, ranked: &[GraspProposal], labels: &[GraspLabel]) {
        for (i, s) in TopSlice::TABLE.iter().enumerate() {
            self.0[i] += grasp_counts(ranked, labels, *s);
        }
    }

    pub fn row(&self) -> PrecisionRow {
        let p = self.0.map(Counts::precision);
        PrecisionRow { top1: p[0], top1pct: p[1], top5pct: p[2], top10pct: p[3] }
    }
}

/// Precision at Top-1 / Top-1% / Top-5% / Top-10%; `None` is undefined.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PrecisionRow {
    pub top1: Option<f64>,
    pub top1pct: Option<f64>,
    pub top5pct: Option<f64>,
    pub top10pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionTable {
    pub method: String,
    pub scenes: usize,
    pub suction: PrecisionRow,
    pub grasp: PrecisionRow,
}

impl fmt::Display for PrecisionTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cell = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{:.1}", 100.0 * v));
        writeln!(f, "{} ({} scenes)", self.method, self.scenes)?;
        writeln!(f, "{:<10} {:>7} {:>7} {:>7} {:>7}", "Primitive", "Top-1", "Top 1%", "Top 5%", "Top 10%")?;
        for (name, r) in [("Suction", &self.suction), ("Grasping", &self.grasp)] {
            writeln!(
                f,
                "{:<10} {:>7} {:>7} {:>7} {:>7}",
                name,
                cell(r.top1),
                cell(r.top1pct),
                cell(r.top5pct),
                cell(r.top10pct)
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affordance::PrimitiveKind;
    use crate::geometry::SourcePixel;
    use crate::grid::Grid;
    use nalgebra::{Point3, Vector3};

    fn grasp(row: usize, col: usize, angle: f64, aff: f64) -> GraspProposal {
        GraspProposal {
            midpoint: Point3::origin(),
            angle,
            width: 0.05,
            affordance: aff,
            primitive: PrimitiveKind::GraspDown,
            row,
            col,
            angle_index: 0,
        }
    }

    fn suction(row: u32, col: u32) -> SuctionProposal {
        SuctionProposal {
            point: Point3::origin(),
            normal: Vector3::z(),
            affordance: 1.0,
            primitive: PrimitiveKind::SuctionDown,
            point_index: 0,
            source: Some(SourcePixel { frame: 0, row, col }),
        }
    }

    #[test]
    fn slice_sizes() {
        assert_eq!(TopSlice::Top1.len(0), 0);
        assert_eq!(TopSlice::Top1.len(500), 1);
        assert_eq!(TopSlice::Fraction(0.01).len(100), 1);
        assert_eq!(TopSlice::Fraction(0.01).len(101), 2);
        assert_eq!(TopSlice::Fraction(0.05).len(1), 1);
        assert_eq!(TopSlice::Fraction(0.10).len(1000), 100);
    }

    #[test]
    fn grasp_boundaries() {
        let l = GraspLabel::new(10, 10, 0.3, Polarity::Positive);
        assert!(grasp_matches(10, 10, 0.3, &l));
        assert!(grasp_matches(14, 10, 0.3, &l));
        assert!(!grasp_matches(15, 10, 0.3, &l));
        assert!(!grasp_matches(13, 13, 0.3, &l));
        let deg = |d: f64| 0.3 + d.to_radians();
        assert!(grasp_matches(10, 10, deg(11.0), &l));
        assert!(grasp_matches(10, 10, deg(11.25), &l));
        assert!(grasp_matches(10, 10, deg(-11.25), &l));
        assert!(!grasp_matches(10, 10, deg(12.0), &l));
        // wraps around pi
        let w = GraspLabel::new(0, 0, 0.05, Polarity::Positive);
        assert!(grasp_matches(0, 0, PI - 0.1, &w));
    }

    #[test]
    fn positive_match_wins() {
        let labels = [
            GraspLabel::new(10, 10, 0.0, Polarity::Negative),
            GraspLabel::new(12, 10, 0.0, Polarity::Positive),
        ];
        assert_eq!(grasp_outcome(10, 10, 0.0, &labels), Some(Polarity::Positive));
        assert_eq!(grasp_outcome(7, 10, 0.0, &labels), Some(Polarity::Negative));
        assert_eq!(grasp_outcome(30, 30, 0.0, &labels), None);
        let ranked = [grasp(10, 10, 0.0, 0.9), grasp(7, 10, 0.0, 0.8), grasp(30, 30, 0.0, 0.7)];
        assert_eq!(grasp_counts(&ranked, &labels, TopSlice::Fraction(1.0)), Counts { tp: 1, fp: 1 });
        assert_eq!(grasp_precision(&ranked[2..], &labels, TopSlice::Top1), None);
    }

    #[test]
    fn suction_counts_skip_neither() {
        let mask = Grid::from_fn(2, 3, |_, c| [SuctionLabel::Positive, SuctionLabel::Negative, SuctionLabel::Neither][c]);
        let ranked = [suction(0, 0), suction(1, 2), suction(0, 1), suction(1, 0)];
        let c = suction_counts(&ranked, std::slice::from_ref(&mask), TopSlice::Fraction(1.0)).unwrap();
        assert_eq!(c, Counts { tp: 2, fp: 1 });
        assert_eq!(suction_precision(&ranked, std::slice::from_ref(&mask), TopSlice::Top1).unwrap(), Some(1.0));
        let mut no_src = suction(0, 0);
        no_src.source = None;
        assert!(suction_counts(&[no_src], &[mask], TopSlice::Top1).is_err());
    }

    #[test]
    fn top1_equals_top1pct_for_single_item_slice() {
        let labels = [GraspLabel::new(0, 0, 0.0, Polarity::Positive)];
        let ranked: Vec<_> = (0..100).map(|i| grasp(i % 7, i / 7, 0.0, 1.0 - i as f64 / 100.0)).collect();
        assert_eq!(grasp_precision(&ranked, &labels, TopSlice::Top1), grasp_precision(&ranked, &labels, TopSlice::Fraction(0.01)));
    }

    #[test]
    fn table_format() {
        let t = PrecisionTable {
            method: "Baseline".into(),
            scenes: 2,
            suction: PrecisionRow { top1: Some(0.352), top1pct: Some(0.5), top5pct: None, top10pct: Some(1.0) },
            grasp: PrecisionRow::default(),
        };
        let s = t.to_string();
        assert!(s.contains("Suction       35.2    50.0       -   100.0"), "{s}");
        assert!(s.contains("Grasping         -       -       -       -"), "{s}");
    }
}
