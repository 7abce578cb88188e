use log::warn;

use super::RgbdFrame;
use crate::grid::Grid;

pub const DEFAULT_FILL_ITERATIONS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FillReport {
    pub iterations: usize,
    pub filled: usize,
    pub remaining_holes: usize,
    /// The input had no valid depth at all and was returned unchanged.
    pub all_holes: bool,
}

/// Iterative 8-neighbor dilation: each round, every hole touching at least
/// one valid pixel takes the median of its valid neighbors. Updates are
/// synchronous so the result does not depend on scan order.
pub fn fill_depth_holes(frame: &RgbdFrame) -> (RgbdFrame, FillReport) {
    let (depth, report) = fill_depth_grid(&frame.depth, DEFAULT_FILL_ITERATIONS);
    let mut out = frame.clone();
    out.depth = depth;
    (out, report)
}

pub fn fill_depth_grid(depth: &Grid<f64>, max_iterations: usize) -> (Grid<f64>, FillReport) {
    let mut report = FillReport::default();
    let mut cur = depth.clone();
    if cur.iter().all(|&d| d <= 0.0) {
        if !cur.is_empty() {
            warn!("depth image has no valid pixels; hole filling skipped");
        }
        report.all_holes = true;
        report.remaining_holes = cur.len();
        return (cur, report);
    }
    let (rows, cols) = cur.dims();
    let mut vals = Vec::with_capacity(8);
    for _ in 0..max_iterations {
        let mut updates = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                if cur[(r, c)] > 0.0 {
                    continue;
                }
                vals.clear();
                for dr in -1i64..=1 {
                    for dc in -1i64..=1 {
                        if dr == 0 && dc == 0 {
                            continue;
                        }
                        if let Some(&v) = cur.get_signed(r as i64 + dr, c as i64 + dc) {
                            if v > 0.0 {
                                vals.push(v);
                            }
                        }
                    }
                }
                if !vals.is_empty() {
                    updates.push((r, c, median(&mut vals)));
                }
            }
        }
        if updates.is_empty() {
            break;
        }
        report.iterations += 1;
        report.filled += updates.len();
        for (r, c, v) in updates {
            cur[(r, c)] = v;
        }
    }
    report.remaining_holes = cur.iter().filter(|&&d| d <= 0.0).count();
    (cur, report)
}

fn median(vals: &mut [f64]) -> f64 {
    vals.sort_by(f64::total_cmp);
    let n = vals.len();
    if n % 2 == 1 {
        vals[n / 2]
    } else {
        0.5 * (vals[n / 2 - 1] + vals[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn no_holes_is_fixpoint() {
        let g = Grid::from_fn(5, 6, |r, c| 0.5 + 0.01 * (r + c) as f64);
        let (out, rep) = fill_depth_grid(&g, 50);
        assert_eq!(out, g);
        assert_eq!(rep.iterations, 0);
    }

    #[test]
    fn single_hole_takes_neighborhood_value() {
        let mut g = Grid::new(3, 3, 0.5);
        g[(1, 1)] = 0.0;
        let (out, _) = fill_depth_grid(&g, 50);
        assert_eq!(out[(1, 1)], 0.5);
    }

    #[test]
    fn three_by_three_hole_in_constant_region() {
        let mut g = Grid::new(7, 7, 0.42);
        for r in 2..5 {
            for c in 2..5 {
                g[(r, c)] = 0.0;
            }
        }
        let (out, rep) = fill_depth_grid(&g, 50);
        assert!(out.iter().all(|&v| v == 0.42));
        // ring first, then the center
        assert_eq!(rep.iterations, 2);
    }

    #[test]
    fn all_holes_flagged() {
        let g = Grid::new(4, 4, 0.0);
        let (out, rep) = fill_depth_grid(&g, 50);
        assert!(rep.all_holes);
        assert_eq!(out, g);
    }

    #[test]
    fn even_neighbor_count_uses_midpoint() {
        let mut v = [0.2, 0.4];
        assert!((median(&mut v) - 0.3).abs() < 1e-15);
        let mut w = [0.9, 0.1, 0.5];
        assert_eq!(median(&mut w), 0.5);
    }

    proptest! {
        #[test]
        fn filling_is_idempotent(
            rows in 1usize..24, cols in 1usize..24,
            seed in proptest::collection::vec((0.0f64..1.0, 0.3f64..2.0), 576)
        ) {
            let g = Grid::from_fn(rows, cols, |r, c| {
                let (p, d) = seed[r * 24 + c];
                if p < 0.4 { 0.0 } else { d }
            });
            let (once, _) = fill_depth_grid(&g, 50);
            let (twice, _) = fill_depth_grid(&once, 50);
            prop_assert_eq!(&once, &twice);
            // valid pixels unchanged
            for (i, &d) in g.data().iter().enumerate() {
                if d > 0.0 { prop_assert_eq!(once.data()[i], d); }
            }
        }
    }
}
