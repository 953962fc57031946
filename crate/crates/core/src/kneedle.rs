//! Knee-point detection on cumulative curves (the Kneedle procedure),
//! used to pick the retrieval distance threshold.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Knee {
    /// x of the knee in the original coordinates.
    pub x: f64,
    /// y (e.g. the distance value) at the knee.
    pub y: f64,
    /// x of the knee after min-max normalization.
    pub x_norm: f64,
    /// Index of the knee point in the input.
    pub index: usize,
}

/// Find the knee of an increasing curve.
///
/// Both axes are min-max normalized to [0,1]; the difference curve is
/// `y - x` for a concave curve and `x - y` for a convex one (orientation is
/// auto-detected from which side of the diagonal the curve mostly lies). The
/// knee is the maximum of the difference curve, and it must exceed
/// `sensitivity` times the mean x spacing or the curve is declared knee-free.
pub fn kneedle_curve(points: &[(f64, f64)], sensitivity: f64) -> Result<Knee> {
    if points.len() < 3 {
        return Err(Error::Usage(format!(
            "kneedle needs at least 3 points, got {}",
            points.len()
        )));
    }
    let (x0, xn) = (points[0].0, points[points.len() - 1].0);
    let (mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in points {
        if !(x.is_finite() && y.is_finite()) {
            return Err(Error::Usage("kneedle input contains NaN/Inf".into()));
        }
        ymin = ymin.min(y);
        ymax = ymax.max(y);
    }
    if xn <= x0 {
        return Err(Error::Usage("kneedle x values must be increasing".into()));
    }
    if points[points.len() - 1].1 < points[0].1 {
        return Err(Error::Usage("kneedle expects a non-decreasing curve".into()));
    }
    if ymax <= ymin {
        return Err(Error::NoKnee);
    }

    let xr = xn - x0;
    let yr = ymax - ymin;
    let norm: Vec<(f64, f64)> =
        points.iter().map(|&(x, y)| ((x - x0) / xr, (y - ymin) / yr)).collect();

    // Side of the diagonal decides concave vs convex.
    let bias: f64 = norm.iter().map(|&(x, y)| y - x).sum();
    let concave = bias >= 0.0;

    let mut best_idx = 0usize;
    let mut best = f64::NEG_INFINITY;
    for (i, &(x, y)) in norm.iter().enumerate() {
        let d = if concave { y - x } else { x - y };
        if d > best {
            best = d;
            best_idx = i;
        }
    }
    let mean_spacing = 1.0 / (points.len() - 1) as f64;
    if best <= sensitivity * mean_spacing {
        return Err(Error::NoKnee);
    }
    Ok(Knee {
        x: points[best_idx].0,
        y: points[best_idx].1,
        x_norm: norm[best_idx].0,
        index: best_idx,
    })
}

/// Knee of the rank-vs-distance curve of an ascending distance list, with
/// the default sensitivity of 1. Returns the distance value at the knee.
pub fn kneedle_threshold(sorted_distances: &[f64]) -> Result<f64> {
    kneedle_threshold_with(sorted_distances, 1.0).map(|k| k.y)
}

pub fn kneedle_threshold_with(sorted_distances: &[f64], sensitivity: f64) -> Result<Knee> {
    if sorted_distances.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Usage("distances must be sorted ascending".into()));
    }
    let points: Vec<(f64, f64)> =
        sorted_distances.iter().enumerate().map(|(i, &d)| (i as f64, d)).collect();
    kneedle_curve(&points, sensitivity)
}

/// Kneedle with a quantile fallback for knee-free curves. Returns the
/// threshold and whether a knee was actually found.
pub fn threshold_or_quantile(
    sorted_distances: &[f64],
    sensitivity: f64,
    fallback_quantile: f64,
) -> Result<(f64, bool)> {
    match kneedle_threshold_with(sorted_distances, sensitivity) {
        Ok(knee) => Ok((knee.y, true)),
        Err(Error::NoKnee) => {
            if sorted_distances.is_empty() {
                return Err(Error::Usage("no distances to threshold".into()));
            }
            let q = fallback_quantile.clamp(0.0, 1.0);
            let idx = ((sorted_distances.len() - 1) as f64 * q).round() as usize;
            Ok((sorted_distances[idx], false))
        }
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Piecewise-linear fixture through (0,0), (0.2,0.8), (1,1), sampled at
    /// 11 uniform ranks.
    fn three_segment_distances() -> Vec<f64> {
        (0..=10)
            .map(|i| {
                let x = i as f64 / 10.0;
                if x <= 0.2 {
                    4.0 * x
                } else {
                    0.8 + 0.25 * (x - 0.2)
                }
            })
            .collect()
    }

    #[test]
    fn three_segment_knee_at_point_two() {
        let d = three_segment_distances();
        let knee = kneedle_threshold_with(&d, 1.0).unwrap();
        assert!((knee.x_norm - 0.2).abs() < 1e-9, "knee at {}", knee.x_norm);
        assert!((knee.y - 0.8).abs() < 1e-9);
    }

    #[test]
    fn linear_curve_has_no_knee() {
        let d: Vec<f64> = (0..50).map(|i| i as f64 * 0.3).collect();
        assert!(matches!(kneedle_threshold(&d), Err(Error::NoKnee)));
    }

    #[test]
    fn constant_curve_has_no_knee() {
        let d = vec![2.0; 10];
        assert!(matches!(kneedle_threshold(&d), Err(Error::NoKnee)));
    }

    #[test]
    fn too_few_points_rejected() {
        assert!(matches!(kneedle_threshold(&[1.0, 2.0]), Err(Error::Usage(_))));
    }

    #[test]
    fn unsorted_input_rejected() {
        assert!(matches!(kneedle_threshold(&[1.0, 3.0, 2.0]), Err(Error::Usage(_))));
    }

    #[test]
    fn convex_orientation_detected() {
        // Rank-vs-distance for a corpus of many small distances then a few
        // large ones: curve hugs the x axis, then shoots up.
        let mut d = vec![0.0f64; 0];
        for i in 0..90 {
            d.push(0.5 + i as f64 * 0.005);
        }
        for i in 0..10 {
            d.push(8.0 + i as f64 * 0.1);
        }
        let knee = kneedle_threshold_with(&d, 1.0).unwrap();
        // Knee sits at the end of the dense low-distance population.
        assert!(knee.index >= 85 && knee.index <= 92, "index {}", knee.index);
        assert!(knee.y < 1.5, "threshold {}", knee.y);
    }

    #[test]
    fn quantile_fallback_on_linear() {
        let d: Vec<f64> = (0..101).map(|i| i as f64).collect();
        let (t, found) = threshold_or_quantile(&d, 1.0, 0.9).unwrap();
        assert!(!found);
        assert_eq!(t, 90.0);
    }
}
