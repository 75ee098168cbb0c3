//! Hilbert projective metric on the nonnegative orthant.
//!
//! For strictly positive vectors `x`, `y` the metric is
//! `d(x, y) = ln(max_i x_i/y_i) - ln(min_i x_i/y_i)`; it is invariant under
//! positive scaling of either argument and vanishes exactly when the vectors
//! are proportional. The iterative bridge solvers contract in this metric,
//! which is why it serves as their convergence gauge.

use crate::{Error, Result};

/// Hilbert projective distance between two nonnegative vectors.
///
/// Coordinates where both vectors vanish carry no projective information and
/// are skipped. If exactly one vector vanishes at some coordinate the two lie
/// on different faces of the cone and the distance is `+inf` (returned, not
/// an error). Vectors with negative entries, mismatched lengths, or no
/// positive entry at all are rejected.
pub fn hilbert_distance(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DegenerateVector(format!(
            "length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.is_empty() {
        return Err(Error::DegenerateVector("empty vectors".into()));
    }
    let mut max_ratio = f64::NEG_INFINITY;
    let mut min_ratio = f64::INFINITY;
    let mut support_mismatch = false;
    let mut any_positive = (false, false);
    for (&xi, &yi) in x.iter().zip(y) {
        if xi < 0.0 || yi < 0.0 {
            return Err(Error::DegenerateVector(
                "negative entry outside the cone".into(),
            ));
        }
        any_positive.0 |= xi > 0.0;
        any_positive.1 |= yi > 0.0;
        match (xi > 0.0, yi > 0.0) {
            (true, true) => {
                let r = xi / yi;
                max_ratio = max_ratio.max(r);
                min_ratio = min_ratio.min(r);
            }
            (false, false) => {}
            _ => support_mismatch = true,
        }
    }
    if !any_positive.0 || !any_positive.1 {
        return Err(Error::DegenerateVector(
            "identically zero vector".into(),
        ));
    }
    if support_mismatch || max_ratio == f64::NEG_INFINITY {
        return Ok(f64::INFINITY);
    }
    Ok((max_ratio / min_ratio).ln())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_vectors_are_at_distance_zero() {
        let x = [0.2, 0.5, 0.3];
        assert_eq!(hilbert_distance(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn invariant_under_positive_scaling() {
        let x = [1.0, 2.0, 3.0];
        let y = [0.5, 0.1, 0.9];
        let d = hilbert_distance(&x, &y).unwrap();
        let x5: Vec<f64> = x.iter().map(|v| 5.0 * v).collect();
        let y03: Vec<f64> = y.iter().map(|v| 0.3 * v).collect();
        assert!((hilbert_distance(&x5, &y).unwrap() - d).abs() < 1e-14);
        assert!((hilbert_distance(&x, &y03).unwrap() - d).abs() < 1e-14);
        let prop: Vec<f64> = x.iter().map(|v| 7.0 * v).collect();
        assert!(hilbert_distance(&x, &prop).unwrap().abs() < 1e-14);
    }

    #[test]
    fn known_two_dimensional_value() {
        // ratios 1/2 and 2/1: d = ln(2 / (1/2)) = ln 4.
        let d = hilbert_distance(&[1.0, 2.0], &[2.0, 1.0]).unwrap();
        assert!((d - 4.0f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn support_mismatch_is_infinite() {
        let d = hilbert_distance(&[1.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!(d.is_infinite());
        // Shared zero coordinates are ignored instead.
        let d2 = hilbert_distance(&[1.0, 0.0, 2.0], &[3.0, 0.0, 1.0]).unwrap();
        assert!(d2.is_finite());
        assert!((d2 - 6.0f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        assert!(hilbert_distance(&[0.0, 0.0], &[1.0, 1.0]).is_err());
        assert!(hilbert_distance(&[1.0, 1.0], &[0.0, 0.0]).is_err());
        assert!(hilbert_distance(&[1.0], &[1.0, 2.0]).is_err());
        assert!(hilbert_distance(&[-1.0, 2.0], &[1.0, 1.0]).is_err());
        assert!(hilbert_distance(&[], &[]).is_err());
    }

    #[test]
    fn symmetry_and_triangle_inequality_spot_checks() {
        let x = [0.3, 1.4, 0.2, 2.0];
        let y = [1.1, 0.8, 0.5, 0.7];
        let z = [0.9, 0.9, 1.3, 0.4];
        let dxy = hilbert_distance(&x, &y).unwrap();
        let dyx = hilbert_distance(&y, &x).unwrap();
        assert!((dxy - dyx).abs() < 1e-14);
        let dxz = hilbert_distance(&x, &z).unwrap();
        let dzy = hilbert_distance(&z, &y).unwrap();
        assert!(dxy <= dxz + dzy + 1e-12);
    }
}
