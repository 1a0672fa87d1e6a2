//! Error measures used when comparing passes against the oracles.

/// Largest absolute difference divided by the largest magnitude in
/// `expected`. Zero when both are all zeros; infinite on a length mismatch
/// or a non-finite value in `actual`.
pub fn max_rel_err(actual: &[f32], expected: &[f32]) -> f64 {
    if actual.len() != expected.len() {
        return f64::INFINITY;
    }
    let mut diff = 0.0f64;
    let mut scale = 0.0f64;
    for (&a, &e) in actual.iter().zip(expected) {
        if !a.is_finite() {
            return f64::INFINITY;
        }
        diff = diff.max((a as f64 - e as f64).abs());
        scale = scale.max((e as f64).abs());
    }
    if diff == 0.0 {
        0.0
    } else if scale == 0.0 {
        f64::INFINITY
    } else {
        diff / scale
    }
}

/// Inner product accumulated in `f64`.
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    assert_eq!(a.len(), b.len(), "dot of unequal lengths");
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

/// `|a - b| / max(|a|, |b|)`, zero when both are zero.
pub fn rel_diff(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_to_largest_expected() {
        assert_eq!(max_rel_err(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_eq!(max_rel_err(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert!((max_rel_err(&[1.0, 4.1], &[1.0, 4.0]) - 0.025).abs() < 1e-6);
        assert_eq!(max_rel_err(&[1.0], &[0.0]), f64::INFINITY);
        assert_eq!(max_rel_err(&[f32::NAN], &[1.0]), f64::INFINITY);
        assert_eq!(max_rel_err(&[1.0], &[1.0, 2.0]), f64::INFINITY);
    }

    #[test]
    fn dot_and_rel_diff() {
        assert_eq!(dot(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]), 32.0);
        assert_eq!(rel_diff(0.0, 0.0), 0.0);
        assert_eq!(rel_diff(2.0, 1.0), 0.5);
    }
}
