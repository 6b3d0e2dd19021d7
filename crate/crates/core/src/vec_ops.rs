//! Small dense-vector helpers shared by the estimators.

/// Dot product.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Euclidean norm.
#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`.
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Normalize in place; returns the original norm. Leaves the vector
/// untouched when its norm is zero.
pub fn normalize(a: &mut [f64]) -> f64 {
    let n = norm2(a);
    if n > 0.0 {
        for x in a.iter_mut() {
            *x /= n;
        }
    }
    n
}

/// Absolute overlap `|<a, b>|` of two unit vectors.
#[inline]
pub fn overlap(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b).abs()
}

/// Canonicalize the sign so the first coordinate of non-negligible magnitude
/// is positive. Overlap is sign-invariant; tests need determinism.
pub fn canonicalize_sign(a: &mut [f64]) {
    let scale = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return;
    }
    for &x in a.iter() {
        if x.abs() > 1e-12 * scale {
            if x < 0.0 {
                for y in a.iter_mut() {
                    *y = -*y;
                }
            }
            return;
        }
    }
}
