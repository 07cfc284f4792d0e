use nalgebra::{DMatrix, DVector};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 1000;

/// Largest singular value of `a` by power iteration on `aᵀa`.
///
/// Iteration starts from the normalized all-ones vector and stops once the
/// Rayleigh-quotient estimate changes by less than `tol` relative. If the
/// start vector lies in the null space of `a`, a fixed alternating-sign
/// vector is tried before concluding the norm is zero.
pub fn spectral_norm(a: &DMatrix<f64>, tol: f64, max_iter: usize) -> f64 {
    let n = a.ncols();
    if n == 0 || a.nrows() == 0 || a.iter().all(|&x| x == 0.0) {
        return 0.0;
    }
    let starts = [
        DVector::from_element(n, 1.0),
        DVector::from_fn(n, |i, _| if i % 2 == 0 { 1.0 } else { -1.0 } * (1.0 + i as f64 / n as f64)),
        DVector::from_fn(n, |i, _| ((i as f64 + 1.0) * 0.618_033_988_749_895).fract() - 0.5),
    ];
    starts
        .into_iter()
        .map(|v| power_iterate(a, v, tol, max_iter))
        .find(|&s| s > 0.0)
        .unwrap_or(0.0)
}

pub fn spectral_norm_default(a: &DMatrix<f64>) -> f64 {
    spectral_norm(a, DEFAULT_TOL, DEFAULT_MAX_ITER)
}

fn power_iterate(a: &DMatrix<f64>, mut v: DVector<f64>, tol: f64, max_iter: usize) -> f64 {
    let norm = v.norm();
    if norm == 0.0 {
        return 0.0;
    }
    v /= norm;
    let mut estimate = 0.0;
    for _ in 0..max_iter {
        let av = a * &v;
        let w = a.tr_mul(&av);
        // Rayleigh quotient vᵀ(aᵀa)v = |av|²
        let next = av.norm_squared();
        let wn = w.norm();
        if wn == 0.0 {
            return 0.0;
        }
        v = w / wn;
        if estimate > 0.0 && (next - estimate).abs() <= tol * next {
            return next.sqrt();
        }
        estimate = next;
    }
    estimate.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_diagonal() {
        assert!((spectral_norm_default(&DMatrix::identity(4, 4)) - 1.0).abs() < 1e-12);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0]));
        assert!((spectral_norm_default(&d) - 3.0).abs() < 1e-9);
        assert_eq!(spectral_norm_default(&DMatrix::zeros(3, 2)), 0.0);
    }

    #[test]
    fn start_vector_in_null_space() {
        // all-ones is annihilated by this matrix
        let a = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        assert!((spectral_norm_default(&a) - 2f64.sqrt()).abs() < 1e-9);
    }
}
