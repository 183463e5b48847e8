//! Small dense complex linear-algebra helpers shared by the solver and the
//! phase optimizer.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

pub type C64 = Complex<f64>;
pub type CVector = DVector<C64>;
pub type CMatrix = DMatrix<C64>;

/// Eigen-decomposition of a Hermitian matrix with eigenvalues sorted in
/// descending order and eigenvectors as matching columns.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

pub fn hermitian_eigen(m: &CMatrix) -> HermitianEigen {
    let sym = hermitize(m);
    let eig = sym.symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    HermitianEigen { values, vectors }
}

/// `(m + m^H) / 2`.
pub fn hermitize(m: &CMatrix) -> CMatrix {
    let n = m.nrows();
    CMatrix::from_fn(n, n, |r, c| (m[(r, c)] + m[(c, r)].conj()) * 0.5)
}

/// `ln det W` of a Hermitian matrix via Cholesky, or `None` unless `W` is
/// positive definite. Reads the lower triangle.
pub fn hermitian_log_det(w: &CMatrix) -> Option<f64> {
    let n = w.nrows();
    let mut l = CMatrix::zeros(n, n);
    let mut acc = 0.0;
    for j in 0..n {
        let mut d = w[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d > 0.0 && d.is_finite()) {
            return None;
        }
        let ljj = d.sqrt();
        l[(j, j)] = C64::new(ljj, 0.0);
        acc += d.ln();
        for i in j + 1..n {
            let mut v = w[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = v / ljj;
        }
    }
    Some(acc)
}

pub fn is_positive_definite(w: &CMatrix) -> bool {
    hermitian_log_det(w).is_some()
}

pub fn min_eigenvalue(m: &CMatrix) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let eig = hermitize(m).symmetric_eigen();
    eig.eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// `a^H M a`, real part.
pub fn quad_form(m: &CMatrix, a: &CVector) -> f64 {
    let ma = m * a;
    a.iter()
        .zip(ma.iter())
        .map(|(x, y)| (x.conj() * y).re)
        .sum()
}

/// `Re Tr(A B)` for Hermitian `A`, `B`.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut acc = 0.0;
    for r in 0..n {
        for c in 0..n {
            acc += (a[(r, c)] * b[(c, r)]).re;
        }
    }
    acc
}

/// `w w^H`.
pub fn outer(w: &CVector) -> CMatrix {
    let n = w.len();
    CMatrix::from_fn(n, n, |r, c| w[r] * w[c].conj())
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn wrap_angle(theta: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let r = theta.rem_euclid(two_pi);
    if r >= two_pi {
        0.0
    } else {
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_is_sorted_descending() {
        let m = CMatrix::from_fn(3, 3, |r, c| {
            if r == c {
                C64::new([0.5, 2.0, 1.0][r], 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        let e = hermitian_eigen(&m);
        assert!((e.values[0] - 2.0).abs() < 1e-12);
        assert!((e.values[2] - 0.5).abs() < 1e-12);
        assert!((e.vectors[(1, 0)].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quad_form_matches_outer_trace() {
        let a = CVector::from_vec(vec![C64::new(1.0, 2.0), C64::new(-0.5, 0.3)]);
        let w = CVector::from_vec(vec![C64::new(0.2, -1.0), C64::new(1.0, 0.0)]);
        let m = outer(&w);
        let direct = (w
            .iter()
            .zip(a.iter())
            .map(|(x, y)| x.conj() * y)
            .sum::<C64>())
        .norm_sqr();
        assert!((quad_form(&m, &a) - direct).abs() < 1e-12);
        assert!((trace_product(&m, &outer(&a)) - direct).abs() < 1e-12);
    }

    #[test]
    fn log_det_rejects_indefinite() {
        let c = |x: f64| C64::new(x, 0.0);
        let bad = CMatrix::from_row_slice(2, 2, &[c(1.0), c(1.4), c(1.4), c(1.0)]);
        assert!(hermitian_log_det(&bad).is_none());
        let good = CMatrix::from_row_slice(
            2,
            2,
            &[c(2.0), C64::new(0.5, 0.5), C64::new(0.5, -0.5), c(1.0)],
        );
        assert!((hermitian_log_det(&good).unwrap() - 1.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn wrap_angle_range() {
        assert!(
            (wrap_angle(-std::f64::consts::FRAC_PI_3) - 5.0 * std::f64::consts::FRAC_PI_3).abs()
                < 1e-12
        );
        assert_eq!(wrap_angle(0.0), 0.0);
        assert!(wrap_angle(2.0 * std::f64::consts::PI) < 1e-12);
    }
}
