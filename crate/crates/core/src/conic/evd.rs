//! Dominant eigenpairs and rank-one extraction.

use nalgebra::SymmetricEigen;

use crate::{CMatrix, CVector, Complex64};

/// Largest eigenvalue, its unit eigenvector and the second-largest eigenvalue
/// of a Hermitian matrix. The eigenvector's largest-magnitude entry is made
/// real and non-negative so the result is deterministic.
pub fn dominant_eigenpair(x: &CMatrix) -> (f64, CVector, f64) {
    let d = x.nrows();
    if d == 0 {
        return (0.0, CVector::zeros(0), 0.0);
    }
    let h = (x + x.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let l1 = eig.eigenvalues[order[0]];
    let l2 = if d > 1 { eig.eigenvalues[order[1]] } else { 0.0 };
    let mut u: CVector = eig.eigenvectors.column(order[0]).into_owned();
    let pivot = u
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
        .map(|(i, _)| i)
        .unwrap_or(0);
    if u[pivot].norm() > 0.0 {
        let phase = u[pivot].conj() / u[pivot].norm();
        u *= phase;
    }
    (l1, u, l2)
}

/// `lambda_2 / lambda_1` clamped to `[0, 1]`; zero for 1x1 or null matrices.
pub fn rank_ratio(l1: f64, l2: f64) -> f64 {
    if l1 <= 0.0 {
        0.0
    } else {
        (l2 / l1).clamp(0.0, 1.0)
    }
}

/// Best rank-one factor `v` with `v v^H ~ X` and the residual ratio
/// `lambda_2 / lambda_1`.
pub fn evd_rank1(x: &CMatrix) -> (CVector, f64) {
    let (l1, u, l2) = dominant_eigenpair(x);
    if l1 <= 0.0 {
        return (CVector::zeros(x.nrows()), 0.0);
    }
    (u * Complex64::new(l1.sqrt(), 0.0), rank_ratio(l1, l2))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_rank_one_factor() {
        let v = CVector::from_vec(vec![
            Complex64::new(0.3, -1.0),
            Complex64::new(2.0, 0.5),
            Complex64::new(-0.7, 0.0),
        ]);
        let x = &v * v.adjoint();
        let (w, r) = evd_rank1(&x);
        assert!(r < 1e-12);
        assert!((&w * w.adjoint() - &x).norm() < 1e-10 * x.norm());
        // the largest entry is real and positive
        assert!(w[1].im.abs() < 1e-12 && w[1].re > 0.0);
    }

    #[test]
    fn residual_of_mixed_matrix() {
        let x = CMatrix::from_diagonal(&CVector::from_vec(vec![
            Complex64::new(4.0, 0.0),
            Complex64::new(1.0, 0.0),
        ]));
        let (w, r) = evd_rank1(&x);
        assert!((r - 0.25).abs() < 1e-12);
        assert!((w[0].re - 2.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        let (w, r) = evd_rank1(&CMatrix::zeros(3, 3));
        assert_eq!(r, 0.0);
        assert!(w.iter().all(|z| *z == Complex64::new(0.0, 0.0)));
        let (w, r) = evd_rank1(&CMatrix::from_element(1, 1, Complex64::new(9.0, 0.0)));
        assert_eq!(r, 0.0);
        assert!((w[0].re - 3.0).abs() < 1e-12);
    }
}
