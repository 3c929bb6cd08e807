//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().min()
}

pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).norm()
}

/// Condition number in the spectral norm; infinite when singular.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    let hi = sv.max();
    let lo = sv.min();
    if lo == 0.0 || !lo.is_finite() {
        f64::INFINITY
    } else {
        hi / lo
    }
}

pub(crate) fn all_finite_mat(m: &DMatrix<f64>) -> bool {
    m.iter().all(|x| x.is_finite())
}

pub(crate) fn all_finite_vec(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Solves `a x = b` by dense LU; `None` if `a` is singular.
/// `xᵀ M y` without temporaries.
pub(crate) fn bilinear(m: &DMatrix<f64>, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    y.iter()
        .enumerate()
        .map(|(j, yj)| yj * m.column(j).dot(x))
        .sum()
}

pub(crate) fn solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let lu = a.clone().lu();
    lu.solve(b).filter(all_finite_mat)
}

pub(crate) fn solve_vec(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let lu = a.clone().lu();
    lu.solve(b).filter(all_finite_vec)
}

pub(crate) fn inverse(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    a.clone().try_inverse().filter(all_finite_mat)
}

pub(crate) fn lerp_mat(a: &DMatrix<f64>, b: &DMatrix<f64>, w: f64) -> DMatrix<f64> {
    if w == 0.0 {
        a.clone()
    } else if w == 1.0 {
        b.clone()
    } else {
        a + (b - a) * w
    }
}

pub(crate) fn lerp_vec(a: &DVector<f64>, b: &DVector<f64>, w: f64) -> DVector<f64> {
    if w == 0.0 {
        a.clone()
    } else if w == 1.0 {
        b.clone()
    } else {
        a + (b - a) * w
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetrize_averages_off_diagonal() {
        let mut m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 4.0, 3.0]);
        symmetrize(&mut m);
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 3.0, 3.0]));
    }

    #[test]
    fn singular_condition_is_infinite() {
        assert!(condition_number(&DMatrix::zeros(2, 2)).is_infinite());
        assert_eq!(condition_number(&DMatrix::identity(3, 3)), 1.0);
    }

    #[test]
    fn lerp_of_equal_endpoints_is_exact() {
        let a = DMatrix::from_element(2, 2, 0.1);
        assert_eq!(lerp_mat(&a, &a, 0.37), a);
    }
}
