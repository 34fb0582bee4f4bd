//! Small dense helpers shared by the physics modules.

use nalgebra::DMatrix;

use crate::{Matrix, C64};

/// Spectral decomposition of a Hermitian matrix: ascending eigenvalues and
/// the matching eigenvectors as columns.
pub fn eigh(m: &Matrix) -> (Vec<f64>, Matrix) {
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Eigenvalues of a Hermitian matrix in ascending order.
pub fn eigvalsh(m: &Matrix) -> Vec<f64> {
    let mut values: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    values.sort_by(f64::total_cmp);
    values
}

/// Largest entry of `|m - m^dagger|`.
pub fn hermiticity_defect(m: &Matrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for r in 0..n {
        for c in r..n {
            worst = worst.max((m[(r, c)] - m[(c, r)].conj()).norm());
        }
    }
    worst
}

/// `0.5 * ||a - b||_1` for Hermitian `a`, `b`.
pub fn trace_distance(a: &Matrix, b: &Matrix) -> f64 {
    let diff = a - b;
    let hermitian = (&diff + diff.adjoint()) * C64::new(0.5, 0.0);
    0.5 * eigvalsh(&hermitian).iter().map(|v| v.abs()).sum::<f64>()
}

pub fn trace(m: &Matrix) -> C64 {
    m.diagonal().iter().sum()
}

/// Pairwise (cascade) summation; the result depends only on the order of
/// `values`, never on how the values were produced.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2 => values[0] + values[1],
        n => {
            let (lo, hi) = values.split_at(n / 2);
            pairwise_sum(lo) + pairwise_sum(hi)
        }
    }
}

/// Pairwise sum of equally shaped matrices.
pub fn pairwise_matrix_sum(values: &[Matrix]) -> Option<Matrix> {
    match values.len() {
        0 => None,
        1 => Some(values[0].clone()),
        n => {
            let (lo, hi) = values.split_at(n / 2);
            Some(pairwise_matrix_sum(lo)? + pairwise_matrix_sum(hi)?)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigh_reconstructs() {
        let m = Matrix::from_row_slice(
            2,
            2,
            &[C64::new(2.0, 0.0), C64::new(0.0, 1.0), C64::new(0.0, -1.0), C64::new(2.0, 0.0)],
        );
        let (vals, vecs) = eigh(&m);
        assert!((vals[0] - 1.0).abs() < 1e-12);
        assert!((vals[1] - 3.0).abs() < 1e-12);
        let diag = Matrix::from_diagonal(&nalgebra::DVector::from_iterator(
            2,
            vals.iter().map(|&v| C64::new(v, 0.0)),
        ));
        let back = &vecs * diag * vecs.adjoint();
        assert!((back - m).norm() < 1e-12);
    }

    #[test]
    fn trace_distance_of_orthogonal_projectors_is_one() {
        let a = Matrix::from_diagonal_element(2, 2, C64::new(0.0, 0.0));
        let mut a = a;
        a[(0, 0)] = C64::new(1.0, 0.0);
        let mut b = Matrix::zeros(2, 2);
        b[(1, 1)] = C64::new(1.0, 0.0);
        assert!((trace_distance(&a, &b) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn pairwise_sum_matches_naive_for_integers() {
        let v: Vec<f64> = (1..=1000).map(f64::from).collect();
        assert_eq!(pairwise_sum(&v), 500_500.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }
}
