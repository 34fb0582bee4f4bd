//! N-qubit operator algebra and canonical probe states.
//!
//! Every operator built here is diagonal in the computational basis. They are
//! still returned as dense matrices; the physics modules use the diagonal
//! shortcuts ([`z_sign`], [`jz_eigenvalue`]) and the tests pin both routes to
//! each other.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::{eigvalsh, hermiticity_defect, trace};
use crate::{Error, Matrix, Result, C64};

/// Largest supported register; a 2^12 dense complex matrix is 256 MiB.
pub const MAX_QUBITS: usize = 12;

pub const HERMITIAN_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-10;
pub const PSD_TOL: f64 = 1e-9;

/// Hilbert-space dimension `2^n`, rejecting empty or oversized registers.
pub fn dimension(n_qubits: usize) -> Result<usize> {
    if n_qubits == 0 {
        return Err(Error::NoQubits);
    }
    if n_qubits > MAX_QUBITS {
        return Err(Error::DimensionOverflow { n: n_qubits, max: MAX_QUBITS });
    }
    Ok(1 << n_qubits)
}

/// One-based qubit label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QubitIndex(usize);

impl QubitIndex {
    pub fn new(j: usize, n_qubits: usize) -> Result<Self> {
        if j == 0 || j > n_qubits {
            return Err(Error::QubitIndex { j, n: n_qubits });
        }
        Ok(Self(j))
    }

    pub fn get(self) -> usize {
        self.0
    }

    /// Bit mask selecting this qubit inside a basis index.
    pub fn mask(self, n_qubits: usize) -> usize {
        1 << (n_qubits - self.0)
    }
}

/// Eigenvalue of `sigma_z^(j)` on basis state `index`: +1 if the bit is 0.
#[inline]
pub fn z_sign(index: usize, j: usize, n_qubits: usize) -> f64 {
    if index >> (n_qubits - j) & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Eigenvalue of `J_z` on basis state `index`, `(N - 2 popcount) / 2`.
#[inline]
pub fn jz_eigenvalue(index: usize, n_qubits: usize) -> f64 {
    (n_qubits as f64 - 2.0 * index.count_ones() as f64) / 2.0
}

/// All `J_z` eigenvalues in basis order.
pub fn jz_spectrum(n_qubits: usize) -> Vec<f64> {
    (0..1usize << n_qubits).map(|m| jz_eigenvalue(m, n_qubits)).collect()
}

/// Dense operator on the register.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    n_qubits: usize,
    matrix: Matrix,
}

impl OperatorMatrix {
    fn from_diagonal(n_qubits: usize, diag: impl Fn(usize) -> f64) -> Result<Self> {
        let dim = dimension(n_qubits)?;
        let mut matrix = DMatrix::zeros(dim, dim);
        for m in 0..dim {
            matrix[(m, m)] = C64::new(diag(m), 0.0);
        }
        Ok(Self { n_qubits, matrix })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> Matrix {
        self.matrix
    }
}

/// `sigma_z` acting on qubit `j` of an `n_qubits` register.
pub fn sigma_z(j: QubitIndex, n_qubits: usize) -> Result<OperatorMatrix> {
    dimension(n_qubits)?;
    let j = QubitIndex::new(j.get(), n_qubits)?.get();
    OperatorMatrix::from_diagonal(n_qubits, |m| z_sign(m, j, n_qubits))
}

/// Collective spin `J_z = (1/2) sum_j sigma_z^(j)`.
pub fn collective_jz(n_qubits: usize) -> Result<OperatorMatrix> {
    OperatorMatrix::from_diagonal(n_qubits, |m| jz_eigenvalue(m, n_qubits))
}

/// Density operator on an N-qubit register.
///
/// Constructors either validate the invariants (Hermitian, unit trace, no
/// eigenvalue below `-PSD_TOL`) or are crate-private and used only where the
/// dynamics preserves them by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    n_qubits: usize,
    matrix: Matrix,
}

impl DensityMatrix {
    /// Wraps `matrix` after checking all density-matrix invariants.
    pub fn from_matrix(n_qubits: usize, matrix: Matrix) -> Result<Self> {
        let state = Self::from_matrix_unchecked(n_qubits, matrix)?;
        state.validate()?;
        Ok(state)
    }

    /// Wraps `matrix` after checking only its shape.
    pub fn from_matrix_unchecked(n_qubits: usize, matrix: Matrix) -> Result<Self> {
        let dim = dimension(n_qubits)?;
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: matrix.nrows() });
        }
        Ok(Self { n_qubits, matrix })
    }

    /// `|psi><psi|` for the normalized `amplitudes`. Returns the state and the
    /// norm of the input so callers can report a normalization defect.
    pub fn from_amplitudes(n_qubits: usize, amplitudes: &[C64]) -> Result<(Self, f64)> {
        let dim = dimension(n_qubits)?;
        if amplitudes.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: amplitudes.len() });
        }
        let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::InvalidState("amplitude vector has zero or non-finite norm".into()));
        }
        let matrix = DMatrix::from_fn(dim, dim, |r, c| amplitudes[r] * amplitudes[c].conj() / (norm * norm));
        Ok((Self { n_qubits, matrix }, norm))
    }

    /// Maximally mixed state `I / 2^N`.
    pub fn maximally_mixed(n_qubits: usize) -> Result<Self> {
        let dim = dimension(n_qubits)?;
        let matrix = DMatrix::from_diagonal_element(dim, dim, C64::new(1.0 / dim as f64, 0.0));
        Ok(Self { n_qubits, matrix })
    }

    pub fn validate(&self) -> Result<()> {
        let herm = hermiticity_defect(&self.matrix);
        if herm > HERMITIAN_TOL {
            return Err(Error::InvalidState(format!("not Hermitian (defect {herm:e})")));
        }
        let tr = self.trace();
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let min = self.min_eigenvalue();
        if min < -PSD_TOL {
            return Err(Error::NotPositive(min));
        }
        Ok(())
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> Matrix {
        self.matrix
    }

    pub(crate) fn matrix_mut(&mut self) -> &mut Matrix {
        &mut self.matrix
    }

    pub fn trace(&self) -> f64 {
        trace(&self.matrix).re
    }

    /// `Tr rho^2`.
    pub fn purity(&self) -> f64 {
        self.matrix.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (&self.matrix + self.matrix.adjoint()) * C64::new(0.5, 0.0);
        eigvalsh(&herm)[0]
    }

    /// `Tr[rho sigma_z^(j)]`, read off the diagonal.
    pub fn z_expectation(&self, j: usize) -> f64 {
        (0..self.dim()).map(|m| z_sign(m, j, self.n_qubits) * self.matrix[(m, m)].re).sum()
    }

    pub fn trace_distance(&self, other: &DensityMatrix) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: other.dim() });
        }
        Ok(crate::linalg::trace_distance(&self.matrix, &other.matrix))
    }
}

/// Random state from the Ginibre ensemble: `G G^dagger / Tr` with `G` a
/// `2^N x rank` matrix of standard complex normals. `rank = 1` gives a random
/// pure state.
pub fn random_state<R: Rng + ?Sized>(n_qubits: usize, rank: usize, rng: &mut R) -> Result<DensityMatrix> {
    let dim = dimension(n_qubits)?;
    let rank = rank.clamp(1, dim);
    let g = DMatrix::from_fn(dim, rank, |_, _| {
        C64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
    });
    let mut matrix = &g * g.adjoint();
    let tr = trace(&matrix);
    matrix /= tr;
    Ok(DensityMatrix { n_qubits, matrix })
}

/// GHZ projector `(|0...0> + |1...1>)(<0...0| + <1...1|) / 2`.
pub fn ghz_state(n_qubits: usize) -> Result<DensityMatrix> {
    let dim = dimension(n_qubits)?;
    let mut matrix = DMatrix::zeros(dim, dim);
    let half = C64::new(0.5, 0.0);
    for &r in &[0, dim - 1] {
        for &c in &[0, dim - 1] {
            matrix[(r, c)] = half;
        }
    }
    Ok(DensityMatrix { n_qubits, matrix })
}

/// `|+><+|` on every qubit; every entry equals `2^-N`.
pub fn product_plus_state(n_qubits: usize) -> Result<DensityMatrix> {
    let dim = dimension(n_qubits)?;
    let matrix = DMatrix::from_element(dim, dim, C64::new(1.0 / dim as f64, 0.0));
    Ok(DensityMatrix { n_qubits, matrix })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag_of(op: &OperatorMatrix) -> Vec<f64> {
        (0..op.dim()).map(|m| op.matrix()[(m, m)].re).collect()
    }

    fn q(j: usize, n: usize) -> QubitIndex {
        QubitIndex::new(j, n).unwrap()
    }

    #[test]
    fn sigma_z_examples() {
        assert_eq!(diag_of(&sigma_z(q(1, 1), 1).unwrap()), vec![1.0, -1.0]);
        assert_eq!(diag_of(&sigma_z(q(2, 2), 2).unwrap()), vec![1.0, -1.0, 1.0, -1.0]);
        assert_eq!(diag_of(&sigma_z(q(1, 2), 2).unwrap()), vec![1.0, 1.0, -1.0, -1.0]);
    }

    #[test]
    fn sigma_z_is_diagonal() {
        let op = sigma_z(q(2, 3), 3).unwrap();
        for r in 0..8 {
            for c in 0..8 {
                if r != c {
                    assert_eq!(op.matrix()[(r, c)], C64::new(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn oversized_register_is_rejected() {
        assert_eq!(
            collective_jz(MAX_QUBITS + 1).unwrap_err(),
            Error::DimensionOverflow { n: 13, max: 12 }
        );
        assert!(matches!(ghz_state(13), Err(Error::DimensionOverflow { .. })));
        assert!(matches!(product_plus_state(0), Err(Error::NoQubits)));
        assert!(matches!(QubitIndex::new(3, 2), Err(Error::QubitIndex { j: 3, n: 2 })));
        assert!(matches!(QubitIndex::new(0, 2), Err(Error::QubitIndex { .. })));
        // an index valid for a bigger register is still out of range here
        assert!(matches!(sigma_z(q(3, 3), 2), Err(Error::QubitIndex { .. })));
    }

    #[test]
    fn collective_jz_examples() {
        assert_eq!(diag_of(&collective_jz(1).unwrap()), vec![0.5, -0.5]);
        assert_eq!(diag_of(&collective_jz(2).unwrap()), vec![1.0, 0.0, 0.0, -1.0]);
        assert_eq!(diag_of(&collective_jz(3).unwrap())[0b101], -0.5);
    }

    #[test]
    fn jz_is_half_sum_of_local_paulis() {
        for n in 1..=5 {
            let mut sum = Matrix::zeros(1 << n, 1 << n);
            for j in 1..=n {
                sum += sigma_z(q(j, n), n).unwrap().matrix();
            }
            let jz = collective_jz(n).unwrap();
            assert!((sum * C64::new(0.5, 0.0) - jz.matrix()).norm() < 1e-15);
        }
    }

    #[test]
    fn paulis_square_to_identity_and_commute() {
        let n = 4;
        let id = Matrix::identity(16, 16);
        for j in 1..=n {
            let a = sigma_z(q(j, n), n).unwrap().into_matrix();
            assert!((&a * &a - &id).norm() < 1e-15);
            for k in 1..=n {
                let b = sigma_z(q(k, n), n).unwrap().into_matrix();
                assert!((&a * &b - &b * &a).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn diagonal_shortcuts_match_dense_operators() {
        for n in 1..=6 {
            let jz = collective_jz(n).unwrap();
            for (m, v) in jz_spectrum(n).into_iter().enumerate() {
                assert!((jz.matrix()[(m, m)].re - v).abs() < 1e-12);
            }
            for j in 1..=n {
                let op = sigma_z(q(j, n), n).unwrap();
                for m in 0..1 << n {
                    assert!((op.matrix()[(m, m)].re - z_sign(m, j, n)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn ghz_examples() {
        let one = ghz_state(1).unwrap();
        assert!(one.matrix().iter().all(|z| (*z - C64::new(0.5, 0.0)).norm() < 1e-15));
        let two = ghz_state(2).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                let corner = (r == 0 || r == 3) && (c == 0 || c == 3);
                let expected = if corner { 0.5 } else { 0.0 };
                assert_eq!(two.matrix()[(r, c)].re, expected);
            }
        }
        for n in 1..=6 {
            let s = ghz_state(n).unwrap();
            assert!((s.trace() - 1.0).abs() < 1e-14);
            assert!((s.purity() - 1.0).abs() < 1e-14);
            s.validate().unwrap();
        }
    }

    #[test]
    fn product_plus_examples() {
        let two = product_plus_state(2).unwrap();
        assert!(two.matrix().iter().all(|z| *z == C64::new(0.25, 0.0)));
        for n in 1..=6 {
            let s = product_plus_state(n).unwrap();
            assert!((s.trace() - 1.0).abs() < 1e-13);
            assert!((s.purity() - 1.0).abs() < 1e-12);
            s.validate().unwrap();
        }
    }

    #[test]
    fn validation_rejects_bad_states() {
        let mut m = Matrix::zeros(2, 2);
        m[(0, 0)] = C64::new(1.5, 0.0);
        m[(1, 1)] = C64::new(-0.5, 0.0);
        assert!(matches!(DensityMatrix::from_matrix(1, m), Err(Error::NotPositive(_))));
        let mut m = Matrix::zeros(2, 2);
        m[(0, 0)] = C64::new(0.7, 0.0);
        assert!(matches!(DensityMatrix::from_matrix(1, m), Err(Error::InvalidState(_))));
        let mut m = Matrix::identity(2, 2) * C64::new(0.5, 0.0);
        m[(0, 1)] = C64::new(0.0, 0.1);
        assert!(matches!(DensityMatrix::from_matrix(1, m), Err(Error::InvalidState(_))));
        assert!(matches!(
            DensityMatrix::from_matrix(2, Matrix::identity(2, 2)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn random_states_are_valid() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for n in 1..=4 {
            for rank in [1, 2, 1 << n] {
                let s = random_state(n, rank, &mut rng).unwrap();
                s.validate().unwrap();
                if rank == 1 {
                    assert!((s.purity() - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn amplitudes_are_normalized() {
        let amps = [C64::new(1.0, 0.0), C64::new(0.0, 1.0)];
        let (state, norm) = DensityMatrix::from_amplitudes(1, &amps).unwrap();
        assert!((norm - 2f64.sqrt()).abs() < 1e-15);
        assert!((state.matrix()[(0, 1)] - C64::new(0.0, -0.5)).norm() < 1e-15);
        state.validate().unwrap();
    }
}
