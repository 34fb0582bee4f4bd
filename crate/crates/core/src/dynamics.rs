//! Unconditional dephasing dynamics,
//! `d rho/dt = -i omega [J_z, rho] + (kappa/2) sum_j (sigma_z^(j) rho sigma_z^(j) - rho)`.
//!
//! The generator acts on each matrix element independently: with `h_m` the
//! `J_z` eigenvalue of basis state `m` and `d_H(m, n)` the Hamming distance of
//! the two indices,
//!
//! ```text
//! rho_mn(t) = rho_mn(0) exp[-i omega t (h_m - h_n)] exp[-kappa t d_H(m, n)]
//! ```
//!
//! since `sum_j s_j(m) s_j(n) - N = -2 d_H(m, n)`. [`dephasing_map_exact`] is
//! that closed form; [`propagate_ode`] integrates [`lindblad_rhs`] with RK4 and
//! exists to check it.

use log::warn;

use crate::operators::{collective_jz, dimension, jz_spectrum, sigma_z, DensityMatrix, QubitIndex};
use crate::{Error, Matrix, Result, C64};

/// Qubit count, rotation frequency and per-qubit dephasing rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LindbladParams {
    pub n_qubits: usize,
    pub omega: f64,
    pub kappa: f64,
}

impl LindbladParams {
    pub fn new(n_qubits: usize, omega: f64, kappa: f64) -> Result<Self> {
        dimension(n_qubits)?;
        if !omega.is_finite() {
            return Err(Error::InvalidParameter(format!("omega must be finite, got {omega}")));
        }
        if !(kappa >= 0.0) || !kappa.is_finite() {
            return Err(Error::InvalidParameter(format!("kappa must be finite and >= 0, got {kappa}")));
        }
        Ok(Self { n_qubits, omega, kappa })
    }

    /// Same register and frequency with a different dephasing rate.
    pub fn with_kappa(self, kappa: f64) -> Result<Self> {
        Self::new(self.n_qubits, self.omega, kappa)
    }

    pub fn with_omega(self, omega: f64) -> Result<Self> {
        Self::new(self.n_qubits, omega, self.kappa)
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }
}

fn check_state(rho: &DensityMatrix, p: &LindbladParams) -> Result<()> {
    if rho.n_qubits() != p.n_qubits {
        return Err(Error::DimensionMismatch { expected: p.dim(), found: rho.dim() });
    }
    Ok(())
}

/// Elementwise factors of `exp(L_{omega,kappa} t)` together with their
/// omega-derivative, precomputed once per time step.
#[derive(Debug, Clone)]
pub struct DephasingKernel {
    t: f64,
    factors: Matrix,
    /// `-i t (h_m - h_n)`: `d/d omega` of a factor divided by the factor.
    log_derivative: Matrix,
}

impl DephasingKernel {
    pub fn new(p: &LindbladParams, t: f64) -> Result<Self> {
        if t < 0.0 || !t.is_finite() {
            return Err(Error::NegativeTime(t));
        }
        let dim = p.dim();
        let h = jz_spectrum(p.n_qubits);
        let factors = Matrix::from_fn(dim, dim, |m, n| {
            let hamming = (m ^ n).count_ones() as f64;
            C64::new(-p.kappa * t * hamming, -p.omega * t * (h[m] - h[n])).exp()
        });
        let log_derivative = Matrix::from_fn(dim, dim, |m, n| C64::new(0.0, -t * (h[m] - h[n])));
        Ok(Self { t, factors, log_derivative })
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn factors(&self) -> &Matrix {
        &self.factors
    }

    pub fn apply(&self, rho: &DensityMatrix) -> DensityMatrix {
        let mut out = rho.clone();
        self.apply_in_place(out.matrix_mut());
        out
    }

    pub(crate) fn apply_in_place(&self, m: &mut Matrix) {
        m.component_mul_assign(&self.factors);
    }

    /// `d/d omega [exp(L t) rho]` for an omega-independent `rho`.
    pub(crate) fn derivative_of(&self, rho: &Matrix) -> Matrix {
        let mut out = rho.component_mul(&self.factors);
        out.component_mul_assign(&self.log_derivative);
        out
    }
}

/// Closed-form solution of the unconditional dynamics at time `t`.
pub fn dephasing_map_exact(rho0: &DensityMatrix, p: &LindbladParams, t: f64) -> Result<DensityMatrix> {
    check_state(rho0, p)?;
    Ok(DephasingKernel::new(p, t)?.apply(rho0))
}

/// Right-hand side of the master equation, assembled from dense operators.
pub fn lindblad_rhs(rho: &DensityMatrix, p: &LindbladParams) -> Result<Matrix> {
    check_state(rho, p)?;
    let r = rho.matrix();
    let h = collective_jz(p.n_qubits)?.into_matrix() * C64::new(p.omega, 0.0);
    let mut out = (&h * r - r * &h) * C64::new(0.0, -1.0);
    let half_kappa = C64::new(p.kappa / 2.0, 0.0);
    for j in 1..=p.n_qubits {
        let s = sigma_z(QubitIndex::new(j, p.n_qubits)?, p.n_qubits)?.into_matrix();
        out += (&s * r * &s - r) * half_kappa;
    }
    Ok(out)
}

/// Trace diagnostics reported by [`propagate_ode`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeReport {
    pub steps: usize,
    pub step: f64,
    /// Largest `|Tr rho - 1|` seen after any single step.
    pub max_trace_drift: f64,
}

pub const ODE_RENORMALIZE_THRESHOLD: f64 = 1e-12;
const ODE_DRIFT_WARNING: f64 = 1e-8;

/// Fixed-step RK4 integration of [`lindblad_rhs`] up to `t`.
///
/// The step is shrunk to `t / round(t / dt)` so the grid ends exactly at `t`.
/// Trace drift above [`ODE_RENORMALIZE_THRESHOLD`] is removed after the step
/// in which it appears.
pub fn propagate_ode(rho0: &DensityMatrix, p: &LindbladParams, t: f64, dt: f64) -> Result<(DensityMatrix, OdeReport)> {
    check_state(rho0, p)?;
    if t < 0.0 || !t.is_finite() {
        return Err(Error::NegativeTime(t));
    }
    if t == 0.0 {
        return Ok((rho0.clone(), OdeReport { steps: 0, step: 0.0, max_trace_drift: 0.0 }));
    }
    if !(dt > 0.0) || dt > t {
        return Err(Error::StepSize { dt, t });
    }
    let steps = ((t / dt).round() as usize).max(1);
    let h = t / steps as f64;
    let n = p.n_qubits;
    let rhs = |m: &Matrix| -> Result<Matrix> { lindblad_rhs(&DensityMatrix::from_matrix_unchecked(n, m.clone())?, p) };

    let mut state = rho0.matrix().clone();
    let mut max_drift = 0.0f64;
    let half = C64::new(h / 2.0, 0.0);
    let full = C64::new(h, 0.0);
    let sixth = C64::new(h / 6.0, 0.0);
    for _ in 0..steps {
        let k1 = rhs(&state)?;
        let k2 = rhs(&(&state + &k1 * half))?;
        let k3 = rhs(&(&state + &k2 * half))?;
        let k4 = rhs(&(&state + &k3 * full))?;
        state += (k1 + k2 * C64::new(2.0, 0.0) + k3 * C64::new(2.0, 0.0) + k4) * sixth;
        let tr = crate::linalg::trace(&state).re;
        let drift = (tr - 1.0).abs();
        max_drift = max_drift.max(drift);
        if drift > ODE_RENORMALIZE_THRESHOLD {
            state /= C64::new(tr, 0.0);
        }
    }
    if max_drift > ODE_DRIFT_WARNING {
        warn!("RK4 trace drift reached {max_drift:e}; consider a smaller step");
    }
    let out = DensityMatrix::from_matrix_unchecked(n, state)?;
    Ok((out, OdeReport { steps, step: h, max_trace_drift: max_drift }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{ghz_state, product_plus_state, random_state};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(n: usize, omega: f64, kappa: f64) -> LindbladParams {
        LindbladParams::new(n, omega, kappa).unwrap()
    }

    /// Scalar RK4 of `dc/dt = -rate c`, written out independently of the
    /// matrix integrator. Used to freeze the expected coherences below.
    fn scalar_rk4_decay(c0: f64, rate: f64, t: f64, dt: f64) -> f64 {
        let steps = (t / dt).round() as usize;
        let f = |c: f64| -rate * c;
        let mut c = c0;
        for _ in 0..steps {
            let k1 = f(c);
            let k2 = f(c + 0.5 * dt * k1);
            let k3 = f(c + 0.5 * dt * k2);
            let k4 = f(c + dt * k3);
            c += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        c
    }

    #[test]
    fn frozen_oracle_values() {
        // single-qubit coherence decays at kappa * d_H = 1
        let c = scalar_rk4_decay(0.5, 1.0, 1.0, 1e-5);
        assert!((c - 0.183940).abs() < 1e-6);
        // GHZ corners differ in 2 bits: rate 2 kappa at t = 0.5
        let c = scalar_rk4_decay(0.5, 2.0, 0.5, 1e-5);
        assert!((c - 0.183940).abs() < 1e-6);
    }

    #[test]
    fn single_qubit_coherence_decay() {
        let rho = dephasing_map_exact(&product_plus_state(1).unwrap(), &params(1, 0.0, 1.0), 1.0).unwrap();
        assert!((rho.matrix()[(0, 1)].re - 0.183940).abs() < 1e-6);
        assert!((rho.matrix()[(0, 0)].re - 0.5).abs() < 1e-15);
    }

    #[test]
    fn ghz_corner_coherence_decay() {
        let rho = dephasing_map_exact(&ghz_state(2).unwrap(), &params(2, 0.0, 1.0), 0.5).unwrap();
        assert!((rho.matrix()[(0, 3)].re - 0.183940).abs() < 1e-6);
        assert!((rho.matrix()[(3, 0)].re - 0.183940).abs() < 1e-6);
    }

    #[test]
    fn trivial_generator_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rho = random_state(3, 8, &mut rng).unwrap();
        let out = dephasing_map_exact(&rho, &params(3, 0.0, 0.0), 3.7).unwrap();
        assert_eq!(out, rho);
    }

    #[test]
    fn negative_time_is_rejected() {
        let rho = ghz_state(2).unwrap();
        assert_eq!(dephasing_map_exact(&rho, &params(2, 1.0, 1.0), -0.1).unwrap_err(), Error::NegativeTime(-0.1));
        assert!(matches!(
            dephasing_map_exact(&rho, &params(3, 1.0, 1.0), 0.1),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(LindbladParams::new(2, 1.0, -1.0).is_err());
    }

    #[test]
    fn rhs_examples() {
        let p = params(2, 1.3, 0.7);
        let mixed = DensityMatrix::maximally_mixed(2).unwrap();
        assert!(lindblad_rhs(&mixed, &p).unwrap().norm() < 1e-15);

        let d = lindblad_rhs(&product_plus_state(1).unwrap(), &params(1, 0.0, 1.0)).unwrap();
        assert!((d[(0, 1)] - C64::new(-0.5, 0.0)).norm() < 1e-15);
        assert!((d[(1, 0)] - C64::new(-0.5, 0.0)).norm() < 1e-15);
        assert!(d[(0, 0)].norm() < 1e-15 && d[(1, 1)].norm() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for i in 0..100 {
            let n = 1 + i % 3;
            let rho = random_state(n, 1 + i % 4, &mut rng).unwrap();
            let d = lindblad_rhs(&rho, &params(n, 0.3 * i as f64, 0.1 * i as f64)).unwrap();
            assert!(crate::linalg::trace(&d).norm() < 1e-12);
        }
    }

    #[test]
    fn ode_matches_exact_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rho = random_state(2, 4, &mut rng).unwrap();
        let p = params(2, 1.0, 1.0);
        let (ode, report) = propagate_ode(&rho, &p, 1.0, 1e-4).unwrap();
        let exact = dephasing_map_exact(&rho, &p, 1.0).unwrap();
        assert!(ode.trace_distance(&exact).unwrap() <= 1e-8);
        assert_eq!(report.steps, 10_000);
    }

    #[test]
    fn ode_without_dephasing_is_a_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rho = random_state(2, 1, &mut rng).unwrap();
        let p = params(2, 1.7, 0.0);
        let t = 0.8;
        let (ode, _) = propagate_ode(&rho, &p, t, 1e-3).unwrap();
        let h = jz_spectrum(2);
        let u = Matrix::from_fn(4, 4, |m, n| {
            if m == n {
                C64::new(0.0, -p.omega * t * h[m]).exp()
            } else {
                C64::new(0.0, 0.0)
            }
        });
        let rotated = &u * rho.matrix() * u.adjoint();
        assert!((ode.matrix() - rotated).norm() < 1e-10);
    }

    #[test]
    fn ode_edge_cases() {
        let rho = ghz_state(1).unwrap();
        let p = params(1, 1.0, 1.0);
        let (same, report) = propagate_ode(&rho, &p, 0.0, 1e-3).unwrap();
        assert_eq!(same, rho);
        assert_eq!(report.steps, 0);
        assert!(matches!(propagate_ode(&rho, &p, 0.1, 0.2), Err(Error::StepSize { .. })));
        assert!(matches!(propagate_ode(&rho, &p, 0.1, 0.0), Err(Error::StepSize { .. })));
    }

    #[test]
    fn decay_rate_is_kappa_times_hamming_distance() {
        let n = 3;
        let kappa = 0.8;
        let p = params(n, 0.9, kappa);
        let rho = product_plus_state(n).unwrap();
        let times: Vec<f64> = (1..=10).map(|i| 0.2 * i as f64).collect();
        for (m, k) in [(0usize, 1usize), (0, 3), (0, 7), (5, 6), (2, 2)] {
            // least-squares slope of log|rho_mk| over t
            let logs: Vec<f64> = times
                .iter()
                .map(|&t| dephasing_map_exact(&rho, &p, t).unwrap().matrix()[(m, k)].norm().ln())
                .collect();
            let tm = times.iter().sum::<f64>() / times.len() as f64;
            let lm = logs.iter().sum::<f64>() / logs.len() as f64;
            let cov: f64 = times.iter().zip(&logs).map(|(t, l)| (t - tm) * (l - lm)).sum();
            let var: f64 = times.iter().map(|t| (t - tm).powi(2)).sum();
            let rate = -cov / var;
            let expected = kappa * (m ^ k).count_ones() as f64;
            assert!((rate - expected).abs() < 1e-6, "pair ({m},{k}): {rate} vs {expected}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn exact_map_is_a_channel(seed in any::<u64>(), n in 1usize..=3, omega in -3.0f64..3.0, kappa in 0.0f64..3.0, t in 0.0f64..4.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rho = random_state(n, 1 + (seed as usize) % (1 << n), &mut rng).unwrap();
            let out = dephasing_map_exact(&rho, &params(n, omega, kappa), t).unwrap();
            prop_assert!(out.validate().is_ok());
        }

        #[test]
        fn exact_map_is_a_semigroup(seed in any::<u64>(), n in 1usize..=3, omega in -3.0f64..3.0, kappa in 0.0f64..3.0, t1 in 0.0f64..2.0, t2 in 0.0f64..2.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rho = random_state(n, 2, &mut rng).unwrap();
            let p = params(n, omega, kappa);
            let two = dephasing_map_exact(&dephasing_map_exact(&rho, &p, t1).unwrap(), &p, t2).unwrap();
            let one = dephasing_map_exact(&rho, &p, t1 + t2).unwrap();
            prop_assert!((two.matrix() - one.matrix()).norm() < 1e-12);
        }
    }
}
