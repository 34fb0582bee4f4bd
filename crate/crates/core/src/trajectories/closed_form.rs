//! Closed-form conditional states for the noise-only unravellings.
//!
//! With every superoperator diagonal in the computational basis, the
//! conditional state at time `t` is the unconditional state at the reduced
//! rate `(1 - eta) kappa` followed by a record-dependent unitary:
//!
//! * photo-detection: `U = prod_j (sigma_z^(j))^{N_j(t)}`, so only the count
//!   parities matter;
//! * homodyne at `theta = pi/2`: `V = exp(i sqrt(eta kappa/2) sum_j W_j(t) sigma_z^(j))`.

use super::{apply_parity_flips_raw, click_mask, NoiseKind, NoiseRecord, Unravelling};
use crate::dynamics::{dephasing_map_exact, LindbladParams};
use crate::operators::{z_sign, DensityMatrix};
use crate::{Error, Result, C64};

fn check_channels(len: usize, n: usize) -> Result<()> {
    if len != n {
        return Err(Error::DimensionMismatch { expected: n, found: len });
    }
    Ok(())
}

/// `U rho U^dagger` with `U = prod_j (sigma_z^(j))^{counts_j}`.
pub fn apply_parity_flips(state: &DensityMatrix, counts: &[u64]) -> Result<DensityMatrix> {
    let n = state.n_qubits();
    check_channels(counts.len(), n)?;
    let as_f64: Vec<f64> = counts.iter().map(|&c| (c % 2) as f64).collect();
    let mut out = state.clone();
    apply_parity_flips_raw(out.matrix_mut(), click_mask(&as_f64, n));
    Ok(out)
}

/// `V rho V^dagger` with `V = exp(i sqrt(eta kappa/2) sum_j W_j sigma_z^(j))`.
pub fn apply_record_phases(state: &DensityMatrix, eta: f64, kappa: f64, w: &[f64]) -> Result<DensityMatrix> {
    let n = state.n_qubits();
    check_channels(w.len(), n)?;
    let amplitude = (eta * kappa / 2.0).sqrt();
    let dim = state.dim();
    let phases: Vec<C64> = (0..dim)
        .map(|m| {
            let total: f64 = w.iter().enumerate().map(|(j, wj)| z_sign(m, j + 1, n) * wj).sum();
            C64::new(0.0, amplitude * total).exp()
        })
        .collect();
    let mut out = state.clone();
    let matrix = out.matrix_mut();
    for c in 0..dim {
        let pc = phases[c].conj();
        for r in 0..dim {
            matrix[(r, c)] *= phases[r] * pc;
        }
    }
    Ok(out)
}

fn rescaled(rho0: &DensityMatrix, p: &LindbladParams, eta: f64, t: f64) -> Result<DensityMatrix> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidParameter(format!("efficiency must lie in [0, 1], got {eta}")));
    }
    dephasing_map_exact(rho0, &p.with_kappa((1.0 - eta) * p.kappa)?, t)
}

/// Photo-detection conditional state after `t` given the click counts
/// `N_j(t)`.
pub fn closed_form_pd(rho0: &DensityMatrix, p: &LindbladParams, eta: f64, counts: &[u64], t: f64) -> Result<DensityMatrix> {
    check_channels(counts.len(), p.n_qubits)?;
    apply_parity_flips(&rescaled(rho0, p, eta, t)?, counts)
}

/// Homodyne (`theta = pi/2`) conditional state after `t` given the
/// integrated noise `W_j(t)`.
pub fn closed_form_hd(rho0: &DensityMatrix, p: &LindbladParams, eta: f64, w: &[f64], t: f64) -> Result<DensityMatrix> {
    check_channels(w.len(), p.n_qubits)?;
    apply_record_phases(&rescaled(rho0, p, eta, t)?, eta, p.kappa, w)
}

/// Closed-form state after the first `steps` steps of `record`.
pub fn closed_form_from_record(
    rho0: &DensityMatrix,
    p: &LindbladParams,
    unravelling: &Unravelling,
    record: &NoiseRecord,
    steps: usize,
) -> Result<DensityMatrix> {
    if !unravelling.is_noise_only() {
        return Err(Error::Unsupported("closed forms exist only for photo-detection and homodyne at theta = pi/2".into()));
    }
    if record.kind() != unravelling.noise_kind() {
        return Err(Error::Unsupported(format!("{} record given for the wrong unravelling", record.kind().name())));
    }
    if steps > record.steps() {
        return Err(Error::InvalidParameter(format!("record has {} steps, asked for {steps}", record.steps())));
    }
    let t = steps as f64 * record.dt();
    let eta = unravelling.eta();
    match record.kind() {
        NoiseKind::Poisson => closed_form_pd(rho0, p, eta, &record.counts(steps)?, t),
        NoiseKind::Wiener => closed_form_hd(rho0, p, eta, &record.totals(steps), t),
    }
}
