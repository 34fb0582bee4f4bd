//! Fidelity, quantum Fisher information and Monte Carlo Fisher estimates for
//! frequency estimation with monitored dephasing.
//!
//! Quantities, for a probe evolved for time `t`:
//!
//! * unconditional QFI: QFI of the unmonitored state `exp(L t) rho0`;
//! * ultimate QFI: QFI of the noiseless state `exp(-i omega t J_z) rho0 exp(..)`
//!   for a pure probe, the bound for any way of reading the environment when
//!   the collapse operators commute with the Hamiltonian;
//! * trajectory Fisher information `F[p_traj] = E[score^2]`, the information
//!   in the measurement record itself;
//! * mean conditional QFI `E[Q(rho_c)]`, the information left in the
//!   conditional state for a final strong measurement;
//! * effective QFI, the sum of the previous two.
//!
//! They satisfy unconditional <= effective <= ultimate.

use crate::dynamics::{dephasing_map_exact, LindbladParams};
use crate::linalg::{eigh, pairwise_sum};
use crate::operators::{jz_spectrum, DensityMatrix, PSD_TOL};
use crate::trajectories::{closed_form_from_record, run_ensemble, simulate_trajectory, TimeGrid, TrajectoryResult, Unravelling};
use crate::{Error, Matrix, Result, C64};

/// Eigenvalue pairs with `lambda_i + lambda_k` at or below this are left out
/// of the SLD sum; they are 0/0 limits on the kernel of the state.
pub const EIG_CUTOFF: f64 = 1e-10;

/// Eigenvalues at or below this are treated as outside a state's support
/// when taking square roots for the fidelity.
const SUPPORT_CUTOFF: f64 = 1e-12;

/// Purity a probe must reach to count as pure.
const PURITY_TOL: f64 = 1e-9;

/// Uhlmann fidelity `|| sqrt(rho) sqrt(sigma) ||_1`.
///
/// Computed as `Tr sqrt(sqrt(a) b sqrt(a))` with `a` the argument of lower
/// rank and the product restricted to the support of `a`, which keeps
/// round-off on the kernel from leaking in through the square roots.
pub fn fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch { expected: rho.dim(), found: sigma.dim() });
    }
    let (vals_r, vecs_r) = eigh(&hermitian_part(rho.matrix()));
    let (vals_s, vecs_s) = eigh(&hermitian_part(sigma.matrix()));
    for v in [vals_r[0], vals_s[0]] {
        if v < -PSD_TOL {
            return Err(Error::NotPositive(v));
        }
    }
    let rank = |v: &[f64]| v.iter().filter(|&&x| x > SUPPORT_CUTOFF).count();
    let (vals, vecs, other) = if rank(&vals_r) <= rank(&vals_s) {
        (vals_r, vecs_r, sigma.matrix())
    } else {
        (vals_s, vecs_s, rho.matrix())
    };
    let support: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] > SUPPORT_CUTOFF).collect();
    let r = support.len();
    if r == 0 {
        return Ok(0.0);
    }
    let basis = Matrix::from_fn(vecs.nrows(), r, |row, c| vecs[(row, support[c])]);
    let projected = basis.adjoint() * other * &basis;
    let roots: Vec<f64> = support.iter().map(|&i| vals[i].sqrt()).collect();
    let inner = Matrix::from_fn(r, r, |i, k| projected[(i, k)] * (roots[i] * roots[k]));
    let (mu, _) = eigh(&hermitian_part(&inner));
    let f: f64 = mu.iter().filter(|&&m| m > 0.0).map(|m| m.sqrt()).sum();
    Ok(f.clamp(0.0, 1.0))
}

fn hermitian_part(m: &Matrix) -> Matrix {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

/// QFI from the symmetric-logarithmic-derivative spectral formula,
/// `2 sum_{ik} |<i|drho|k>|^2 / (lambda_i + lambda_k)`.
pub fn qfi_sld(rho: &DensityMatrix, drho: &Matrix) -> Result<f64> {
    if drho.nrows() != rho.dim() || drho.ncols() != rho.dim() {
        return Err(Error::DimensionMismatch { expected: rho.dim(), found: drho.nrows() });
    }
    let (vals, vecs) = eigh(&hermitian_part(rho.matrix()));
    let d = vecs.adjoint() * drho * &vecs;
    let mut terms = Vec::with_capacity(vals.len() * vals.len());
    for i in 0..vals.len() {
        for k in 0..vals.len() {
            let denom = vals[i] + vals[k];
            if denom > EIG_CUTOFF {
                terms.push(2.0 * d[(i, k)].norm_sqr() / denom);
            }
        }
    }
    Ok(pairwise_sum(&terms))
}

/// Finite-difference QFI from the fidelity,
/// `8 (1 - F[rho(omega - eps/2), rho(omega + eps/2)]) / eps^2`.
pub fn qfi_fd_oracle<F>(state_of: F, omega: f64, eps: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<DensityMatrix>,
{
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("finite-difference step must be positive, got {eps}")));
    }
    let f = fidelity(&state_of(omega - eps / 2.0)?, &state_of(omega + eps / 2.0)?)?;
    Ok(8.0 * (1.0 - f) / (eps * eps))
}

/// `d rho / d omega = -i t [J_z, rho]` for a state reached from an
/// omega-independent preparation by dynamics commuting with `J_z`, which
/// covers the unconditional map and both noise-only conditional states.
pub fn omega_derivative(state: &DensityMatrix, t: f64) -> Matrix {
    let h = jz_spectrum(state.n_qubits());
    let m = state.matrix();
    Matrix::from_fn(state.dim(), state.dim(), |r, c| C64::new(0.0, -t * (h[r] - h[c])) * m[(r, c)])
}

/// QFI of the unmonitored state at time `t`.
pub fn unconditional_qfi(rho0: &DensityMatrix, p: &LindbladParams, t: f64) -> Result<f64> {
    let state = dephasing_map_exact(rho0, p, t)?;
    qfi_sld(&state, &omega_derivative(&state, t))
}

/// QFI of the noiseless evolution of a pure probe.
pub fn ultimate_qfi(rho0: &DensityMatrix, p: &LindbladParams, t: f64) -> Result<f64> {
    let purity = rho0.purity();
    if purity < 1.0 - PURITY_TOL {
        return Err(Error::ImpureState(purity));
    }
    unconditional_qfi(rho0, &p.with_kappa(0.0)?, t)
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    /// Mean and `sd / sqrt(n)` of at least two samples.
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        let n = samples.len();
        if n < 2 {
            return Err(Error::InvalidParameter(format!("need at least two samples, got {n}")));
        }
        let mean = pairwise_sum(samples) / n as f64;
        let sq: Vec<f64> = samples.iter().map(|x| (x - mean).powi(2)).collect();
        let var = pairwise_sum(&sq) / (n - 1) as f64;
        Ok(Self { value: mean, stderr: (var / n as f64).sqrt() })
    }

    /// `|value - target| <= k * stderr + floor`.
    pub fn consistent_with(&self, target: f64, k: f64, floor: f64) -> bool {
        (self.value - target).abs() <= k * self.stderr + floor
    }
}

/// Fisher-information summary at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherEstimates {
    pub time: f64,
    pub fi_traj: Estimate,
    pub mean_conditional_qfi: Estimate,
    pub effective_qfi: Estimate,
    /// QFI of the unmonitored state at coupling `kappa`.
    pub unconditional_qfi: f64,
    /// QFI of the unmonitored state at the reduced coupling `(1 - eta) kappa`.
    pub rescaled_unconditional_qfi: f64,
    /// Noiseless QFI; `None` for a mixed probe.
    pub ultimate_qfi: Option<f64>,
    pub trajectories_used: usize,
}

/// Where the conditional states used for the conditional QFI come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConditionalStates {
    /// The step-integrated states.
    #[default]
    StepIntegrated,
    /// Closed forms evaluated on each trajectory's record (noise-only
    /// unravellings).
    ClosedForm,
}

/// How `d rho_c / d omega` is obtained for the conditional QFI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StateDerivative {
    /// From the likelihood tangent carried by the trajectory, record fixed.
    /// Works for every unravelling; step-integrated states only.
    #[default]
    Tangent,
    /// `-i t [J_z, rho_c]`; noise-only unravellings.
    Analytic,
    /// Central difference over omega replaying the same noise; noise-only
    /// unravellings, where the record law does not depend on omega.
    FiniteDifference,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonitorOptions {
    pub dt: f64,
    pub states: ConditionalStates,
    pub derivative: StateDerivative,
}

impl Default for MonitorOptions {
    fn default() -> Self {
        Self { dt: 1e-3, states: ConditionalStates::StepIntegrated, derivative: StateDerivative::Tangent }
    }
}

impl MonitorOptions {
    fn check(&self, unravelling: &Unravelling) -> Result<()> {
        let noise_only = unravelling.is_noise_only();
        match (self.states, self.derivative) {
            (ConditionalStates::ClosedForm, StateDerivative::Tangent) => {
                Err(Error::Unsupported("closed-form states carry no likelihood tangent".into()))
            }
            (ConditionalStates::ClosedForm, _) | (_, StateDerivative::Analytic | StateDerivative::FiniteDifference)
                if !noise_only =>
            {
                Err(Error::Unsupported(
                    "closed forms and omega-replay derivatives need a noise-only record (photo-detection or homodyne at theta = pi/2)"
                        .into(),
                ))
            }
            _ => Ok(()),
        }
    }
}

/// `delta omega` for central differences.
pub fn fd_step(omega: f64) -> f64 {
    1e-5 * omega.abs().max(1.0)
}

/// Monte Carlo estimate of the record Fisher information at time `t`, the
/// mean squared likelihood score over `trajectories` trajectories.
pub fn fi_trajectories(
    rho0: &DensityMatrix,
    p: &LindbladParams,
    unravelling: &Unravelling,
    t: f64,
    trajectories: usize,
    seed: u64,
    dt: f64,
) -> Result<Estimate> {
    if trajectories < 2 {
        return Err(Error::InvalidParameter("at least two trajectories are required".into()));
    }
    let grid = TimeGrid::final_only(dt, t)?;
    let squares = run_ensemble(rho0, p, unravelling, &grid, trajectories, seed, |r| {
        Ok(r.final_sample().map_or(0.0, |s| s.score().powi(2)))
    })?;
    Estimate::from_samples(&squares)
}

/// Full Fisher summary at time `t` from `trajectories` trajectories.
pub fn effective_qfi(
    rho0: &DensityMatrix,
    p: &LindbladParams,
    unravelling: &Unravelling,
    t: f64,
    trajectories: usize,
    seed: u64,
    options: &MonitorOptions,
) -> Result<FisherEstimates> {
    if trajectories < 2 {
        return Err(Error::InvalidParameter("at least two trajectories are required".into()));
    }
    let grid = TimeGrid::final_only(options.dt, t)?;
    let mut all = fisher_over_time(rho0, p, unravelling, &grid, trajectories, seed, options)?;
    Ok(all.pop().expect("one sample time"))
}

/// Per-trajectory `(score^2, conditional QFI)` at every sample time.
pub fn per_trajectory_information(
    rho0: &DensityMatrix,
    p: &LindbladParams,
    unravelling: &Unravelling,
    grid: &TimeGrid,
    trajectories: usize,
    seed: u64,
    options: &MonitorOptions,
) -> Result<Vec<Vec<(f64, f64)>>> {
    options.check(unravelling)?;
    run_ensemble(rho0, p, unravelling, grid, trajectories, seed, |r| trajectory_information(rho0, &r, options))
}

fn trajectory_information(rho0: &DensityMatrix, r: &TrajectoryResult, options: &MonitorOptions) -> Result<Vec<(f64, f64)>> {
    let p = &r.params;
    let delta = fd_step(p.omega);
    let replay = |omega: f64| -> Result<TrajectoryResult> {
        simulate_trajectory(rho0, &p.with_omega(omega)?, &r.unravelling, &r.grid, r.seed)
    };
    let (plus, minus) = match (options.states, options.derivative) {
        (ConditionalStates::StepIntegrated, StateDerivative::FiniteDifference) => {
            (Some(replay(p.omega + delta)?), Some(replay(p.omega - delta)?))
        }
        _ => (None, None),
    };
    let closed = |params: &LindbladParams, step: usize| closed_form_from_record(rho0, params, &r.unravelling, &r.record, step);
    let central = |a: &DensityMatrix, b: &DensityMatrix| (a.matrix() - b.matrix()) / C64::new(2.0 * delta, 0.0);

    let mut out = Vec::with_capacity(r.samples.len());
    for (i, sample) in r.samples.iter().enumerate() {
        let (state, drho) = match (options.states, options.derivative) {
            (ConditionalStates::StepIntegrated, StateDerivative::Tangent) => (sample.state.clone(), sample.state_derivative()),
            (ConditionalStates::StepIntegrated, StateDerivative::Analytic) => {
                (sample.state.clone(), omega_derivative(&sample.state, sample.time))
            }
            (ConditionalStates::StepIntegrated, StateDerivative::FiniteDifference) => {
                let (a, b) = (plus.as_ref().expect("replayed"), minus.as_ref().expect("replayed"));
                (sample.state.clone(), central(&a.samples[i].state, &b.samples[i].state))
            }
            (ConditionalStates::ClosedForm, StateDerivative::Analytic) => {
                let state = closed(p, sample.step)?;
                let d = omega_derivative(&state, sample.time);
                (state, d)
            }
            (ConditionalStates::ClosedForm, StateDerivative::FiniteDifference) => {
                let a = closed(&p.with_omega(p.omega + delta)?, sample.step)?;
                let b = closed(&p.with_omega(p.omega - delta)?, sample.step)?;
                (closed(p, sample.step)?, central(&a, &b))
            }
            (ConditionalStates::ClosedForm, StateDerivative::Tangent) => unreachable!("rejected by MonitorOptions::check"),
        };
        out.push((sample.score().powi(2), qfi_sld(&state, &drho)?));
    }
    Ok(out)
}

/// Fisher summaries at every sample time of `grid`, from one ensemble.
///
/// A single trajectory is allowed; its standard errors are NaN.
pub fn fisher_over_time(
    rho0: &DensityMatrix,
    p: &LindbladParams,
    unravelling: &Unravelling,
    grid: &TimeGrid,
    trajectories: usize,
    seed: u64,
    options: &MonitorOptions,
) -> Result<Vec<FisherEstimates>> {
    if trajectories == 0 {
        return Err(Error::InvalidParameter("at least one trajectory is required".into()));
    }
    let estimate = |xs: &[f64]| match xs {
        [x] => Ok(Estimate { value: *x, stderr: f64::NAN }),
        _ => Estimate::from_samples(xs),
    };
    let per = per_trajectory_information(rho0, p, unravelling, grid, trajectories, seed, options)?;
    let rescaled = p.with_kappa((1.0 - unravelling.eta()) * p.kappa)?;
    let pure = rho0.purity() >= 1.0 - PURITY_TOL;
    grid.sample_times()
        .into_iter()
        .enumerate()
        .map(|(i, time)| {
            let fi: Vec<f64> = per.iter().map(|v| v[i].0).collect();
            let qc: Vec<f64> = per.iter().map(|v| v[i].1).collect();
            let total: Vec<f64> = per.iter().map(|v| v[i].0 + v[i].1).collect();
            let fi_traj = estimate(&fi)?;
            let mean_conditional_qfi = estimate(&qc)?;
            let mut effective_qfi = estimate(&total)?;
            // keep the additive identity exact rather than up to round-off
            effective_qfi.value = fi_traj.value + mean_conditional_qfi.value;
            let ultimate_qfi = if pure { Some(ultimate_qfi(rho0, p, time)?) } else { None };
            Ok(FisherEstimates {
                time,
                fi_traj,
                mean_conditional_qfi,
                effective_qfi,
                unconditional_qfi: unconditional_qfi(rho0, p, time)?,
                rescaled_unconditional_qfi: unconditional_qfi(rho0, &rescaled, time)?,
                ultimate_qfi,
                trajectories_used: trajectories,
            })
        })
        .collect()
}
