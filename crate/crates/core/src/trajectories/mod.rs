//! Conditional dynamics under continuous monitoring of every dephasing
//! channel, by photo-detection (jumps) or homodyne detection (diffusion).
//!
//! Both unravellings are integrated as a split step. First the part of the
//! generator that is not monitored, `exp(L_{omega,(1-eta)kappa} dt)`, is
//! applied exactly. Then the measured part is applied as a Kraus update
//! driven by the step's record:
//!
//! * photo-detection: `rho -> sigma_z^(j) rho sigma_z^(j)` for every channel
//!   that clicked, with `P(dN_j = 1) = eta kappa dt / 2` independent of the
//!   state;
//! * homodyne: `rho -> M rho M^dagger / Tr[...]`, with the measured collapse
//!   operator `L_j = sqrt(kappa/2) e^{i theta} sigma_z^(j)` and
//!   `M = I - (eta/2) sum_j L_j^dagger L_j dt + sqrt(eta) sum_j L_j dy_j
//!        + (eta/2) sum_jk L_j L_k (dy_j dy_k - delta_jk dt)`.
//!   With `c = sqrt(eta kappa/2) e^{i theta}` and `y = sum_j s_j dy_j` this is
//!   diagonal, `M_m = 1 - eta N kappa dt/4 + c y_m + (c^2/2)(y_m^2 - N dt)`.
//!   The photocurrent is `dy_j = dw_j + sqrt(eta) Tr[rho (L_j + L_j^dagger)] dt
//!   = dw_j + sqrt(2 eta kappa) cos(theta) <sigma_z^(j)> dt`. At `eta = 0`
//!   `M = I`, so the step is the unconditional map exactly.
//!
//! The homodyne term enters `M` as `c = e^{+i theta} sqrt(eta kappa/2)`, the
//! same phase as in `H[e^{i theta} sigma_z]`; at `theta = pi/2` the update is
//! `exp(+i sqrt(eta kappa/2) sum_j dw_j sigma_z^(j))` to second order and the
//! current carries no signal, `dy = dw`.
//!
//! Alongside the normalized state, every trajectory carries the tangent
//! `xi = (d/d omega) rho_unnormalized / Tr rho_unnormalized`, propagated with
//! the same record held fixed. `Tr xi` is the score of the record likelihood
//! and `xi - Tr(xi) rho` is the omega-derivative of the conditional state.

mod closed_form;
mod record;

use std::f64::consts::TAU;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

pub use closed_form::{
    apply_parity_flips, apply_record_phases, closed_form_from_record, closed_form_hd, closed_form_pd,
};
pub use record::{HomodyneCurrent, NoiseKind, NoiseRecord};

use crate::dynamics::{DephasingKernel, LindbladParams};
use crate::linalg::{pairwise_matrix_sum, trace};
use crate::operators::DensityMatrix;
use crate::{Error, Matrix, Result, C64};

/// Angles whose cosine or sine is below this are snapped to the axis.
const ANGLE_SNAP: f64 = 1e-12;

/// A click probability per step above this makes the Bernoulli
/// approximation of the Poisson increments coarse.
const CLICK_PROBABILITY_WARNING: f64 = 0.1;

/// Which continuous measurement is performed on the environment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Unravelling {
    PhotoDetection { eta: f64 },
    Homodyne { eta: f64, theta: f64 },
}

fn check_eta(eta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidParameter(format!("efficiency must lie in [0, 1], got {eta}")));
    }
    Ok(())
}

impl Unravelling {
    pub fn photo_detection(eta: f64) -> Result<Self> {
        check_eta(eta)?;
        Ok(Self::PhotoDetection { eta })
    }

    /// Homodyne detection at angle `theta`, reduced into `[0, 2 pi)`.
    pub fn homodyne(eta: f64, theta: f64) -> Result<Self> {
        check_eta(eta)?;
        if !theta.is_finite() {
            return Err(Error::InvalidParameter(format!("homodyne angle must be finite, got {theta}")));
        }
        Ok(Self::Homodyne { eta, theta: theta.rem_euclid(TAU) })
    }

    pub fn eta(&self) -> f64 {
        match *self {
            Self::PhotoDetection { eta } | Self::Homodyne { eta, .. } => eta,
        }
    }

    pub fn theta(&self) -> Option<f64> {
        match *self {
            Self::PhotoDetection { .. } => None,
            Self::Homodyne { theta, .. } => Some(theta),
        }
    }

    pub fn noise_kind(&self) -> NoiseKind {
        match self {
            Self::PhotoDetection { .. } => NoiseKind::Poisson,
            Self::Homodyne { .. } => NoiseKind::Wiener,
        }
    }

    /// True when the record is pure noise whose law does not depend on the
    /// state: photo-detection, or homodyne at `theta = pi/2 (mod pi)`. Only
    /// then is the conditional equation linear and the closed forms apply.
    pub fn is_noise_only(&self) -> bool {
        match *self {
            Self::PhotoDetection { .. } => true,
            Self::Homodyne { theta, .. } => quadrature(theta).0 == 0.0,
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        match *self {
            Self::PhotoDetection { eta } => Self::photo_detection(eta).map(|_| ()),
            Self::Homodyne { eta, theta } => Self::homodyne(eta, theta).map(|_| ()),
        }
    }
}

/// `(cos theta, sin theta)` with values below [`ANGLE_SNAP`] set to zero.
fn quadrature(theta: f64) -> (f64, f64) {
    let snap = |v: f64| if v.abs() < ANGLE_SNAP { 0.0 } else { v };
    (snap(theta.cos()), snap(theta.sin()))
}

/// Fixed integration grid: `steps` steps of `dt`, with states recorded after
/// each step listed in `sample_steps` (0 means the initial state).
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    dt: f64,
    steps: usize,
    sample_steps: Vec<usize>,
}

impl TimeGrid {
    /// Snaps `t_max` and each sample time to the nearest multiple of `dt`.
    /// Sample times must be strictly increasing after snapping.
    pub fn new(dt: f64, t_max: f64, sample_times: &[f64]) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::StepSize { dt, t: t_max });
        }
        if t_max < 0.0 || !t_max.is_finite() {
            return Err(Error::NegativeTime(t_max));
        }
        let snap = |t: f64| (t / dt).round() as usize;
        let steps = snap(t_max);
        let mut sample_steps = Vec::with_capacity(sample_times.len());
        for &t in sample_times {
            if t < 0.0 || !t.is_finite() {
                return Err(Error::NegativeTime(t));
            }
            let s = snap(t);
            if s > steps {
                return Err(Error::InvalidParameter(format!("sample time {t} lies beyond t_max = {t_max}")));
            }
            if sample_steps.last().is_some_and(|&last| s <= last) {
                return Err(Error::InvalidParameter(format!(
                    "sample times must be strictly increasing on the dt grid (at {t})"
                )));
            }
            sample_steps.push(s);
        }
        Ok(Self { dt, steps, sample_steps })
    }

    /// Grid ending at `t` that samples only the final state.
    pub fn final_only(dt: f64, t: f64) -> Result<Self> {
        Self::new(dt, t, &[t])
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn sample_steps(&self) -> &[usize] {
        &self.sample_steps
    }

    pub fn sample_times(&self) -> Vec<f64> {
        self.sample_steps.iter().map(|&s| s as f64 * self.dt).collect()
    }

    pub fn t_max(&self) -> f64 {
        self.steps as f64 * self.dt
    }
}

/// Conditional state recorded at one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub step: usize,
    pub time: f64,
    pub state: DensityMatrix,
    /// `d/d omega` of the unnormalized state over its trace, record fixed.
    pub tangent: Matrix,
}

impl Sample {
    /// `d/d omega log p(record)` accumulated up to this sample.
    pub fn score(&self) -> f64 {
        trace(&self.tangent).re
    }

    /// `d/d omega` of the normalized conditional state at fixed record.
    pub fn state_derivative(&self) -> Matrix {
        &self.tangent - self.state.matrix() * C64::new(self.score(), 0.0)
    }
}

/// Everything one simulated trajectory produced.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryResult {
    pub params: LindbladParams,
    pub unravelling: Unravelling,
    pub grid: TimeGrid,
    pub seed: u64,
    pub record: NoiseRecord,
    /// Homodyne photocurrent; `None` for photo-detection.
    pub current: Option<HomodyneCurrent>,
    pub samples: Vec<Sample>,
}

impl TrajectoryResult {
    pub fn final_sample(&self) -> Option<&Sample> {
        self.samples.last()
    }
}

/// Increments drawn for one step.
enum Draw<'a> {
    Clicks(&'a [f64]),
    Current(&'a [f64]),
}

/// Precomputed per-step machinery for one `(params, unravelling, dt)`.
struct Stepper {
    n: usize,
    dt: f64,
    unravelling: Unravelling,
    smooth: DephasingKernel,
    click_probability: f64,
    /// `sqrt(2 eta kappa) cos(theta) dt`: drift of `dy` per unit `<sigma_z>`.
    current_drift: f64,
    /// `1 - eta N kappa dt / 4`.
    kraus_base: f64,
    /// `sqrt(eta kappa / 2) e^{i theta}`.
    coupling: C64,
    kraus: Vec<C64>,
}

impl Stepper {
    fn new(p: &LindbladParams, unravelling: Unravelling, dt: f64) -> Result<Self> {
        unravelling.validate()?;
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::StepSize { dt, t: dt });
        }
        let eta = unravelling.eta();
        let smooth = DephasingKernel::new(&p.with_kappa((1.0 - eta) * p.kappa)?, dt)?;
        let click_probability = eta * p.kappa * dt / 2.0;
        if matches!(unravelling, Unravelling::PhotoDetection { .. }) && click_probability > CLICK_PROBABILITY_WARNING {
            warn!("click probability per step is {click_probability:.3}; reduce dt");
        }
        let (cos, sin) = quadrature(unravelling.theta().unwrap_or(0.0));
        let amplitude = (eta * p.kappa / 2.0).sqrt();
        Ok(Self {
            n: p.n_qubits,
            dt,
            unravelling,
            smooth,
            click_probability,
            current_drift: (2.0 * eta * p.kappa).sqrt() * cos * dt,
            kraus_base: 1.0 - eta * p.n_qubits as f64 * p.kappa * dt / 4.0,
            coupling: C64::new(amplitude * cos, amplitude * sin),
            kraus: vec![C64::new(0.0, 0.0); p.dim()],
        })
    }

    /// Draws one step of increments into `out` in channel order 1..N.
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match self.unravelling {
            Unravelling::PhotoDetection { .. } => {
                for v in out.iter_mut() {
                    *v = if rng.random::<f64>() < self.click_probability { 1.0 } else { 0.0 };
                }
            }
            Unravelling::Homodyne { .. } => {
                let sd = self.dt.sqrt();
                for v in out.iter_mut() {
                    *v = sd * rng.sample::<f64, _>(StandardNormal);
                }
            }
        }
    }

    /// Photocurrent for Wiener increments `dw` given the pre-step state.
    fn current(&self, rho: &DensityMatrix, dw: &[f64], dy: &mut [f64]) {
        for (j, (y, w)) in dy.iter_mut().zip(dw).enumerate() {
            *y = if self.current_drift == 0.0 { *w } else { w + self.current_drift * rho.z_expectation(j + 1) };
        }
    }

    /// Advances `rho` (and the tangent, when given) by one step.
    fn advance(&mut self, rho: &mut DensityMatrix, mut tangent: Option<&mut Matrix>, draw: Draw<'_>) {
        if let Some(xi) = tangent.as_deref_mut() {
            let d = self.smooth.derivative_of(rho.matrix());
            self.smooth.apply_in_place(xi);
            *xi += d;
        }
        self.smooth.apply_in_place(rho.matrix_mut());
        match draw {
            Draw::Clicks(clicks) => {
                let mask = click_mask(clicks, self.n);
                apply_parity_flips_raw(rho.matrix_mut(), mask);
                if let Some(xi) = tangent {
                    apply_parity_flips_raw(xi, mask);
                }
            }
            Draw::Current(dy) => {
                self.fill_kraus(dy);
                let k = &self.kraus;
                let rho_m = rho.matrix_mut();
                let norm: f64 = (0..k.len()).map(|r| k[r].norm_sqr() * rho_m[(r, r)].re).sum();
                let inv = 1.0 / norm;
                let update = |x: &mut Matrix| {
                    for c in 0..k.len() {
                        let kc = k[c].conj() * inv;
                        for r in 0..k.len() {
                            x[(r, c)] *= k[r] * kc;
                        }
                    }
                };
                update(rho_m);
                if let Some(xi) = tangent {
                    update(xi);
                }
            }
        }
    }

    /// Diagonal of the homodyne Kraus operator for currents `dy`.
    fn fill_kraus(&mut self, dy: &[f64]) {
        let n = self.n;
        let c = self.coupling;
        let half_c2 = c * c * 0.5;
        let n_dt = n as f64 * self.dt;
        for (m, out) in self.kraus.iter_mut().enumerate() {
            let y: f64 = dy
                .iter()
                .enumerate()
                .map(|(j, v)| if m >> (n - 1 - j) & 1 == 0 { *v } else { -*v })
                .sum();
            *out = C64::new(self.kraus_base, 0.0) + c * y + half_c2 * (y * y - n_dt);
        }
    }
}

fn check_state(rho: &DensityMatrix, p: &LindbladParams) -> Result<()> {
    if rho.n_qubits() != p.n_qubits {
        return Err(Error::DimensionMismatch { expected: p.dim(), found: rho.dim() });
    }
    Ok(())
}

/// One photo-detection step: clicks drawn per channel, then the split update.
pub fn step_pd<R: Rng + ?Sized>(
    rho: &DensityMatrix,
    p: &LindbladParams,
    eta: f64,
    dt: f64,
    rng: &mut R,
) -> Result<(DensityMatrix, Vec<u8>)> {
    check_state(rho, p)?;
    let mut stepper = Stepper::new(p, Unravelling::photo_detection(eta)?, dt)?;
    let mut clicks = vec![0.0; p.n_qubits];
    stepper.draw(rng, &mut clicks);
    let mut out = rho.clone();
    stepper.advance(&mut out, None, Draw::Clicks(&clicks));
    Ok((out, clicks.iter().map(|&c| c as u8).collect()))
}

/// One homodyne step. Returns the new state, the Wiener increments and the
/// photocurrent.
pub fn step_hd<R: Rng + ?Sized>(
    rho: &DensityMatrix,
    p: &LindbladParams,
    eta: f64,
    theta: f64,
    dt: f64,
    rng: &mut R,
) -> Result<(DensityMatrix, Vec<f64>, Vec<f64>)> {
    check_state(rho, p)?;
    let mut stepper = Stepper::new(p, Unravelling::homodyne(eta, theta)?, dt)?;
    let mut dw = vec![0.0; p.n_qubits];
    let mut dy = vec![0.0; p.n_qubits];
    stepper.draw(rng, &mut dw);
    stepper.current(rho, &dw, &mut dy);
    let mut out = rho.clone();
    stepper.advance(&mut out, None, Draw::Current(&dy));
    Ok((out, dw, dy))
}

/// Random stream for trajectory `index` of a run seeded with `master`.
pub fn trajectory_seed(master: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master) ^ index)
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Integrates one conditional trajectory over `grid`.
///
/// The result is a deterministic function of the arguments: increments come
/// from a ChaCha8 stream seeded with `seed` and are drawn channel by channel.
pub fn simulate_trajectory(
    rho0: &DensityMatrix,
    p: &LindbladParams,
    unravelling: &Unravelling,
    grid: &TimeGrid,
    seed: u64,
) -> Result<TrajectoryResult> {
    check_state(rho0, p)?;
    let mut stepper = Stepper::new(p, *unravelling, grid.dt)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = p.n_qubits;
    let dim = p.dim();
    let kind = unravelling.noise_kind();

    let mut rho = rho0.clone();
    let mut tangent = Matrix::zeros(dim, dim);
    let mut record = NoiseRecord::with_capacity(kind, grid.dt, n, grid.steps);
    let mut current = (kind == NoiseKind::Wiener).then(|| HomodyneCurrent::with_capacity(n, grid.steps));
    let mut samples = Vec::with_capacity(grid.sample_steps.len());
    let mut next_sample = grid.sample_steps.iter().peekable();
    let mut take_sample = |step: usize, rho: &DensityMatrix, tangent: &Matrix, samples: &mut Vec<Sample>| {
        if next_sample.next_if_eq(&&step).is_some() {
            samples.push(Sample { step, time: step as f64 * grid.dt, state: rho.clone(), tangent: tangent.clone() });
        }
    };
    take_sample(0, &rho, &tangent, &mut samples);

    let mut increments = vec![0.0; n];
    let mut dy = vec![0.0; n];
    for step in 1..=grid.steps {
        stepper.draw(&mut rng, &mut increments);
        record.push(&increments);
        let draw = match current.as_mut() {
            None => Draw::Clicks(&increments),
            Some(cur) => {
                stepper.current(&rho, &increments, &mut dy);
                cur.push(&dy);
                Draw::Current(&dy)
            }
        };
        stepper.advance(&mut rho, Some(&mut tangent), draw);
        take_sample(step, &rho, &tangent, &mut samples);
    }

    Ok(TrajectoryResult {
        params: *p,
        unravelling: *unravelling,
        grid: grid.clone(),
        seed,
        record,
        current,
        samples,
    })
}

/// Runs `trajectories` independent trajectories in parallel and maps each
/// through `summarize`. Trajectory `i` uses `trajectory_seed(master_seed, i)`
/// and the output is in index order, so it does not depend on scheduling.
pub fn run_ensemble<T, F>(
    rho0: &DensityMatrix,
    p: &LindbladParams,
    unravelling: &Unravelling,
    grid: &TimeGrid,
    trajectories: usize,
    master_seed: u64,
    summarize: F,
) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(TrajectoryResult) -> Result<T> + Sync,
{
    (0..trajectories as u64)
        .into_par_iter()
        .map(|i| simulate_trajectory(rho0, p, unravelling, grid, trajectory_seed(master_seed, i)).and_then(&summarize))
        .collect()
}

/// Mean of the final conditional states over `trajectories` trajectories.
pub fn average_conditional_state(
    rho0: &DensityMatrix,
    p: &LindbladParams,
    unravelling: &Unravelling,
    grid: &TimeGrid,
    trajectories: usize,
    master_seed: u64,
) -> Result<DensityMatrix> {
    if trajectories == 0 {
        return Err(Error::InvalidParameter("at least one trajectory is required".into()));
    }
    let finals = run_ensemble(rho0, p, unravelling, grid, trajectories, master_seed, |r| {
        Ok(r.samples.last().map(|s| s.state.matrix().clone()).unwrap_or_else(|| Matrix::zeros(0, 0)))
    })?;
    let sum = pairwise_matrix_sum(&finals).expect("non-empty");
    DensityMatrix::from_matrix_unchecked(p.n_qubits, sum / C64::new(trajectories as f64, 0.0))
}

/// Mask of the qubits whose channel clicked an odd number of times.
pub(crate) fn click_mask(counts: &[f64], n: usize) -> usize {
    counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| (c as u64) % 2 == 1)
        .fold(0, |mask, (j, _)| mask | 1 << (n - 1 - j))
}

/// Conjugation by `prod_{j in mask} sigma_z^(j)`: negates every element whose
/// row and column indices differ in an odd number of masked bits.
pub(crate) fn apply_parity_flips_raw(m: &mut Matrix, mask: usize) {
    if mask == 0 {
        return;
    }
    let dim = m.nrows();
    for c in 0..dim {
        for r in 0..dim {
            if ((r ^ c) & mask).count_ones() % 2 == 1 {
                m[(r, c)] = -m[(r, c)];
            }
        }
    }
}
