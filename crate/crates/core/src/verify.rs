//! Self-checks of the library against its defining properties.
//!
//! Each `check_*` function runs one property at the requested [`Scale`] and
//! returns a [`CheckReport`]. `Scale::Full` uses the sizes listed in the
//! constants below; `Scale::Reduced` keeps the tolerances and cuts the
//! trajectory and seed counts so the whole suite runs in well under a
//! minute on one core.

use std::f64::consts::FRAC_PI_2;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};

use crate::dynamics::{dephasing_map_exact, propagate_ode, LindbladParams};
use crate::metrology::{
    effective_qfi, fi_trajectories, per_trajectory_information, qfi_fd_oracle, unconditional_qfi,
    ConditionalStates, Estimate, MonitorOptions, StateDerivative,
};
use crate::operators::{ghz_state, product_plus_state, random_state, DensityMatrix};
use crate::trajectories::{
    apply_parity_flips, apply_record_phases, average_conditional_state, closed_form_from_record, closed_form_hd, closed_form_pd,
    run_ensemble, simulate_trajectory, NoiseKind, NoiseRecord, TimeGrid, Unravelling,
};
use crate::Result;

pub const EQUIVALENCE_TOL: f64 = 5e-3;
pub const EQUIVALENCE_DT: f64 = 1e-4;
pub const EQUIVALENCE_SEEDS: usize = 50;
pub const QFI_REL_TOL: f64 = 1e-3;
pub const TRAJECTORY_FI_COUNT: usize = 2000;
pub const STDERR_MULTIPLE: f64 = 3.0;
pub const CONSISTENCY_TOL: f64 = 0.05;
pub const CONSISTENCY_COUNTS: (usize, usize) = (2000, 8000);
pub const CONSISTENCY_REPLICAS: usize = 8;
pub const ODE_TOL: f64 = 1e-6;
pub const ODE_DT: f64 = 1e-4;
pub const SEMIGROUP_TOL: f64 = 1e-12;
pub const STATISTICS_STEPS: usize = 100_000;
pub const VARIANCE_REL_TOL: f64 = 0.05;
pub const GHZ_TOL: f64 = 1e-12;
/// First-order convergence: doubling `dt` should roughly double the error.
pub const ORDER_RATIO_RANGE: (f64, f64) = (1.4, 3.0);

/// Absolute slack, relative to the magnitude compared, added to
/// `k * stderr` tests. Some estimators are identical on every trajectory,
/// making the standard error itself round-off.
pub const STDERR_FLOOR: f64 = 1e-9;

const KAPPA: f64 = 1.0;
const OMEGA: f64 = 1.0;
const MASTER_SEED: u64 = 20_250_101;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Full,
    Reduced,
}

impl Scale {
    fn count(self, full: usize, reduced: usize) -> usize {
        match self {
            Scale::Full => full,
            Scale::Reduced => reduced,
        }
    }
}

/// How the closed-form reference state is computed in the equivalence check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Rescaling {
    /// Unmonitored part at `(1 - eta) kappa`.
    #[default]
    Correct,
    /// Deliberately wrong: unmonitored part at the full `kappa`.
    Unrescaled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub id: &'static str,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckReport {
    fn new(id: &'static str, name: &'static str, passed: bool, detail: String) -> Self {
        Self { id, name, passed, detail }
    }

    pub fn line(&self) -> String {
        format!("{} [{}] {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.id, self.name, self.detail)
    }
}

fn params(n: usize, kappa: f64) -> Result<LindbladParams> {
    LindbladParams::new(n, OMEGA, kappa)
}

fn rel(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        a.abs()
    } else {
        (a - b).abs() / b.abs()
    }
}

fn noise_only_unravellings(eta: f64) -> Result<[Unravelling; 2]> {
    Ok([Unravelling::photo_detection(eta)?, Unravelling::homodyne(eta, FRAC_PI_2)?])
}

fn label(u: &Unravelling) -> String {
    match u {
        Unravelling::PhotoDetection { eta } => format!("pd eta={eta}"),
        Unravelling::Homodyne { eta, theta } => format!("hd eta={eta} theta={theta:.4}"),
    }
}

fn reference_state(
    rho0: &DensityMatrix,
    p: &LindbladParams,
    u: &Unravelling,
    record: &NoiseRecord,
    rescaling: Rescaling,
) -> Result<DensityMatrix> {
    let steps = record.steps();
    match rescaling {
        Rescaling::Correct => closed_form_from_record(rho0, p, u, record, steps),
        Rescaling::Unrescaled => {
            let t = steps as f64 * record.dt();
            let smoothed = dephasing_map_exact(rho0, p, t)?;
            match record.kind() {
                NoiseKind::Poisson => apply_parity_flips(&smoothed, &record.counts(steps)?),
                NoiseKind::Wiener => apply_record_phases(&smoothed, u.eta(), p.kappa, &record.totals(steps)),
            }
        }
    }
}

/// Largest trace distance between step-integrated and closed-form final
/// states over `seeds` trajectories of GHZ probes.
pub fn worst_equivalence_error(n: usize, u: &Unravelling, dt: f64, seeds: usize, rescaling: Rescaling) -> Result<f64> {
    let p = params(n, KAPPA)?;
    let rho0 = ghz_state(n)?;
    let grid = TimeGrid::final_only(dt, 1.0)?;
    let errors = run_ensemble(&rho0, &p, u, &grid, seeds, MASTER_SEED, |r| {
        let reference = reference_state(&rho0, &p, u, &r.record, rescaling)?;
        r.final_sample().expect("final sample").state.trace_distance(&reference)
    })?;
    Ok(errors.into_iter().fold(0.0, f64::max))
}

/// Step-integrated states match the closed forms on the same record.
pub fn check_equivalence(scale: Scale, rescaling: Rescaling) -> Result<CheckReport> {
    let seeds = scale.count(EQUIVALENCE_SEEDS, 8);
    let mut worst: (f64, String) = (0.0, String::new());
    for n in 1..=3 {
        for eta in [0.3, 1.0] {
            for u in noise_only_unravellings(eta)? {
                let e = worst_equivalence_error(n, &u, EQUIVALENCE_DT, seeds, rescaling)?;
                if e >= worst.0 {
                    worst = (e, format!("N={n} {}", label(&u)));
                }
            }
        }
    }
    Ok(CheckReport::new(
        "1",
        "closed-form equivalence",
        worst.0 <= EQUIVALENCE_TOL,
        format!("worst trace distance {:.3e} ({}) over {seeds} seeds, tol {EQUIVALENCE_TOL:e}", worst.0, worst.1),
    ))
}

/// Doubling `dt` roughly doubles the equivalence error of the homodyne step.
pub fn check_convergence_order(scale: Scale) -> Result<CheckReport> {
    let seeds = scale.count(40, 12);
    let u = Unravelling::homodyne(1.0, FRAC_PI_2)?;
    let mut means = Vec::new();
    for dt in [1e-3, 2e-3, 4e-3] {
        let p = params(2, KAPPA)?;
        let rho0 = ghz_state(2)?;
        let grid = TimeGrid::final_only(dt, 1.0)?;
        let errors = run_ensemble(&rho0, &p, &u, &grid, seeds, MASTER_SEED, |r| {
            r.final_sample().expect("final sample").state.trace_distance(&closed_form_from_record(&rho0, &p, &u, &r.record, r.record.steps())?)
        })?;
        means.push(errors.iter().sum::<f64>() / seeds as f64);
    }
    let ratios = [means[1] / means[0], means[2] / means[1]];
    let (lo, hi) = ORDER_RATIO_RANGE;
    Ok(CheckReport::new(
        "conv",
        "equivalence error is first order in dt",
        ratios.iter().all(|r| (lo..=hi).contains(r)),
        format!("mean errors {:.3e}, {:.3e}, {:.3e}; ratios {:.2}, {:.2} (want [{lo}, {hi}])", means[0], means[1], means[2], ratios[0], ratios[1]),
    ))
}

/// The mutated reference (full `kappa` instead of `(1 - eta) kappa`) must be
/// caught by the equivalence check.
pub fn check_mutation_detected(scale: Scale) -> Result<CheckReport> {
    let mutated = check_equivalence(scale, Rescaling::Unrescaled)?;
    Ok(CheckReport::new("mut", "wrong rescaling is detected", !mutated.passed, mutated.detail))
}

/// Conditional QFI at `eta = 0.6` equals the unconditional QFI at `0.4 kappa`.
pub fn check_rescaling(scale: Scale) -> Result<CheckReport> {
    let m = scale.count(100, 20);
    let eta = 0.6;
    let t = 1.0;
    let opts = MonitorOptions { dt: 1e-3, states: ConditionalStates::ClosedForm, derivative: StateDerivative::Analytic };
    let grid = TimeGrid::final_only(opts.dt, t)?;
    let mut worst = 0.0f64;
    for n in 1..=3 {
        let p = params(n, KAPPA)?;
        let rho0 = ghz_state(n)?;
        let rescaled = p.with_kappa((1.0 - eta) * KAPPA)?;
        let target = unconditional_qfi(&rho0, &rescaled, t)?;
        let nf = n as f64;
        let formula = nf * nf * t * t * (-2.0 * nf * (1.0 - eta) * KAPPA * t).exp();
        let fd = qfi_fd_oracle(|w| dephasing_map_exact(&rho0, &rescaled.with_omega(w)?, t), OMEGA, 1e-4)?;
        worst = worst.max(rel(target, formula)).max(rel(fd, formula));
        for u in noise_only_unravellings(eta)? {
            let per = per_trajectory_information(&rho0, &p, &u, &grid, m, MASTER_SEED, &opts)?;
            for v in per {
                worst = worst.max(rel(v[0].1, formula));
            }
        }
    }
    Ok(CheckReport::new(
        "2",
        "noise rescaling to (1-eta) kappa",
        worst <= QFI_REL_TOL,
        format!("worst relative deviation {worst:.3e} over N=1..3, {m} trajectories each, tol {QFI_REL_TOL:e}"),
    ))
}

/// At `eta = 1` every conditional state carries the noiseless QFI.
pub fn check_saturation(scale: Scale) -> Result<CheckReport> {
    let m = scale.count(100, 20);
    let t = 1.0;
    let closed = MonitorOptions { dt: 1e-3, states: ConditionalStates::ClosedForm, derivative: StateDerivative::Analytic };
    let stepped = MonitorOptions { dt: 1e-3, ..Default::default() };
    let grid = TimeGrid::final_only(1e-3, t)?;
    let mut worst = 0.0f64;
    for n in 1..=3 {
        let nf = n as f64;
        let p = params(n, KAPPA)?;
        for (rho0, target) in [(ghz_state(n)?, nf * nf * t * t), (product_plus_state(n)?, nf * t * t)] {
            for u in noise_only_unravellings(1.0)? {
                for v in per_trajectory_information(&rho0, &p, &u, &grid, m, MASTER_SEED, &closed)? {
                    worst = worst.max(rel(v[0].1, target));
                }
            }
            let pd = Unravelling::photo_detection(1.0)?;
            for v in per_trajectory_information(&rho0, &p, &pd, &grid, m, MASTER_SEED, &stepped)? {
                worst = worst.max(rel(v[0].1, target));
            }
        }
    }
    Ok(CheckReport::new(
        "3",
        "ultimate bound saturated at eta=1",
        worst <= QFI_REL_TOL,
        format!("worst relative deviation {worst:.3e} over GHZ and product probes, N=1..3, tol {QFI_REL_TOL:e}"),
    ))
}

fn trajectory_fi(u: &Unravelling, m: usize) -> Result<Estimate> {
    fi_trajectories(&ghz_state(2)?, &params(2, KAPPA)?, u, 1.0, m, MASTER_SEED, 1e-3)
}

/// Noise-only records carry no information on `omega`.
pub fn check_vanishing_trajectory_information(scale: Scale) -> Result<CheckReport> {
    let m = scale.count(TRAJECTORY_FI_COUNT, 200);
    let mut passed = true;
    let mut parts = Vec::new();
    for u in [Unravelling::photo_detection(0.5)?, Unravelling::photo_detection(1.0)?, Unravelling::homodyne(1.0, FRAC_PI_2)?] {
        let e = trajectory_fi(&u, m)?;
        passed &= e.value.abs() <= STDERR_MULTIPLE * e.stderr;
        parts.push(format!("{}: {:.3e} +- {:.3e}", label(&u), e.value, e.stderr));
    }
    Ok(CheckReport::new("4a", "no information in noise-only records", passed, format!("M={m}; {}", parts.join("; "))))
}

/// The `theta = 0` homodyne record is expected to carry information.
pub fn check_informative_homodyne(scale: Scale) -> Result<CheckReport> {
    let m = scale.count(TRAJECTORY_FI_COUNT, 200);
    let u = Unravelling::homodyne(1.0, 0.0)?;
    let e = trajectory_fi(&u, m)?;
    Ok(CheckReport::new(
        "4b",
        "positive information in the theta=0 homodyne record",
        e.value > STDERR_MULTIPLE * e.stderr,
        format!("M={m}; {}: {:.3e} +- {:.3e}, want > {STDERR_MULTIPLE} stderr", label(&u), e.value, e.stderr),
    ))
}

/// Trajectory averages recover the unconditional state.
///
/// The error at each ensemble size is the RMS trace distance over
/// independent replica ensembles; a single distance is too noisy to compare.
pub fn check_unravelling_consistency(scale: Scale) -> Result<CheckReport> {
    let (small, large) = match scale {
        Scale::Full => CONSISTENCY_COUNTS,
        Scale::Reduced => (CONSISTENCY_COUNTS.0 / 2, CONSISTENCY_COUNTS.1 / 2),
    };
    let replicas = CONSISTENCY_REPLICAS;
    let p = params(2, KAPPA)?;
    let rho0 = ghz_state(2)?;
    let grid = TimeGrid::final_only(2e-3, 1.0)?;
    let exact = dephasing_map_exact(&rho0, &p, 1.0)?;
    let distances = |u: &Unravelling, m: usize, offset: u64| -> Result<Vec<f64>> {
        (0..replicas as u64)
            .map(|r| average_conditional_state(&rho0, &p, u, &grid, m, MASTER_SEED + offset + r)?.trace_distance(&exact))
            .collect()
    };
    let rms = |d: &[f64]| (d.iter().map(|x| x * x).sum::<f64>() / d.len() as f64).sqrt();
    let mut passed = true;
    let mut parts = Vec::new();
    for u in [Unravelling::photo_detection(1.0)?, Unravelling::homodyne(1.0, FRAC_PI_2)?, Unravelling::homodyne(1.0, 0.0)?] {
        let a = distances(&u, small, 0)?;
        let b = distances(&u, large, 1000)?;
        let worst = a.iter().copied().fold(0.0, f64::max);
        passed &= worst <= CONSISTENCY_TOL && rms(&b) < rms(&a);
        parts.push(format!("{}: worst {worst:.3e}, rms {:.3e} (M={small}) -> {:.3e} (M={large})", label(&u), rms(&a), rms(&b)));
    }
    Ok(CheckReport::new(
        "5",
        "trajectory average equals the master-equation solution",
        passed,
        format!("{replicas} replicas; {}; tol {CONSISTENCY_TOL}", parts.join("; ")),
    ))
}

/// unconditional <= effective <= ultimate.
pub fn check_inequality_chain(scale: Scale) -> Result<CheckReport> {
    let m = scale.count(400, 60);
    let p = params(2, KAPPA)?;
    let rho0 = ghz_state(2)?;
    let mut configs = Vec::new();
    for eta in [0.3, 1.0] {
        configs.push(Unravelling::photo_detection(eta)?);
        for theta in [0.0, std::f64::consts::FRAC_PI_4, FRAC_PI_2] {
            configs.push(Unravelling::homodyne(eta, theta)?);
        }
    }
    let mut passed = true;
    let mut worst_margin = f64::INFINITY;
    for u in &configs {
        let e = effective_qfi(&rho0, &p, u, 1.0, m, MASTER_SEED, &MonitorOptions::default())?;
        let ultimate = e.ultimate_qfi.expect("pure probe");
        let slack = STDERR_MULTIPLE * e.effective_qfi.stderr + STDERR_FLOOR * ultimate.max(1.0);
        let lower = e.effective_qfi.value - e.unconditional_qfi + slack;
        let upper = ultimate - e.effective_qfi.value + slack;
        passed &= lower >= 0.0 && upper >= 0.0;
        worst_margin = worst_margin.min(lower).min(upper);
    }
    Ok(CheckReport::new(
        "6",
        "unconditional <= effective <= ultimate",
        passed,
        format!("{} configurations, M={m}, smallest margin {worst_margin:.3e}", configs.len()),
    ))
}

/// Exact map against RK4, and the semigroup property.
pub fn check_dynamics_oracle(_scale: Scale) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(MASTER_SEED);
    let mut ode_worst = 0.0f64;
    let mut semigroup_worst = 0.0f64;
    for n in 1..=3 {
        let p = LindbladParams::new(n, 1.3, 0.7)?;
        for rho0 in [ghz_state(n)?, random_state(n, 2, &mut rng)?] {
            let exact = dephasing_map_exact(&rho0, &p, 1.0)?;
            let (ode, _) = propagate_ode(&rho0, &p, 1.0, ODE_DT)?;
            ode_worst = ode_worst.max(ode.trace_distance(&exact)?);
            let split = dephasing_map_exact(&dephasing_map_exact(&rho0, &p, 0.35)?, &p, 0.65)?;
            semigroup_worst = semigroup_worst.max(split.trace_distance(&exact)?);
        }
    }
    Ok(CheckReport::new(
        "7",
        "exact dephasing map",
        ode_worst <= ODE_TOL && semigroup_worst <= SEMIGROUP_TOL,
        format!("RK4 distance {ode_worst:.3e} (tol {ODE_TOL:e}), semigroup {semigroup_worst:.3e} (tol {SEMIGROUP_TOL:e})"),
    ))
}

/// Click rates and Wiener increment moments.
pub fn check_statistics(scale: Scale) -> Result<CheckReport> {
    let steps = scale.count(STATISTICS_STEPS, STATISTICS_STEPS);
    let dt = 1e-3;
    let t = steps as f64 * dt;
    let n = 2;
    let p = params(n, KAPPA)?;
    let rho0 = ghz_state(n)?;
    let grid = TimeGrid::final_only(dt, t)?;
    let mut passed = true;
    let mut parts = Vec::new();

    let eta = 0.8;
    let pd = simulate_trajectory(&rho0, &p, &Unravelling::photo_detection(eta)?, &grid, MASTER_SEED)?;
    let prob = eta * KAPPA * dt / 2.0;
    let sd = (steps as f64 * prob * (1.0 - prob)).sqrt();
    for (j, count) in pd.record.counts(steps)?.into_iter().enumerate() {
        let z = (count as f64 - steps as f64 * prob) / sd;
        passed &= z.abs() <= STDERR_MULTIPLE;
        parts.push(format!("clicks ch{}: {count} ({z:+.2} sd)", j + 1));
    }

    let hd = simulate_trajectory(&rho0, &p, &Unravelling::homodyne(1.0, FRAC_PI_2)?, &grid, MASTER_SEED)?;
    for j in 0..n {
        let xs: Vec<f64> = (0..steps).map(|s| hd.record.increments(s)[j]).collect();
        let e = Estimate::from_samples(&xs)?;
        let var = e.stderr.powi(2) * steps as f64;
        let mean_ok = e.value.abs() <= STDERR_MULTIPLE * dt.sqrt() / (steps as f64).sqrt();
        let var_ok = rel(var, dt) <= VARIANCE_REL_TOL;
        passed &= mean_ok && var_ok;
        parts.push(format!("dw ch{}: mean {:.2e}, var/dt {:.4}", j + 1, e.value, var / dt));
    }
    Ok(CheckReport::new("8", "increment statistics", passed, format!("{steps} steps; {}", parts.join("; "))))
}

/// GHZ conditional states depend only on the total parity or total noise.
pub fn check_ghz_reduction(_scale: Scale) -> Result<CheckReport> {
    let n = 3;
    let t = 1.0;
    let eta = 0.7;
    let p = params(n, KAPPA)?;
    let rho0 = ghz_state(n)?;
    let mut pd_worst = 0.0f64;
    let mut refs: [Option<DensityMatrix>; 2] = [None, None];
    for code in 0..4u64.pow(n as u32) {
        let counts: Vec<u64> = (0..n).map(|j| (code >> (2 * j)) & 3).collect();
        let parity = (counts.iter().sum::<u64>() % 2) as usize;
        let state = closed_form_pd(&rho0, &p, eta, &counts, t)?;
        match &refs[parity] {
            None => refs[parity] = Some(state),
            Some(r) => pd_worst = pd_worst.max(state.trace_distance(r)?),
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(MASTER_SEED);
    let uniform = Uniform::new(-3.0, 3.0).expect("valid range");
    let mut hd_worst = 0.0f64;
    for _ in 0..100 {
        let a: Vec<f64> = (0..n).map(|_| uniform.sample(&mut rng)).collect();
        let mut b: Vec<f64> = (0..n - 1).map(|_| uniform.sample(&mut rng)).collect();
        b.push(a.iter().sum::<f64>() - b.iter().sum::<f64>());
        let sa = closed_form_hd(&rho0, &p, eta, &a, t)?;
        let sb = closed_form_hd(&rho0, &p, eta, &b, t)?;
        hd_worst = hd_worst.max(sa.trace_distance(&sb)?);
    }
    Ok(CheckReport::new(
        "9",
        "GHZ states depend on total parity / total noise only",
        pd_worst <= GHZ_TOL && hd_worst <= GHZ_TOL,
        format!("parity classes {pd_worst:.3e}, equal-sum W pairs {hd_worst:.3e}, tol {GHZ_TOL:e}"),
    ))
}

/// Every check, in order, at `scale`.
pub fn run_all(scale: Scale) -> Result<Vec<CheckReport>> {
    Ok(vec![
        check_equivalence(scale, Rescaling::Correct)?,
        check_rescaling(scale)?,
        check_saturation(scale)?,
        check_vanishing_trajectory_information(scale)?,
        check_informative_homodyne(scale)?,
        check_unravelling_consistency(scale)?,
        check_inequality_chain(scale)?,
        check_dynamics_oracle(scale)?,
        check_statistics(scale)?,
        check_ghz_reduction(scale)?,
        check_mutation_detected(scale)?,
        check_convergence_order(scale)?,
    ])
}
