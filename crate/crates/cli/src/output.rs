//! CSV reports.

use std::io::{self, Write};

use qdephase::metrology::FisherEstimates;

use crate::config::{SimConfig, ECHO_PREFIX};

pub const UNCONDITIONAL_COLUMNS: &[(&str, &str)] = &[
    ("time", "evolution time t"),
    ("unconditional_qfi", "QFI of the unmonitored state exp(L t) rho0"),
    ("ultimate_qfi", "QFI of the noiseless evolution; empty for a mixed probe"),
];

pub const MONITOR_COLUMNS: &[(&str, &str)] = &[
    ("time", "evolution time t (snapped to the dt grid)"),
    ("trajectories", "number of trajectories M"),
    ("fi_traj", "Fisher information of the measurement record, mean squared likelihood score"),
    ("fi_traj_stderr", "standard error of fi_traj (NaN for M = 1)"),
    ("mean_conditional_qfi", "trajectory average of the conditional-state QFI"),
    ("mean_conditional_qfi_stderr", "standard error of mean_conditional_qfi"),
    ("effective_qfi", "fi_traj + mean_conditional_qfi"),
    ("effective_qfi_stderr", "standard error of the per-trajectory sum"),
    ("unconditional_qfi", "QFI of the unmonitored state at coupling kappa"),
    ("rescaled_unconditional_qfi", "QFI of the unmonitored state at coupling (1 - eta) kappa"),
    ("ultimate_qfi", "QFI of the noiseless evolution; empty for a mixed probe"),
];

pub fn describe(columns: &[(&str, &str)]) -> String {
    let width = columns.iter().map(|(n, _)| n.len()).max().unwrap_or(0);
    columns.iter().map(|(n, d)| format!("{n:width$}  {d}\n")).collect()
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn optional(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn header(out: &mut dyn Write, command: &str, config: &SimConfig, columns: &[(&str, &str)]) -> io::Result<()> {
    writeln!(out, "# qdephase {} {command}", env!("CARGO_PKG_VERSION"))?;
    writeln!(out, "{ECHO_PREFIX}{}", config.echo())?;
    let names: Vec<&str> = columns.iter().map(|(n, _)| *n).collect();
    writeln!(out, "{}", names.join(","))
}

pub fn write_unconditional(out: &mut dyn Write, config: &SimConfig, rows: &[(f64, f64, Option<f64>)]) -> io::Result<()> {
    header(out, "unconditional", config, UNCONDITIONAL_COLUMNS)?;
    for &(t, q, u) in rows {
        writeln!(out, "{},{},{}", num(t), num(q), optional(u))?;
    }
    Ok(())
}

pub fn write_monitor(out: &mut dyn Write, config: &SimConfig, rows: &[FisherEstimates]) -> io::Result<()> {
    header(out, "monitor", config, MONITOR_COLUMNS)?;
    for r in rows {
        let fields = [
            num(r.time),
            r.trajectories_used.to_string(),
            num(r.fi_traj.value),
            num(r.fi_traj.stderr),
            num(r.mean_conditional_qfi.value),
            num(r.mean_conditional_qfi.stderr),
            num(r.effective_qfi.value),
            num(r.effective_qfi.stderr),
            num(r.unconditional_qfi),
            num(r.rescaled_unconditional_qfi),
            optional(r.ultimate_qfi),
        ];
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}
