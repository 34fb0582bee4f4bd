//! Run configuration: JSON file, command-line overrides and validation.

use std::f64::consts::FRAC_PI_2;
use std::fs;
use std::path::Path;

use qdephase::dynamics::LindbladParams;
use qdephase::operators::{ghz_state, product_plus_state, DensityMatrix, MAX_QUBITS};
use qdephase::trajectories::{TimeGrid, Unravelling};
use qdephase::C64;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Amplitude files whose norm is further than this from 1 are reported.
const NORM_WARNING: f64 = 1e-8;

/// Prefix of the config echo line in report headers.
pub const ECHO_PREFIX: &str = "# config: ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum UnravellingKind {
    Pd,
    Hd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    #[serde(rename = "N")]
    pub n: usize,
    pub omega: f64,
    pub kappa: f64,
    pub eta: f64,
    pub unravelling: UnravellingKind,
    /// Homodyne angle; `None` for photo-detection.
    pub theta: Option<f64>,
    /// `ghz`, `plus_product`, or a path to an amplitude file.
    pub initial_state: String,
    pub t_max: f64,
    pub dt: f64,
    pub sample_times: Vec<f64>,
    pub trajectories: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 2,
            omega: 1.0,
            kappa: 1.0,
            eta: 1.0,
            unravelling: UnravellingKind::Pd,
            theta: None,
            initial_state: "ghz".into(),
            t_max: 1.0,
            dt: 1e-3,
            sample_times: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            trajectories: 200,
            seed: 0,
        }
    }
}

/// Values given on the command line; each replaces the file value.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// Number of qubits.
    #[arg(long = "N", global = true)]
    pub n: Option<usize>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub omega: Option<f64>,
    #[arg(long, global = true)]
    pub kappa: Option<f64>,
    #[arg(long, global = true)]
    pub eta: Option<f64>,
    #[arg(long, global = true, value_enum)]
    pub unravelling: Option<UnravellingKind>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub theta: Option<f64>,
    /// `ghz`, `plus_product`, or a file of "re im" amplitude lines.
    #[arg(long = "initial-state", global = true)]
    pub initial_state: Option<String>,
    #[arg(long = "t-max", global = true)]
    pub t_max: Option<f64>,
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    /// Comma-separated list of times.
    #[arg(long = "sample-times", global = true, value_delimiter = ',')]
    pub sample_times: Option<Vec<f64>>,
    #[arg(long, global = true)]
    pub trajectories: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

fn config_error(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Reads a config file: either a JSON object, or a report written by this
/// tool, in which case its echoed config is used.
pub fn read_config(path: &Path) -> Result<SimConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
    let (json, line_offset) = match text.lines().position(|l| l.starts_with(ECHO_PREFIX)) {
        Some(i) => (text.lines().nth(i).expect("line exists")[ECHO_PREFIX.len()..].to_string(), i),
        None => (text, 0),
    };
    let mut config: SimConfig = serde_json::from_str(&json).map_err(|e| {
        config_error(format!("{}:{}:{}: {e}", path.display(), e.line() + line_offset, e.column()))
    })?;
    if let Some(dir) = path.parent() {
        config.initial_state = resolve_state_path(&config.initial_state, dir);
    }
    Ok(config)
}

fn resolve_state_path(value: &str, dir: &Path) -> String {
    if matches!(value, "ghz" | "plus_product") || Path::new(value).is_absolute() || dir.as_os_str().is_empty() {
        return value.to_string();
    }
    dir.join(value).to_string_lossy().into_owned()
}

impl SimConfig {
    pub fn apply(&mut self, o: &Overrides) {
        macro_rules! take {
            ($($field:ident),*) => { $(if let Some(v) = &o.$field { self.$field = v.clone(); })* };
        }
        take!(n, omega, kappa, eta, unravelling, initial_state, t_max, dt, sample_times, trajectories, seed);
        if o.theta.is_some() {
            self.theta = o.theta;
        } else if o.unravelling == Some(UnravellingKind::Pd) {
            self.theta = None;
        }
        if self.unravelling == UnravellingKind::Hd && self.theta.is_none() {
            self.theta = Some(FRAC_PI_2);
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.n == 0 || self.n > MAX_QUBITS {
            return Err(config_error(format!("N: must lie in 1..={MAX_QUBITS}, got {}", self.n)));
        }
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(config_error(format!("{name}: must be finite, got {v}")))
            }
        };
        finite("omega", self.omega)?;
        finite("kappa", self.kappa)?;
        finite("t_max", self.t_max)?;
        finite("dt", self.dt)?;
        if self.kappa < 0.0 {
            return Err(config_error(format!("kappa: must be >= 0, got {}", self.kappa)));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(config_error(format!("eta: must lie in [0, 1], got {}", self.eta)));
        }
        match (self.unravelling, self.theta) {
            (UnravellingKind::Pd, Some(_)) => return Err(config_error("theta: only applies to unravelling \"hd\"")),
            (UnravellingKind::Hd, Some(theta)) => finite("theta", theta)?,
            _ => {}
        }
        if self.t_max < 0.0 {
            return Err(config_error(format!("t_max: must be >= 0, got {}", self.t_max)));
        }
        if self.dt <= 0.0 {
            return Err(config_error(format!("dt: must be > 0, got {}", self.dt)));
        }
        if self.sample_times.is_empty() {
            return Err(config_error("sample_times: at least one time is required"));
        }
        for &t in &self.sample_times {
            if !(0.0..=self.t_max).contains(&t) {
                return Err(config_error(format!("sample_times: {t} lies outside [0, t_max = {}]", self.t_max)));
            }
        }
        if self.sample_times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(config_error("sample_times: must be strictly increasing"));
        }
        if self.trajectories == 0 {
            return Err(config_error("trajectories: must be >= 1"));
        }
        self.grid()?;
        Ok(())
    }

    pub fn params(&self) -> Result<LindbladParams, CliError> {
        LindbladParams::new(self.n, self.omega, self.kappa).map_err(|e| config_error(e.to_string()))
    }

    pub fn unravelling(&self) -> Result<Unravelling, CliError> {
        match self.unravelling {
            UnravellingKind::Pd => Unravelling::photo_detection(self.eta),
            UnravellingKind::Hd => Unravelling::homodyne(self.eta, self.theta.unwrap_or(FRAC_PI_2)),
        }
        .map_err(|e| config_error(e.to_string()))
    }

    pub fn grid(&self) -> Result<TimeGrid, CliError> {
        TimeGrid::new(self.dt, self.t_max, &self.sample_times).map_err(|e| config_error(format!("sample_times/dt: {e}")))
    }

    pub fn initial_state(&self) -> Result<DensityMatrix, CliError> {
        let built = match self.initial_state.as_str() {
            "ghz" => ghz_state(self.n),
            "plus_product" => product_plus_state(self.n),
            path => return load_amplitudes(Path::new(path), self.n),
        };
        built.map_err(|e| config_error(format!("initial_state: {e}")))
    }

    pub fn echo(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

/// Reads one "re im" pair per line; blank lines and `#` comments are skipped.
pub fn load_amplitudes(path: &Path, n: usize) -> Result<DensityMatrix, CliError> {
    let err = |line: usize, msg: String| config_error(format!("initial_state: {}:{line}: {msg}", path.display()));
    let text = fs::read_to_string(path).map_err(|e| config_error(format!("initial_state: {}: {e}", path.display())))?;
    let mut amps = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        let [re, im] = parts[..] else {
            return Err(err(i + 1, format!("expected \"re im\", got {line:?}")));
        };
        let parse = |s: &str| s.parse::<f64>().map_err(|e| err(i + 1, format!("{s:?}: {e}")));
        amps.push(C64::new(parse(re)?, parse(im)?));
    }
    let (state, norm) = DensityMatrix::from_amplitudes(n, &amps).map_err(|e| err(0, e.to_string()))?;
    if (norm - 1.0).abs() > NORM_WARNING {
        log::warn!("{}: amplitudes had norm {norm}, normalized on load", path.display());
    }
    Ok(state)
}

