//! Measurement records and their line-oriented text form.
//!
//! ```text
//! # qdephase noise record v1
//! # kind: poisson
//! # dt: 0.0001
//! # steps: 3
//! # N: 2
//! step,d_1,d_2,total_1,total_2
//! 1,0,1,0,1
//! 2,0,0,0,1
//! 3,1,0,1,1
//! ```
//!
//! One line per step: the per-channel increments (`dN_j` or `dw_j`) followed
//! by the running totals (`N_j(t)` or `W_j(t)`) after that step. Wiener values
//! are written in shortest round-trip exponent form, so parsing a written
//! record gives back the identical record.

use std::fmt::Write as _;
use std::io;

use crate::{Error, Result};

const MAGIC: &str = "# qdephase noise record v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    /// Detector clicks, `dN_j` in {0, 1}.
    Poisson,
    /// Wiener increments `dw_j ~ N(0, dt)`.
    Wiener,
}

impl NoiseKind {
    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::Poisson => "poisson",
            NoiseKind::Wiener => "wiener",
        }
    }
}

/// Per-channel, per-step stochastic increments of one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRecord {
    kind: NoiseKind,
    dt: f64,
    channels: usize,
    increments: Vec<f64>,
}

impl NoiseRecord {
    pub fn new(kind: NoiseKind, dt: f64, channels: usize) -> Self {
        Self { kind, dt, channels, increments: Vec::new() }
    }

    /// Builds a record from row-major increments, checking their shape and,
    /// for clicks, that every increment is 0 or 1.
    pub fn from_increments(kind: NoiseKind, dt: f64, channels: usize, increments: Vec<f64>) -> Result<Self> {
        if channels == 0 || increments.len() % channels != 0 {
            return Err(Error::InvalidParameter(format!(
                "{} increments cannot be split into {channels} channels",
                increments.len()
            )));
        }
        if kind == NoiseKind::Poisson && increments.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidParameter("click increments must be 0 or 1".into()));
        }
        Ok(Self { kind, dt, channels, increments })
    }

    pub(crate) fn with_capacity(kind: NoiseKind, dt: f64, channels: usize, steps: usize) -> Self {
        Self { kind, dt, channels, increments: Vec::with_capacity(steps * channels) }
    }

    pub(crate) fn push(&mut self, step: &[f64]) {
        debug_assert_eq!(step.len(), self.channels);
        self.increments.extend_from_slice(step);
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn steps(&self) -> usize {
        self.increments.len() / self.channels
    }

    /// Increments of step `step` (zero-based), one per channel.
    pub fn increments(&self, step: usize) -> &[f64] {
        &self.increments[step * self.channels..(step + 1) * self.channels]
    }

    /// Running totals after the first `steps` steps.
    pub fn totals(&self, steps: usize) -> Vec<f64> {
        let mut totals = vec![0.0; self.channels];
        for s in 0..steps.min(self.steps()) {
            for (acc, v) in totals.iter_mut().zip(self.increments(s)) {
                *acc += v;
            }
        }
        totals
    }

    pub fn final_totals(&self) -> Vec<f64> {
        self.totals(self.steps())
    }

    /// Click counts `N_j` after the first `steps` steps.
    pub fn counts(&self, steps: usize) -> Result<Vec<u64>> {
        if self.kind != NoiseKind::Poisson {
            return Err(Error::Unsupported("click counts requested from a Wiener record".into()));
        }
        Ok(self.totals(steps).into_iter().map(|v| v as u64).collect())
    }

    pub fn write_text<W: io::Write>(&self, mut out: W) -> io::Result<()> {
        out.write_all(self.to_text().as_bytes())
    }

    pub fn to_text(&self) -> String {
        let n = self.channels;
        let mut s = String::new();
        let _ = writeln!(s, "{MAGIC}");
        let _ = writeln!(s, "# kind: {}", self.kind.name());
        let _ = writeln!(s, "# dt: {:e}", self.dt);
        let _ = writeln!(s, "# steps: {}", self.steps());
        let _ = writeln!(s, "# N: {n}");
        s.push_str("step");
        for j in 1..=n {
            let _ = write!(s, ",d_{j}");
        }
        for j in 1..=n {
            let _ = write!(s, ",total_{j}");
        }
        s.push('\n');
        let mut totals = vec![0.0; n];
        for step in 0..self.steps() {
            let _ = write!(s, "{}", step + 1);
            for (acc, v) in totals.iter_mut().zip(self.increments(step)) {
                *acc += v;
                self.push_value(&mut s, *v);
            }
            for v in &totals {
                self.push_value(&mut s, *v);
            }
            s.push('\n');
        }
        s
    }

    fn push_value(&self, s: &mut String, v: f64) {
        let _ = match self.kind {
            NoiseKind::Poisson => write!(s, ",{}", v as u64),
            NoiseKind::Wiener => write!(s, ",{v:e}"),
        };
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let err = |line: usize, msg: String| Error::RecordParse { line, msg };
        let mut kind = None;
        let mut dt = None;
        let mut steps = None;
        let mut channels = None;
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));

        match lines.next() {
            Some((_, l)) if l == MAGIC => {}
            _ => return Err(err(1, format!("expected header line {MAGIC:?}"))),
        }
        let (header_line, columns) = loop {
            let Some((no, line)) = lines.next() else {
                return Err(err(0, "missing column header".into()));
            };
            if let Some(meta) = line.strip_prefix('#') {
                let Some((key, value)) = meta.split_once(':') else { continue };
                let value = value.trim();
                let bad = |what: &str| err(no, format!("invalid {what} {value:?}"));
                match key.trim() {
                    "kind" => {
                        kind = Some(match value {
                            "poisson" => NoiseKind::Poisson,
                            "wiener" => NoiseKind::Wiener,
                            _ => return Err(bad("kind")),
                        })
                    }
                    "dt" => dt = Some(value.parse::<f64>().map_err(|_| bad("dt"))?),
                    "steps" => steps = Some(value.parse::<usize>().map_err(|_| bad("steps"))?),
                    "N" => channels = Some(value.parse::<usize>().map_err(|_| bad("N"))?),
                    _ => {}
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            break (no, line);
        };
        let kind = kind.ok_or_else(|| err(header_line, "header lacks kind".into()))?;
        let dt = dt.ok_or_else(|| err(header_line, "header lacks dt".into()))?;
        let steps = steps.ok_or_else(|| err(header_line, "header lacks steps".into()))?;
        let n = channels.ok_or_else(|| err(header_line, "header lacks N".into()))?;
        if n == 0 {
            return Err(err(header_line, "N must be at least 1".into()));
        }
        let expected_cols = 1 + 2 * n;
        if columns.split(',').count() != expected_cols || !columns.starts_with("step") {
            return Err(err(header_line, format!("expected {expected_cols} columns starting with 'step'")));
        }

        let mut record = NoiseRecord::with_capacity(kind, dt, n, steps);
        let mut totals = vec![0.0; n];
        let mut row = Vec::with_capacity(n);
        for (no, line) in lines {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != expected_cols {
                return Err(err(no, format!("expected {expected_cols} fields, found {}", fields.len())));
            }
            let step: usize = fields[0].trim().parse().map_err(|_| err(no, "bad step index".into()))?;
            if step != record.steps() + 1 {
                return Err(err(no, format!("expected step {}, found {step}", record.steps() + 1)));
            }
            let values = fields[1..]
                .iter()
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| err(no, e.to_string()))?;
            row.clear();
            row.extend_from_slice(&values[..n]);
            if kind == NoiseKind::Poisson && row.iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(err(no, "click increments must be 0 or 1".into()));
            }
            for (j, (acc, v)) in totals.iter_mut().zip(&row).enumerate() {
                *acc += v;
                let stated = values[n + j];
                if (stated - *acc).abs() > 1e-9 * acc.abs().max(1.0) {
                    return Err(err(no, format!("running total of channel {} is {stated}, expected {acc}", j + 1)));
                }
            }
            record.push(&row);
        }
        if record.steps() != steps {
            return Err(err(0, format!("header announces {steps} steps, found {}", record.steps())));
        }
        Ok(record)
    }
}

/// Observed homodyne photocurrent increments `dy_j`, one row per step.
#[derive(Debug, Clone, PartialEq)]
pub struct HomodyneCurrent {
    channels: usize,
    values: Vec<f64>,
}

impl HomodyneCurrent {
    pub(crate) fn with_capacity(channels: usize, steps: usize) -> Self {
        Self { channels, values: Vec::with_capacity(channels * steps) }
    }

    pub(crate) fn push(&mut self, step: &[f64]) {
        self.values.extend_from_slice(step);
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn steps(&self) -> usize {
        self.values.len() / self.channels
    }

    pub fn at(&self, step: usize) -> &[f64] {
        &self.values[step * self.channels..(step + 1) * self.channels]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_record() -> NoiseRecord {
        NoiseRecord::from_increments(NoiseKind::Poisson, 1e-4, 2, vec![0.0, 1.0, 0.0, 0.0, 1.0, 0.0]).unwrap()
    }

    #[test]
    fn text_matches_documented_layout() {
        let text = sample_record().to_text();
        let expected = "# qdephase noise record v1\n# kind: poisson\n# dt: 1e-4\n# steps: 3\n# N: 2\n\
                        step,d_1,d_2,total_1,total_2\n1,0,1,0,1\n2,0,0,0,1\n3,1,0,1,1\n";
        assert_eq!(text, expected);
    }

    #[test]
    fn totals_and_counts() {
        let r = sample_record();
        assert_eq!(r.totals(2), vec![0.0, 1.0]);
        assert_eq!(r.counts(3).unwrap(), vec![1, 1]);
        assert_eq!(r.final_totals(), vec![1.0, 1.0]);
        let w = NoiseRecord::from_increments(NoiseKind::Wiener, 0.1, 1, vec![0.5]).unwrap();
        assert!(w.counts(1).is_err());
    }

    #[test]
    fn parser_rejects_inconsistent_records() {
        let good = sample_record().to_text();
        let bad_total = good.replace("3,1,0,1,1", "3,1,0,2,1");
        assert!(matches!(NoiseRecord::parse_text(&bad_total), Err(Error::RecordParse { line: 9, .. })));
        let bad_click = good.replace("2,0,0,0,1", "2,0,2,0,3");
        assert!(matches!(NoiseRecord::parse_text(&bad_click), Err(Error::RecordParse { line: 8, .. })));
        let bad_steps = good.replace("# steps: 3", "# steps: 4");
        assert!(NoiseRecord::parse_text(&bad_steps).is_err());
        let skipped = good.replace("2,0,0,0,1\n", "");
        assert!(NoiseRecord::parse_text(&skipped).is_err());
        assert!(NoiseRecord::parse_text("step,d_1\n").is_err());
        assert!(NoiseRecord::from_increments(NoiseKind::Poisson, 0.1, 2, vec![0.0, 0.5]).is_err());
        assert!(NoiseRecord::from_increments(NoiseKind::Wiener, 0.1, 2, vec![0.0]).is_err());
    }

    proptest! {
        #[test]
        fn wiener_text_round_trip(values in prop::collection::vec(-1.0f64..1.0, 0..60), channels in 1usize..4) {
            let len = values.len() - values.len() % channels;
            let record = NoiseRecord::from_increments(NoiseKind::Wiener, 1e-3, channels, values[..len].to_vec()).unwrap();
            prop_assert_eq!(NoiseRecord::parse_text(&record.to_text()).unwrap(), record);
        }

        #[test]
        fn poisson_text_round_trip(clicks in prop::collection::vec(0u8..=1, 0..60)) {
            let len = clicks.len() - clicks.len() % 3;
            let incs = clicks[..len].iter().map(|&c| f64::from(c)).collect();
            let record = NoiseRecord::from_increments(NoiseKind::Poisson, 2.5e-4, 3, incs).unwrap();
            prop_assert_eq!(NoiseRecord::parse_text(&record.to_text()).unwrap(), record);
        }
    }
}
