//! Shared flag groups and the sweep syntax.

use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, ValueEnum};

use crate::montecarlo::{SimConfig, DEFAULT_STEP};
use crate::params::ModelKind;

/// Largest number of values a single sweep may expand to.
const MAX_SWEEP: usize = 1_000_000;

/// A flag value: a number, `start:stop:step` (inclusive of `stop`), or a
/// comma-separated list of either.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep(pub Vec<f64>);

impl Sweep {
    pub fn single(v: f64) -> Self {
        Sweep(vec![v])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Rounds `a + i * step` artefacts such as `0.15000000000000002` back to the
/// intended decimal.
fn tidy(v: f64) -> f64 {
    format!("{v:.11e}").parse().unwrap_or(v)
}

fn parse_number(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("`{s}` is not a number"))?;
    if !v.is_finite() {
        return Err(format!("`{s}` is not finite"));
    }
    Ok(v)
}

fn parse_range(s: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(format!("`{s}`: a sweep is start:stop:step"));
    }
    let (a, b, step) = (
        parse_number(parts[0])?,
        parse_number(parts[1])?,
        parse_number(parts[2])?,
    );
    if !(step > 0.0) {
        return Err(format!("`{s}`: step must be > 0"));
    }
    if b < a {
        return Err(format!("`{s}`: stop must be >= start"));
    }
    let count = ((b - a) / step * (1.0 + 1e-12) + 1e-9).floor() as usize + 1;
    if count > MAX_SWEEP {
        return Err(format!("`{s}` expands to more than {MAX_SWEEP} values"));
    }
    Ok((0..count).map(|i| tidy(a + i as f64 * step)).collect())
}

impl FromStr for Sweep {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let mut out = Vec::new();
        for item in s.split(',') {
            if item.contains(':') {
                out.extend(parse_range(item)?);
            } else {
                out.push(parse_number(item)?);
            }
        }
        Ok(Sweep(out))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Poisson,
    Drift,
    Bm,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Poisson => ModelKind::Poisson,
            ModelArg::Drift => ModelKind::PoissonDrift,
            ModelArg::Bm => ModelKind::BmJump,
        }
    }
}

/// Process parameters. Every value may be a sweep.
#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Model; inferred from `--mu` and `--sigma` when omitted.
    #[arg(long, value_enum)]
    pub model: Option<ModelArg>,
    /// Starting level.
    #[arg(long, allow_hyphen_values = true)]
    pub x: Sweep,
    #[arg(long, default_value = "0", allow_hyphen_values = true)]
    pub mu: Sweep,
    #[arg(long, default_value = "0", allow_hyphen_values = true)]
    pub sigma: Sweep,
    /// Jump intensity.
    #[arg(long, default_value = "1", allow_hyphen_values = true)]
    pub theta: Sweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// Significant digits for CSV numbers: an integer in 1..=17, or `full` for
/// the shortest representation that round-trips.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Digits {
    Fixed(usize),
    Full,
}

impl FromStr for Digits {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "full" {
            return Ok(Digits::Full);
        }
        match s.parse::<usize>() {
            Ok(d) if (1..=17).contains(&d) => Ok(Digits::Fixed(d)),
            _ => Err(format!("`{s}`: digits must be 1..=17 or `full`")),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    #[arg(long = "out", value_enum, default_value = "csv")]
    pub format: Format,
    /// Write to a file instead of standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Significant digits in CSV output.
    #[arg(long, default_value = "9")]
    pub digits: Digits,
}

/// Monte Carlo settings.
#[derive(Debug, Clone, Args)]
pub struct SimArgs {
    #[arg(long, default_value_t = 1_000_000)]
    pub paths: u64,
    #[arg(long, env = "FPA_DEFAULT_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Euler step of the BM sampler, or grid step of the drift area solver.
    #[arg(long, default_value_t = DEFAULT_STEP)]
    pub h: f64,
    /// Brownian-bridge crossing correction in the BM sampler.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub bridge: bool,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    pub workers: Option<usize>,
}

impl SimArgs {
    pub fn config(&self) -> SimConfig {
        let base = SimConfig::new(self.paths, self.seed).with_step(self.h, self.bridge);
        match self.workers {
            Some(w) => base.with_workers(w),
            None => base,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_forms() {
        assert_eq!("2".parse::<Sweep>().unwrap().0, vec![2.0]);
        assert_eq!("-1".parse::<Sweep>().unwrap().0, vec![-1.0]);
        assert_eq!(
            "0:1:0.25".parse::<Sweep>().unwrap().0,
            vec![0.0, 0.25, 0.5, 0.75, 1.0]
        );
        assert_eq!("1,2:3:1".parse::<Sweep>().unwrap().0, vec![1.0, 2.0, 3.0]);
        let s = "0:5:0.1".parse::<Sweep>().unwrap().0;
        assert_eq!(s.len(), 51);
        assert_eq!(s[3], 0.3);
        assert_eq!(*s.last().unwrap(), 5.0);
    }

    #[test]
    fn bad_sweeps() {
        for s in ["", "a", "1:2", "0:1:0", "2:1:0.5", "0:1:-1", "nan", "0:1e9:1e-3"] {
            assert!(s.parse::<Sweep>().is_err(), "{s}");
        }
    }

    #[test]
    fn digits() {
        assert_eq!("full".parse::<Digits>().unwrap(), Digits::Full);
        assert_eq!("9".parse::<Digits>().unwrap(), Digits::Fixed(9));
        assert!("0".parse::<Digits>().is_err());
        assert!("18".parse::<Digits>().is_err());
    }
}
