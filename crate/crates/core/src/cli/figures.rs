//! Curve data for the nine figures.

use super::args::Sweep;
use super::commands::Outcome;
use super::record::{ResultRecord, Source};
use crate::error::Result;
use crate::joint_moments::{joint_moment, MomentOrder};
use crate::montecarlo::{self, path_rng, trajectory, PathVar, SimConfig};
use crate::params::ProcessParams;
use crate::{poisson, steps};

pub const FIGURES: std::ops::RangeInclusive<u8> = 1..=9;

/// Per-invocation settings; `lambda` overrides the default transform grid.
#[derive(Debug, Clone)]
pub struct FigureSettings {
    pub lambda: Option<Sweep>,
    pub config: SimConfig,
    /// Step of the BM paths in figure 1; the drift area grid of figure 8
    /// always uses 0.1.
    pub path_step: f64,
}

fn default_lambda() -> Sweep {
    "0:5:0.05".parse().expect("static sweep")
}

pub fn figure(number: u8, s: &FigureSettings) -> Result<Outcome> {
    let lambdas = s.lambda.clone().unwrap_or_else(default_lambda);
    let l = lambdas.values();
    let records = match number {
        1 => sample_paths(s)?,
        2 => lt_curves(
            &poisson_levels()?,
            l,
            |p, lam| poisson::lt_tau(p.x, p.theta, lam),
            "lt-tau",
        )?,
        3 => lt_curves(
            &poisson_levels()?,
            l,
            |p, lam| poisson::lt_area(p.x, p.theta, lam),
            "lt-area",
        )?,
        4 => densities(s)?,
        5 => cross_moment_curve()?,
        6 => joint_surface(s)?,
        7 => {
            let ps = [0.5, 1.8, 2.5]
                .map(|x| ProcessParams::drift(x, 1.0, 1.0))
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
            lt_curves(
                &ps,
                l,
                |p, lam| steps::drift_lt_tau(p.x, p.mu, p.theta, lam),
                "lt-tau",
            )?
        }
        8 => {
            let p = ProcessParams::drift(1.0, 1.0, 1.0)?;
            let mut out = Vec::new();
            for &lam in l {
                let v = steps::drift_lt_area(p.x, p.mu, p.theta, lam, 0.1)?.endpoint();
                out.push(record(&p, "lt-area", v, Source::Grid).inputs(Some(lam), None));
            }
            out
        }
        9 => {
            let ps = [0.5, 1.8, 2.5]
                .map(|x| ProcessParams::bm(x, 1.0, 1.0, 1.0))
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
            lt_curves(
                &ps,
                l,
                |p, lam| steps::bm_lt_tau(p.x, p.mu, p.sigma, p.theta, lam),
                "lt-tau",
            )?
        }
        n => {
            return Err(crate::error::FpaError::invalid(format!(
                "no figure {n}; figures are 1..=9"
            )))
        }
    };
    Ok(Outcome::from_records(records))
}

fn record(p: &ProcessParams, quantity: &str, value: f64, source: Source) -> ResultRecord {
    ResultRecord::new(p.kind(), p, quantity, value, source)
}

fn poisson_levels() -> Result<Vec<ProcessParams>> {
    [1.0, 2.0, 3.0, 1.5, 2.5, 3.5]
        .into_iter()
        .map(|x| ProcessParams::poisson(x, 1.0))
        .collect()
}

fn lt_curves(
    params: &[ProcessParams],
    lambdas: &[f64],
    f: impl Fn(&ProcessParams, f64) -> Result<f64>,
    quantity: &str,
) -> Result<Vec<ResultRecord>> {
    let mut out = Vec::with_capacity(params.len() * lambdas.len());
    for p in params {
        for &lam in lambdas {
            out.push(record(p, quantity, f(p, lam)?, Source::Analytic).inputs(Some(lam), None));
        }
    }
    Ok(out)
}

/// One path per model: `input1` is time, `value` the level.
fn sample_paths(s: &FigureSettings) -> Result<Vec<ResultRecord>> {
    let models = [
        ProcessParams::poisson(10.2, 1.0)?,
        ProcessParams::drift(10.0, 1.0, 1.0)?,
        ProcessParams::bm(10.0, 1.0, 1.0, 1.0)?,
    ];
    let mut out = Vec::new();
    for (i, p) in models.iter().enumerate() {
        let mut rng = path_rng(s.config.seed, i as u64);
        for (t, level) in trajectory(p.x, p.mu, p.sigma, p.theta, s.path_step, 1e4, &mut rng) {
            out.push(record(p, "path", level, Source::Simulation).inputs(Some(t), None));
        }
    }
    Ok(out)
}

/// Analytic densities of `tau(2)` and `A(2)` on `(0, 10]` with simulated
/// histograms over the same range.
fn densities(s: &FigureSettings) -> Result<Vec<ResultRecord>> {
    let p = ProcessParams::poisson(2.0, 1.0)?;
    let mut out = Vec::new();
    for (name, var) in [("tau-density", PathVar::Tau), ("area-density", PathVar::Area)] {
        for i in 1..=200 {
            let v = i as f64 * 0.05;
            let d = match var {
                PathVar::Tau => poisson::tau_density(p.x, p.theta, v)?,
                PathVar::Area => poisson::area_density(p.x, p.theta, v)?,
            };
            out.push(record(&p, name, d, Source::Analytic).inputs(Some(v), None));
        }
        for b in montecarlo::histogram(&p, var, 0.0, 10.0, 40, &s.config)? {
            out.push(
                record(&p, name, b.density, Source::Simulation)
                    .inputs(Some(b.lo), Some(b.hi))
                    .sampled(b.stderr, s.config.paths, s.config.seed),
            );
        }
    }
    Ok(out)
}

/// `V(x) = E[tau A]` on `[0, 10]`.
fn cross_moment_curve() -> Result<Vec<ResultRecord>> {
    let xs: Sweep = "0:10:0.05".parse().expect("static sweep");
    xs.values()
        .iter()
        .map(|&x| {
            let p = ProcessParams::poisson(x, 1.0)?;
            Ok(record(
                &p,
                "cross-moment",
                joint_moment(MomentOrder::new(1, 1), x, 1.0)?,
                Source::Analytic,
            ))
        })
        .collect()
}

fn joint_surface(s: &FigureSettings) -> Result<Vec<ResultRecord>> {
    let grid = s
        .lambda
        .clone()
        .unwrap_or_else(|| "0:5:0.25".parse().expect("static sweep"));
    let p = ProcessParams::poisson(1.0, 1.0)?;
    let mut out = Vec::new();
    for &l1 in grid.values() {
        for &l2 in grid.values() {
            let v = poisson::joint_lt(p.x, p.theta, l1, l2)?;
            out.push(record(&p, "joint-lt", v, Source::Analytic).inputs(Some(l1), Some(l2)));
        }
    }
    Ok(out)
}
