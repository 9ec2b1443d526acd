//! Method-of-steps solutions of the delay equations for the drifted models.
//!
//! On `(j, j + 1]` the transform `M` solves a constant-coefficient ODE whose
//! forcing is the already known piece on `(j - 1, j]`:
//!
//! * drift: `mu M' + (theta + lambda) M = theta M(x - 1)`
//! * BM:    `sigma^2/2 M'' - mu M' - (theta + lambda) M = -theta M(x - 1)`
//!
//! Each piece is a particular solution plus the decaying homogeneous mode,
//! its constant fixed by `M(0) = 1` and value continuity at the knots.

mod area_grid;
mod audit;

pub use area_grid::{drift_area_mean, drift_lt_area, GridLt, DEFAULT_AREA_STEP, MAX_AREA_STEP};
pub use audit::{audit_paper_forms, printed, AuditEntry, AuditReport};

use std::collections::HashMap;
use std::sync::{Arc, OnceLock};

use parking_lot::RwLock;
use serde::Serialize;

use crate::error::{FpaError, Result};
use crate::expoly::{ExpPoly, LinearOperator, PiecewiseExpPoly};
use crate::params::{check_lambda, check_theta, ModelKind};

/// Sample points per piece for the residual report.
const RESIDUAL_SAMPLES: usize = 101;
/// Cached solutions are dropped wholesale past this many entries.
const CACHE_LIMIT: usize = 4096;

/// A method-of-steps transform for one `(model, mu, sigma, theta, lambda)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtSolution {
    pub model: ModelKind,
    pub mu: f64,
    pub sigma: f64,
    pub theta: f64,
    pub lambda: f64,
    pub solution: PiecewiseExpPoly,
    /// Sup of `|L M_j - forcing_j|` over each piece.
    pub residuals: Vec<f64>,
}

impl LtSolution {
    pub fn eval(&self, x: f64) -> Result<f64> {
        self.solution.eval(x)
    }

    pub fn pieces(&self) -> usize {
        self.solution.pieces().len()
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_c0_mismatch(&self) -> f64 {
        self.solution.c0_mismatches().into_iter().fold(0.0, f64::max)
    }

    /// Derivative jumps at interior knots; nonzero for the BM model.
    pub fn c1_mismatches(&self) -> Vec<f64> {
        self.solution.c1_mismatches()
    }
}

/// Per-piece ODE data: operator, forcing gain and decaying root.
#[derive(Debug, Clone, Copy)]
struct DelayOde {
    op: LinearOperator,
    gain: f64,
    root: f64,
}

impl DelayOde {
    fn new(model: ModelKind, mu: f64, sigma: f64, theta: f64, lambda: f64) -> Result<Self> {
        let rate = theta + lambda;
        if !(rate > 0.0) {
            return Err(FpaError::invalid("theta + lambda must be positive"));
        }
        match model {
            ModelKind::PoissonDrift => Ok(DelayOde {
                op: LinearOperator::new(0.0, mu, rate)?,
                gain: theta,
                root: -rate / mu,
            }),
            ModelKind::BmJump => {
                let s2 = sigma * sigma;
                let disc = (mu * mu + 2.0 * s2 * rate).sqrt();
                // (mu - disc) / s2 without cancellation
                let root = -2.0 * rate / (mu + disc);
                Ok(DelayOde {
                    op: LinearOperator::new(0.5 * s2, -mu, -rate)?,
                    gain: -theta,
                    root,
                })
            }
            ModelKind::Poisson => Err(FpaError::invalid(
                "the pure-jump model has closed forms; use the poisson module",
            )),
        }
    }

    fn extend(&self, pieces: &mut Vec<ExpPoly>, residuals: &mut Vec<f64>, target: usize) -> Result<()> {
        while pieces.len() < target {
            let (forcing, start) = match pieces.last() {
                None => (ExpPoly::constant(self.gain), 1.0),
                Some(prev) => (prev * self.gain, prev.eval(1.0)),
            };
            let part = self.op.particular(&forcing)?;
            let c = start - part.eval(0.0);
            let piece = part + ExpPoly::term(c, 0, self.root);
            residuals.push(self.op.residual_sup(&piece, &forcing, 0.0, 1.0, RESIDUAL_SAMPLES));
            pieces.push(piece);
        }
        Ok(())
    }
}

fn pieces_for(x: f64) -> usize {
    if x <= 0.0 {
        0
    } else {
        x.ceil() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct SolveKey {
    model: ModelKind,
    mu: u64,
    sigma: u64,
    theta: u64,
    lambda: u64,
}

/// Memo of [`LtSolution`]s. Concurrent inserts are idempotent: the entry with
/// more pieces wins, and pieces are a deterministic function of the key.
#[derive(Debug, Default)]
pub struct StepsCache {
    map: RwLock<HashMap<SolveKey, Arc<LtSolution>>>,
}

impl StepsCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn global() -> &'static StepsCache {
        static CACHE: OnceLock<StepsCache> = OnceLock::new();
        CACHE.get_or_init(StepsCache::new)
    }

    pub fn len(&self) -> usize {
        self.map.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Solution covering `(0, x]`. `lambda > -theta` is accepted so that
    /// means can be taken by symmetric differences at zero.
    pub fn solve(
        &self,
        model: ModelKind,
        mu: f64,
        sigma: f64,
        theta: f64,
        lambda: f64,
        x: f64,
    ) -> Result<Arc<LtSolution>> {
        let target = pieces_for(x);
        let key = SolveKey {
            model,
            mu: mu.to_bits(),
            sigma: sigma.to_bits(),
            theta: theta.to_bits(),
            lambda: lambda.to_bits(),
        };
        let existing = self.map.read().get(&key).cloned();
        if let Some(sol) = &existing {
            if sol.pieces() >= target {
                return Ok(sol.clone());
            }
        }
        let ode = DelayOde::new(model, mu, sigma, theta, lambda)?;
        let (mut pieces, mut residuals) = match existing {
            Some(sol) => (sol.solution.pieces().to_vec(), sol.residuals.clone()),
            None => (Vec::new(), Vec::new()),
        };
        ode.extend(&mut pieces, &mut residuals, target.max(1))?;
        let sol = Arc::new(LtSolution {
            model,
            mu,
            sigma,
            theta,
            lambda,
            solution: PiecewiseExpPoly::new(pieces, 1.0),
            residuals,
        });
        let mut map = self.map.write();
        if map.len() >= CACHE_LIMIT {
            map.clear();
        }
        let entry = map.entry(key).or_insert_with(|| sol.clone());
        if entry.pieces() < sol.pieces() {
            *entry = sol.clone();
        }
        Ok(sol)
    }
}

fn check_drift(mu: f64, theta: f64) -> Result<()> {
    check_theta(theta)?;
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(FpaError::invalid(format!("drift model needs mu > 0, got {mu}")));
    }
    Ok(())
}

fn check_bm(mu: f64, sigma: f64, theta: f64) -> Result<()> {
    check_theta(theta)?;
    if !(mu >= 0.0) || !mu.is_finite() {
        return Err(FpaError::invalid(format!("mu must be >= 0, got {mu}")));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(FpaError::invalid(format!(
            "BM model needs sigma > 0, got {sigma}"
        )));
    }
    Ok(())
}

fn check_x(x: f64) -> Result<()> {
    if !x.is_finite() {
        return Err(FpaError::invalid(format!("x must be finite, got {x}")));
    }
    Ok(())
}

/// Full drift solution on `(0, x]` with its residual report.
pub fn drift_lt_solution(x: f64, mu: f64, theta: f64, lambda: f64) -> Result<Arc<LtSolution>> {
    check_x(x)?;
    check_drift(mu, theta)?;
    check_lambda("lambda", lambda)?;
    StepsCache::global().solve(ModelKind::PoissonDrift, mu, 0.0, theta, lambda, x)
}

/// `E[exp(-lambda tau(x))]` for `X(t) = x - mu t - N_t`.
pub fn drift_lt_tau(x: f64, mu: f64, theta: f64, lambda: f64) -> Result<f64> {
    if x <= 0.0 {
        check_drift(mu, theta)?;
        check_lambda("lambda", lambda)?;
        return Ok(1.0);
    }
    drift_lt_solution(x, mu, theta, lambda)?.eval(x)
}

/// Full BM solution on `(0, x]` with its residual report.
pub fn bm_lt_solution(x: f64, mu: f64, sigma: f64, theta: f64, lambda: f64) -> Result<Arc<LtSolution>> {
    check_x(x)?;
    check_bm(mu, sigma, theta)?;
    check_lambda("lambda", lambda)?;
    StepsCache::global().solve(ModelKind::BmJump, mu, sigma, theta, lambda, x)
}

/// `E[exp(-lambda tau(x))]` for `X(t) = x - mu t + sigma B_t - N_t`, built
/// piecewise with the growing mode dropped on every interval.
pub fn bm_lt_tau(x: f64, mu: f64, sigma: f64, theta: f64, lambda: f64) -> Result<f64> {
    if x <= 0.0 {
        check_bm(mu, sigma, theta)?;
        check_lambda("lambda", lambda)?;
        return Ok(1.0);
    }
    bm_lt_solution(x, mu, sigma, theta, lambda)?.eval(x)
}

/// `x / (mu + theta) <= E[tau] < (x + 1) / (mu + theta)`, from optional
/// stopping of `X(t) + (mu + theta) t` and `-1 < X(tau) <= 0`.
pub fn wald_bounds(x: f64, mu: f64, theta: f64) -> Result<(f64, f64)> {
    check_x(x)?;
    check_theta(theta)?;
    if !(mu >= 0.0) || !mu.is_finite() {
        return Err(FpaError::invalid(format!("mu must be >= 0, got {mu}")));
    }
    let rate = mu + theta;
    Ok((x.max(0.0) / rate, (x.max(0.0) + 1.0) / rate))
}

/// Derivative at zero by Ridders' extrapolation of central differences.
/// Returns the estimate and its error estimate.
pub(crate) fn ridders_derivative<F>(f: F, h0: f64) -> Result<(f64, f64)>
where
    F: Fn(f64) -> Result<f64>,
{
    const CON: f64 = 1.4;
    const CON2: f64 = CON * CON;
    const NTAB: usize = 10;
    const SAFE: f64 = 2.0;
    let mut tab = [[0.0f64; NTAB]; NTAB];
    let mut h = h0;
    tab[0][0] = (f(h)? - f(-h)?) / (2.0 * h);
    let mut best = tab[0][0];
    let mut err = f64::INFINITY;
    for i in 1..NTAB {
        h /= CON;
        tab[0][i] = (f(h)? - f(-h)?) / (2.0 * h);
        let mut fac = CON2;
        for j in 1..=i {
            tab[j][i] = (tab[j - 1][i] * fac - tab[j - 1][i - 1]) / (fac - 1.0);
            fac *= CON2;
            let e = (tab[j][i] - tab[j - 1][i])
                .abs()
                .max((tab[j][i] - tab[j - 1][i - 1]).abs());
            if e <= err {
                err = e;
                best = tab[j][i];
            }
        }
        if (tab[i][i] - tab[i - 1][i - 1]).abs() >= SAFE * err {
            break;
        }
    }
    Ok((best, err))
}

fn checked_mean(value: f64, x: f64, mu: f64, theta: f64) -> Result<f64> {
    let (lower, upper) = wald_bounds(x, mu, theta)?;
    let slack = 1e-10 * upper;
    if value < lower - slack || value >= upper + slack {
        return Err(FpaError::BoundViolation { value, lower, upper });
    }
    Ok(value)
}

fn mean_from_transform(model: ModelKind, x: f64, mu: f64, sigma: f64, theta: f64) -> Result<f64> {
    let cache = StepsCache::global();
    let sol_at = |lambda: f64| cache.solve(model, mu, sigma, theta, lambda, x)?.eval(x);
    let (d, _) = ridders_derivative(sol_at, 0.25 * theta)?;
    Ok(-d)
}

/// `E[tau(x)] = -dM/dlambda` at zero for the drift model, checked against
/// [`wald_bounds`]; a violation is reported as an internal failure.
pub fn drift_tau_mean(x: f64, mu: f64, theta: f64) -> Result<f64> {
    check_x(x)?;
    check_drift(mu, theta)?;
    if x <= 0.0 {
        return Ok(0.0);
    }
    checked_mean(
        mean_from_transform(ModelKind::PoissonDrift, x, mu, 0.0, theta)?,
        x,
        mu,
        theta,
    )
}

/// `E[tau(x)]` for the BM model from the piecewise transform. Not checked
/// against [`wald_bounds`]: the construction with the growing mode dropped
/// can fall below the lower bound (e.g. `mu = 0.5`, `sigma = theta = 1`, `x`
/// near 1) and the audit reports it.
pub fn bm_tau_mean(x: f64, mu: f64, sigma: f64, theta: f64) -> Result<f64> {
    check_x(x)?;
    check_bm(mu, sigma, theta)?;
    if x <= 0.0 {
        return Ok(0.0);
    }
    mean_from_transform(ModelKind::BmJump, x, mu, sigma, theta)
}

/// `(1 - exp((mu - sqrt(mu^2 + 2 sigma^2 theta)) x / sigma^2)) / theta` on `(0, 1]`.
pub fn bm_tau_mean_first_interval(x: f64, mu: f64, sigma: f64, theta: f64) -> Result<f64> {
    check_bm(mu, sigma, theta)?;
    if !(x > 0.0 && x <= 1.0) {
        return Err(FpaError::invalid(format!(
            "first-interval mean needs 0 < x <= 1, got {x}"
        )));
    }
    let s2 = sigma * sigma;
    let root = -2.0 * theta / (mu + (mu * mu + 2.0 * s2 * theta).sqrt());
    Ok(-(root * x).exp_m1() / theta)
}

/// Serializable residual summary for reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    pub model: ModelKind,
    pub lambda: f64,
    pub pieces: usize,
    pub max_residual: f64,
    pub max_c0_mismatch: f64,
    pub max_c1_mismatch: f64,
}

impl From<&LtSolution> for ResidualReport {
    fn from(s: &LtSolution) -> Self {
        ResidualReport {
            model: s.model,
            lambda: s.lambda,
            pieces: s.pieces(),
            max_residual: s.max_residual(),
            max_c0_mismatch: s.max_c0_mismatch(),
            max_c1_mismatch: s.c1_mismatches().into_iter().fold(0.0, f64::max),
        }
    }
}
