//! Independent check of the printed piecewise formulas for the drift and BM
//! transforms: ODE residual against the printed previous branch, value
//! continuity at the left knot, and deviation from the method-of-steps solver.

use serde::Serialize;

use crate::error::Result;

use super::{bm_tau_mean, drift_tau_mean, wald_bounds, StepsCache};
use crate::params::ModelKind;

/// Residual and knot thresholds for calling a printed form consistent.
const ODE_TOL: f64 = 1e-6;
const KNOT_TOL: f64 = 1e-8;
const SAMPLES: usize = 21;

/// The formulas exactly as printed, in global `x`.
pub mod printed {
    fn k(mu: f64, theta: f64, lambda: f64) -> f64 {
        (theta + lambda) / mu
    }

    pub fn drift_lt_1(x: f64, mu: f64, theta: f64, lambda: f64) -> f64 {
        let r = theta + lambda;
        lambda / r * (-k(mu, theta, lambda) * x).exp() + theta / r
    }

    pub fn drift_lt_2(x: f64, mu: f64, theta: f64, lambda: f64) -> f64 {
        let r = theta + lambda;
        let k = k(mu, theta, lambda);
        lambda * (lambda + 2.0 * theta) / (r * r) * (-k * x).exp()
            + theta * lambda / (mu * r) * x * (-k * (x - 1.0)).exp()
            + theta * theta / (r * r)
    }

    pub fn drift_lt_3(x: f64, mu: f64, theta: f64, lambda: f64) -> f64 {
        let r = theta + lambda;
        let k = k(mu, theta, lambda);
        let t3 = (theta / r).powi(3);
        (1.0 - t3) * (-k * x).exp()
            + theta * lambda * (lambda + 2.0 * theta) / (mu * mu * r * r) * x * (-k * (x - 1.0)).exp()
            + theta * theta * lambda / (2.0 * mu * mu * r) * (x * x - 2.0 * x) * (-k * (x - 2.0)).exp()
            + t3
    }

    pub fn drift_mean_1(x: f64, mu: f64, theta: f64) -> f64 {
        (1.0 - (-theta * x / mu).exp()) / theta
    }

    pub fn drift_mean_2(x: f64, mu: f64, theta: f64) -> f64 {
        2.0 / theta - 2.0 / theta * (-theta * x / mu).exp() + x / mu * (-theta * (x - 1.0) / mu).exp()
    }

    /// The printed first-interval exponent uses `sqrt(mu^2 + 2 (lambda + theta))`.
    pub fn bm_lt_1(x: f64, mu: f64, sigma: f64, theta: f64, lambda: f64) -> f64 {
        let s2 = sigma * sigma;
        let r = theta + lambda;
        let e = mu / s2 - (mu * mu + 2.0 * r).sqrt() / s2;
        lambda / r * (e * x).exp() + theta / r
    }

    fn bm_exponent(mu: f64, sigma: f64, r: f64) -> (f64, f64) {
        let s2 = sigma * sigma;
        let disc = (mu * mu + 2.0 * s2 * r).sqrt();
        ((mu - disc) / s2, disc)
    }

    pub fn bm_lt_2(x: f64, mu: f64, sigma: f64, theta: f64, lambda: f64) -> f64 {
        let s2 = sigma * sigma;
        let r = theta + lambda;
        let (e, disc) = bm_exponent(mu, sigma, r);
        lambda * (lambda + 2.0 * theta) / (s2 * r) * (e * x).exp()
            + s2 * s2 * lambda * theta / (r * disc) * x * (e * (x - 1.0)).exp()
            + (theta / r).powi(2)
    }

    /// Read with the exponential multiplying the whole bracketed quadratic.
    pub fn bm_lt_3(x: f64, mu: f64, sigma: f64, theta: f64, lambda: f64) -> f64 {
        let s2 = sigma * sigma;
        let r = theta + lambda;
        let (e, disc) = bm_exponent(mu, sigma, r);
        let plain = (mu * mu + 2.0 * r).sqrt();
        (1.0 - (theta / r).powi(3)) * (e * x).exp()
            + theta * theta * lambda * (lambda + 2.0 * theta) / (s2 * s2 * r * r * plain)
                * x
                * (e * (x - 1.0)).exp()
            + theta * theta * lambda / (2.0 * r * disc * disc)
                * (x * x + 2.0 * x * (s2 / (2.0 * plain) - 1.0))
                * (e * (x - 2.0)).exp()
            + (theta / r).powi(3)
    }

    /// Printed with `sqrt(mu^2 + 2 theta)` inside the exponent.
    pub fn bm_mean_1(x: f64, mu: f64, sigma: f64, theta: f64) -> f64 {
        let s2 = sigma * sigma;
        (1.0 - ((mu - (mu * mu + 2.0 * theta).sqrt()) * x / s2).exp()) / theta
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditEntry {
    pub form: String,
    pub lo: f64,
    pub hi: f64,
    /// Sup of the ODE residual against the printed previous branch.
    pub ode_residual: Option<f64>,
    /// `|printed(lo+) - previous(lo-)|`.
    pub knot_mismatch: Option<f64>,
    /// Sup of `|printed - solver|` over interior samples.
    pub solver_deviation: f64,
    /// Whether the printed mean respects the Wald bounds at every sample.
    pub wald_ok: Option<bool>,
    pub consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub mu: f64,
    pub sigma: f64,
    pub theta: f64,
    pub lambda: f64,
    pub entries: Vec<AuditEntry>,
}

impl AuditReport {
    pub fn discrepancies(&self) -> impl Iterator<Item = &AuditEntry> {
        self.entries.iter().filter(|e| !e.consistent)
    }
}

fn interior(lo: f64, hi: f64) -> impl Iterator<Item = f64> {
    (1..=SAMPLES).map(move |i| lo + (hi - lo) * i as f64 / SAMPLES as f64)
}

/// First-order residual `mu f' + (theta + lambda) f - theta prev(x - 1)`.
fn drift_residual(
    f: &dyn Fn(f64) -> f64,
    prev: &dyn Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    mu: f64,
    theta: f64,
    lambda: f64,
) -> f64 {
    let d = 1e-5;
    interior(lo + 2.0 * d, hi - 2.0 * d)
        .map(|x| {
            let fp = (f(x + d) - f(x - d)) / (2.0 * d);
            (mu * fp + (theta + lambda) * f(x) - theta * prev(x - 1.0)).abs()
        })
        .fold(0.0, f64::max)
}

#[allow(clippy::too_many_arguments)]
fn bm_residual(
    f: &dyn Fn(f64) -> f64,
    prev: &dyn Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    mu: f64,
    sigma: f64,
    theta: f64,
    lambda: f64,
) -> f64 {
    let d = 1e-4;
    interior(lo + 2.0 * d, hi - 2.0 * d)
        .map(|x| {
            let fp = (f(x + d) - f(x - d)) / (2.0 * d);
            let fpp = (f(x + d) - 2.0 * f(x) + f(x - d)) / (d * d);
            (0.5 * sigma * sigma * fpp - mu * fp - (theta + lambda) * f(x) + theta * prev(x - 1.0)).abs()
        })
        .fold(0.0, f64::max)
}

fn deviation(f: &dyn Fn(f64) -> f64, g: &dyn Fn(f64) -> Result<f64>, lo: f64, hi: f64) -> Result<f64> {
    let mut worst = 0.0f64;
    for x in interior(lo, hi) {
        worst = worst.max((f(x) - g(x)?).abs());
    }
    Ok(worst)
}

fn lt_entry(form: &str, lo: f64, ode_residual: f64, knot_mismatch: f64, solver_deviation: f64) -> AuditEntry {
    AuditEntry {
        form: form.to_string(),
        lo,
        hi: lo + 1.0,
        ode_residual: Some(ode_residual),
        knot_mismatch: Some(knot_mismatch),
        solver_deviation,
        wald_ok: None,
        consistent: ode_residual <= ODE_TOL && knot_mismatch <= KNOT_TOL && solver_deviation <= KNOT_TOL,
    }
}

fn mean_entry(
    form: &str,
    lo: f64,
    printed: &dyn Fn(f64) -> f64,
    solver: &dyn Fn(f64) -> Result<f64>,
    mu: f64,
    theta: f64,
) -> Result<AuditEntry> {
    let mut wald = true;
    for x in interior(lo, lo + 1.0) {
        let (l, u) = wald_bounds(x, mu, theta)?;
        let v = printed(x);
        wald &= v >= l && v < u;
    }
    let solver_deviation = deviation(printed, solver, lo, lo + 1.0)?;
    Ok(AuditEntry {
        form: form.to_string(),
        lo,
        hi: lo + 1.0,
        ode_residual: None,
        knot_mismatch: None,
        solver_deviation,
        wald_ok: Some(wald),
        consistent: wald && solver_deviation <= 1e-8,
    })
}

/// Name, printed branch and the branch it continues.
type Form<'a> = (&'a str, &'a dyn Fn(f64) -> f64, &'a dyn Fn(f64) -> f64);

/// Audit every printed drift and BM branch at the given parameters; `mu` and
/// `sigma` must be positive.
pub fn audit_paper_forms(mu: f64, sigma: f64, theta: f64, lambda: f64) -> Result<AuditReport> {
    use printed::*;
    super::check_drift(mu, theta)?;
    super::check_bm(mu, sigma, theta)?;
    crate::params::check_lambda("lambda", lambda)?;
    let cache = StepsCache::global();
    let drift = cache.solve(ModelKind::PoissonDrift, mu, 0.0, theta, lambda, 3.0)?;
    let bm = cache.solve(ModelKind::BmJump, mu, sigma, theta, lambda, 3.0)?;
    let (m, s, t, l) = (mu, sigma, theta, lambda);

    let one = |_: f64| 1.0;
    let d1 = move |x: f64| drift_lt_1(x, m, t, l);
    let d2 = move |x: f64| drift_lt_2(x, m, t, l);
    let d3 = move |x: f64| drift_lt_3(x, m, t, l);
    let drift_eval = |x: f64| drift.eval(x);
    let b1 = move |x: f64| bm_lt_1(x, m, s, t, l);
    let b2 = move |x: f64| bm_lt_2(x, m, s, t, l);
    let b3 = move |x: f64| bm_lt_3(x, m, s, t, l);
    let bm_eval = |x: f64| bm.eval(x);

    let mut entries = Vec::new();
    let drift_forms: [Form; 3] = [
        ("drift lt (0,1]", &d1, &one),
        ("drift lt (1,2]", &d2, &d1),
        ("drift lt (2,3]", &d3, &d2),
    ];
    for (j, (name, f, prev)) in drift_forms.into_iter().enumerate() {
        let lo = j as f64;
        let res = drift_residual(f, prev, lo, lo + 1.0, m, t, l);
        let knot = (f(lo) - prev(lo)).abs();
        let dev = deviation(f, &drift_eval, lo, lo + 1.0)?;
        entries.push(lt_entry(name, lo, res, knot, dev));
    }
    let bm_forms: [Form; 3] = [
        ("bm lt (0,1]", &b1, &one),
        ("bm lt (1,2]", &b2, &b1),
        ("bm lt (2,3]", &b3, &b2),
    ];
    for (j, (name, f, prev)) in bm_forms.into_iter().enumerate() {
        let lo = j as f64;
        let res = bm_residual(f, prev, lo, lo + 1.0, m, s, t, l);
        let knot = (f(lo) - prev(lo)).abs();
        let dev = deviation(f, &bm_eval, lo, lo + 1.0)?;
        entries.push(lt_entry(name, lo, res, knot, dev));
    }

    let dm1 = move |x: f64| drift_mean_1(x, m, t);
    let dm2 = move |x: f64| drift_mean_2(x, m, t);
    let drift_mean = move |x: f64| drift_tau_mean(x, m, t);
    entries.push(mean_entry("drift mean (0,1]", 0.0, &dm1, &drift_mean, m, t)?);
    entries.push(mean_entry("drift mean (1,2]", 1.0, &dm2, &drift_mean, m, t)?);
    let bmm1 = move |x: f64| bm_mean_1(x, m, s, t);
    let bm_mean = move |x: f64| bm_tau_mean(x, m, s, t);
    entries.push(mean_entry("bm mean (0,1]", 0.0, &bmm1, &bm_mean, m, t)?);

    Ok(AuditReport {
        mu,
        sigma,
        theta,
        lambda,
        entries,
    })
}
