//! Closed forms for the pure-jump process `X(t) = x - N_t`.
//!
//! `tau(x)` is Gamma distributed with shape `x` (integer `x`) or `[x] + 1`
//! (non-integer `x`); `A(x)` is the weighted sum of the holding times with
//! weights `x, x - 1, ..., x - [x]`. Every function returns the outer-condition
//! value (transforms equal to 1, moments equal to 0) for `x <= 0`.

use crate::error::{FpaError, Result};
use crate::params::{check_lambda, check_theta, IntegerClass};

/// Above this many factors the product formulas are summed in log space.
const LOG_SPACE_FACTORS: i64 = 50;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauMoments {
    pub mean: f64,
    pub second: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AreaMoments {
    pub mean: f64,
    pub second: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointStats {
    /// `E[tau A]`
    pub cross: f64,
    pub covariance: f64,
    pub correlation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Integer,
    NonInteger,
}

/// Both branches of a formula evaluated at the same `x`, with the one the
/// classifier selects.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Branches {
    pub integer: f64,
    pub non_integer: f64,
    pub selected: Branch,
}

impl Branches {
    pub fn value(&self) -> f64 {
        match self.selected {
            Branch::Integer => self.integer,
            Branch::NonInteger => self.non_integer,
        }
    }

    /// Size of the jump between the two branches.
    pub fn gap(&self) -> f64 {
        self.non_integer - self.integer
    }
}

/// Base-level audit: the two branch formulas side by side.
///
/// The integer-branch formulas are read as real functions of `x`; the
/// non-integer formulas use `[x] = floor(x)`, or `round(x)` when `x` is
/// classified as an integer. At an integer `x` the non-integer branch is the
/// right limit `x -> x+`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchAudit {
    pub lt_tau: Branches,
    pub tau_mean: Branches,
    pub cross: Branches,
}

pub fn branch_audit(x: f64, theta: f64, lambda: f64) -> Result<BranchAudit> {
    check_theta(theta)?;
    check_lambda("lambda", lambda)?;
    let class = IntegerClass::of(x);
    let fl = class.floor_part as f64;
    let selected = if class.is_integer {
        Branch::Integer
    } else {
        Branch::NonInteger
    };
    let ratio = theta / (theta + lambda);
    Ok(BranchAudit {
        lt_tau: Branches {
            integer: ratio.powf(x),
            non_integer: ratio.powf(fl + 1.0),
            selected,
        },
        tau_mean: Branches {
            integer: x / theta,
            non_integer: (fl + 1.0) / theta,
            selected,
        },
        cross: Branches {
            integer: x * (x + 1.0).powi(2) / (2.0 * theta * theta),
            non_integer: (fl + 1.0) * (fl + 2.0) * (2.0 * x - fl) / (2.0 * theta * theta),
            selected,
        },
    })
}

/// `E[exp(-lambda tau(x))]`.
pub fn lt_tau(x: f64, theta: f64, lambda: f64) -> Result<f64> {
    check_theta(theta)?;
    check_lambda("lambda", lambda)?;
    if x <= 0.0 || lambda == 0.0 {
        return Ok(1.0);
    }
    let class = IntegerClass::of(x);
    let ratio = theta / (theta + lambda);
    Ok(if class.is_integer {
        ratio.powf(x)
    } else {
        ratio.powi((class.floor_part + 1) as i32)
    })
}

/// `E[exp(-lambda A(x))]` in the form
/// `theta^([x]+1) / prod_{k=0}^{[x]} (theta + lambda (x - k))`,
/// which is valid for integer and non-integer `x` alike.
pub fn lt_area(x: f64, theta: f64, lambda: f64) -> Result<f64> {
    check_theta(theta)?;
    check_lambda("lambda", lambda)?;
    if x <= 0.0 || lambda == 0.0 {
        return Ok(1.0);
    }
    let fl = IntegerClass::of(x).floor_part;
    Ok(product_of_ratios(
        fl,
        |k| lambda * (x - k as f64).max(0.0) / theta,
        0,
    ))
}

/// `E[exp(-lambda1 tau(x) - lambda2 A(x))]`.
pub fn joint_lt(x: f64, theta: f64, lambda1: f64, lambda2: f64) -> Result<f64> {
    check_theta(theta)?;
    check_lambda("lambda1", lambda1)?;
    check_lambda("lambda2", lambda2)?;
    if x <= 0.0 || (lambda1 == 0.0 && lambda2 == 0.0) {
        return Ok(1.0);
    }
    if lambda2 == 0.0 {
        return lt_tau(x, theta, lambda1);
    }
    if lambda1 == 0.0 {
        return lt_area(x, theta, lambda2);
    }
    let class = IntegerClass::of(x);
    let fl = class.floor_part;
    Ok(if class.is_integer {
        // prod_{k=1}^{x} theta / (lambda1 + lambda2 k + theta)
        product_of_ratios(fl - 1, |j| (lambda1 + lambda2 * (j + 1) as f64) / theta, 0)
    } else {
        // prod_{k=0}^{[x]} theta / (lambda1 + lambda2 (x - k) + theta)
        product_of_ratios(fl, |k| (lambda1 + lambda2 * (x - k as f64)) / theta, 0)
    })
}

/// `prod_{k=start}^{last} 1 / (1 + excess(k))`, in log space for long products.
fn product_of_ratios(last: i64, excess: impl Fn(i64) -> f64, start: i64) -> f64 {
    if last - start + 1 > LOG_SPACE_FACTORS {
        let log: f64 = (start..=last).map(|k| -excess(k).ln_1p()).sum();
        log.exp()
    } else {
        (start..=last).map(|k| 1.0 / (1.0 + excess(k))).product()
    }
}

pub fn tau_moments(x: f64, theta: f64) -> Result<TauMoments> {
    check_theta(theta)?;
    if x <= 0.0 {
        return Ok(TauMoments {
            mean: 0.0,
            second: 0.0,
            variance: 0.0,
        });
    }
    let class = IntegerClass::of(x);
    let shape = if class.is_integer {
        x
    } else {
        (class.floor_part + 1) as f64
    };
    let t2 = theta * theta;
    Ok(TauMoments {
        mean: shape / theta,
        second: shape * shape / t2 + shape / t2,
        variance: shape / t2,
    })
}

pub fn area_moments(x: f64, theta: f64) -> Result<AreaMoments> {
    check_theta(theta)?;
    if x <= 0.0 {
        return Ok(AreaMoments {
            mean: 0.0,
            second: 0.0,
            variance: 0.0,
        });
    }
    let fl = IntegerClass::of(x).floor_part as f64;
    let t2 = theta * theta;
    let mean = (2.0 * x - fl) * (fl + 1.0) / (2.0 * theta);
    let second =
        (fl + 1.0) / (12.0 * t2) * (12.0 * x * (x - fl) * (fl + 2.0) + fl * (3.0 * fl * fl + 7.0 * fl + 2.0));
    let variance = area_variance(x, fl, theta);
    Ok(AreaMoments {
        mean,
        second,
        variance,
    })
}

fn area_variance(x: f64, fl: f64, theta: f64) -> f64 {
    (fl + 1.0) / (12.0 * theta * theta) * (12.0 * x * (x - fl) + 2.0 * fl * (2.0 * fl + 1.0))
}

/// `E[tau A]`, `Cov(tau, A)` and the correlation coefficient.
///
/// The correlation is undefined for `x <= 0` (both variables vanish), which is
/// reported as `InvalidParams`.
pub fn joint_stats(x: f64, theta: f64) -> Result<JointStats> {
    check_theta(theta)?;
    if x <= 0.0 {
        return Err(FpaError::invalid(format!(
            "correlation of tau and A is undefined for x = {x} <= 0"
        )));
    }
    let class = IntegerClass::of(x);
    let t2 = theta * theta;
    if class.is_integer {
        let cross = x * (x + 1.0).powi(2) / (2.0 * t2);
        let covariance = x * (x + 1.0) / (2.0 * t2);
        let correlation = (3.0 * (x + 1.0) / (2.0 * (2.0 * x + 1.0))).sqrt();
        Ok(JointStats {
            cross,
            covariance,
            correlation,
        })
    } else {
        let fl = class.floor_part as f64;
        let cross = (fl + 1.0) * (fl + 2.0) * (2.0 * x - fl) / (2.0 * t2);
        let covariance = (fl + 1.0) * (2.0 * x - fl) / (2.0 * t2);
        let denom = 12.0 * x * (x - fl) + 2.0 * fl * (2.0 * fl + 1.0);
        let correlation = (3.0 * (2.0 * x - fl).powi(2) / denom).sqrt().min(1.0);
        Ok(JointStats {
            cross,
            covariance,
            correlation,
        })
    }
}

/// `E[A(x) exp(-lambda1 tau(x))]`.
pub fn weighted_area_lt(x: f64, theta: f64, lambda1: f64) -> Result<f64> {
    check_theta(theta)?;
    check_lambda("lambda1", lambda1)?;
    if x <= 0.0 {
        return Ok(0.0);
    }
    let class = IntegerClass::of(x);
    let ratio = theta / (lambda1 + theta);
    Ok(if class.is_integer {
        x * (x + 1.0) / 2.0 * ratio.powf(x) / (lambda1 + theta)
    } else {
        let fl = class.floor_part as f64;
        (fl + 1.0) * (x - fl / 2.0) * ratio.powi(class.floor_part as i32 + 1) / (lambda1 + theta)
    })
}

/// `E[A(x) / tau(x)]`, the mean level of the path over the first-passage
/// window. Independent of `theta`.
pub fn expected_time_average(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(FpaError::invalid(format!(
            "time average A/tau is 0/0 for x = {x} <= 0"
        )));
    }
    let class = IntegerClass::of(x);
    Ok(if class.is_integer {
        (x + 1.0) / 2.0
    } else {
        x - class.floor_part as f64 / 2.0
    })
}

/// Density of `tau(x)` at `t`: Gamma with shape `k` (the number of jumps to
/// cross) and rate `theta`.
pub fn tau_density(x: f64, theta: f64, t: f64) -> Result<f64> {
    check_theta(theta)?;
    if !(x > 0.0) || !x.is_finite() {
        return Err(FpaError::invalid(format!(
            "tau(x) has no density for x = {x} <= 0"
        )));
    }
    if t <= 0.0 {
        return Ok(0.0);
    }
    let k = IntegerClass::of(x).jumps_to_cross();
    let log_fact: f64 = (1..k).map(|i| (i as f64).ln()).sum();
    let log = k as f64 * theta.ln() + (k - 1) as f64 * t.ln() - theta * t - log_fact;
    Ok(log.exp())
}

/// Density of `A(x)` at `a`: hypoexponential with rates `theta / (x - j)`.
/// The alternating sum loses accuracy once `x` exceeds about 20.
pub fn area_density(x: f64, theta: f64, a: f64) -> Result<f64> {
    check_theta(theta)?;
    if !(x > 0.0) || !x.is_finite() {
        return Err(FpaError::invalid(format!("A(x) has no density for x = {x} <= 0")));
    }
    if a <= 0.0 {
        return Ok(0.0);
    }
    let k = IntegerClass::of(x).jumps_to_cross();
    let rates: Vec<f64> = (0..k).map(|j| theta / (x - j as f64)).collect();
    Ok(rates
        .iter()
        .enumerate()
        .map(|(i, &ri)| {
            let w: f64 = rates
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &rj)| rj / (rj - ri))
                .product();
            w * ri * (-ri * a).exp()
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-12;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= TOL * b.abs().max(1.0)
    }

    /// Weights of the holding times in `A(x)`: the levels visited before crossing.
    fn levels(x: f64) -> Vec<f64> {
        let mut out = vec![];
        let mut l = x;
        while l > 0.0 {
            out.push(l);
            l -= 1.0;
        }
        out
    }

    #[test]
    fn lt_tau_examples() {
        assert!(close(lt_tau(2.0, 1.0, 1.0).unwrap(), 0.25));
        assert!(close(lt_tau(2.5, 1.0, 1.0).unwrap(), 0.125));
        assert_eq!(lt_tau(7.0, 3.0, 0.0).unwrap(), 1.0);
        assert_eq!(lt_tau(-1.0, 1.0, 3.0).unwrap(), 1.0);
        assert!(lt_tau(1.0, 0.0, 1.0).is_err());
        assert!(lt_tau(1.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn lt_area_examples() {
        assert!(close(lt_area(2.0, 1.0, 1.0).unwrap(), 1.0 / 6.0));
        assert!(close(lt_area(1.5, 1.0, 1.0).unwrap(), 1.0 / (2.5 * 1.5)));
        assert_eq!(lt_area(0.3, 2.0, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn lt_area_matches_product_of_exponentials() {
        for &x in &[0.4, 1.0, 2.0, 2.7, 6.0] {
            for &(theta, lambda) in &[(0.5, 0.3), (1.0, 1.0), (2.0, 4.0)] {
                let direct: f64 = levels(x).iter().map(|c| theta / (theta + lambda * c)).product();
                assert!(close(lt_area(x, theta, lambda).unwrap(), direct), "x={x}");
            }
        }
    }

    #[test]
    fn long_products_use_log_space_without_underflow() {
        let v = lt_area(200.5, 1.0, 0.01).unwrap();
        let direct: f64 = levels(200.5)
            .iter()
            .map(|c| -(0.01 * c).ln_1p())
            .sum::<f64>()
            .exp();
        assert!((v - direct).abs() <= 1e-12 * direct);
        assert!(v > 0.0);
        let j = joint_lt(120.0, 1.0, 0.1, 0.001).unwrap();
        let direct: f64 = (1..=120).map(|k| 1.0 / (1.1 + 0.001 * k as f64)).product();
        assert!((j - direct).abs() <= 1e-12 * direct);
    }

    #[test]
    fn joint_lt_examples() {
        assert!(close(joint_lt(1.0, 1.0, 1.0, 1.0).unwrap(), 1.0 / 3.0));
        assert!(close(joint_lt(2.0, 1.0, 0.5, 0.5).unwrap(), 0.2));
        assert_eq!(joint_lt(4.0, 2.0, 0.0, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn joint_lt_reduces_to_marginals() {
        for &x in &[0.5, 1.0, 2.0, 2.5, 5.0, 7.3] {
            for &lam in &[0.1, 1.0, 3.0] {
                assert_eq!(joint_lt(x, 1.5, lam, 0.0).unwrap(), lt_tau(x, 1.5, lam).unwrap());
                assert_eq!(joint_lt(x, 1.5, 0.0, lam).unwrap(), lt_area(x, 1.5, lam).unwrap());
                // the general product agrees with the marginals off the axes too
                let eps = 1e-300;
                let a = joint_lt(x, 1.5, lam, eps).unwrap();
                assert!(close(a, lt_tau(x, 1.5, lam).unwrap()), "x={x} lam={lam}");
            }
        }
    }

    #[test]
    fn tau_moment_examples() {
        let m = tau_moments(2.0, 1.0).unwrap();
        assert_eq!((m.mean, m.variance), (2.0, 2.0));
        let m = tau_moments(2.5, 1.0).unwrap();
        assert_eq!((m.mean, m.variance), (3.0, 3.0));
        let m = tau_moments(0.5, 2.0).unwrap();
        assert_eq!((m.mean, m.variance), (0.5, 0.25));
        assert!(close(m.variance, m.second - m.mean * m.mean));
    }

    #[test]
    fn area_moment_examples() {
        let m = area_moments(2.0, 1.0).unwrap();
        assert!(close(m.mean, 3.0) && close(m.second, 14.0) && close(m.variance, 5.0));
        let m = area_moments(1.0, 1.0).unwrap();
        assert!(close(m.mean, 1.0) && close(m.second, 2.0) && close(m.variance, 1.0));
        // weights 2.5, 1.5, 0.5: mean 4.5, variance 8.75
        let m = area_moments(2.5, 1.0).unwrap();
        assert!(close(m.mean, 4.5) && close(m.second, 29.0) && close(m.variance, 8.75));
    }

    #[test]
    fn area_moments_match_weighted_exponential_sum() {
        for &x in &[0.2, 0.5, 1.0, 2.0, 2.5, 3.9, 10.0] {
            for &theta in &[0.5, 1.0, 2.0] {
                let c = levels(x);
                let s: f64 = c.iter().sum();
                let s2: f64 = c.iter().map(|v| v * v).sum();
                let m = area_moments(x, theta).unwrap();
                assert!(close(m.mean, s / theta));
                assert!(close(m.variance, s2 / (theta * theta)));
                assert!(close(m.second, (s * s + s2) / (theta * theta)));
            }
        }
    }

    #[test]
    fn joint_stats_examples() {
        let j = joint_stats(2.0, 1.0).unwrap();
        assert!(close(j.cross, 9.0) && close(j.covariance, 3.0));
        assert!(close(j.correlation, (0.9f64).sqrt()));
        let j = joint_stats(1.0, 1.0).unwrap();
        assert!(close(j.cross, 2.0) && close(j.covariance, 1.0) && close(j.correlation, 1.0));
        // x < 1: A = x tau pathwise, so the correlation is exactly one
        let j = joint_stats(0.5, 1.0).unwrap();
        assert!(close(j.cross, 1.0) && close(j.covariance, 0.5) && close(j.correlation, 1.0));
        assert!(joint_stats(0.0, 1.0).is_err());
    }

    #[test]
    fn joint_stats_match_exponential_sum() {
        for &x in &[0.3, 1.0, 1.5, 2.0, 2.5, 4.0, 6.6] {
            for &theta in &[0.5, 2.0] {
                let c = levels(x);
                let k = c.len() as f64;
                let s: f64 = c.iter().sum();
                let s2: f64 = c.iter().map(|v| v * v).sum();
                let t2 = theta * theta;
                let j = joint_stats(x, theta).unwrap();
                assert!(close(j.cross, (k + 1.0) * s / t2), "x={x}");
                assert!(close(j.covariance, s / t2));
                let rho = (s / t2) / ((k / t2) * (s2 / t2)).sqrt();
                assert!((j.correlation - rho).abs() < 1e-12, "x={x}");
                assert!(j.correlation > 0.0 && j.correlation <= 1.0);
            }
        }
    }

    #[test]
    fn correlation_limit() {
        let r = joint_stats(1e6, 1.0).unwrap().correlation;
        assert!((r - 0.75f64.sqrt()).abs() <= 1e-6);
    }

    #[test]
    fn weighted_area_examples() {
        assert!(close(weighted_area_lt(2.0, 1.0, 1.0).unwrap(), 0.375));
        assert!(close(weighted_area_lt(0.5, 1.0, 1.0).unwrap(), 0.125));
        assert!(close(weighted_area_lt(2.0, 1.0, 0.0).unwrap(), 3.0));
        for &x in &[0.5, 1.0, 2.5, 4.0] {
            let m = area_moments(x, 1.3).unwrap().mean;
            assert!(close(weighted_area_lt(x, 1.3, 0.0).unwrap(), m));
        }
    }

    #[test]
    fn time_average_examples() {
        assert_eq!(expected_time_average(2.0).unwrap(), 1.5);
        assert_eq!(expected_time_average(2.5).unwrap(), 1.5);
        assert_eq!(expected_time_average(1.0).unwrap(), 1.0);
        assert!(expected_time_average(0.0).is_err());
        assert!(expected_time_average(-2.0).is_err());
    }

    #[test]
    fn time_average_is_integral_of_weighted_area() {
        // E[A/tau] = int_0^inf E[A exp(-l tau)] dl, with l = t / (1 - t) and the
        // composite midpoint rule on (0, 1)
        for &x in &[0.5, 1.0, 2.0, 2.5, 3.3] {
            let f = |t: f64| {
                let l = t / (1.0 - t);
                weighted_area_lt(x, 1.0, l).unwrap() / (1.0 - t).powi(2)
            };
            let n = 100_000;
            let h = 1.0 / n as f64;
            let integral: f64 = (0..n).map(|i| f((i as f64 + 0.5) * h)).sum::<f64>() * h;
            let exact = expected_time_average(x).unwrap();
            assert!((integral - exact).abs() < 1e-6, "x={x}: {integral} vs {exact}");
        }
    }

    #[test]
    fn branch_audit_exposes_the_jump() {
        let a = branch_audit(2.0, 1.0, 1.0).unwrap();
        assert_eq!(a.lt_tau.selected, Branch::Integer);
        assert!(close(a.lt_tau.value(), 0.25));
        assert!(close(a.lt_tau.non_integer, 0.125));
        assert!(close(a.tau_mean.gap(), 1.0));
        assert!(close(a.cross.integer, 9.0));
        assert!(close(a.cross.non_integer, 12.0));
        let a = branch_audit(2.5, 1.0, 1.0).unwrap();
        assert_eq!(a.tau_mean.selected, Branch::NonInteger);
        assert!(close(a.tau_mean.value(), 3.0));
    }

    #[test]
    fn densities_at_two() {
        // tau ~ Gamma(2, 1); A = 2 E1 + E2 has density e^{-a/2} - e^{-a}
        for &v in &[0.1, 0.7, 2.0, 5.5] {
            assert!(close(tau_density(2.0, 1.0, v).unwrap(), v * (-v).exp()));
            assert!(close(
                area_density(2.0, 1.0, v).unwrap(),
                (-v / 2.0).exp() - (-v).exp()
            ));
        }
        assert_eq!(tau_density(2.0, 1.0, -1.0).unwrap(), 0.0);
        assert!(area_density(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn densities_integrate_to_moments() {
        for &(x, theta) in &[(0.5f64, 1.0f64), (2.5, 2.0), (4.0, 0.5)] {
            let n = 200_000;
            let top = 60.0 * x.max(1.0) / theta;
            let h = top / n as f64;
            let mid = |i: usize| (i as f64 + 0.5) * h;
            let (mut mt, mut ma, mut st, mut sa) = (0.0, 0.0, 0.0, 0.0);
            for i in 0..n {
                let v = mid(i);
                let ft = tau_density(x, theta, v).unwrap() * h;
                let fa = area_density(x, theta, v).unwrap() * h;
                mt += ft;
                ma += fa;
                st += v * ft;
                sa += v * fa;
            }
            assert!(
                (mt - 1.0).abs() < 1e-6 && (ma - 1.0).abs() < 1e-6,
                "x={x}: {mt} {ma}"
            );
            assert!((st - tau_moments(x, theta).unwrap().mean).abs() < 1e-5);
            assert!((sa - area_moments(x, theta).unwrap().mean).abs() < 1e-5);
        }
    }
}
