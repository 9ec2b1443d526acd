//! Process parameters, model classification and the upper-barrier reduction.
//!
//! The process is `X(t) = x - mu t + sigma B_t - N_t` with `N_t` a Poisson
//! process of intensity `theta` and unit jumps. Which closed forms and solvers
//! apply depends only on whether `mu` and `sigma` vanish.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{FpaError, Result};

/// Default tolerance for deciding that a starting level is an integer.
pub const EPS_INT: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// `X(t) = x - N_t`
    Poisson,
    /// `X(t) = x - mu t - N_t`
    #[serde(rename = "drift")]
    PoissonDrift,
    /// `X(t) = x - mu t + sigma B_t - N_t`
    #[serde(rename = "bm")]
    BmJump,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Poisson => "poisson",
            ModelKind::PoissonDrift => "drift",
            ModelKind::BmJump => "bm",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = FpaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "poisson" => Ok(ModelKind::Poisson),
            "drift" => Ok(ModelKind::PoissonDrift),
            "bm" => Ok(ModelKind::BmJump),
            other => Err(FpaError::invalid(format!("unknown model `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcessParams {
    /// Starting level.
    pub x: f64,
    /// Drift per unit time (the process moves down at rate `mu`).
    pub mu: f64,
    /// Diffusion coefficient.
    pub sigma: f64,
    /// Jump intensity.
    pub theta: f64,
}

impl ProcessParams {
    /// Validated constructor.
    pub fn new(x: f64, mu: f64, sigma: f64, theta: f64) -> Result<Self> {
        let p = ProcessParams { x, mu, sigma, theta };
        p.validate()?;
        Ok(p)
    }

    pub fn poisson(x: f64, theta: f64) -> Result<Self> {
        Self::new(x, 0.0, 0.0, theta)
    }

    pub fn drift(x: f64, mu: f64, theta: f64) -> Result<Self> {
        Self::new(x, mu, 0.0, theta)
    }

    pub fn bm(x: f64, mu: f64, sigma: f64, theta: f64) -> Result<Self> {
        Self::new(x, mu, sigma, theta)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.x.is_finite() {
            return Err(FpaError::invalid(format!("x must be finite, got {}", self.x)));
        }
        check_theta(self.theta)?;
        if !(self.mu >= 0.0) || !self.mu.is_finite() {
            return Err(FpaError::invalid(format!("mu must be >= 0, got {}", self.mu)));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(FpaError::invalid(format!(
                "sigma must be >= 0, got {}",
                self.sigma
            )));
        }
        Ok(())
    }

    /// Model kind; assumes the parameters are valid.
    pub fn kind(&self) -> ModelKind {
        if self.sigma > 0.0 {
            ModelKind::BmJump
        } else if self.mu > 0.0 {
            ModelKind::PoissonDrift
        } else {
            ModelKind::Poisson
        }
    }

    pub fn with_x(&self, x: f64) -> Self {
        ProcessParams { x, ..*self }
    }
}

pub fn classify_model(params: &ProcessParams) -> Result<ModelKind> {
    params.validate()?;
    Ok(params.kind())
}

/// Integer/non-integer classification of a starting level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IntegerClass {
    pub is_integer: bool,
    /// `round(x)` when `x` is classified as an integer, `floor(x)` otherwise.
    pub floor_part: i64,
}

impl IntegerClass {
    pub fn of(x: f64) -> Self {
        Self::with_tolerance(x, EPS_INT)
    }

    pub fn with_tolerance(x: f64, eps: f64) -> Self {
        let r = x.round();
        if (x - r).abs() < eps {
            IntegerClass {
                is_integer: true,
                floor_part: r as i64,
            }
        } else {
            IntegerClass {
                is_integer: false,
                floor_part: x.floor() as i64,
            }
        }
    }

    /// Number of unit jumps needed to push the pure-jump process from `x` to a
    /// level `<= 0`: `x` itself for integers, `[x] + 1` otherwise.
    pub fn jumps_to_cross(&self) -> u64 {
        if self.is_integer {
            self.floor_part.max(0) as u64
        } else {
            (self.floor_part + 1).max(0) as u64
        }
    }
}

/// Map the first passage of the upward process `x + mu t + sigma B_t + N_t`
/// through a barrier `barrier > x` onto the downward process started at
/// `barrier - x`.
///
/// Then `tau_S(x)` has the law of `tau(barrier - x)` and
/// `A_S(x) = barrier * tau(barrier - x) - A(barrier - x)`; see [`BarrierReduction`].
pub fn barrier_reduce(barrier: f64, params: &ProcessParams) -> Result<ProcessParams> {
    params.validate()?;
    if !barrier.is_finite() {
        return Err(FpaError::invalid("barrier must be finite"));
    }
    if params.x >= barrier {
        return Err(FpaError::invalid(format!(
            "barrier reduction needs x < S, got x = {} and S = {barrier}",
            params.x
        )));
    }
    Ok(params.with_x(barrier - params.x))
}

/// First passage moments through an upper barrier, rebuilt from the downward
/// process quantities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierReduction {
    pub barrier: f64,
    pub reduced: ProcessParams,
}

impl BarrierReduction {
    pub fn new(barrier: f64, params: &ProcessParams) -> Result<Self> {
        Ok(BarrierReduction {
            barrier,
            reduced: barrier_reduce(barrier, params)?,
        })
    }

    /// `E[tau_S] = E[tau~(S - x)]`.
    pub fn tau_mean(&self, downward_tau_mean: f64) -> f64 {
        downward_tau_mean
    }

    /// `E[A_S] = S E[tau~(S - x)] - E[A~(S - x)]`.
    pub fn area_mean(&self, downward_tau_mean: f64, downward_area_mean: f64) -> f64 {
        self.barrier * downward_tau_mean - downward_area_mean
    }
}

pub(crate) fn check_theta(theta: f64) -> Result<()> {
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(FpaError::invalid(format!("theta must be > 0, got {theta}")));
    }
    Ok(())
}

pub(crate) fn check_lambda(name: &str, lambda: f64) -> Result<()> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(FpaError::invalid(format!("{name} must be >= 0, got {lambda}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classification_follows_mu_and_sigma() {
        let p = |mu, sigma| ProcessParams {
            x: 1.0,
            mu,
            sigma,
            theta: 1.0,
        };
        assert_eq!(classify_model(&p(0.0, 0.0)).unwrap(), ModelKind::Poisson);
        assert_eq!(classify_model(&p(1.0, 0.0)).unwrap(), ModelKind::PoissonDrift);
        assert_eq!(classify_model(&p(1.0, 1.0)).unwrap(), ModelKind::BmJump);
        assert_eq!(classify_model(&p(0.0, 1.0)).unwrap(), ModelKind::BmJump);
    }

    #[test]
    fn rejects_bad_parameters() {
        let bad = [
            ProcessParams {
                x: 1.0,
                mu: 0.0,
                sigma: 0.0,
                theta: 0.0,
            },
            ProcessParams {
                x: 1.0,
                mu: 0.0,
                sigma: 0.0,
                theta: -1.0,
            },
            ProcessParams {
                x: 1.0,
                mu: -0.1,
                sigma: 0.0,
                theta: 1.0,
            },
            ProcessParams {
                x: 1.0,
                mu: 0.0,
                sigma: -1.0,
                theta: 1.0,
            },
            ProcessParams {
                x: f64::NAN,
                mu: 0.0,
                sigma: 0.0,
                theta: 1.0,
            },
        ];
        for p in bad {
            assert!(
                matches!(classify_model(&p), Err(FpaError::InvalidParams(_))),
                "{p:?}"
            );
        }
    }

    #[test]
    fn integer_classification() {
        let c = IntegerClass::of(2.0);
        assert!(c.is_integer);
        assert_eq!(c.floor_part, 2);
        assert_eq!(c.jumps_to_cross(), 2);

        let c = IntegerClass::of(2.5);
        assert!(!c.is_integer);
        assert_eq!(c.floor_part, 2);
        assert_eq!(c.jumps_to_cross(), 3);

        // within tolerance on either side
        assert_eq!(IntegerClass::of(3.0 - 1e-12).floor_part, 3);
        assert!(IntegerClass::of(3.0 + 1e-12).is_integer);
        assert!(!IntegerClass::of(3.0 + 1e-6).is_integer);
        assert_eq!(IntegerClass::of(0.3).jumps_to_cross(), 1);
    }

    #[test]
    fn barrier_reduction() {
        let p = ProcessParams::poisson(1.0, 1.0).unwrap();
        let red = BarrierReduction::new(3.0, &p).unwrap();
        assert_eq!(red.reduced.x, 2.0);
        // downward Poisson at 2: E[tau] = 2, E[A] = 3
        assert_eq!(red.tau_mean(2.0), 2.0);
        assert_eq!(red.area_mean(2.0, 3.0), 3.0);

        let red = BarrierReduction::new(1.5, &p).unwrap();
        assert_eq!(red.reduced.x, 0.5);
        assert_eq!(red.area_mean(1.0, 0.5), 1.0);

        let p = ProcessParams::poisson(2.0, 1.0).unwrap();
        assert!(matches!(barrier_reduce(1.0, &p), Err(FpaError::InvalidParams(_))));
        assert!(barrier_reduce(2.0, &p).is_err());
    }
}
