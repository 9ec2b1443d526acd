//! Explicit Euler integration of `mu M' + (theta + lambda x) M = theta M(x - 1)`,
//! `M = 1` on `x <= 0`, the area transform of the drift model.

use serde::Serialize;

use crate::error::{FpaError, Result};
use crate::params::check_theta;

pub const DEFAULT_AREA_STEP: f64 = 1e-3;
pub const MAX_AREA_STEP: f64 = 0.5;
/// Half-width of the symmetric difference in `lambda` for the mean.
const SLOPE_DELTA: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridLt {
    pub h: f64,
    pub lambda: f64,
    /// `M` at `0, h, 2h, ...`; when `x` is not a multiple of `h` the last
    /// node sits at `x` after a shortened step.
    pub nodes: Vec<f64>,
    pub x: f64,
}

impl GridLt {
    /// Estimate of `E[exp(-lambda A(x))]`.
    pub fn endpoint(&self) -> f64 {
        *self.nodes.last().expect("grid has node 0")
    }

    pub fn position(&self, i: usize) -> f64 {
        if i + 1 == self.nodes.len() {
            self.x
        } else {
            i as f64 * self.h
        }
    }
}

fn euler(x: f64, mu: f64, theta: f64, lambda: f64, h: f64) -> Vec<f64> {
    let full = (x / h * (1.0 + 1e-12)).floor() as usize;
    let rem = x - full as f64 * h;
    let partial = rem > 1e-12 * h.max(x);
    let mut nodes = Vec::with_capacity(full + 2);
    nodes.push(1.0);
    // linear interpolation over the uniform part of the grid
    let delayed = |nodes: &[f64], y: f64| -> f64 {
        if y <= 0.0 {
            return 1.0;
        }
        let s = y / h;
        let i = s.floor() as usize;
        let w = s - i as f64;
        if i + 1 >= nodes.len() {
            return nodes[nodes.len() - 1];
        }
        nodes[i] * (1.0 - w) + nodes[i + 1] * w
    };
    let step = |nodes: &[f64], i: usize, len: f64| -> f64 {
        let xi = i as f64 * h;
        let m = nodes[i];
        m + len / mu * (theta * delayed(nodes, xi - 1.0) - (theta + lambda * xi) * m)
    };
    for i in 0..full {
        let next = step(&nodes, i, h);
        nodes.push(next);
    }
    if partial {
        let next = step(&nodes, full, rem);
        nodes.push(next);
    }
    nodes
}

fn check_inputs(x: f64, mu: f64, theta: f64, h: f64) -> Result<()> {
    check_theta(theta)?;
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(FpaError::invalid(format!("drift model needs mu > 0, got {mu}")));
    }
    if !x.is_finite() {
        return Err(FpaError::invalid(format!("x must be finite, got {x}")));
    }
    if !(h > 0.0) || !h.is_finite() {
        return Err(FpaError::invalid(format!("h must be > 0, got {h}")));
    }
    if h > MAX_AREA_STEP {
        return Err(FpaError::StepTooLarge {
            h,
            max: MAX_AREA_STEP,
        });
    }
    Ok(())
}

pub fn drift_lt_area(x: f64, mu: f64, theta: f64, lambda: f64, h: f64) -> Result<GridLt> {
    check_inputs(x, mu, theta, h)?;
    crate::params::check_lambda("lambda", lambda)?;
    let nodes = if x <= 0.0 {
        vec![1.0]
    } else {
        euler(x, mu, theta, lambda, h)
    };
    Ok(GridLt {
        h,
        lambda,
        nodes,
        x: x.max(0.0),
    })
}

/// `E[A(x)]` as minus the slope at `lambda = 0` of the grid transform, by a
/// symmetric difference of half-width `1e-4`.
pub fn drift_area_mean(x: f64, mu: f64, theta: f64, h: f64) -> Result<f64> {
    check_inputs(x, mu, theta, h)?;
    if x <= 0.0 {
        return Ok(0.0);
    }
    let up = *euler(x, mu, theta, SLOPE_DELTA, h).last().expect("node");
    let down = *euler(x, mu, theta, -SLOPE_DELTA, h).last().expect("node");
    Ok(-(up - down) / (2.0 * SLOPE_DELTA))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `M = Phi^-1 [1 + (theta/mu) int_0^x Phi]`, `Phi = exp((theta t + lambda t^2/2)/mu)`,
    /// by the composite Simpson rule.
    fn first_interval(x: f64, mu: f64, theta: f64, lambda: f64, panels: usize) -> f64 {
        let phi = |t: f64| ((theta * t + 0.5 * lambda * t * t) / mu).exp();
        let n = panels + panels % 2;
        let dt = x / n as f64;
        let mut s = phi(0.0) + phi(x);
        for i in 1..n {
            s += phi(i as f64 * dt) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        (1.0 + theta / mu * s * dt / 3.0) / phi(x)
    }

    #[test]
    fn lambda_zero_is_identically_one() {
        let g = drift_lt_area(3.3, 1.0, 1.0, 0.0, 1e-2).unwrap();
        assert!(g.nodes.iter().all(|&v| v == 1.0));
        assert_eq!(g.nodes.len(), 331);
        assert!((g.position(330) - 3.3).abs() < 1e-15);
    }

    #[test]
    fn nodes_in_unit_interval() {
        let g = drift_lt_area(4.0, 0.7, 1.3, 2.0, 1e-3).unwrap();
        assert_eq!(g.nodes[0], 1.0);
        assert!(g.nodes.iter().all(|&v| v > 0.0 && v <= 1.0));
    }

    #[test]
    fn first_interval_matches_quadrature_within_order_h() {
        let exact = first_interval(0.5, 1.0, 1.0, 1.0, 100_000);
        for &h in &[1e-2, 1e-3] {
            let g = drift_lt_area(0.5, 1.0, 1.0, 1.0, h).unwrap();
            assert!((g.endpoint() - exact).abs() <= h, "h={h}");
        }
    }

    #[test]
    fn halving_h_is_first_order() {
        let a = drift_lt_area(2.5, 1.0, 1.0, 1.0, 2e-3).unwrap().endpoint();
        let b = drift_lt_area(2.5, 1.0, 1.0, 1.0, 1e-3).unwrap().endpoint();
        let c = drift_lt_area(2.5, 1.0, 1.0, 1.0, 5e-4).unwrap().endpoint();
        // successive differences shrink by about two
        let ratio = (a - b) / (b - c);
        assert!((ratio - 2.0).abs() < 0.2, "{ratio}");
        assert!((b - c).abs() <= 2.0 * (a - b).abs());
    }

    #[test]
    fn area_mean_converges_to_first_interval_value() {
        // on (0, 1]: mu a' + theta a = x gives a(1) = e^-1 at mu = theta = 1
        let exact = (-1.0f64).exp();
        let coarse = drift_area_mean(1.0, 1.0, 1.0, 1e-2).unwrap();
        let fine = drift_area_mean(1.0, 1.0, 1.0, 1e-3).unwrap();
        assert!((fine - exact).abs() < (coarse - exact).abs());
        assert!((fine - exact).abs() < 1e-3);
    }

    #[test]
    fn rejects_bad_steps() {
        assert!(matches!(
            drift_lt_area(1.0, 1.0, 1.0, 1.0, 0.6),
            Err(FpaError::StepTooLarge { .. })
        ));
        assert!(drift_lt_area(1.0, 1.0, 1.0, 1.0, 0.0).is_err());
        assert!(drift_lt_area(1.0, 0.0, 1.0, 1.0, 0.1).is_err());
        assert!(drift_lt_area(1.0, 1.0, 1.0, -1.0, 0.1).is_err());
        assert_eq!(drift_lt_area(-1.0, 1.0, 1.0, 1.0, 0.1).unwrap().endpoint(), 1.0);
    }
}
