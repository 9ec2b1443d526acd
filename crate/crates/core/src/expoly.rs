//! Exponential polynomials `sum c x^k e^(alpha x)` and particular solutions of
//! constant-coefficient linear ODEs with exponential-polynomial forcing.
//!
//! This is the algebra behind the method of steps: every piece of a
//! Laplace-transform solution is an [`ExpPoly`], and each new piece is obtained
//! from the previous one through [`ode_particular`] plus one homogeneous mode.

use std::cmp::Ordering;
use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{FpaError, Result};

/// Terms with smaller magnitude are dropped during canonicalization.
pub const PRUNE_BELOW: f64 = 1e-300;

/// Largest polynomial power a term may carry. Each resonant step raises the
/// power by one, so this also bounds how far the method of steps can march.
pub const MAX_POWER: u32 = 64;

/// Relative tolerance of the resonance test.
pub const RESONANCE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpPolyTerm {
    pub coeff: f64,
    pub power: u32,
    pub exponent: f64,
}

impl ExpPolyTerm {
    pub fn new(coeff: f64, power: u32, exponent: f64) -> Self {
        ExpPolyTerm {
            coeff,
            power,
            exponent,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        if self.coeff == 0.0 || (x == 0.0 && self.power > 0) {
            return 0.0;
        }
        let ex = (self.exponent * x).exp();
        let xp = if self.power == 0 {
            1.0
        } else {
            x.powi(self.power as i32)
        };
        let v = self.coeff * xp * ex;
        if v.is_finite() && v != 0.0 && ex != 0.0 && ex.is_finite() && xp != 0.0 && xp.is_finite() {
            v
        } else {
            self.eval_log(x)
        }
    }

    // Overflow-safe route: the factors may over/underflow individually while
    // their product is representable.
    fn eval_log(&self, x: f64) -> f64 {
        let mut sign = self.coeff.signum();
        if x < 0.0 && self.power % 2 == 1 {
            sign = -sign;
        }
        let log = self.coeff.abs().ln() + self.power as f64 * x.abs().ln() + self.exponent * x;
        sign * log.exp()
    }

    fn key_cmp(&self, other: &Self) -> Ordering {
        self.exponent
            .total_cmp(&other.exponent)
            .then(self.power.cmp(&other.power))
    }
}

/// Finite sum of [`ExpPolyTerm`]s in canonical form: sorted by
/// `(exponent, power)`, equal pairs merged, negligible terms pruned.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExpPoly {
    terms: Vec<ExpPolyTerm>,
}

impl ExpPoly {
    pub fn zero() -> Self {
        ExpPoly { terms: Vec::new() }
    }

    pub fn constant(c: f64) -> Self {
        Self::term(c, 0, 0.0)
    }

    pub fn term(coeff: f64, power: u32, exponent: f64) -> Self {
        Self::from_terms(vec![ExpPolyTerm::new(coeff, power, exponent)])
    }

    pub fn from_terms(mut terms: Vec<ExpPolyTerm>) -> Self {
        terms.sort_by(|a, b| a.key_cmp(b));
        let mut merged: Vec<ExpPolyTerm> = Vec::with_capacity(terms.len());
        for t in terms {
            match merged.last_mut() {
                Some(last) if last.key_cmp(&t) == Ordering::Equal => last.coeff += t.coeff,
                _ => merged.push(t),
            }
        }
        merged.retain(|t| t.coeff.abs() >= PRUNE_BELOW);
        ExpPoly { terms: merged }
    }

    /// Re-run canonicalization; a no-op on values built through this API.
    pub fn canonical(&self) -> Self {
        Self::from_terms(self.terms.clone())
    }

    pub fn terms(&self) -> &[ExpPolyTerm] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn max_power(&self) -> u32 {
        self.terms.iter().map(|t| t.power).max().unwrap_or(0)
    }

    /// Distinct exponents, ascending.
    pub fn exponents(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for t in &self.terms {
            if out.last().is_none_or(|e| e.to_bits() != t.exponent.to_bits()) {
                out.push(t.exponent);
            }
        }
        out
    }

    /// Polynomial coefficients (index = power) of the part carrying `e^(alpha x)`.
    pub fn polynomial_at(&self, alpha: f64) -> Vec<f64> {
        let mut coeffs = Vec::new();
        for t in self
            .terms
            .iter()
            .filter(|t| t.exponent.to_bits() == alpha.to_bits())
        {
            let k = t.power as usize;
            if coeffs.len() <= k {
                coeffs.resize(k + 1, 0.0);
            }
            coeffs[k] += t.coeff;
        }
        coeffs
    }

    /// Value at `x`, summed with Neumaier compensation.
    pub fn eval(&self, x: f64) -> f64 {
        let mut sum = 0.0f64;
        let mut comp = 0.0f64;
        for t in &self.terms {
            let v = t.eval(x);
            let s = sum + v;
            if sum.abs() >= v.abs() {
                comp += (sum - s) + v;
            } else {
                comp += (v - s) + sum;
            }
            sum = s;
        }
        sum + comp
    }

    pub fn derivative(&self) -> Self {
        let mut out = Vec::with_capacity(2 * self.terms.len());
        for t in &self.terms {
            if t.power > 0 {
                out.push(ExpPolyTerm::new(
                    t.coeff * t.power as f64,
                    t.power - 1,
                    t.exponent,
                ));
            }
            if t.exponent != 0.0 {
                out.push(ExpPolyTerm::new(t.coeff * t.exponent, t.power, t.exponent));
            }
        }
        Self::from_terms(out)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::from_terms(
            self.terms
                .iter()
                .map(|t| ExpPolyTerm::new(t.coeff * s, t.power, t.exponent))
                .collect(),
        )
    }
}

impl Add for &ExpPoly {
    type Output = ExpPoly;
    fn add(self, rhs: &ExpPoly) -> ExpPoly {
        let mut terms = self.terms.clone();
        terms.extend_from_slice(&rhs.terms);
        ExpPoly::from_terms(terms)
    }
}

impl Add for ExpPoly {
    type Output = ExpPoly;
    fn add(self, rhs: ExpPoly) -> ExpPoly {
        &self + &rhs
    }
}

impl Neg for &ExpPoly {
    type Output = ExpPoly;
    fn neg(self) -> ExpPoly {
        self.scale(-1.0)
    }
}

impl Sub for &ExpPoly {
    type Output = ExpPoly;
    fn sub(self, rhs: &ExpPoly) -> ExpPoly {
        self + &(-rhs)
    }
}

impl Sub for ExpPoly {
    type Output = ExpPoly;
    fn sub(self, rhs: ExpPoly) -> ExpPoly {
        &self - &rhs
    }
}

impl Mul<f64> for &ExpPoly {
    type Output = ExpPoly;
    fn mul(self, rhs: f64) -> ExpPoly {
        self.scale(rhs)
    }
}

/// `c2 y'' + c1 y' + c0 y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearOperator {
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
}

impl LinearOperator {
    pub fn new(c2: f64, c1: f64, c0: f64) -> Result<Self> {
        if !(c2.is_finite() && c1.is_finite() && c0.is_finite()) {
            return Err(FpaError::DegenerateOperator("non-finite coefficient".into()));
        }
        if c2 == 0.0 && c1 == 0.0 && c0 == 0.0 {
            return Err(FpaError::DegenerateOperator("all coefficients vanish".into()));
        }
        Ok(LinearOperator { c2, c1, c0 })
    }

    /// Characteristic polynomial `c2 s^2 + c1 s + c0`.
    pub fn char_poly(&self, s: f64) -> f64 {
        (self.c2 * s + self.c1) * s + self.c0
    }

    fn char_poly_d1(&self, s: f64) -> f64 {
        2.0 * self.c2 * s + self.c1
    }

    /// Multiplicity of `alpha` as a characteristic root, with the relative
    /// resonance tolerance (near-roots count as roots).
    pub fn root_multiplicity(&self, alpha: f64) -> u32 {
        let a = alpha.abs();
        let scale0 = self.c2.abs() * a * a + self.c1.abs() * a + self.c0.abs();
        if self.char_poly(alpha).abs() > RESONANCE_TOL * scale0 {
            return 0;
        }
        if self.c2 == 0.0 {
            return 1;
        }
        let scale1 = 2.0 * self.c2.abs() * a + self.c1.abs();
        if self.char_poly_d1(alpha).abs() > RESONANCE_TOL * scale1 {
            1
        } else {
            2
        }
    }

    pub fn apply(&self, y: &ExpPoly) -> ExpPoly {
        let d1 = y.derivative();
        let d2 = d1.derivative();
        let mut terms = Vec::new();
        for (p, c) in [(&d2, self.c2), (&d1, self.c1), (y, self.c0)] {
            if c != 0.0 {
                terms.extend(
                    p.terms()
                        .iter()
                        .map(|t| ExpPolyTerm::new(t.coeff * c, t.power, t.exponent)),
                );
            }
        }
        ExpPoly::from_terms(terms)
    }

    /// Sup over `samples` equispaced points of `[lo, hi]` of `|L y - rhs|`.
    pub fn residual_sup(&self, y: &ExpPoly, rhs: &ExpPoly, lo: f64, hi: f64, samples: usize) -> f64 {
        let r = &self.apply(y) - rhs;
        let n = samples.max(2);
        (0..n)
            .map(|i| {
                let x = lo + (hi - lo) * i as f64 / (n - 1) as f64;
                r.eval(x).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// One particular solution of `c2 y'' + c1 y' + c0 y = rhs` by undetermined
/// coefficients. A forcing exponent that is a characteristic root of
/// multiplicity `r` lifts the ansatz by `x^r`.
pub fn ode_particular(c2: f64, c1: f64, c0: f64, rhs: &ExpPoly) -> Result<ExpPoly> {
    LinearOperator::new(c2, c1, c0)?.particular(rhs)
}

impl LinearOperator {
    pub fn particular(&self, rhs: &ExpPoly) -> Result<ExpPoly> {
        let mut out = Vec::new();
        for alpha in rhs.exponents() {
            let r = rhs.polynomial_at(alpha);
            let q = self.solve_group(alpha, &r);
            for (k, &c) in q.iter().enumerate() {
                if c != 0.0 {
                    let power = k as u32;
                    if power > MAX_POWER {
                        return Err(FpaError::PowerCap {
                            power,
                            cap: MAX_POWER,
                        });
                    }
                    out.push(ExpPolyTerm::new(c, power, alpha));
                }
            }
        }
        Ok(ExpPoly::from_terms(out))
    }

    /// Coefficients of `q` with `L[q(x) e^(alpha x)] = r(x) e^(alpha x)`, using
    /// `L[q e^(alpha x)] = e^(alpha x) (p(alpha) q + p'(alpha) q' + c2 q'')`.
    fn solve_group(&self, alpha: f64, r: &[f64]) -> Vec<f64> {
        let d = r.len();
        if d == 0 {
            return Vec::new();
        }
        let p0 = self.char_poly(alpha);
        let p1 = self.char_poly_d1(alpha);
        let c2 = self.c2;
        match self.root_multiplicity(alpha) {
            0 => {
                let mut q = vec![0.0; d + 2];
                for k in (0..d).rev() {
                    let kf = k as f64;
                    q[k] = (r[k] - p1 * (kf + 1.0) * q[k + 1] - c2 * (kf + 2.0) * (kf + 1.0) * q[k + 2]) / p0;
                }
                q.truncate(d);
                q
            }
            1 => {
                // q' = w with p'(alpha) w + c2 w' = r
                let mut w = vec![0.0; d + 1];
                for k in (0..d).rev() {
                    w[k] = (r[k] - c2 * (k as f64 + 1.0) * w[k + 1]) / p1;
                }
                let mut q = vec![0.0; d + 1];
                for k in 0..d {
                    q[k + 1] = w[k] / (k as f64 + 1.0);
                }
                q
            }
            _ => {
                let mut q = vec![0.0; d + 2];
                for k in 0..d {
                    let kf = k as f64;
                    q[k + 2] = r[k] / ((kf + 1.0) * (kf + 2.0) * c2);
                }
                q
            }
        }
    }
}

/// A function on `(0, pieces.len()]` made of one [`ExpPoly`] per unit interval,
/// with a constant outer value on `(-inf, 0]`.
///
/// Piece `j` covers `(j, j + 1]` and is stored in the local variable
/// `u = x - j`, `u in (0, 1]`. With unit delays this keeps the shifted
/// argument `x - 1` of piece `j` equal to the local variable of piece `j - 1`,
/// and keeps coefficients bounded when the decay rate is large.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseExpPoly {
    pieces: Vec<ExpPoly>,
    outer: f64,
}

impl PiecewiseExpPoly {
    pub fn new(pieces: Vec<ExpPoly>, outer: f64) -> Self {
        PiecewiseExpPoly { pieces, outer }
    }

    pub fn pieces(&self) -> &[ExpPoly] {
        &self.pieces
    }

    pub fn outer(&self) -> f64 {
        self.outer
    }

    pub fn domain_bound(&self) -> f64 {
        self.pieces.len() as f64
    }

    /// Index of the piece containing `x > 0` and the local coordinate.
    pub fn locate(x: f64) -> (usize, f64) {
        let j = (x.ceil() as usize).max(1) - 1;
        (j, x - j as f64)
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        if x <= 0.0 {
            return Ok(self.outer);
        }
        let (j, u) = Self::locate(x);
        self.pieces
            .get(j)
            .map(|p| p.eval(u))
            .ok_or_else(|| FpaError::invalid(format!("x = {x} beyond domain bound {}", self.domain_bound())))
    }

    /// `|f(j+) - f(j-)|` at every knot `j = 0, 1, ..., len - 1`; knot 0 compares
    /// with the outer value.
    pub fn c0_mismatches(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.pieces.len());
        let mut left = self.outer;
        for p in &self.pieces {
            out.push((p.eval(0.0) - left).abs());
            left = p.eval(1.0);
        }
        out
    }

    /// Derivative jumps at the interior knots `1, ..., len - 1`.
    pub fn c1_mismatches(&self) -> Vec<f64> {
        self.pieces
            .windows(2)
            .map(|w| (w[1].derivative().eval(0.0) - w[0].derivative().eval(1.0)).abs())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn e(c: f64, k: u32, a: f64) -> ExpPolyTerm {
        ExpPolyTerm::new(c, k, a)
    }

    #[test]
    fn eval_examples() {
        assert_eq!(ExpPoly::constant(1.0).eval(5.0), 1.0);
        let f = ExpPoly::term(2.0, 1, -1.0);
        assert!((f.eval(1.0) - 2.0 * (-1.0f64).exp()).abs() < 1e-15);
        let g = ExpPoly::from_terms(vec![e(1.0, 0, 0.0), e(-1.0, 0, -1.0)]);
        assert_eq!(g.eval(0.0), 0.0);
    }

    #[test]
    fn eval_survives_overflowing_factors() {
        // 1e300 * u^3 * e^{-800 u} at u = 0.5: the exponential underflows alone
        let t = e(1e300, 3, -800.0);
        let expected = (300.0 * 10f64.ln() + 3.0 * 0.5f64.ln() - 400.0).exp();
        let v = t.eval(0.5);
        assert!((v - expected).abs() <= 1e-12 * expected, "{v} vs {expected}");
        assert_eq!(e(1.0, 0, -1e6).eval(1.0), 0.0);
    }

    #[test]
    fn derivative_examples() {
        let d = ExpPoly::term(1.0, 1, -1.0).derivative();
        let expected = ExpPoly::from_terms(vec![e(1.0, 0, -1.0), e(-1.0, 1, -1.0)]);
        assert_eq!(d, expected);
        assert!(ExpPoly::constant(7.0).derivative().is_zero());
        assert_eq!(
            ExpPoly::term(1.0, 2, 0.0).derivative(),
            ExpPoly::term(2.0, 1, 0.0)
        );
    }

    #[test]
    fn canonical_form_merges_and_prunes() {
        let p = ExpPoly::from_terms(vec![
            e(1.0, 1, -2.0),
            e(3.0, 0, 0.0),
            e(2.0, 1, -2.0),
            e(1e-301, 4, 1.0),
        ]);
        assert_eq!(p.terms().len(), 2);
        assert_eq!(p.polynomial_at(-2.0), vec![0.0, 3.0]);
        assert_eq!(p.canonical(), p);
        let z = &p - &p;
        assert!(z.is_zero());
    }

    #[test]
    fn particular_examples() {
        let one = ode_particular(0.0, 1.0, 1.0, &ExpPoly::constant(1.0)).unwrap();
        assert_eq!(one, ExpPoly::constant(1.0));
        // resonant first order: y' + 2y = e^{-2x} -> x e^{-2x}
        let y = ode_particular(0.0, 1.0, 2.0, &ExpPoly::term(1.0, 0, -2.0)).unwrap();
        assert_eq!(y, ExpPoly::term(1.0, 1, -2.0));
        let y = ode_particular(1.0, 0.0, -1.0, &ExpPoly::term(1.0, 0, 2.0)).unwrap();
        assert_eq!(y.terms().len(), 1);
        assert!((y.terms()[0].coeff - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn double_resonance() {
        // y'' - 2y' + y = x e^{x}: root 1 has multiplicity 2
        let op = LinearOperator::new(1.0, -2.0, 1.0).unwrap();
        assert_eq!(op.root_multiplicity(1.0), 2);
        let rhs = ExpPoly::term(1.0, 1, 1.0);
        let y = op.particular(&rhs).unwrap();
        assert_eq!(y.max_power(), 3);
        assert!(op.residual_sup(&y, &rhs, 0.0, 1.0, 100) < 1e-12);
    }

    #[test]
    fn near_resonance_uses_resonant_branch() {
        let op = LinearOperator::new(0.0, 1.0, 2.0).unwrap();
        let alpha = -2.0 * (1.0 + 1e-15);
        assert_eq!(op.root_multiplicity(alpha), 1);
        assert_eq!(op.root_multiplicity(-2.1), 0);
    }

    #[test]
    fn degenerate_operator() {
        assert!(matches!(
            ode_particular(0.0, 0.0, 0.0, &ExpPoly::constant(1.0)),
            Err(FpaError::DegenerateOperator(_))
        ));
        // pure algebraic operator is fine
        let y = ode_particular(0.0, 0.0, 4.0, &ExpPoly::term(2.0, 2, 1.0)).unwrap();
        assert_eq!(y, ExpPoly::term(0.5, 2, 1.0));
    }

    #[test]
    fn power_cap() {
        let op = LinearOperator::new(0.0, 1.0, 0.0).unwrap();
        let rhs = ExpPoly::term(1.0, MAX_POWER, 0.0);
        assert!(matches!(op.particular(&rhs), Err(FpaError::PowerCap { .. })));
    }

    #[test]
    fn piecewise_locate_and_knots() {
        assert_eq!(PiecewiseExpPoly::locate(0.5), (0, 0.5));
        assert_eq!(PiecewiseExpPoly::locate(1.0), (0, 1.0));
        assert_eq!(PiecewiseExpPoly::locate(1.25), (1, 0.25));
        // f = x on (0, 1], 1 + u on (1, 2]
        let pw = PiecewiseExpPoly::new(
            vec![
                ExpPoly::term(1.0, 1, 0.0),
                ExpPoly::from_terms(vec![e(1.0, 0, 0.0), e(1.0, 1, 0.0)]),
            ],
            0.0,
        );
        assert_eq!(pw.eval(-3.0).unwrap(), 0.0);
        assert_eq!(pw.eval(1.5).unwrap(), 1.5);
        assert!(pw.eval(2.5).is_err());
        assert_eq!(pw.c0_mismatches(), vec![0.0, 0.0]);
        assert_eq!(pw.c1_mismatches(), vec![0.0]);
    }

    fn arb_term() -> impl Strategy<Value = ExpPolyTerm> {
        (
            -3.0f64..3.0,
            0u32..4,
            prop::sample::select(vec![0.0, -1.0, -2.5, 0.7]),
        )
            .prop_map(|(c, k, a)| ExpPolyTerm::new(c, k, a))
    }

    fn arb_poly() -> impl Strategy<Value = ExpPoly> {
        prop::collection::vec(arb_term(), 1..6).prop_map(ExpPoly::from_terms)
    }

    proptest! {
        #[test]
        fn derivative_matches_central_difference(p in arb_poly(), x in 0.05f64..2.0) {
            let h = 1e-6;
            let fd = (p.eval(x + h) - p.eval(x - h)) / (2.0 * h);
            let d = p.derivative().eval(x);
            let scale = p.terms().iter().map(|t| t.coeff.abs()).sum::<f64>().max(1.0) * 20.0;
            prop_assert!((fd - d).abs() <= 1e-6 * scale, "fd {} vs {}", fd, d);
        }

        #[test]
        fn canonicalization_is_idempotent_and_preserves_values(p in arb_poly(), x in -1.0f64..2.0) {
            let c = p.canonical();
            prop_assert_eq!(&c, &p);
            let reversed = ExpPoly::from_terms(p.terms().iter().rev().copied().collect());
            prop_assert!((reversed.eval(x) - p.eval(x)).abs() <= 1e-12 * (1.0 + p.eval(x).abs()));
        }

        #[test]
        fn particular_solutions_have_small_residual(
            rhs in arb_poly(),
            c2 in prop::sample::select(vec![0.0, 0.5, 1.0]),
            c1 in -2.0f64..2.0,
            c0 in prop::sample::select(vec![-2.0, -1.0, 1.0, 2.5]),
        ) {
            let op = LinearOperator::new(c2, c1, c0).unwrap();
            let y = op.particular(&rhs).unwrap();
            let res = op.residual_sup(&y, &rhs, 0.0, 1.0, 100);
            // near-resonant draws give large coefficients that cancel in L y;
            // measure the residual against the size of the uncancelled terms
            let mag = |p: &ExpPoly| p.terms().iter().map(|t| t.coeff.abs()).sum::<f64>();
            let d1 = y.derivative();
            let scale = (c2.abs() * mag(&d1.derivative()) + c1.abs() * mag(&d1) + c0.abs() * mag(&y))
                .max(mag(&rhs))
                .max(1.0);
            prop_assert!(res <= 1e-9 * scale, "residual {}", res);
        }
    }
}
