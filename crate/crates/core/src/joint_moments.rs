//! Joint moments `V_{m,n}(x) = E[tau(x)^m A(x)^n]` of the pure-jump process.
//!
//! Two independent routes:
//!
//! * [`joint_moment`]: the difference equation
//!   `theta (V(x-1) - V(x)) = -n x V_{m,n-1}(x) - m V_{m-1,n}(x)` with
//!   `V = 0` on `x <= 0` and `V_{0,0} = 1` on `x > 0`, marched over unit steps
//!   `x - [x], x - [x] + 1, ..., x`. Works for every real `x`.
//! * [`joint_moment_poly`]: at integer `x`, `V_{m,n}` is a polynomial of degree
//!   `m + 2n` without constant term; its coefficients solve an upper-triangular
//!   system built from the coefficients of `V_{m-1,n}` and `V_{m,n-1}`. Solved
//!   in exact rational arithmetic.

use std::collections::HashMap;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use parking_lot::RwLock;

use crate::error::{FpaError, Result};
use crate::params::{check_theta, IntegerClass};

pub const DEFAULT_ORDER_CAP: u32 = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MomentOrder {
    pub m: u32,
    pub n: u32,
}

impl MomentOrder {
    pub fn new(m: u32, n: u32) -> Self {
        MomentOrder { m, n }
    }

    pub fn total(&self) -> u32 {
        self.m + self.n
    }

    /// Degree of the polynomial form, `m + 2n`.
    pub fn degree(&self) -> usize {
        (self.m + 2 * self.n) as usize
    }
}

fn check_order(order: MomentOrder, cap: u32) -> Result<()> {
    if order.total() > cap {
        return Err(FpaError::OrderTooLarge {
            order: order.total(),
            cap,
        });
    }
    Ok(())
}

/// `V_{a,b}(x)` for every `a <= m`, `b <= n`, from one sweep of the difference
/// recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentTable {
    max: MomentOrder,
    values: Vec<f64>,
}

impl MomentTable {
    pub fn compute(max: MomentOrder, x: f64, theta: f64) -> Result<Self> {
        check_theta(theta)?;
        if !x.is_finite() {
            return Err(FpaError::invalid("x must be finite"));
        }
        let (m, n) = (max.m as usize, max.n as usize);
        let idx = |a: usize, b: usize| a * (n + 1) + b;
        let mut cur = vec![0.0; (m + 1) * (n + 1)];
        if x <= 0.0 {
            return Ok(MomentTable { max, values: cur });
        }
        let class = IntegerClass::of(x);
        let (base, steps) = if class.is_integer {
            (1.0, class.floor_part as usize)
        } else {
            (x - class.floor_part as f64, class.floor_part as usize + 1)
        };
        let mut prev = cur.clone();
        for i in 0..steps {
            let p = base + i as f64;
            for a in 0..=m {
                for b in 0..=n {
                    if a == 0 && b == 0 {
                        cur[0] = 1.0;
                        continue;
                    }
                    let mut forcing = 0.0;
                    if b > 0 {
                        forcing += b as f64 * p * cur[idx(a, b - 1)];
                    }
                    if a > 0 {
                        forcing += a as f64 * cur[idx(a - 1, b)];
                    }
                    cur[idx(a, b)] = prev[idx(a, b)] + forcing / theta;
                }
            }
            std::mem::swap(&mut prev, &mut cur);
        }
        Ok(MomentTable { max, values: prev })
    }

    pub fn max_order(&self) -> MomentOrder {
        self.max
    }

    pub fn get(&self, order: MomentOrder) -> Option<f64> {
        if order.m > self.max.m || order.n > self.max.n {
            return None;
        }
        Some(self.values[order.m as usize * (self.max.n as usize + 1) + order.n as usize])
    }
}

pub fn joint_moment(order: MomentOrder, x: f64, theta: f64) -> Result<f64> {
    joint_moment_capped(order, x, theta, DEFAULT_ORDER_CAP)
}

pub fn joint_moment_capped(order: MomentOrder, x: f64, theta: f64, cap: u32) -> Result<f64> {
    check_order(order, cap)?;
    let table = MomentTable::compute(order, x, theta)?;
    Ok(table.get(order).expect("order within table"))
}

/// Shared memo of [`MomentTable`]s keyed by `(x, theta)`. Safe for concurrent
/// use; inserts are idempotent (a larger table replaces a smaller one).
#[derive(Debug, Default)]
pub struct JointMomentEngine {
    cap: u32,
    cache: RwLock<HashMap<(u64, u64), Arc<MomentTable>>>,
}

impl JointMomentEngine {
    pub fn new(cap: u32) -> Self {
        JointMomentEngine {
            cap,
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn get(&self, order: MomentOrder, x: f64, theta: f64) -> Result<f64> {
        check_order(order, self.cap)?;
        let key = (x.to_bits(), theta.to_bits());
        if let Some(v) = self.cache.read().get(&key).and_then(|t| t.get(order)) {
            return Ok(v);
        }
        let want = {
            let guard = self.cache.read();
            match guard.get(&key) {
                Some(t) => MomentOrder::new(t.max_order().m.max(order.m), t.max_order().n.max(order.n)),
                None => order,
            }
        };
        let table = Arc::new(MomentTable::compute(want, x, theta)?);
        let v = table.get(order).expect("order within table");
        let mut guard = self.cache.write();
        let entry = guard.entry(key).or_insert_with(|| table.clone());
        if entry.get(order).is_none() {
            *entry = table;
        }
        Ok(v)
    }

    pub fn cached_tables(&self) -> usize {
        self.cache.read().len()
    }
}

/// Coefficients `a_1 .. a_{m+2n}` of `V_{m,n}(x) = sum_k a_k x^k` at integer `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentPoly {
    pub order: MomentOrder,
    coeffs: Vec<BigRational>,
}

impl MomentPoly {
    /// Exact coefficients; index `k - 1` holds `a_k`.
    pub fn coefficients(&self) -> &[BigRational] {
        &self.coeffs
    }

    pub fn coefficients_f64(&self) -> Vec<f64> {
        self.coeffs.iter().map(rational_to_f64).collect()
    }

    /// Index of the highest nonzero coefficient.
    pub fn degree(&self) -> usize {
        self.coeffs
            .iter()
            .rposition(|c| !c.is_zero())
            .map_or(0, |i| i + 1)
    }

    pub fn eval_exact(&self, x: &BigRational) -> BigRational {
        let mut acc = BigRational::zero();
        for c in self.coeffs.iter().rev() {
            acc = (acc + c) * x;
        }
        acc
    }

    /// Exact evaluation rounded once to `f64`.
    pub fn eval(&self, x: f64) -> f64 {
        match BigRational::from_float(x) {
            Some(r) => rational_to_f64(&self.eval_exact(&r)),
            None => f64::NAN,
        }
    }
}

pub fn rational_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        // fall back through a scaled quotient for huge numerators/denominators
        let num = r.numer().to_f64().unwrap_or(f64::INFINITY);
        let den = r.denom().to_f64().unwrap_or(f64::INFINITY);
        num / den
    })
}

fn exact_theta(theta: f64) -> Result<BigRational> {
    check_theta(theta)?;
    BigRational::from_float(theta).ok_or_else(|| FpaError::invalid("theta not representable"))
}

/// Dense square matrix with exact entries, 1-based accessors.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    dim: usize,
    data: Vec<BigRational>,
}

impl DenseMatrix {
    fn zeros(dim: usize) -> Self {
        DenseMatrix {
            dim,
            data: vec![BigRational::zero(); dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> &BigRational {
        &self.data[(i - 1) * self.dim + (j - 1)]
    }

    pub fn get_f64(&self, i: usize, j: usize) -> f64 {
        rational_to_f64(self.get(i, j))
    }

    fn set(&mut self, i: usize, j: usize, v: BigRational) {
        self.data[(i - 1) * self.dim + (j - 1)] = v;
    }

    fn mul_vec(&self, v: &[BigRational]) -> Vec<BigRational> {
        (1..=self.dim)
            .map(|i| {
                (1..=self.dim)
                    .filter(|&j| !self.get(i, j).is_zero())
                    .fold(BigRational::zero(), |acc, j| acc + self.get(i, j) * &v[j - 1])
            })
            .collect()
    }
}

/// The three matrices of the coefficient recursion
/// `A a_{m,n} = B (0; a_{m-1,n}) + C (0; 0; a_{m,n-1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecursionMatrices {
    pub order: MomentOrder,
    /// `A_{i,j} = binom(j, i-1) (-1)^(j-i+1) theta` for `j >= i`; row `i`
    /// collects the coefficient of `x^(i-1)` in `theta (V(x-1) - V(x))`.
    pub a: DenseMatrix,
    /// Zero except the bottom-right block `-m I_{m+2n-1}`.
    pub b: DenseMatrix,
    /// Zero except the bottom-right block `-n I_{m+2n-2}`.
    pub c: DenseMatrix,
}

pub fn build_matrices(order: MomentOrder, theta: f64) -> Result<RecursionMatrices> {
    let th = exact_theta(theta)?;
    build_matrices_exact(order, &th)
}

fn binomial(n: usize, k: usize) -> BigInt {
    let mut acc = BigInt::one();
    for i in 0..k {
        acc = acc * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    acc
}

fn build_matrices_exact(order: MomentOrder, theta: &BigRational) -> Result<RecursionMatrices> {
    let dim = order.degree();
    if dim == 0 {
        return Err(FpaError::invalid("recursion matrices need m + 2n >= 1"));
    }
    let mut a = DenseMatrix::zeros(dim);
    for i in 1..=dim {
        for j in i..=dim {
            let sign = if (j - i + 1) % 2 == 0 {
                BigInt::one()
            } else {
                -BigInt::one()
            };
            let entry = BigRational::from_integer(binomial(j, i - 1) * sign) * theta;
            a.set(i, j, entry);
        }
    }
    let mut b = DenseMatrix::zeros(dim);
    let minus_m = BigRational::from_integer(BigInt::from(-(order.m as i64)));
    for i in 2..=dim {
        b.set(i, i, minus_m.clone());
    }
    let mut c = DenseMatrix::zeros(dim);
    let minus_n = BigRational::from_integer(BigInt::from(-(order.n as i64)));
    for i in 3..=dim {
        c.set(i, i, minus_n.clone());
    }
    Ok(RecursionMatrices { order, a, b, c })
}

/// Back substitution for the upper-triangular `A`.
fn solve_upper(a: &DenseMatrix, rhs: &[BigRational]) -> Vec<BigRational> {
    let dim = a.dim();
    let mut sol = vec![BigRational::zero(); dim];
    for i in (1..=dim).rev() {
        let mut acc = rhs[i - 1].clone();
        for j in (i + 1)..=dim {
            acc -= a.get(i, j) * &sol[j - 1];
        }
        sol[i - 1] = acc / a.get(i, i);
    }
    sol
}

pub fn joint_moment_poly(order: MomentOrder, theta: f64) -> Result<MomentPoly> {
    joint_moment_poly_capped(order, theta, DEFAULT_ORDER_CAP)
}

pub fn joint_moment_poly_capped(order: MomentOrder, theta: f64, cap: u32) -> Result<MomentPoly> {
    check_order(order, cap)?;
    if order.total() == 0 {
        return Err(FpaError::invalid(
            "V_{0,0} = 1 is not a polynomial vanishing at zero",
        ));
    }
    let th = exact_theta(theta)?;
    let (m, n) = (order.m as usize, order.n as usize);
    let mut table: Vec<Vec<Option<Vec<BigRational>>>> = vec![vec![None; n + 1]; m + 1];
    for a_ord in 0..=m {
        for b_ord in 0..=n {
            let coeffs = match (a_ord, b_ord) {
                (0, 0) => continue,
                // seeds from E[tau] = x / theta and E[A] = x (x + 1) / (2 theta)
                (1, 0) => vec![BigRational::one() / &th],
                (0, 1) => {
                    let half = BigRational::new(BigInt::one(), BigInt::from(2)) / &th;
                    vec![half.clone(), half]
                }
                _ => {
                    let ord = MomentOrder::new(a_ord as u32, b_ord as u32);
                    let mats = build_matrices_exact(ord, &th)?;
                    let dim = ord.degree();
                    let mut rhs = vec![BigRational::zero(); dim];
                    if a_ord > 0 {
                        let prev = table[a_ord - 1][b_ord].as_ref().expect("lower order");
                        let mut padded = vec![BigRational::zero(); dim];
                        padded[1..].clone_from_slice(prev);
                        for (r, v) in rhs.iter_mut().zip(mats.b.mul_vec(&padded)) {
                            *r += v;
                        }
                    }
                    if b_ord > 0 {
                        let prev = table[a_ord][b_ord - 1].as_ref().expect("lower order");
                        let mut padded = vec![BigRational::zero(); dim];
                        padded[2..].clone_from_slice(prev);
                        for (r, v) in rhs.iter_mut().zip(mats.c.mul_vec(&padded)) {
                            *r += v;
                        }
                    }
                    solve_upper(&mats.a, &rhs)
                }
            };
            table[a_ord][b_ord] = Some(coeffs);
        }
    }
    let coeffs = table[m][n].take().expect("requested order");
    Ok(MomentPoly { order, coeffs })
}
