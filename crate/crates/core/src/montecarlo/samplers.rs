//! Path samplers. The Poisson and drift samplers are exact; the BM sampler
//! is an Euler scheme with jump times superposed exactly.

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use rand_xoshiro::rand_core::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::Serialize;

use crate::error::{FpaError, Result};
use crate::params::IntegerClass;

pub type PathRng = Xoshiro256PlusPlus;

/// Largest BM step accepted.
pub const MAX_BM_STEP: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathStat {
    pub tau: f64,
    pub area: f64,
    /// The level reached zero between jumps rather than by a jump.
    pub crossed_between_jumps: bool,
}

impl PathStat {
    const IMMEDIATE: PathStat = PathStat {
        tau: 0.0,
        area: 0.0,
        crossed_between_jumps: false,
    };
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream for path `index` under master `seed`.
pub fn path_rng(seed: u64, index: u64) -> PathRng {
    Xoshiro256PlusPlus::seed_from_u64(splitmix64(seed ^ splitmix64(index)))
}

fn exp(rng: &mut PathRng, theta: f64) -> f64 {
    let e: f64 = rng.sample(Exp1);
    e / theta
}

/// `X(t) = x - N_t`: `tau` is the arrival of jump `k` (`k = x` for integer
/// `x`, `[x] + 1` otherwise) and the area sums level times holding time.
pub fn sample_poisson(x: f64, theta: f64, rng: &mut PathRng) -> PathStat {
    if x <= 0.0 {
        return PathStat::IMMEDIATE;
    }
    let k = IntegerClass::of(x).jumps_to_cross();
    let (mut tau, mut area, mut level) = (0.0, 0.0, x);
    for _ in 0..k {
        let e = exp(rng, theta);
        tau += e;
        area += level * e;
        level -= 1.0;
    }
    PathStat {
        tau,
        area,
        crossed_between_jumps: false,
    }
}

/// `X(t) = x - mu t - N_t`, exact: linear descent between exponential jump
/// times with the zero crossing solved in closed form.
pub fn sample_drift(x: f64, mu: f64, theta: f64, rng: &mut PathRng) -> PathStat {
    drift_from_gaps(x, mu, || exp(rng, theta))
}

fn drift_from_gaps(x: f64, mu: f64, mut gap: impl FnMut() -> f64) -> PathStat {
    if x <= 0.0 {
        return PathStat::IMMEDIATE;
    }
    let (mut tau, mut area, mut level) = (0.0, 0.0, x);
    loop {
        let e = gap();
        if level <= mu * e {
            let t = level / mu;
            return PathStat {
                tau: tau + t,
                area: area + 0.5 * level * t,
                crossed_between_jumps: true,
            };
        }
        area += e * (level - 0.5 * mu * e);
        tau += e;
        level -= mu * e + 1.0;
        if level <= 0.0 {
            return PathStat {
                tau,
                area,
                crossed_between_jumps: false,
            };
        }
    }
}

/// Drift and pure-jump paths driven by the same jump times; pathwise the
/// drift path crosses no later and sweeps no more area.
pub fn sample_coupled(x: f64, mu: f64, theta: f64, rng: &mut PathRng) -> (PathStat, PathStat) {
    let k = if x <= 0.0 {
        0
    } else {
        IntegerClass::of(x).jumps_to_cross() as usize
    };
    let mut gaps = Vec::with_capacity(k);
    let drift = drift_from_gaps(x, mu, || {
        let e = exp(rng, theta);
        gaps.push(e);
        e
    });
    while gaps.len() < k {
        gaps.push(exp(rng, theta));
    }
    let mut poisson = PathStat::IMMEDIATE;
    let mut level = x;
    for &e in &gaps[..k] {
        poisson.tau += e;
        poisson.area += level * e;
        level -= 1.0;
    }
    (drift, poisson)
}

/// Euler scheme options for [`sample_bm`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BmScheme {
    pub h: f64,
    pub bridge: bool,
}

impl BmScheme {
    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0) || !self.h.is_finite() {
            return Err(FpaError::invalid(format!("h must be > 0, got {}", self.h)));
        }
        if self.h > MAX_BM_STEP {
            return Err(FpaError::StepTooLarge {
                h: self.h,
                max: MAX_BM_STEP,
            });
        }
        Ok(())
    }
}

/// `X(t) = x - mu t + sigma B_t - N_t` on a grid of step `h`, shortened to
/// land on each jump time. Area by trapezoids, with a linear crossing time
/// and triangle on the last step. With `bridge`, a step that ends above zero
/// still crosses with probability `exp(-2 x0 x1 / (sigma^2 dt))`; the
/// crossing is then placed mid-step.
pub fn sample_bm(x: f64, mu: f64, sigma: f64, theta: f64, scheme: BmScheme, rng: &mut PathRng) -> PathStat {
    if x <= 0.0 {
        return PathStat::IMMEDIATE;
    }
    let h = scheme.h;
    let bridge_scale = -2.0 / (sigma * sigma);
    let (mut t, mut area, mut level) = (0.0f64, 0.0f64, x);
    let mut to_jump = exp(rng, theta);
    loop {
        let jump = to_jump <= h;
        let dt = if jump { to_jump } else { h };
        let z: f64 = rng.sample(StandardNormal);
        let u: f64 = rng.random();
        let next = level - mu * dt + sigma * dt.sqrt() * z;
        if next <= 0.0 {
            let frac = level / (level - next);
            return PathStat {
                tau: t + frac * dt,
                area: area + 0.5 * level * frac * dt,
                crossed_between_jumps: true,
            };
        }
        if scheme.bridge && u < (bridge_scale * level * next / dt).exp() {
            return PathStat {
                tau: t + 0.5 * dt,
                area: area + 0.25 * level * dt,
                crossed_between_jumps: true,
            };
        }
        area += 0.5 * (level + next) * dt;
        t += dt;
        level = next;
        if jump {
            level -= 1.0;
            if level <= 0.0 {
                return PathStat {
                    tau: t,
                    area,
                    crossed_between_jumps: false,
                };
            }
            to_jump = exp(rng, theta);
        } else {
            to_jump -= h;
        }
    }
}

/// One sampled trajectory as `(t, X(t))` points, for plotting. Jump times
/// appear twice (before and after the jump); BM paths are recorded on the
/// grid. Stops at the first passage or at `t_max`.
pub fn trajectory(
    x: f64,
    mu: f64,
    sigma: f64,
    theta: f64,
    h: f64,
    t_max: f64,
    rng: &mut PathRng,
) -> Vec<(f64, f64)> {
    let mut pts = vec![(0.0, x)];
    if x <= 0.0 {
        return pts;
    }
    let (mut t, mut level) = (0.0f64, x);
    let mut to_jump = exp(rng, theta);
    while t < t_max {
        if sigma > 0.0 {
            let jump = to_jump <= h;
            let dt = if jump { to_jump } else { h };
            let z: f64 = rng.sample(StandardNormal);
            let next = level - mu * dt + sigma * dt.sqrt() * z;
            if next <= 0.0 {
                let frac = level / (level - next);
                pts.push((t + frac * dt, 0.0));
                return pts;
            }
            t += dt;
            level = next;
            pts.push((t, level));
            if jump {
                level -= 1.0;
                pts.push((t, level));
                if level <= 0.0 {
                    return pts;
                }
                to_jump = exp(rng, theta);
            } else {
                to_jump -= h;
            }
        } else {
            let e = to_jump;
            if mu > 0.0 && level <= mu * e {
                pts.push((t + level / mu, 0.0));
                return pts;
            }
            t += e;
            level -= mu * e;
            pts.push((t, level));
            level -= 1.0;
            pts.push((t, level));
            if level <= 0.0 {
                return pts;
            }
            to_jump = exp(rng, theta);
        }
    }
    pts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poisson_single_level_area_equals_tau() {
        for i in 0..100 {
            let p = sample_poisson(1.0, 1.0, &mut path_rng(7, i));
            assert_eq!(p.area, p.tau);
            assert!(p.tau > 0.0);
        }
    }

    #[test]
    fn nonpositive_start_is_immediate() {
        let mut rng = path_rng(0, 0);
        assert_eq!(sample_poisson(0.0, 1.0, &mut rng), PathStat::IMMEDIATE);
        assert_eq!(sample_drift(-1.0, 1.0, 1.0, &mut rng), PathStat::IMMEDIATE);
        let s = BmScheme {
            h: 1e-3,
            bridge: true,
        };
        assert_eq!(sample_bm(0.0, 1.0, 1.0, 1.0, s, &mut rng), PathStat::IMMEDIATE);
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a = sample_poisson(2.5, 1.0, &mut path_rng(42, 3));
        let b = sample_poisson(2.5, 1.0, &mut path_rng(42, 3));
        let c = sample_poisson(2.5, 1.0, &mut path_rng(42, 4));
        let d = sample_poisson(2.5, 1.0, &mut path_rng(43, 3));
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn coupled_paths_are_ordered() {
        for i in 0..20_000 {
            let x = 0.25 + (i % 40) as f64 * 0.25;
            let (d, p) = sample_coupled(x, 0.7, 1.3, &mut path_rng(11, i));
            assert!(d.tau <= p.tau, "x={x}: {d:?} {p:?}");
            assert!(d.area <= p.area + 1e-12);
            assert!(d.area >= 0.0);
        }
    }

    #[test]
    fn bm_bridge_never_crosses_later() {
        let on = BmScheme {
            h: 1e-2,
            bridge: true,
        };
        let off = BmScheme {
            h: 1e-2,
            bridge: false,
        };
        for i in 0..5_000 {
            let a = sample_bm(1.3, 1.0, 1.0, 1.0, on, &mut path_rng(5, i));
            let b = sample_bm(1.3, 1.0, 1.0, 1.0, off, &mut path_rng(5, i));
            assert!(a.tau <= b.tau);
        }
    }

    #[test]
    fn bm_scheme_validation() {
        assert!(BmScheme {
            h: 0.05,
            bridge: true
        }
        .validate()
        .is_ok());
        assert!(matches!(
            BmScheme { h: 0.2, bridge: true }.validate(),
            Err(FpaError::StepTooLarge { .. })
        ));
        assert!(BmScheme {
            h: 0.0,
            bridge: false
        }
        .validate()
        .is_err());
    }

    #[test]
    fn trajectories_end_at_or_below_zero() {
        for (mu, sigma) in [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0)] {
            let pts = trajectory(3.2, mu, sigma, 1.0, 1e-2, 1e6, &mut path_rng(1, 0));
            let last = pts.last().unwrap();
            assert!(last.1 <= 0.0, "{mu} {sigma}: {last:?}");
            assert!(pts.windows(2).all(|w| w[1].0 >= w[0].0));
        }
    }
}
