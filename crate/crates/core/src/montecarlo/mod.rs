//! Monte Carlo oracle for first-passage functionals.
//!
//! Paths are split into a fixed set of blocks that depends only on the path
//! count. Each path draws from its own stream keyed by `(seed, index)`, blocks
//! run in parallel, and block accumulators are merged by a balanced tree, so
//! results are bit-identical for any worker count.

mod accum;
mod samplers;

pub use accum::{tree_reduce, CoMoments, Moments};
pub use samplers::{
    path_rng, sample_bm, sample_coupled, sample_drift, sample_poisson, trajectory, BmScheme, PathRng,
    PathStat, MAX_BM_STEP,
};

use std::ops::Range;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{FpaError, Result};
use crate::params::{check_lambda, ModelKind, ProcessParams};

/// Upper bound on the number of accumulation blocks.
pub const MAX_BLOCKS: u64 = 64;
pub const DEFAULT_PATHS: u64 = 1_000_000;
pub const DEFAULT_STEP: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub paths: u64,
    pub seed: u64,
    /// Euler step, BM model only.
    pub h: f64,
    /// Brownian-bridge crossing correction, BM model only.
    pub bridge: bool,
    pub workers: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            paths: DEFAULT_PATHS,
            seed: 0,
            h: DEFAULT_STEP,
            bridge: true,
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

impl SimConfig {
    pub fn new(paths: u64, seed: u64) -> Self {
        SimConfig {
            paths,
            seed,
            ..Default::default()
        }
    }

    pub fn with_step(self, h: f64, bridge: bool) -> Self {
        SimConfig { h, bridge, ..self }
    }

    pub fn with_workers(self, workers: usize) -> Self {
        SimConfig { workers, ..self }
    }

    fn validate(&self, kind: ModelKind) -> Result<()> {
        if self.paths == 0 {
            return Err(FpaError::invalid("paths must be >= 1"));
        }
        if self.workers == 0 {
            return Err(FpaError::invalid("workers must be >= 1"));
        }
        if kind == ModelKind::BmJump {
            BmScheme {
                h: self.h,
                bridge: self.bridge,
            }
            .validate()?;
        }
        Ok(())
    }

    fn blocks(&self) -> Vec<Range<u64>> {
        let b = self.paths.min(MAX_BLOCKS);
        (0..b)
            .map(|i| (i * self.paths / b)..((i + 1) * self.paths / b))
            .collect()
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| FpaError::invalid(format!("thread pool: {e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PathVar {
    Tau,
    Area,
}

impl PathVar {
    pub fn of(self, p: &PathStat) -> f64 {
        match self {
            PathVar::Tau => p.tau,
            PathVar::Area => p.area,
        }
    }
}

/// Per-path quantity whose mean is estimated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Functional {
    /// `tau^m A^n`.
    Moment { m: u32, n: u32 },
    /// `exp(-lambda1 tau - lambda2 A)`.
    Laplace { lambda1: f64, lambda2: f64 },
    /// `A exp(-lambda1 tau)`.
    WeightedArea { lambda1: f64 },
    /// `A / tau`.
    TimeAverage,
    /// Indicator of `lo <= var < hi`.
    HistogramBin { var: PathVar, lo: f64, hi: f64 },
}

impl Functional {
    pub fn eval(&self, p: &PathStat) -> f64 {
        match *self {
            Functional::Moment { m, n } => p.tau.powi(m as i32) * p.area.powi(n as i32),
            Functional::Laplace { lambda1, lambda2 } => {
                if lambda1 == 0.0 && lambda2 == 0.0 {
                    1.0
                } else {
                    (-lambda1 * p.tau - lambda2 * p.area).exp()
                }
            }
            Functional::WeightedArea { lambda1 } => p.area * (-lambda1 * p.tau).exp(),
            Functional::TimeAverage => p.area / p.tau,
            Functional::HistogramBin { var, lo, hi } => {
                let v = var.of(p);
                if v >= lo && v < hi {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    fn validate(&self, params: &ProcessParams) -> Result<()> {
        match *self {
            Functional::Laplace { lambda1, lambda2 } => {
                check_lambda("lambda1", lambda1)?;
                check_lambda("lambda2", lambda2)
            }
            Functional::WeightedArea { lambda1 } => check_lambda("lambda1", lambda1),
            Functional::TimeAverage if params.x <= 0.0 => Err(FpaError::invalid("time average needs x > 0")),
            Functional::HistogramBin { lo, hi, .. } if !(lo < hi) => {
                Err(FpaError::invalid("histogram bin needs lo < hi"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimEstimate {
    pub value: f64,
    pub stderr: f64,
    pub n: u64,
    pub seed: u64,
    pub model: ModelKind,
}

impl SimEstimate {
    fn from_moments(m: &Moments, seed: u64, model: ModelKind) -> Self {
        SimEstimate {
            value: m.mean,
            stderr: m.stderr(),
            n: m.n,
            seed,
            model,
        }
    }

    /// `(value - reference) / stderr`; zero when both agree exactly.
    pub fn z_score(&self, reference: f64) -> f64 {
        let d = self.value - reference;
        if d == 0.0 {
            0.0
        } else {
            d / self.stderr
        }
    }
}

/// Path sampler for one parameter set.
#[derive(Debug, Clone, Copy)]
struct Sampler {
    params: ProcessParams,
    kind: ModelKind,
    scheme: BmScheme,
    seed: u64,
}

impl Sampler {
    fn new(params: &ProcessParams, config: &SimConfig) -> Result<Self> {
        params.validate()?;
        let kind = params.kind();
        config.validate(kind)?;
        Ok(Sampler {
            params: *params,
            kind,
            scheme: BmScheme {
                h: config.h,
                bridge: config.bridge,
            },
            seed: config.seed,
        })
    }

    fn sample(&self, index: u64) -> PathStat {
        let p = &self.params;
        let mut rng = path_rng(self.seed, index);
        match self.kind {
            ModelKind::Poisson => sample_poisson(p.x, p.theta, &mut rng),
            ModelKind::PoissonDrift => sample_drift(p.x, p.mu, p.theta, &mut rng),
            ModelKind::BmJump => sample_bm(p.x, p.mu, p.sigma, p.theta, self.scheme, &mut rng),
        }
    }
}

/// Run `f` over every block in parallel and return the results in block order.
fn map_blocks<T, F>(config: &SimConfig, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(Range<u64>) -> T + Sync,
{
    let blocks = config.blocks();
    let pool = config.pool()?;
    Ok(pool.install(|| blocks.into_par_iter().map(&f).collect()))
}

pub fn estimate(params: &ProcessParams, functional: Functional, config: &SimConfig) -> Result<SimEstimate> {
    Ok(estimate_many(params, &[functional], config)?.remove(0))
}

/// Several functionals from one set of paths.
pub fn estimate_many(
    params: &ProcessParams,
    functionals: &[Functional],
    config: &SimConfig,
) -> Result<Vec<SimEstimate>> {
    let sampler = Sampler::new(params, config)?;
    for f in functionals {
        f.validate(params)?;
    }
    let blocks = map_blocks(config, |range| {
        let mut acc = vec![Moments::default(); functionals.len()];
        for i in range {
            let p = sampler.sample(i);
            for (a, f) in acc.iter_mut().zip(functionals) {
                a.push(f.eval(&p));
            }
        }
        acc
    })?;
    Ok((0..functionals.len())
        .map(|k| {
            let per_block: Vec<Moments> = blocks.iter().map(|b| b[k]).collect();
            let m = tree_reduce(&per_block, &|a, b| a.merge(b)).unwrap_or_default();
            SimEstimate::from_moments(&m, config.seed, sampler.kind)
        })
        .collect())
}

/// Means, cross moment, covariance and correlation of `(tau, A)`. Standard
/// errors for covariance and correlation come from batch means over blocks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JointSimStats {
    pub tau_mean: SimEstimate,
    pub area_mean: SimEstimate,
    pub cross: SimEstimate,
    pub covariance: SimEstimate,
    pub correlation: SimEstimate,
}

pub fn estimate_joint_stats(params: &ProcessParams, config: &SimConfig) -> Result<JointSimStats> {
    let sampler = Sampler::new(params, config)?;
    let blocks = map_blocks(config, |range| {
        let mut co = CoMoments::default();
        let mut cross = Moments::default();
        for i in range {
            let p = sampler.sample(i);
            co.push(p.tau, p.area);
            cross.push(p.tau * p.area);
        }
        (co, cross)
    })?;
    let all = tree_reduce(&blocks, &|a, b| (a.0.merge(&b.0), a.1.merge(&b.1))).unwrap_or_default();
    let batch = |f: &dyn Fn(&CoMoments) -> f64, full: f64| {
        let mut m = Moments::default();
        blocks.iter().for_each(|(c, _)| m.push(f(c)));
        SimEstimate {
            value: full,
            stderr: m.stderr(),
            n: all.0.x.n,
            seed: config.seed,
            model: sampler.kind,
        }
    };
    let (seed, kind) = (config.seed, sampler.kind);
    Ok(JointSimStats {
        tau_mean: SimEstimate::from_moments(&all.0.x, seed, kind),
        area_mean: SimEstimate::from_moments(&all.0.y, seed, kind),
        cross: SimEstimate::from_moments(&all.1, seed, kind),
        covariance: batch(&|c| c.covariance(), all.0.covariance()),
        correlation: batch(&|c| c.correlation(), all.0.correlation()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistBin {
    pub lo: f64,
    pub hi: f64,
    pub density: f64,
    pub stderr: f64,
}

/// Density histogram of `tau` or `A` over `bins` equal cells of `[lo, hi)`.
pub fn histogram(
    params: &ProcessParams,
    var: PathVar,
    lo: f64,
    hi: f64,
    bins: usize,
    config: &SimConfig,
) -> Result<Vec<HistBin>> {
    if !(lo < hi) || bins == 0 {
        return Err(FpaError::invalid("histogram needs lo < hi and bins >= 1"));
    }
    let sampler = Sampler::new(params, config)?;
    let width = (hi - lo) / bins as f64;
    let blocks = map_blocks(config, |range| {
        let mut counts = vec![0u64; bins];
        for i in range {
            let v = var.of(&sampler.sample(i));
            if v >= lo && v < hi {
                let k = (((v - lo) / width) as usize).min(bins - 1);
                counts[k] += 1;
            }
        }
        counts
    })?;
    let n = config.paths as f64;
    Ok((0..bins)
        .map(|k| {
            let c: u64 = blocks.iter().map(|b| b[k]).sum();
            let p = c as f64 / n;
            HistBin {
                lo: lo + k as f64 * width,
                hi: lo + (k + 1) as f64 * width,
                density: p / width,
                stderr: (p * (1.0 - p) / n).sqrt() / width,
            }
        })
        .collect())
}

/// Every sampled path, in index order.
pub fn simulate_paths(params: &ProcessParams, config: &SimConfig) -> Result<Vec<PathStat>> {
    let sampler = Sampler::new(params, config)?;
    let blocks = map_blocks(config, |range| {
        range.map(|i| sampler.sample(i)).collect::<Vec<_>>()
    })?;
    Ok(blocks.concat())
}
