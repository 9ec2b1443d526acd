//! Subcommand implementations. Each returns its records in a deterministic
//! order together with any consistency failures.

use clap::ValueEnum;

use super::args::{ModelArgs, SimArgs, Sweep};
use super::record::{ResultRecord, Source};
use crate::error::{FpaError, Result};
use crate::joint_moments::{joint_moment, MomentOrder};
use crate::montecarlo::{self, Functional, SimConfig, SimEstimate};
use crate::params::{ModelKind, ProcessParams};
use crate::{poisson, steps};

/// `|z|` above which `compare` reports a failure.
pub const Z_FAIL: f64 = 4.0;
/// Relative floor on the standard error used for z-scores, so that an exact
/// simulated value (zero spread) compares by relative difference.
const STDERR_FLOOR: f64 = 1e-9;

/// Records and failures produced by one command.
#[derive(Debug, Default)]
pub struct Outcome {
    pub records: Vec<ResultRecord>,
    /// Consistency failures; any entry turns the exit code to 3.
    pub failures: Vec<String>,
    /// Informational lines for standard error.
    pub notes: Vec<String>,
}

impl Outcome {
    pub fn from_records(records: Vec<ResultRecord>) -> Self {
        Outcome {
            records,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Quantity {
    TauMean,
    TauSecond,
    TauVariance,
    AreaMean,
    AreaSecond,
    AreaVariance,
    CrossMoment,
    JointMoment,
    Covariance,
    Correlation,
    LtTau,
    LtArea,
    JointLt,
    WeightedArea,
    TimeAverage,
}

impl Quantity {
    pub fn name(self) -> &'static str {
        match self {
            Quantity::TauMean => "tau-mean",
            Quantity::TauSecond => "tau-second",
            Quantity::TauVariance => "tau-variance",
            Quantity::AreaMean => "area-mean",
            Quantity::AreaSecond => "area-second",
            Quantity::AreaVariance => "area-variance",
            Quantity::CrossMoment => "cross-moment",
            Quantity::JointMoment => "joint-moment",
            Quantity::Covariance => "covariance",
            Quantity::Correlation => "correlation",
            Quantity::LtTau => "lt-tau",
            Quantity::LtArea => "lt-area",
            Quantity::JointLt => "joint-lt",
            Quantity::WeightedArea => "weighted-area",
            Quantity::TimeAverage => "time-average",
        }
    }
}

/// Inputs of one evaluation, as recorded in `input1` and `input2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inputs {
    pub input1: Option<f64>,
    pub input2: Option<f64>,
}

impl Inputs {
    const NONE: Inputs = Inputs {
        input1: None,
        input2: None,
    };

    fn first(&self, name: &str) -> Result<f64> {
        self.input1
            .ok_or_else(|| FpaError::invalid(format!("missing --{name}")))
    }

    fn second(&self, name: &str) -> Result<f64> {
        self.input2
            .ok_or_else(|| FpaError::invalid(format!("missing --{name}")))
    }

    fn order(&self) -> Result<MomentOrder> {
        let m = self.first("m")?;
        let n = self.second("n")?;
        Ok(MomentOrder::new(m as u32, n as u32))
    }
}

/// Transform and moment inputs shared by `simulate` and `compare`.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct InputArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub lambda: Option<Sweep>,
    #[arg(long, allow_hyphen_values = true)]
    pub lambda1: Option<Sweep>,
    #[arg(long, allow_hyphen_values = true)]
    pub lambda2: Option<Sweep>,
    #[arg(long)]
    pub m: Option<u32>,
    #[arg(long)]
    pub n: Option<u32>,
}

fn required<'a>(s: &'a Option<Sweep>, name: &str, q: Quantity) -> Result<&'a [f64]> {
    s.as_ref()
        .map(|s| s.values())
        .ok_or_else(|| FpaError::invalid(format!("{} needs --{name}", q.name())))
}

impl InputArgs {
    /// Every input combination the quantity needs, in sweep order.
    pub fn expand(&self, q: Quantity) -> Result<Vec<Inputs>> {
        let one = |v: f64| Inputs {
            input1: Some(v),
            input2: None,
        };
        Ok(match q {
            Quantity::LtTau | Quantity::LtArea => required(&self.lambda, "lambda", q)?
                .iter()
                .map(|&l| one(l))
                .collect(),
            Quantity::WeightedArea => required(&self.lambda1, "lambda1", q)?
                .iter()
                .map(|&l| one(l))
                .collect(),
            Quantity::JointLt => {
                let l1 = required(&self.lambda1, "lambda1", q)?;
                let l2 = required(&self.lambda2, "lambda2", q)?;
                l1.iter()
                    .flat_map(|&a| {
                        l2.iter().map(move |&b| Inputs {
                            input1: Some(a),
                            input2: Some(b),
                        })
                    })
                    .collect()
            }
            Quantity::JointMoment => {
                let (m, n) = match (self.m, self.n) {
                    (Some(m), Some(n)) => (m, n),
                    _ => return Err(FpaError::invalid("joint-moment needs --m and --n")),
                };
                vec![Inputs {
                    input1: Some(m as f64),
                    input2: Some(n as f64),
                }]
            }
            _ => vec![Inputs::NONE],
        })
    }
}

/// Cartesian product of the parameter sweeps, `x` outermost, each with its
/// model kind checked against `--model`.
pub fn parameter_grid(args: &ModelArgs) -> Result<Vec<(ModelKind, ProcessParams)>> {
    let mut out = Vec::new();
    for &x in args.x.values() {
        for &mu in args.mu.values() {
            for &sigma in args.sigma.values() {
                for &theta in args.theta.values() {
                    let p = ProcessParams::new(x, mu, sigma, theta)?;
                    out.push((resolve_model(args.model.map(Into::into), &p)?, p));
                }
            }
        }
    }
    Ok(out)
}

pub fn resolve_model(requested: Option<ModelKind>, p: &ProcessParams) -> Result<ModelKind> {
    let kind = p.kind();
    match requested {
        Some(want) if want != kind => Err(FpaError::invalid(format!(
            "--model {want} does not match mu = {}, sigma = {} ({kind}); \
             poisson needs mu = sigma = 0, drift needs mu > 0 and sigma = 0, bm needs sigma > 0",
            p.mu, p.sigma
        ))),
        _ => Ok(kind),
    }
}

fn unsupported(q: Quantity, kind: ModelKind) -> FpaError {
    FpaError::invalid(format!("no analytic {} for the {kind} model", q.name()))
}

/// Closed-form, method-of-steps or grid value of `q`. `h` is the grid step
/// of the drift area solver.
pub fn analytic(
    q: Quantity,
    kind: ModelKind,
    p: &ProcessParams,
    inputs: Inputs,
    h: f64,
) -> Result<(f64, Source)> {
    let ProcessParams { x, mu, sigma, theta } = *p;
    let exact = |v: f64| Ok((v, Source::Analytic));
    match kind {
        ModelKind::Poisson => match q {
            Quantity::TauMean => exact(poisson::tau_moments(x, theta)?.mean),
            Quantity::TauSecond => exact(poisson::tau_moments(x, theta)?.second),
            Quantity::TauVariance => exact(poisson::tau_moments(x, theta)?.variance),
            Quantity::AreaMean => exact(poisson::area_moments(x, theta)?.mean),
            Quantity::AreaSecond => exact(poisson::area_moments(x, theta)?.second),
            Quantity::AreaVariance => exact(poisson::area_moments(x, theta)?.variance),
            Quantity::CrossMoment => exact(poisson::joint_stats(x, theta)?.cross),
            Quantity::Covariance => exact(poisson::joint_stats(x, theta)?.covariance),
            Quantity::Correlation => exact(poisson::joint_stats(x, theta)?.correlation),
            Quantity::JointMoment => exact(joint_moment(inputs.order()?, x, theta)?),
            Quantity::LtTau => exact(poisson::lt_tau(x, theta, inputs.first("lambda")?)?),
            Quantity::LtArea => exact(poisson::lt_area(x, theta, inputs.first("lambda")?)?),
            Quantity::JointLt => exact(poisson::joint_lt(
                x,
                theta,
                inputs.first("lambda1")?,
                inputs.second("lambda2")?,
            )?),
            Quantity::WeightedArea => exact(poisson::weighted_area_lt(x, theta, inputs.first("lambda1")?)?),
            Quantity::TimeAverage => exact(poisson::expected_time_average(x)?),
        },
        ModelKind::PoissonDrift => match q {
            Quantity::TauMean => exact(steps::drift_tau_mean(x, mu, theta)?),
            Quantity::LtTau => exact(steps::drift_lt_tau(x, mu, theta, inputs.first("lambda")?)?),
            Quantity::AreaMean => Ok((steps::drift_area_mean(x, mu, theta, h)?, Source::Grid)),
            Quantity::LtArea => Ok((
                steps::drift_lt_area(x, mu, theta, inputs.first("lambda")?, h)?.endpoint(),
                Source::Grid,
            )),
            _ => Err(unsupported(q, kind)),
        },
        ModelKind::BmJump => match q {
            Quantity::TauMean => exact(steps::bm_tau_mean(x, mu, sigma, theta)?),
            Quantity::LtTau => exact(steps::bm_lt_tau(x, mu, sigma, theta, inputs.first("lambda")?)?),
            _ => Err(unsupported(q, kind)),
        },
    }
}

/// Analytic records of `q` over the parameter grid and inputs.
pub fn evaluate(
    q: Quantity,
    grid: &[(ModelKind, ProcessParams)],
    inputs: &[Inputs],
    h: f64,
) -> Result<Outcome> {
    let mut records = Vec::with_capacity(grid.len() * inputs.len());
    for (kind, p) in grid {
        for &i in inputs {
            let (v, source) = analytic(q, *kind, p, i, h)?;
            records.push(ResultRecord::new(*kind, p, q.name(), v, source).inputs(i.input1, i.input2));
        }
    }
    Ok(Outcome::from_records(records))
}

/// The quantities `moments` reports for each model.
pub fn moment_quantities(kind: ModelKind) -> &'static [Quantity] {
    match kind {
        ModelKind::Poisson => &[
            Quantity::TauMean,
            Quantity::TauSecond,
            Quantity::TauVariance,
            Quantity::AreaMean,
            Quantity::AreaSecond,
            Quantity::AreaVariance,
            Quantity::CrossMoment,
            Quantity::Covariance,
            Quantity::Correlation,
        ],
        ModelKind::PoissonDrift => &[Quantity::TauMean, Quantity::AreaMean],
        ModelKind::BmJump => &[Quantity::TauMean],
    }
}

pub fn moments(grid: &[(ModelKind, ProcessParams)], h: f64) -> Result<Outcome> {
    let mut records = Vec::new();
    for (kind, p) in grid {
        for &q in moment_quantities(*kind) {
            if p.x <= 0.0
                && matches!(
                    q,
                    Quantity::CrossMoment | Quantity::Covariance | Quantity::Correlation
                )
            {
                continue;
            }
            let (v, source) = analytic(q, *kind, p, Inputs::NONE, h)?;
            records.push(ResultRecord::new(*kind, p, q.name(), v, source));
        }
    }
    Ok(Outcome::from_records(records))
}

/// Wald bounds with the model's mean between them. A mean outside the
/// bounds is reported as a failure but still emitted.
pub fn bounds(grid: &[(ModelKind, ProcessParams)]) -> Result<Outcome> {
    let mut out = Outcome::default();
    for (kind, p) in grid {
        let (lo, hi) = steps::wald_bounds(p.x, p.mu, p.theta)?;
        let mean = match kind {
            ModelKind::Poisson => poisson::tau_moments(p.x, p.theta)?.mean,
            ModelKind::PoissonDrift => steps::drift_tau_mean(p.x, p.mu, p.theta)?,
            ModelKind::BmJump => steps::bm_tau_mean(p.x, p.mu, p.sigma, p.theta)?,
        };
        let ok = if p.x > 0.0 {
            mean >= lo * (1.0 - 1e-10) && mean < hi
        } else {
            mean == 0.0
        };
        if !ok {
            out.failures.push(format!(
                "{kind} x={} mu={} sigma={} theta={}: E[tau] = {mean} outside [{lo}, {hi})",
                p.x, p.mu, p.sigma, p.theta
            ));
        }
        for (name, v) in [("wald-lower", lo), ("tau-mean", mean), ("wald-upper", hi)] {
            out.records
                .push(ResultRecord::new(*kind, p, name, v, Source::Analytic));
        }
    }
    Ok(out)
}

/// Default quantities of `simulate`.
pub const SIMULATE_DEFAULT: [Quantity; 5] = [
    Quantity::TauMean,
    Quantity::AreaMean,
    Quantity::CrossMoment,
    Quantity::Covariance,
    Quantity::Correlation,
];

fn functional(q: Quantity, i: Inputs) -> Result<Functional> {
    let moment = |m, n| Ok(Functional::Moment { m, n });
    match q {
        Quantity::TauMean => moment(1, 0),
        Quantity::TauSecond => moment(2, 0),
        Quantity::AreaMean => moment(0, 1),
        Quantity::AreaSecond => moment(0, 2),
        Quantity::CrossMoment => moment(1, 1),
        Quantity::JointMoment => {
            let o = i.order()?;
            moment(o.m, o.n)
        }
        Quantity::LtTau => Ok(Functional::Laplace {
            lambda1: i.first("lambda")?,
            lambda2: 0.0,
        }),
        Quantity::LtArea => Ok(Functional::Laplace {
            lambda1: 0.0,
            lambda2: i.first("lambda")?,
        }),
        Quantity::JointLt => Ok(Functional::Laplace {
            lambda1: i.first("lambda1")?,
            lambda2: i.second("lambda2")?,
        }),
        Quantity::WeightedArea => Ok(Functional::WeightedArea {
            lambda1: i.first("lambda1")?,
        }),
        Quantity::TimeAverage => Ok(Functional::TimeAverage),
        Quantity::TauVariance | Quantity::AreaVariance | Quantity::Covariance | Quantity::Correlation => {
            unreachable!("second-order statistics are handled by simulate_one")
        }
    }
}

/// Monte Carlo estimates of `q` at one parameter set, one per input.
pub fn simulate_one(
    q: Quantity,
    p: &ProcessParams,
    inputs: &[Inputs],
    config: &SimConfig,
) -> Result<Vec<SimEstimate>> {
    match q {
        Quantity::Covariance | Quantity::Correlation | Quantity::TauVariance | Quantity::AreaVariance => {
            let s = montecarlo::estimate_joint_stats(p, config)?;
            let est = match q {
                Quantity::Covariance => s.covariance,
                Quantity::Correlation => s.correlation,
                Quantity::TauVariance => variance_estimate(p, 0, config)?,
                _ => variance_estimate(p, 1, config)?,
            };
            Ok(vec![est; inputs.len()])
        }
        _ => {
            let fs = inputs
                .iter()
                .map(|&i| functional(q, i))
                .collect::<Result<Vec<_>>>()?;
            montecarlo::estimate_many(p, &fs, config)
        }
    }
}

/// Sample variance of `tau` (`which = 0`) or `A`, with the delta-method
/// standard error from the first four moments.
fn variance_estimate(p: &ProcessParams, which: u32, config: &SimConfig) -> Result<SimEstimate> {
    let mono = |k| {
        if which == 0 {
            Functional::Moment { m: k, n: 0 }
        } else {
            Functional::Moment { m: 0, n: k }
        }
    };
    let e = montecarlo::estimate_many(p, &[mono(1), mono(2), mono(3), mono(4)], config)?;
    let (m1, m2, m3, m4) = (e[0].value, e[1].value, e[2].value, e[3].value);
    let var = m2 - m1 * m1;
    let mu4 = m4 - 4.0 * m3 * m1 + 6.0 * m2 * m1 * m1 - 3.0 * m1.powi(4);
    let n = e[0].n as f64;
    let stderr = ((mu4 - var * var).max(0.0) / n).sqrt();
    Ok(SimEstimate {
        value: var * n / (n - 1.0).max(1.0),
        stderr,
        ..e[0]
    })
}

pub fn simulate(
    quantities: &[Quantity],
    grid: &[(ModelKind, ProcessParams)],
    input_args: &InputArgs,
    sim: &SimArgs,
) -> Result<Outcome> {
    let config = sim.config();
    let mut records = Vec::new();
    for (kind, p) in grid {
        for &q in quantities {
            let inputs = input_args.expand(q)?;
            let ests = simulate_one(q, p, &inputs, &config)?;
            for (i, e) in inputs.iter().zip(ests) {
                records.push(
                    ResultRecord::new(*kind, p, q.name(), e.value, Source::Simulation)
                        .inputs(i.input1, i.input2)
                        .sampled(e.stderr, e.n, e.seed),
                );
            }
        }
    }
    Ok(Outcome::from_records(records))
}

/// z-score with the standard error floored relative to the reference.
pub fn z_score(est: &SimEstimate, reference: f64) -> f64 {
    let d = est.value - reference;
    if d == 0.0 {
        return 0.0;
    }
    d / est.stderr.max(STDERR_FLOOR * reference.abs().max(1.0))
}

/// Analytic value, simulated value and z-score per parameter set and input.
pub fn compare(
    q: Quantity,
    grid: &[(ModelKind, ProcessParams)],
    input_args: &InputArgs,
    sim: &SimArgs,
) -> Result<Outcome> {
    let config = sim.config();
    let inputs = input_args.expand(q)?;
    let mut out = Outcome::default();
    for (kind, p) in grid {
        let refs = inputs
            .iter()
            .map(|&i| analytic(q, *kind, p, i, sim.h))
            .collect::<Result<Vec<_>>>()?;
        let ests = simulate_one(q, p, &inputs, &config)?;
        for ((i, (a, source)), e) in inputs.iter().zip(refs).zip(ests) {
            let z = z_score(&e, a);
            let base = |name: &str, v: f64, s: Source| {
                ResultRecord::new(*kind, p, name, v, s).inputs(i.input1, i.input2)
            };
            out.records.push(base(q.name(), a, source));
            out.records
                .push(base(q.name(), e.value, Source::Simulation).sampled(e.stderr, e.n, e.seed));
            out.records
                .push(base(&format!("{}-z", q.name()), z, Source::Simulation).sampled(e.stderr, e.n, e.seed));
            let line = format!(
                "{kind} x={} mu={} sigma={} theta={} {}{}: analytic {a}, simulated {} +- {}, z = {z:.3}",
                p.x,
                p.mu,
                p.sigma,
                p.theta,
                q.name(),
                describe_inputs(i),
                e.value,
                e.stderr
            );
            if z.abs() > Z_FAIL {
                out.failures.push(line);
            } else {
                out.notes.push(line);
            }
        }
    }
    Ok(out)
}

fn describe_inputs(i: &Inputs) -> String {
    match (i.input1, i.input2) {
        (Some(a), Some(b)) => format!("({a}, {b})"),
        (Some(a), None) => format!("({a})"),
        _ => String::new(),
    }
}

/// Records for the printed-form audit and the solver's own residuals.
pub fn audit(mu: f64, sigma: f64, theta: f64, lambda: f64) -> Result<Outcome> {
    let report = steps::audit_paper_forms(mu, sigma, theta, lambda)?;
    let mut out = Outcome::default();
    for e in &report.entries {
        let (model, kind) = match e.form.split_once(' ') {
            Some(("drift", rest)) => (ModelKind::PoissonDrift, rest),
            Some((_, rest)) => (ModelKind::BmJump, rest),
            None => (ModelKind::BmJump, e.form.as_str()),
        };
        let kind = kind.split(' ').next().unwrap_or("lt");
        let p = ProcessParams {
            x: e.hi,
            mu,
            sigma: if model == ModelKind::BmJump { sigma } else { 0.0 },
            theta,
        };
        let flag = |b: bool| if b { 1.0 } else { 0.0 };
        let mut metrics = vec![("solver-deviation", e.solver_deviation)];
        if let Some(v) = e.ode_residual {
            metrics.push(("ode-residual", v));
        }
        if let Some(v) = e.knot_mismatch {
            metrics.push(("knot-mismatch", v));
        }
        if let Some(ok) = e.wald_ok {
            metrics.push(("wald-ok", flag(ok)));
        }
        metrics.push(("consistent", flag(e.consistent)));
        for (name, v) in metrics {
            out.records.push(
                ResultRecord::new(model, &p, &format!("audit-{kind}-{name}"), v, Source::Analytic)
                    .inputs(Some(e.lo), Some(e.hi)),
            );
        }
    }
    let drift = steps::drift_lt_solution(3.0, mu, theta, lambda)?;
    let bm = steps::bm_lt_solution(3.0, mu, sigma, theta, lambda)?;
    for (model, s, sg) in [
        (ModelKind::PoissonDrift, &drift, 0.0),
        (ModelKind::BmJump, &bm, sigma),
    ] {
        let p = ProcessParams {
            x: 3.0,
            mu,
            sigma: sg,
            theta,
        };
        let r = steps::ResidualReport::from(&**s);
        out.records.push(
            ResultRecord::new(model, &p, "solver-ode-residual", r.max_residual, Source::Analytic)
                .inputs(Some(lambda), None),
        );
        out.records.push(
            ResultRecord::new(
                model,
                &p,
                "solver-c0-mismatch",
                r.max_c0_mismatch,
                Source::Analytic,
            )
            .inputs(Some(lambda), None),
        );
    }
    let bad: Vec<_> = report.discrepancies().collect();
    out.notes.push(format!(
        "audit at mu={mu} sigma={sigma} theta={theta} lambda={lambda}: {} printed forms, {} inconsistent",
        report.entries.len(),
        bad.len()
    ));
    for e in bad {
        let mut parts = vec![format!("solver deviation {:.3e}", e.solver_deviation)];
        if let Some(v) = e.ode_residual {
            parts.push(format!("ode residual {v:.3e}"));
        }
        if let Some(v) = e.knot_mismatch {
            parts.push(format!("knot mismatch {v:.3e}"));
        }
        if e.wald_ok == Some(false) {
            parts.push("outside Wald bounds".to_string());
        }
        out.notes.push(format!("  {}: {}", e.form, parts.join(", ")));
    }
    Ok(out)
}
