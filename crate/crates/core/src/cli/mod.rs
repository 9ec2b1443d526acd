//! The `levy-fpa` command line: scalar or swept evaluations, simulation,
//! analytic-versus-simulated comparison, the printed-form audit and figure
//! data, written as CSV or JSON records.
//!
//! Exit codes: 0 on success, 2 on invalid input, 3 on a consistency failure
//! (a mean outside its Wald bounds, or `|z| > 4` in `compare`).

mod args;
mod commands;
mod figures;
mod record;

pub use args::{Digits, Format, ModelArg, ModelArgs, OutputArgs, SimArgs, Sweep};
pub use commands::{analytic, resolve_model, z_score, Inputs, Outcome, Quantity, Z_FAIL};
pub use record::{format_number, read_csv, read_json, write_records, ResultRecord, Source, CSV_HEADER};

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};

use clap::{Args, Parser, Subcommand};

use crate::error::FpaError;
use crate::montecarlo::SimConfig;
use crate::steps::DEFAULT_AREA_STEP;
use commands::InputArgs;
use figures::{FigureSettings, FIGURES};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "levy-fpa",
    version,
    about = "First-passage time and area of x - mu t + sigma B_t - N_t"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// E[exp(-lambda tau)].
    LaplaceTau {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, allow_hyphen_values = true)]
        lambda: Sweep,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// E[exp(-lambda A)]; closed form (poisson) or Euler grid (drift).
    LaplaceArea {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, allow_hyphen_values = true)]
        lambda: Sweep,
        /// Grid step of the drift solver.
        #[arg(long, default_value_t = DEFAULT_AREA_STEP)]
        h: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// E[exp(-lambda1 tau - lambda2 A)], or E[A exp(-lambda1 tau)] with --weighted.
    JointLaplace {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, allow_hyphen_values = true)]
        lambda1: Sweep,
        #[arg(long, allow_hyphen_values = true)]
        lambda2: Option<Sweep>,
        #[arg(long)]
        weighted: bool,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Means, second moments and the tau-A dependence available for the model.
    Moments {
        #[command(flatten)]
        model: ModelArgs,
        /// Grid step of the drift area mean.
        #[arg(long, default_value_t = DEFAULT_AREA_STEP)]
        h: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// E[tau^m A^n] for the poisson model.
    JointMoment {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        m: u32,
        #[arg(long)]
        n: u32,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// E[A / tau] for the poisson model.
    TimeAverage {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Wald bounds on E[tau] with the model's mean.
    Bounds {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Monte Carlo estimates.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        /// Quantities to estimate; defaults to the means, cross moment,
        /// covariance and correlation.
        #[arg(long, value_enum, value_delimiter = ',')]
        quantity: Vec<Quantity>,
        #[command(flatten)]
        inputs: InputArgs,
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Analytic value against simulation, with z-scores.
    Compare {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_enum)]
        quantity: Quantity,
        #[command(flatten)]
        inputs: InputArgs,
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Checks the printed piecewise forms against their equations, knots and the solver.
    AuditPaperForms {
        #[arg(long, default_value_t = 1.0)]
        mu: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long, default_value_t = 1.0)]
        theta: f64,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Curve data for figure 1..=9.
    Figure(FigureArgs),
}

#[derive(Debug, Args)]
pub struct FigureArgs {
    #[arg(value_parser = clap::value_parser!(u8).range(*FIGURES.start() as i64..=*FIGURES.end() as i64))]
    pub number: u8,
    /// Transform grid, replacing the figure's default.
    #[arg(long, allow_hyphen_values = true)]
    pub lambda: Option<Sweep>,
    /// Paths behind the simulated histograms of figure 4.
    #[arg(long, default_value_t = 100_000)]
    pub paths: u64,
    #[arg(long, env = "FPA_DEFAULT_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Step of the BM sample path in figure 1.
    #[arg(long, default_value_t = 1e-2)]
    pub h: f64,
    #[arg(long)]
    pub workers: Option<usize>,
    #[command(flatten)]
    pub output: OutputArgs,
}

fn execute(command: Command) -> Result<(Outcome, OutputArgs), FpaError> {
    Ok(match command {
        Command::LaplaceTau {
            model,
            lambda,
            output,
        } => {
            let grid = commands::parameter_grid(&model)?;
            let inputs = one_input(&lambda);
            (
                commands::evaluate(Quantity::LtTau, &grid, &inputs, DEFAULT_AREA_STEP)?,
                output,
            )
        }
        Command::LaplaceArea {
            model,
            lambda,
            h,
            output,
        } => {
            let grid = commands::parameter_grid(&model)?;
            let inputs = one_input(&lambda);
            (commands::evaluate(Quantity::LtArea, &grid, &inputs, h)?, output)
        }
        Command::JointLaplace {
            model,
            lambda1,
            lambda2,
            weighted,
            output,
        } => {
            let grid = commands::parameter_grid(&model)?;
            let (q, inputs) = if weighted {
                if lambda2.is_some() {
                    return Err(FpaError::InvalidParams("--weighted takes --lambda1 only".into()));
                }
                (Quantity::WeightedArea, one_input(&lambda1))
            } else {
                let l2 = lambda2.ok_or_else(|| FpaError::InvalidParams("missing --lambda2".into()))?;
                let inputs = lambda1
                    .values()
                    .iter()
                    .flat_map(|&a| {
                        l2.values().iter().map(move |&b| Inputs {
                            input1: Some(a),
                            input2: Some(b),
                        })
                    })
                    .collect();
                (Quantity::JointLt, inputs)
            };
            (commands::evaluate(q, &grid, &inputs, DEFAULT_AREA_STEP)?, output)
        }
        Command::Moments { model, h, output } => {
            (commands::moments(&commands::parameter_grid(&model)?, h)?, output)
        }
        Command::JointMoment { model, m, n, output } => {
            let grid = commands::parameter_grid(&model)?;
            let inputs = [Inputs {
                input1: Some(m as f64),
                input2: Some(n as f64),
            }];
            (
                commands::evaluate(Quantity::JointMoment, &grid, &inputs, DEFAULT_AREA_STEP)?,
                output,
            )
        }
        Command::TimeAverage { model, output } => {
            let grid = commands::parameter_grid(&model)?;
            let none = [Inputs {
                input1: None,
                input2: None,
            }];
            (
                commands::evaluate(Quantity::TimeAverage, &grid, &none, DEFAULT_AREA_STEP)?,
                output,
            )
        }
        Command::Bounds { model, output } => (commands::bounds(&commands::parameter_grid(&model)?)?, output),
        Command::Simulate {
            model,
            quantity,
            inputs,
            sim,
            output,
        } => {
            let grid = commands::parameter_grid(&model)?;
            let qs = if quantity.is_empty() {
                commands::SIMULATE_DEFAULT.to_vec()
            } else {
                quantity
            };
            (commands::simulate(&qs, &grid, &inputs, &sim)?, output)
        }
        Command::Compare {
            model,
            quantity,
            inputs,
            sim,
            output,
        } => {
            let grid = commands::parameter_grid(&model)?;
            (commands::compare(quantity, &grid, &inputs, &sim)?, output)
        }
        Command::AuditPaperForms {
            mu,
            sigma,
            theta,
            lambda,
            output,
        } => (commands::audit(mu, sigma, theta, lambda)?, output),
        Command::Figure(f) => {
            let base = SimConfig::new(f.paths, f.seed);
            let config = match f.workers {
                Some(w) => base.with_workers(w),
                None => base,
            };
            let settings = FigureSettings {
                lambda: f.lambda,
                config,
                path_step: f.h,
            };
            (figures::figure(f.number, &settings)?, f.output)
        }
    })
}

fn one_input(s: &Sweep) -> Vec<Inputs> {
    s.values()
        .iter()
        .map(|&v| Inputs {
            input1: Some(v),
            input2: None,
        })
        .collect()
}

fn emit(outcome: &Outcome, output: &OutputArgs, out: &mut dyn Write) -> std::io::Result<()> {
    match &output.output {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            write_records(&outcome.records, output.format, output.digits, true, &mut w)?;
            w.flush()
        }
        None => write_records(&outcome.records, output.format, output.digits, false, out),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code. Records go to `out` or the `--output` file; diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                EXIT_INVALID
            } else {
                let _ = write!(out, "{text}");
                EXIT_OK
            };
        }
    };
    let (outcome, output) = match execute(cli.command) {
        Ok(v) => v,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return if e.is_internal() {
                EXIT_INTERNAL
            } else {
                EXIT_INVALID
            };
        }
    };
    if let Err(e) = emit(&outcome, &output, out) {
        let _ = writeln!(err, "error: writing output: {e}");
        return EXIT_INVALID;
    }
    for line in &outcome.notes {
        let _ = writeln!(err, "{line}");
    }
    for line in &outcome.failures {
        let _ = writeln!(err, "FAIL {line}");
    }
    if outcome.failures.is_empty() {
        EXIT_OK
    } else {
        EXIT_INTERNAL
    }
}
