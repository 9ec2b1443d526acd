//! Output records and their CSV and JSON encodings.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::args::{Digits, Format};
use crate::params::{ModelKind, ProcessParams};

pub const CSV_HEADER: [&str; 13] = [
    "model", "x", "mu", "sigma", "theta", "quantity", "input1", "input2", "value", "stderr", "n", "seed",
    "source",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Analytic,
    Grid,
    Simulation,
}

/// One computed value with the parameters and inputs that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub model: ModelKind,
    pub x: f64,
    pub mu: f64,
    pub sigma: f64,
    pub theta: f64,
    pub quantity: String,
    pub input1: Option<f64>,
    pub input2: Option<f64>,
    pub value: f64,
    pub stderr: Option<f64>,
    pub n: Option<u64>,
    pub seed: Option<u64>,
    pub source: Source,
}

impl ResultRecord {
    pub fn new(model: ModelKind, p: &ProcessParams, quantity: &str, value: f64, source: Source) -> Self {
        ResultRecord {
            model,
            x: p.x,
            mu: p.mu,
            sigma: p.sigma,
            theta: p.theta,
            quantity: quantity.to_string(),
            input1: None,
            input2: None,
            value,
            stderr: None,
            n: None,
            seed: None,
            source,
        }
    }

    pub fn inputs(self, input1: Option<f64>, input2: Option<f64>) -> Self {
        ResultRecord {
            input1,
            input2,
            ..self
        }
    }

    pub fn sampled(self, stderr: f64, n: u64, seed: u64) -> Self {
        ResultRecord {
            stderr: Some(stderr),
            n: Some(n),
            seed: Some(seed),
            ..self
        }
    }

    fn csv_fields(&self, digits: Digits) -> [String; 13] {
        let num = |v: f64| format_number(v, digits);
        let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
        let int = |v: Option<u64>| v.map(|i| i.to_string()).unwrap_or_default();
        [
            self.model.as_str().to_string(),
            num(self.x),
            num(self.mu),
            num(self.sigma),
            num(self.theta),
            self.quantity.clone(),
            opt(self.input1),
            opt(self.input2),
            num(self.value),
            opt(self.stderr),
            int(self.n),
            int(self.seed),
            match self.source {
                Source::Analytic => "analytic",
                Source::Grid => "grid",
                Source::Simulation => "simulation",
            }
            .to_string(),
        ]
    }
}

/// Shortest round-trip form, switching to exponent notation for very large
/// or very small magnitudes.
fn shortest(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-5..1e16).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

pub fn format_number(v: f64, digits: Digits) -> String {
    match digits {
        Digits::Full => shortest(v),
        Digits::Fixed(d) => {
            let rounded: f64 = format!("{:.*e}", d - 1, v).parse().unwrap_or(v);
            shortest(rounded)
        }
    }
}

fn to_io(e: impl std::error::Error + Send + Sync + 'static) -> io::Error {
    io::Error::other(e)
}

/// CSV with a header row, or JSON. JSON is one object per line on a stream
/// and a single array in a file. JSON numbers always carry full precision.
pub fn write_records(
    records: &[ResultRecord],
    format: Format,
    digits: Digits,
    file_mode: bool,
    w: &mut dyn Write,
) -> io::Result<()> {
    match format {
        Format::Csv => {
            let mut csv = csv::Writer::from_writer(w);
            csv.write_record(CSV_HEADER).map_err(to_io)?;
            for r in records {
                csv.write_record(r.csv_fields(digits)).map_err(to_io)?;
            }
            csv.flush()
        }
        Format::Json if file_mode => {
            serde_json::to_writer_pretty(&mut *w, records).map_err(to_io)?;
            writeln!(w)
        }
        Format::Json => {
            for r in records {
                serde_json::to_writer(&mut *w, r).map_err(to_io)?;
                writeln!(w)?;
            }
            Ok(())
        }
    }
}

/// Parses CSV written by [`write_records`].
pub fn read_csv(data: &str) -> io::Result<Vec<ResultRecord>> {
    csv::Reader::from_reader(data.as_bytes())
        .deserialize()
        .collect::<Result<Vec<_>, _>>()
        .map_err(to_io)
}

/// Parses JSON written by [`write_records`], in either layout.
pub fn read_json(data: &str) -> io::Result<Vec<ResultRecord>> {
    let trimmed = data.trim_start();
    if trimmed.starts_with('[') {
        return serde_json::from_str(trimmed).map_err(to_io);
    }
    trimmed
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(to_io))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(value: f64, stderr: Option<f64>) -> ResultRecord {
        let p = ProcessParams::drift(2.5, 0.7, 1.3).unwrap();
        let mut r = ResultRecord::new(ModelKind::PoissonDrift, &p, "lt-tau", value, Source::Analytic)
            .inputs(Some(0.1), None);
        if let Some(se) = stderr {
            r = r.sampled(se, 1000, 42);
            r.source = Source::Simulation;
        }
        r
    }

    fn encode(records: &[ResultRecord], format: Format, digits: Digits, file_mode: bool) -> String {
        let mut buf = Vec::new();
        write_records(records, format, digits, file_mode, &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn csv_layout() {
        let text = encode(&[sample(0.25, None)], Format::Csv, Digits::Fixed(9), false);
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER.join(","));
        assert_eq!(
            lines.next().unwrap(),
            "drift,2.5,0.7,0,1.3,lt-tau,0.1,,0.25,,,,analytic"
        );
    }

    #[test]
    fn fixed_digits_round() {
        assert_eq!(
            format_number(std::f64::consts::PI, Digits::Fixed(9)),
            "3.14159265"
        );
        assert_eq!(format_number(1.0 / 3.0, Digits::Fixed(3)), "0.333");
        assert_eq!(format_number(1e-300, Digits::Full), "1e-300");
        assert_eq!(format_number(0.0, Digits::Fixed(9)), "0");
    }

    #[test]
    fn json_layouts() {
        let recs = [sample(0.5, Some(0.01)), sample(0.75, None)];
        for file_mode in [false, true] {
            let text = encode(&recs, Format::Json, Digits::Fixed(9), file_mode);
            assert_eq!(read_json(&text).unwrap(), recs);
        }
    }

    proptest! {
        #[test]
        fn csv_full_and_json_round_trip(v in -1e300f64..1e300, se in 0.0f64..1e3, tiny in -1e-200f64..1e-200) {
            let recs = [sample(v, Some(se)), sample(tiny, None)];
            let csv = encode(&recs, Format::Csv, Digits::Full, false);
            prop_assert_eq!(read_csv(&csv).unwrap(), recs.to_vec());
            let json = encode(&recs, Format::Json, Digits::Full, false);
            prop_assert_eq!(read_json(&json).unwrap(), recs.to_vec());
        }

        #[test]
        fn fixed_digits_keep_relative_precision(v in 1e-10f64..1e10, d in 1usize..=17) {
            let s: f64 = format_number(v, Digits::Fixed(d)).parse().unwrap();
            prop_assert!((s - v).abs() <= v * 10f64.powi(1 - d as i32));
        }
    }
}
