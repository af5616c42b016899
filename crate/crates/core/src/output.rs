//! Deterministic tabular and key=value output in CSV or JSON.
//!
//! Numbers use the shortest representation that parses back to the same
//! `f64`, so emitted files round-trip bit-exactly.

use std::io::Write;
use std::path::Path;

use serde_json::{Map, Value};

use crate::analysis::{DesignResponse, RegionCurve};
use crate::config::OutputFormat;
use crate::error::{Error, Result};
use crate::small_signal::FrequencyResponse;
use crate::steady_state::WaveformSample;
use crate::time_sim::SimTrace;

pub const WAVEFORM_HEADER: [&str; 4] = ["t", "iL", "vc", "vo"];
pub const BODE_HEADER: [&str; 5] = [
    "f_in_hz",
    "gain_db",
    "normalized_gain",
    "phase_deg",
    "method",
];
pub const TRACE_HEADER: [&str; 8] = ["k", "t", "vin", "iL", "vc", "vo", "T1", "T3"];
pub const SWEEP_HEADER: [&str; 6] = ["F", "Qe", "f_in", "gain_db", "normalized_gain", "method"];
pub const REGION_HEADER: [&str; 3] = ["Qe", "F_boundary", "method"];

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(u64),
    Num(f64),
    Text(String),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Num(x) => x.to_string(),
            Cell::Text(s) if s.contains([',', '"', '\n']) => {
                format!("\"{}\"", s.replace('"', "\"\""))
            }
            Cell::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Int(i) => Value::from(*i),
            // non-finite values have no JSON number form
            Cell::Num(x) if x.is_finite() => Value::from(*x),
            Cell::Num(x) => Value::from(x.to_string()),
            Cell::Text(s) => Value::from(s.as_str()),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(i: usize) -> Self {
        Cell::Int(i as u64)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

/// Rows under a fixed header; every row has the header's width.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Table {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.header.len(), "row width must match header");
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(Cell::csv).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    /// Array of objects keyed by header name.
    pub fn to_json_value(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|row| {
                    let obj: Map<String, Value> = self
                        .header
                        .iter()
                        .zip(row)
                        .map(|(h, c)| (h.to_string(), c.json()))
                        .collect();
                    Value::Object(obj)
                })
                .collect(),
        )
    }

    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Csv => self.to_csv(),
            OutputFormat::Json => {
                let mut s =
                    serde_json::to_string_pretty(&self.to_json_value()).expect("table serializes");
                s.push('\n');
                s
            }
        }
    }
}

pub fn waveform_table(samples: &[WaveformSample]) -> Table {
    let mut t = Table::new(&WAVEFORM_HEADER);
    for s in samples {
        t.push(vec![
            s.t.into(),
            s.state.il.into(),
            s.state.vc.into(),
            s.state.vo.into(),
        ]);
    }
    t
}

pub fn bode_table(resp: &FrequencyResponse) -> Table {
    let mut t = Table::new(&BODE_HEADER);
    for p in &resp.points {
        t.push(vec![
            p.f_in.into(),
            p.gain_db.into(),
            p.normalized_gain.into(),
            p.phase_deg.into(),
            resp.method.tag().into(),
        ]);
    }
    t
}

pub fn trace_table(trace: &SimTrace) -> Table {
    let mut t = Table::new(&TRACE_HEADER);
    for s in &trace.samples {
        t.push(vec![
            s.k.into(),
            s.t.into(),
            s.vin.into(),
            s.state.il.into(),
            s.state.vc.into(),
            s.state.vo.into(),
            s.t1.into(),
            s.t3.into(),
        ]);
    }
    t
}

/// Successful designs only; failures are reported separately.
pub fn sweep_table(results: &[DesignResponse]) -> Table {
    let mut t = Table::new(&SWEEP_HEADER);
    for r in results {
        if let Ok(resp) = &r.response {
            for p in &resp.points {
                t.push(vec![
                    r.f_ratio.into(),
                    r.qe.into(),
                    p.f_in.into(),
                    p.gain_db.into(),
                    p.normalized_gain.into(),
                    resp.method.tag().into(),
                ]);
            }
        }
    }
    t
}

pub fn region_table(curves: &[RegionCurve]) -> Table {
    let mut t = Table::new(&REGION_HEADER);
    for c in curves {
        for p in &c.points {
            t.push(vec![
                p.qe.into(),
                p.f_boundary.into(),
                c.method.tag().into(),
            ]);
        }
    }
    t
}

/// Ordered scalar results.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Record(pub Vec<(String, Cell)>);

impl Record {
    pub fn new() -> Self {
        Record::default()
    }

    pub fn with(mut self, key: &str, value: impl Into<Cell>) -> Self {
        self.0.push((key.to_string(), value.into()));
        self
    }

    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Csv => self
                .0
                .iter()
                .map(|(k, v)| format!("{k}={}\n", v.csv()))
                .collect(),
            OutputFormat::Json => {
                let obj: Map<String, Value> =
                    self.0.iter().map(|(k, v)| (k.clone(), v.json())).collect();
                let mut s =
                    serde_json::to_string_pretty(&Value::Object(obj)).expect("record serializes");
                s.push('\n');
                s
            }
        }
    }
}

/// Writes to `path`, creating parent directories, or to stdout if `None`.
pub fn write_output(path: Option<&Path>, content: &str) -> Result<()> {
    match path {
        Some(p) => {
            let io = |source| Error::Io {
                path: p.to_path_buf(),
                source,
            };
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(io)?;
            }
            std::fs::write(p, content).map_err(io)
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(content.as_bytes())
                .map_err(|source| Error::Io {
                    path: "<stdout>".into(),
                    source,
                })
        }
    }
}
