//! Time-indexed signal traces and their CSV form.

use crate::ast::SignalKind;
use std::collections::BTreeMap;
use std::io::{self, Write};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SignalValue {
    Real(f64),
    Boolean(bool),
    Integer(i64),
}

impl SignalValue {
    pub fn kind(&self) -> SignalKind {
        match self {
            SignalValue::Real(_) => SignalKind::Real,
            SignalValue::Boolean(_) => SignalKind::Boolean,
            SignalValue::Integer(_) => SignalKind::Integer,
        }
    }

    pub fn default_for(kind: SignalKind) -> SignalValue {
        match kind {
            SignalKind::Real => SignalValue::Real(0.0),
            SignalKind::Boolean => SignalValue::Boolean(false),
            SignalKind::Integer => SignalValue::Integer(0),
        }
    }

    pub fn as_real(&self) -> f64 {
        match self {
            SignalValue::Real(v) => *v,
            SignalValue::Integer(v) => *v as f64,
            SignalValue::Boolean(b) => {
                if *b {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn as_bool(&self) -> bool {
        match self {
            SignalValue::Boolean(b) => *b,
            SignalValue::Real(v) => *v != 0.0,
            SignalValue::Integer(v) => *v != 0,
        }
    }

    pub fn as_int(&self) -> i64 {
        match self {
            SignalValue::Integer(v) => *v,
            SignalValue::Real(v) => *v as i64,
            SignalValue::Boolean(b) => *b as i64,
        }
    }
}

/// Fixed-step trace: one series per port path, one sample per step
/// including t=0.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub step_size: f64,
    pub horizon: f64,
    /// Canonical column order for CSV output.
    pub columns: Vec<String>,
    pub series: BTreeMap<String, Vec<SignalValue>>,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("unknown port `{0}`")]
    UnknownPort(String),
    #[error("malformed trace CSV at line {line}: {message}")]
    Malformed { line: usize, message: String },
}

impl SimulationTrace {
    pub fn step_count(&self) -> usize {
        (self.horizon / self.step_size).floor() as usize + 1
    }

    pub fn new(step_size: f64, horizon: f64) -> Self {
        SimulationTrace {
            step_size,
            horizon,
            columns: Vec::new(),
            series: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, port: &str, values: Vec<SignalValue>) {
        if !self.columns.iter().any(|c| c == port) {
            self.columns.push(port.to_string());
        }
        self.series.insert(port.to_string(), values);
    }

    /// The series for one port, by value.
    pub fn probe(&self, port: &str) -> Result<Vec<SignalValue>, TraceError> {
        self.series
            .get(port)
            .cloned()
            .ok_or_else(|| TraceError::UnknownPort(port.to_string()))
    }
}

fn fmt_value(v: &SignalValue) -> String {
    match v {
        SignalValue::Boolean(b) => (if *b { "1" } else { "0" }).to_string(),
        SignalValue::Integer(n) => n.to_string(),
        // 9 significant digits
        SignalValue::Real(x) => format!("{:.8e}", x),
    }
}

fn fmt_time(t: f64) -> String {
    if t.fract() == 0.0 && t.abs() < 1e15 {
        format!("{}", t as i64)
    } else {
        format!("{}", t)
    }
}

/// CSV form: first column `time_s`, one column per port path, Booleans as
/// 0/1, Reals with 9 significant digits.
pub fn write_csv<W: Write>(trace: &SimulationTrace, mut w: W) -> io::Result<()> {
    write!(w, "time_s")?;
    for c in &trace.columns {
        write!(w, ",{}", c)?;
    }
    writeln!(w)?;
    let n = trace.step_count();
    for i in 0..n {
        write!(w, "{}", fmt_time(i as f64 * trace.step_size))?;
        for c in &trace.columns {
            let v = &trace.series[c][i];
            write!(w, ",{}", fmt_value(v))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn to_csv_string(trace: &SimulationTrace) -> String {
    let mut buf = Vec::new();
    write_csv(trace, &mut buf).expect("in-memory write");
    String::from_utf8(buf).expect("csv is utf-8")
}

/// Reads a trace CSV. Column kinds are inferred per column: `0`/`1`-only
/// columns stay Integer unless `bool_columns` names them Boolean; columns
/// with `.`/`e` become Real. `expected_kinds`, when given, pins kinds.
pub fn parse_csv(
    text: &str,
    step_size: f64,
    expected_kinds: Option<&BTreeMap<String, SignalKind>>,
) -> Result<SimulationTrace, TraceError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(TraceError::Malformed {
        line: 1,
        message: "empty file".into(),
    })?;
    let mut cols: Vec<&str> = header.split(',').collect();
    if cols.first() != Some(&"time_s") {
        return Err(TraceError::Malformed {
            line: 1,
            message: "first column must be `time_s`".into(),
        });
    }
    cols.remove(0);
    let mut raw: Vec<Vec<&str>> = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() + 1 {
            return Err(TraceError::Malformed {
                line: i + 1,
                message: format!("expected {} fields", cols.len() + 1),
            });
        }
        raw.push(fields);
    }
    let steps = raw.len();
    if steps == 0 {
        return Err(TraceError::Malformed {
            line: 2,
            message: "no data rows".into(),
        });
    }
    let horizon = (steps - 1) as f64 * step_size;
    let mut trace = SimulationTrace::new(step_size, horizon);
    for (ci, col) in cols.iter().enumerate() {
        let kind = expected_kinds.and_then(|m| m.get(*col).copied());
        let mut values = Vec::with_capacity(steps);
        for (ri, row) in raw.iter().enumerate() {
            let field = row[ci + 1].trim();
            let v = parse_field(field, kind).ok_or(TraceError::Malformed {
                line: ri + 2,
                message: format!("bad value `{}` in column `{}`", field, col),
            })?;
            values.push(v);
        }
        trace.insert(col, values);
    }
    Ok(trace)
}

fn parse_field(field: &str, kind: Option<SignalKind>) -> Option<SignalValue> {
    match kind {
        Some(SignalKind::Boolean) => match field {
            "0" | "false" => Some(SignalValue::Boolean(false)),
            "1" | "true" => Some(SignalValue::Boolean(true)),
            _ => None,
        },
        Some(SignalKind::Integer) => field.parse().ok().map(SignalValue::Integer),
        Some(SignalKind::Real) => field.parse().ok().map(SignalValue::Real),
        None => {
            if field == "true" || field == "false" {
                Some(SignalValue::Boolean(field == "true"))
            } else if let Ok(i) = field.parse::<i64>() {
                Some(SignalValue::Integer(i))
            } else {
                field.parse().ok().map(SignalValue::Real)
            }
        }
    }
}
