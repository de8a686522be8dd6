//! Tabular output: CSV with `#` comment headers, or a JSON document of records.
//!
//! Floats are written with nine significant digits in C `%.9g` style, so the
//! bytes depend only on the values.

use std::io::{self, Write};

use serde_json::Value;

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    JsonRecords,
}

impl Format {
    pub fn name(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::JsonRecords => "json-records",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "csv" => Some(Format::Csv),
            "json-records" => Some(Format::JsonRecords),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Table { columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        self.rows.push(row);
    }
}

/// `%.9g`.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..9).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    } else {
        let decimals = (8 - exp) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn csv_field(cell: &Cell) -> String {
    match cell {
        Cell::Float(v) => format_float(*v),
        Cell::Int(v) => v.to_string(),
        Cell::Text(t) if t.contains([',', '"', '\n']) => format!("\"{}\"", t.replace('"', "\"\"")),
        Cell::Text(t) => t.clone(),
    }
}

fn json_value(cell: &Cell) -> Value {
    match cell {
        // same rounding as CSV; non-finite values become null
        Cell::Float(v) => format_float(*v)
            .parse::<f64>()
            .ok()
            .and_then(serde_json::Number::from_f64)
            .map_or(Value::Null, Value::Number),
        Cell::Int(v) => Value::from(*v),
        Cell::Text(t) => Value::from(t.as_str()),
    }
}

/// Writes `table` after the `header` comment lines.
pub fn write_table(table: &Table, format: Format, header: &[String], out: &mut dyn Write) -> io::Result<()> {
    if let Some(k) = table.rows.iter().position(|r| r.len() != table.columns.len()) {
        return Err(io::Error::new(
            io::ErrorKind::InvalidInput,
            format!("row {} has {} cells for {} columns", k, table.rows[k].len(), table.columns.len()),
        ));
    }
    match format {
        Format::Csv => {
            for line in header {
                writeln!(out, "# {line}")?;
            }
            writeln!(out, "{}", table.columns.join(","))?;
            for row in &table.rows {
                let fields: Vec<String> = row.iter().map(csv_field).collect();
                writeln!(out, "{}", fields.join(","))?;
            }
        }
        Format::JsonRecords => {
            // built by hand to keep column order
            writeln!(out, "{{")?;
            writeln!(out, "  \"provenance\": {},", Value::from(header.to_vec()))?;
            write!(out, "  \"records\": [")?;
            for (k, row) in table.rows.iter().enumerate() {
                let fields: Vec<String> = table
                    .columns
                    .iter()
                    .zip(row)
                    .map(|(c, v)| format!("{}: {}", Value::from(*c), json_value(v)))
                    .collect();
                let sep = if k == 0 { "" } else { "," };
                write!(out, "{sep}\n    {{{}}}", fields.join(", "))?;
            }
            if !table.rows.is_empty() {
                write!(out, "\n  ")?;
            }
            writeln!(out, "]")?;
            writeln!(out, "}}")?;
        }
    }
    Ok(())
}
