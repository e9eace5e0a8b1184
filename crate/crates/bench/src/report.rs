//! Report rendering (CSV, JSON, markdown) and CSV parsing.

use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{BenchError, BenchResult};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Format {
    #[default]
    Csv,
    Json,
    Md,
}

impl FromStr for Format {
    type Err = BenchError;

    fn from_str(s: &str) -> BenchResult<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "md" | "markdown" => Ok(Format::Md),
            _ => Err(BenchError::Usage(format!("unknown format {s:?} (csv, json, md)"))),
        }
    }
}

pub fn to_csv<R: Serialize>(rows: &[R]) -> BenchResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| BenchError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn from_csv<R: DeserializeOwned>(text: &str) -> BenchResult<Vec<R>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    Ok(r.deserialize().collect::<Result<Vec<R>, _>>()?)
}

pub fn to_markdown<R: Serialize>(rows: &[R]) -> BenchResult<String> {
    let csv_text = to_csv(rows)?;
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(csv_text.as_bytes());
    let mut out = String::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let cells: Vec<&str> = rec.iter().collect();
        out.push_str(&format!("| {} |\n", cells.join(" | ")));
        if i == 0 {
            out.push_str(&format!("|{}\n", "---|".repeat(cells.len())));
        }
    }
    Ok(out)
}

pub fn render<R: Serialize>(rows: &[R], format: Format) -> BenchResult<String> {
    match format {
        Format::Csv => to_csv(rows),
        Format::Json => Ok(serde_json::to_string_pretty(rows)? + "\n"),
        Format::Md => to_markdown(rows),
    }
}
