//! Flat table rows and writing them as CSV or JSON.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use crvsadj::io::{rows_to_csv, write_atomic};
use crvsadj::postprocess::{EstimateSource, MisclassSummary, YearEstimate};

use crate::Format;

impl Format {
    pub fn ext(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

pub fn encode<T: Serialize>(rows: &[T], format: Format) -> Result<Vec<u8>> {
    Ok(match format {
        Format::Csv => rows_to_csv(rows)?,
        Format::Json => {
            let mut v = serde_json::to_vec_pretty(rows)?;
            v.push(b'\n');
            v
        }
    })
}

/// Path of table `stem` inside `dir`.
pub fn table_path(dir: &Path, stem: &str, format: Format) -> PathBuf {
    dir.join(format!("{stem}.{}", format.ext()))
}

/// Writes the table to `dir/stem.ext`, or to stdout without a directory.
pub fn emit<T: Serialize>(rows: &[T], dir: Option<&Path>, stem: &str, format: Format) -> Result<()> {
    let bytes = encode(rows, format)?;
    match dir {
        Some(d) => {
            let p = table_path(d, stem, format);
            write_atomic(&p, &bytes).with_context(|| format!("writing {}", p.display()))
        }
        None => {
            let mut out = std::io::stdout().lock();
            match out.write_all(&bytes).and_then(|_| out.flush()) {
                // a closed pipe (as with `| head`) is not a failure
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
                r => Ok(r?),
            }
        }
    }
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    write_atomic(path, &v).with_context(|| format!("writing {}", path.display()))
}

/// Country ids as file-name fragments.
pub fn file_id(country: &str) -> String {
    country.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn source_name(s: EstimateSource) -> &'static str {
    match s {
        EstimateSource::Posterior => "posterior",
        EstimateSource::Backcast => "backcast",
        EstimateSource::Forecast => "forecast",
        EstimateSource::Global => "global",
    }
}

#[derive(Serialize)]
pub struct EstimateRow {
    pub country: String,
    pub year: i32,
    pub source: &'static str,
    pub se: f64,
    pub sp: f64,
    pub v_plus: f64,
    pub v_minus: f64,
    pub u: f64,
    pub e_plus: f64,
    pub e_minus: f64,
    pub se_q10: f64,
    pub se_q90: f64,
    pub sp_q10: f64,
    pub sp_q90: f64,
}

impl EstimateRow {
    pub fn new(country: &str, e: &YearEstimate) -> Self {
        let s = &e.summary;
        Self {
            country: country.to_owned(),
            year: e.year,
            source: source_name(e.source),
            se: s.lambda_hat_plus,
            sp: s.lambda_hat_minus,
            v_plus: s.v_hat_plus,
            v_minus: s.v_hat_minus,
            u: s.u_hat,
            e_plus: s.e_hat_plus,
            e_minus: s.e_hat_minus,
            se_q10: e.se_q10,
            se_q90: e.se_q90,
            sp_q10: e.sp_q10,
            sp_q90: e.sp_q90,
        }
    }
}

#[derive(Serialize)]
pub struct SummaryRow {
    pub country: String,
    pub year: i32,
    pub source: &'static str,
    pub se_q10: f64,
    pub se_q50: f64,
    pub se_q90: f64,
    pub sp_q10: f64,
    pub sp_q50: f64,
    pub sp_q90: f64,
}

impl SummaryRow {
    pub fn new(country: &str, e: &YearEstimate) -> Self {
        Self {
            country: country.to_owned(),
            year: e.year,
            source: source_name(e.source),
            se_q10: e.se_q10,
            se_q50: e.summary.lambda_hat_plus,
            se_q90: e.se_q90,
            sp_q10: e.sp_q10,
            sp_q50: e.summary.lambda_hat_minus,
            sp_q90: e.sp_q90,
        }
    }
}

#[derive(Serialize)]
pub struct BmatRow {
    pub country: String,
    pub year: i32,
    pub source: &'static str,
    pub lambda_hat_plus: f64,
    pub lambda_hat_minus: f64,
    pub v_hat_plus: f64,
    pub v_hat_minus: f64,
    pub u_hat: f64,
    pub e_hat_plus: f64,
    pub e_hat_minus: f64,
    pub completeness: f64,
    pub m_hat: f64,
}

impl BmatRow {
    pub fn new(country: &str, e: &YearEstimate, completeness: f64, m_hat: f64) -> Self {
        let s = &e.summary;
        Self {
            country: country.to_owned(),
            year: e.year,
            source: source_name(e.source),
            lambda_hat_plus: s.lambda_hat_plus,
            lambda_hat_minus: s.lambda_hat_minus,
            v_hat_plus: s.v_hat_plus,
            v_hat_minus: s.v_hat_minus,
            u_hat: s.u_hat,
            e_hat_plus: s.e_hat_plus,
            e_hat_minus: s.e_hat_minus,
            completeness,
            m_hat,
        }
    }
}

#[derive(Serialize)]
pub struct PredictRow {
    pub lag: u32,
    pub se: f64,
    pub sp: f64,
    pub v_plus: f64,
    pub v_minus: f64,
    pub u: f64,
    pub e_plus: f64,
    pub e_minus: f64,
}

impl PredictRow {
    pub fn new(lag: u32, s: &MisclassSummary) -> Self {
        Self {
            lag,
            se: s.lambda_hat_plus,
            sp: s.lambda_hat_minus,
            v_plus: s.v_hat_plus,
            v_minus: s.v_hat_minus,
            u: s.u_hat,
            e_plus: s.e_hat_plus,
            e_minus: s.e_hat_minus,
        }
    }
}

#[derive(Serialize)]
pub struct DiagnosticRow {
    pub quantity: String,
    pub chain: Option<usize>,
    pub value: Option<f64>,
}

#[derive(Serialize)]
pub struct AdjustRow {
    pub country: Option<String>,
    pub year: i32,
    pub se: f64,
    pub sp: f64,
    pub p_truemat: f64,
    pub factor: f64,
}

#[derive(Serialize)]
pub struct ValidationRow {
    pub scheme: &'static str,
    pub n_reps: usize,
    pub n_failed_reps: usize,
    pub n_leftout: usize,
    pub me: f64,
    pub mae: f64,
    pub mre_pct: f64,
    pub mare_pct: f64,
    pub prop_below_80: f64,
    pub prop_above_80: f64,
}
