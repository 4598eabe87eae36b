//! CSV and summary emission. Floats are written with 17 significant digits
//! so that reading them back reproduces the doubles exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use mfopt::problem::TrajectoryField;
use mfopt::study::ConvergenceReport;
use ndarray::ArrayView1;

use crate::error::CliError;

pub fn sci(v: f64) -> String {
    format!("{v:.16e}")
}

fn failed(path: &Path, source: std::io::Error) -> CliError {
    CliError::Output {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>, CliError> {
    csv::Writer::from_path(path).map_err(|e| failed(path, std::io::Error::other(e)))
}

fn write_rows<I>(path: &Path, header: &[&str], rows: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv_writer(path)?;
    let wrap = |e: csv::Error| failed(path, std::io::Error::other(e));
    w.write_record(header).map_err(wrap)?;
    for row in rows {
        w.write_record(&row).map_err(wrap)?;
    }
    w.flush().map_err(|e| failed(path, e))
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| failed(dir, e))
}

/// Long format `t,x,value`, time-major.
pub fn write_field(path: &Path, field: &TrajectoryField) -> Result<(), CliError> {
    let x = field.grid().nodes();
    let instants = field.time().instants();
    let rows = instants.iter().enumerate().flat_map(|(k, &t)| {
        let slice = field.slice(k);
        x.iter()
            .zip(slice)
            .map(move |(&xi, &v)| vec![sci(t), sci(xi), sci(v)])
            .collect::<Vec<_>>()
    });
    write_rows(path, &["t", "x", "value"], rows)
}

pub fn write_functional(path: &Path, trace: &[f64]) -> Result<(), CliError> {
    let rows = trace
        .iter()
        .enumerate()
        .map(|(i, &j)| vec![i.to_string(), sci(j)]);
    write_rows(path, &["iter", "J"], rows)
}

pub fn write_convergence(path: &Path, report: &ConvergenceReport) -> Result<(), CliError> {
    let rows = report
        .rows
        .iter()
        .map(|r| vec![r.steps.to_string(), sci(r.err_rho), sci(r.err_psi)]);
    write_rows(path, &["m", "err_rho_T", "err_psi_0"], rows)
}

pub fn write_profile(
    path: &Path,
    x: ArrayView1<f64>,
    values: ArrayView1<f64>,
) -> Result<(), CliError> {
    let rows = x.iter().zip(values).map(|(&xi, &v)| vec![sci(xi), sci(v)]);
    write_rows(path, &["x", "value"], rows)
}

/// `key = value` lines, the same syntax as the config file.
pub fn write_summary(path: &Path, entries: &[(&str, String)]) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| failed(path, e))?;
    let mut w = BufWriter::new(file);
    for (k, v) in entries {
        writeln!(w, "{k} = {v}").map_err(|e| failed(path, e))?;
    }
    w.flush().map_err(|e| failed(path, e))
}
