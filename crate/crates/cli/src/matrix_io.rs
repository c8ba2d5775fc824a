//! Comma-separated numeric matrices.
//!
//! A first row in which no cell parses as a number is taken as a header and
//! skipped. Values are written with 17 significant digits, which round-trips
//! every `f64`.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::CliError;

pub fn read_matrix(path: &Path) -> Result<Array2<f64>, CliError> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::Io(format!("cannot open {}: {e}", path.display())))?;
    parse_matrix(file, &path.display().to_string())
}

/// Reads a single-column file.
pub fn read_vector(path: &Path) -> Result<Array1<f64>, CliError> {
    let m = read_matrix(path)?;
    if m.ncols() != 1 {
        return Err(CliError::Input(format!(
            "{}: expected one column, found {}",
            path.display(),
            m.ncols()
        )));
    }
    Ok(m.column(0).to_owned())
}

pub fn parse_matrix<R: Read>(reader: R, name: &str) -> Result<Array2<f64>, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut data = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (i, record) in rdr.records().enumerate() {
        let line = i + 1;
        let record = record.map_err(|e| CliError::Input(format!("{name}: row {line}: {e}")))?;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if i == 0 && record.iter().all(|c| c.parse::<f64>().is_err()) {
            continue;
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(CliError::Input(format!(
                    "{name}: row {line} has {} columns, expected {w}",
                    record.len()
                )))
            }
            _ => {}
        }
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                CliError::Input(format!(
                    "{name}: row {line}, column {}: cannot parse `{cell}` as a number",
                    j + 1
                ))
            })?;
            data.push(v);
        }
        rows += 1;
    }
    let width = width.ok_or_else(|| CliError::Input(format!("{name}: no data rows")))?;
    Ok(Array2::from_shape_vec((rows, width), data).expect("rectangular by construction"))
}

pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_matrix(path: &Path, m: &Array2<f64>) -> Result<(), CliError> {
    let file = std::fs::File::create(path)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", path.display())))?;
    let mut w = std::io::BufWriter::new(file);
    write_rows(&mut w, m).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn write_vector(path: &Path, v: &Array1<f64>) -> Result<(), CliError> {
    let m = v.clone().insert_axis(ndarray::Axis(1));
    write_matrix(path, &m)
}

fn write_rows<W: Write>(w: &mut W, m: &Array2<f64>) -> std::io::Result<()> {
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|v| format_value(*v)).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()
}
