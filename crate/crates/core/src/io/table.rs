//! Map results as CSV.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::estimators::Classification;
use crate::sweep::{CellResult, MapResult};

pub const HEADER: [&str; 8] = [
    "beta",
    "gamma",
    "mean_log_rr",
    "se",
    "replicates_used",
    "replicates_dropped",
    "classification",
    "status",
];

/// Shortest `%.17g`-style rendering: 17 significant digits, trailing zeros
/// removed, scientific notation outside `1e-5 <= |v| < 1e17`.
pub fn format_g17(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..17).contains(&exp) {
        let decimals = (16 - exp).max(0) as usize;
        trim_fraction(&format!("{v:.decimals$}")).to_string()
    } else {
        format!("{}e{exp}", trim_fraction(mantissa))
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn sorted_cells(map: &MapResult) -> Vec<&CellResult> {
    let mut cells: Vec<&CellResult> = map.cells.iter().collect();
    cells.sort_by(|a, b| a.beta.total_cmp(&b.beta).then(a.gamma.total_cmp(&b.gamma)));
    cells
}

pub fn map_csv_bytes(map: &MapResult) -> Result<Vec<u8>> {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    writer.write_record(HEADER)?;
    for c in sorted_cells(map) {
        writer.write_record([
            format_g17(c.beta),
            format_g17(c.gamma),
            format_g17(c.mean_log_rr),
            format_g17(c.se),
            c.replicates_used.to_string(),
            c.replicates_dropped.to_string(),
            c.classification.as_str().to_string(),
            c.status.clone(),
        ])?;
    }
    writer
        .into_inner()
        .map_err(|e| Error::Numerical(format!("csv buffer: {e}")))
}

pub fn write_map_csv(map: &MapResult, path: &Path) -> Result<()> {
    let bytes = map_csv_bytes(map)?;
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))
}

fn parse_f64(field: &str, line: usize, value: &str) -> Result<f64> {
    match value {
        "NaN" => Ok(f64::NAN),
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => value.parse().map_err(|_| Error::Syntax {
            line,
            message: format!("{field}: cannot parse `{value}`"),
        }),
    }
}

pub fn read_map_csv(path: &Path) -> Result<Vec<CellResult>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let header = reader.headers()?.clone();
    if header.iter().ne(HEADER.iter().copied()) {
        return Err(Error::Syntax {
            line: 1,
            message: format!("unexpected header, expected `{}`", HEADER.join(",")),
        });
    }
    let mut cells = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = i + 2;
        let field = |k: usize| record.get(k).unwrap_or("");
        let count = |k: usize| -> Result<usize> {
            field(k).parse().map_err(|_| Error::Syntax {
                line,
                message: format!("{}: cannot parse `{}`", HEADER[k], field(k)),
            })
        };
        cells.push(CellResult {
            beta: parse_f64("beta", line, field(0))?,
            gamma: parse_f64("gamma", line, field(1))?,
            mean_log_rr: parse_f64("mean_log_rr", line, field(2))?,
            se: parse_f64("se", line, field(3))?,
            replicates_used: count(4)?,
            replicates_dropped: count(5)?,
            classification: field(6).parse::<Classification>().map_err(|_| Error::Syntax {
                line,
                message: format!("classification: unknown value `{}`", field(6)),
            })?,
            status: field(7).to_string(),
        });
    }
    Ok(cells)
}
