//! CSV loaders for table systems and rates, and the JSON/CSV writers.

use std::fs;
use std::path::{Path, PathBuf};

use mudich_core::{Domain, GrowthRate, LinearSystem};
use nalgebra::DMatrix;
use serde_json::{json, Value};

use crate::error::{CliError, CliResult};

/// Optional header plus numeric rows.
type Rows = (Option<Vec<String>>, Vec<Vec<f64>>);

/// Numeric rows of a CSV file. A first row that does not parse is taken as the header.
fn numeric_rows(path: &Path) -> CliResult<Rows> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|source| CliError::Csv { path: path.into(), source })?;
    let mut header = None;
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|source| CliError::Csv { path: path.into(), source })?;
        let parsed: Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(v) if v.iter().all(|x| x.is_finite()) => rows.push(v),
            _ if i == 0 => header = Some(rec.iter().map(str::to_string).collect()),
            _ => {
                return Err(CliError::Table { path: path.into(), reason: format!("row {} is not all finite numbers", i + 1) })
            }
        }
    }
    Ok((header, rows))
}

/// First and last `t` of a rate table.
pub fn table_extent(path: &Path) -> CliResult<(f64, f64)> {
    let (_, rows) = numeric_rows(path)?;
    match (rows.first(), rows.last()) {
        (Some(a), Some(b)) => Ok((a[0], b[0])),
        _ => Err(CliError::Table { path: path.into(), reason: "empty table".into() }),
    }
}

/// Rate table with header `t,log_mu`, sorted by `t`.
pub fn load_rate_table(path: &Path, domain: Option<Domain>) -> CliResult<GrowthRate> {
    let (header, rows) = numeric_rows(path)?;
    let table_err = |reason: String| CliError::Table { path: path.into(), reason };
    if let Some(h) = &header {
        if h.len() != 2 || h[0] != "t" || h[1] != "log_mu" {
            return Err(table_err(format!("header must be `t,log_mu`, found `{}`", h.join(","))));
        }
    }
    if let Some(r) = rows.iter().find(|r| r.len() != 2) {
        return Err(table_err(format!("expected 2 columns, found {}", r.len())));
    }
    let ts: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let ls: Vec<f64> = rows.iter().map(|r| r[1]).collect();
    let domain = domain.unwrap_or(if ts.first().is_some_and(|&t| t < 0.0) { Domain::FullLine } else { Domain::HalfLine });
    GrowthRate::from_table("custom", domain, ts, ls).map_err(CliError::Config)
}

/// Table system: rows `t, a11, a12, ..., ann`.
pub fn load_table_system(path: &Path, domain: Domain, cubic: bool) -> CliResult<LinearSystem> {
    let (_, rows) = numeric_rows(path)?;
    let table_err = |reason: String| CliError::Table { path: path.into(), reason };
    let width = rows.first().map_or(0, Vec::len);
    let n = ((width.saturating_sub(1)) as f64).sqrt().round() as usize;
    if n == 0 || n * n + 1 != width {
        return Err(table_err(format!("{width} columns do not form t plus a square matrix")));
    }
    if rows.iter().any(|r| r.len() != width) {
        return Err(table_err("ragged rows".into()));
    }
    let times: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let mats: Vec<DMatrix<f64>> = rows.iter().map(|r| DMatrix::from_row_slice(n, n, &r[1..])).collect();
    let sys = LinearSystem::from_samples("table", domain, times.clone(), mats, cubic).map_err(CliError::Config)?;
    if !cubic {
        sys.check_continuity(&times).map_err(CliError::Config)?;
    }
    Ok(sys)
}

pub fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(CliError::io(dir))
}

/// Pretty JSON with a trailing newline. Keys are sorted, so equal inputs give equal bytes.
pub fn write_json(path: &Path, value: &Value) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(CliError::io(path))
}

pub struct CsvOut {
    path: PathBuf,
    writer: csv::Writer<fs::File>,
}

impl CsvOut {
    pub fn create(path: &Path, header: &[String]) -> CliResult<CsvOut> {
        let writer = csv::Writer::from_path(path).map_err(|source| CliError::Csv { path: path.into(), source })?;
        let mut out = CsvOut { path: path.into(), writer };
        out.row(header.iter().map(String::as_str))?;
        Ok(out)
    }

    pub fn row<I, S>(&mut self, fields: I) -> CliResult<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields).map_err(|source| CliError::Csv { path: self.path.clone(), source })
    }

    pub fn finish(mut self) -> CliResult<()> {
        self.writer.flush().map_err(CliError::io(&self.path))
    }
}

/// Shortest round-trip form; empty for absent values.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// `{rows, cols, data}` with `data` row-major.
pub fn matrix_json(m: &DMatrix<f64>) -> Value {
    json!({ "rows": m.nrows(), "cols": m.ncols(), "data": row_major(m).collect::<Vec<_>>() })
}

/// Row-major entries of `m`.
pub fn row_major(m: &DMatrix<f64>) -> impl Iterator<Item = f64> + '_ {
    (0..m.nrows()).flat_map(move |r| (0..m.ncols()).map(move |c| m[(r, c)]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn temp_csv(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn rate_table_roundtrip() {
        let mut text = String::from("t,log_mu\n");
        for i in 0..=50 {
            let t = i as f64 * 0.5;
            text.push_str(&format!("{t},{}\n", (1.0 + t).ln()));
        }
        let f = temp_csv(&text);
        let r = load_rate_table(f.path(), None).unwrap();
        assert_eq!(r.domain(), Domain::HalfLine);
        assert!((r.log_mu(10.0).unwrap() - 11f64.ln()).abs() < 1e-3);
        assert_eq!(table_extent(f.path()).unwrap(), (0.0, 25.0));
        let bad = temp_csv("time,mu\n0,0\n1,1\n");
        assert_eq!(load_rate_table(bad.path(), None).err().unwrap().exit_code(), 64);
    }

    #[test]
    fn table_system_shapes() {
        let f = temp_csv("t,a11,a12,a21,a22\n0,-1,0,0,1\n1,-1,0,0,1\n2,-1,0,0,1\n");
        let sys = load_table_system(f.path(), Domain::HalfLine, false).unwrap();
        assert_eq!(sys.dimension(), 2);
        assert_eq!(sys.coeff(1.5)[(1, 1)], 1.0);
        let ragged = temp_csv("0,1,2\n1,1,2\n");
        assert!(load_table_system(ragged.path(), Domain::HalfLine, false).is_err());
    }

    #[test]
    fn matrices_are_row_major() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(matrix_json(&m)["data"], json!([1.0, 2.0, 3.0, 4.0]));
        assert_eq!(row_major(&m).collect::<Vec<_>>(), vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(num(0.1), "0.1");
        assert_eq!(opt_num(None), "");
    }
}
