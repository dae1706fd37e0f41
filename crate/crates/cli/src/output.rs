//! Result files: a `#`-prefixed header block followed by CSV.

use std::io::Write;

use crate::config::Params;
use crate::error::{CliError, CliResult};

pub const TOOL_VERSION: &str = concat!("poincare ", env!("CARGO_PKG_VERSION"));

/// Column names plus string rows; empty cells mean "not applicable".
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    /// Appends a row given as `(column, value)` pairs; missing columns stay empty.
    pub fn push(&mut self, cells: &[(&str, String)]) {
        let mut row = vec![String::new(); self.columns.len()];
        for (name, value) in cells {
            let idx = self
                .column(name)
                .unwrap_or_else(|| panic!("unknown column '{name}'"));
            row[idx] = value.clone();
        }
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Rows whose `kind` column equals `kind`.
    pub fn rows_of_kind<'a>(&'a self, kind: &'a str) -> impl Iterator<Item = &'a Vec<String>> + 'a {
        let k = self.column("kind");
        self.rows.iter().filter(move |r| k.is_some_and(|k| r[k] == kind))
    }

    pub fn cell<'a>(&self, row: &'a [String], name: &str) -> Option<&'a str> {
        self.column(name).map(|i| row[i].as_str())
    }

    pub fn cell_f64(&self, row: &[String], name: &str) -> Option<f64> {
        self.cell(row, name).and_then(|s| s.parse().ok())
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultFile {
    /// `(key, value)` pairs in file order.
    pub header: Vec<(String, String)>,
    pub table: Table,
}

impl ResultFile {
    /// Header with tool version, command, config hash, seed, timestamp and
    /// the canonical parameters.
    pub fn new(params: &Params, seed: u64, table: Table) -> Self {
        let mut header = vec![
            ("tool".to_string(), TOOL_VERSION.to_string()),
            ("command".to_string(), params.command().to_string()),
            ("config_hash".to_string(), params.hash()),
            ("seed".to_string(), seed.to_string()),
            (
                "timestamp".to_string(),
                chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            ),
        ];
        for (k, v) in params.entries() {
            header.push(("param".to_string(), format!("{k}={v}")));
        }
        Self { header, table }
    }

    pub fn header_value(&self, key: &str) -> Option<&str> {
        self.header.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> CliResult<()> {
        for (k, v) in &self.header {
            writeln!(out, "# {k}: {v}")?;
        }
        let mut w = csv::WriterBuilder::new().from_writer(&mut out);
        w.write_record(&self.table.columns).map_err(csv_err)?;
        for row in &self.table.rows {
            w.write_record(row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_string_lossless(&self) -> CliResult<String> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        String::from_utf8(buf).map_err(|e| CliError::Io(e.to_string()))
    }

    pub fn write_path(&self, path: &std::path::Path) -> CliResult<()> {
        let file = std::fs::File::create(path)
            .map_err(|e| CliError::Io(format!("cannot create {}: {e}", path.display())))?;
        let mut buf = std::io::BufWriter::new(file);
        self.write_to(&mut buf)?;
        buf.flush()?;
        Ok(())
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let mut header = Vec::new();
        let mut body_start = text.len();
        let mut offset = 0;
        for line in text.split_inclusive('\n') {
            match line.strip_prefix("# ") {
                Some(rest) => {
                    let rest = rest.trim_end_matches(['\n', '\r']);
                    let (k, v) = rest
                        .split_once(": ")
                        .ok_or_else(|| CliError::Io(format!("malformed header line '{rest}'")))?;
                    header.push((k.to_string(), v.to_string()));
                }
                None => {
                    body_start = offset;
                    break;
                }
            }
            offset += line.len();
        }
        let mut reader = csv::ReaderBuilder::new().from_reader(text[body_start..].as_bytes());
        let columns = reader
            .headers()
            .map_err(csv_err)?
            .iter()
            .map(str::to_string)
            .collect();
        let rows = reader
            .records()
            .map(|r| r.map(|rec| rec.iter().map(str::to_string).collect()))
            .collect::<Result<Vec<Vec<String>>, _>>()
            .map_err(csv_err)?;
        Ok(Self {
            header,
            table: Table { columns, rows },
        })
    }

    pub fn read_path(path: &std::path::Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Io(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_through_text() {
        for x in [0.1, 1.0 / 3.0, 1e-300, 6.02e23, -0.0, f64::MAX] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }

    #[test]
    fn file_round_trip() {
        let mut params = Params::new("estimate");
        params.set("n", "5");
        let mut t = Table::new(&["kind", "estimate", "status"]);
        t.push(&[("kind", "rep".into()), ("estimate", fmt_f64(0.125)), ("status", "ok".into())]);
        t.push(&[("kind", "rep".into()), ("status", "error: x, \"quoted\"".into())]);
        let f = ResultFile::new(&params, 7, t);
        let text = f.to_string_lossless().unwrap();
        assert_eq!(ResultFile::parse(&text).unwrap(), f);
        assert_eq!(f.header_value("seed"), Some("7"));
    }
}
