//! Time-series ingestion and table emission.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, NaiveDate, NaiveDateTime};

use crate::error::{CliError, Result};

/// Parses an ISO-8601 date (`2024-03-01`) or datetime
/// (`2024-03-01T06:00`, `2024-03-01 06:00:00`, optionally with `Z` or an
/// offset, which is converted to UTC).
pub fn parse_timestamp(s: &str) -> std::result::Result<NaiveDateTime, String> {
    let s = s.trim();
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(d.and_hms_opt(0, 0, 0).expect("midnight exists"));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(t);
        }
    }
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.naive_utc());
    }
    if let Some(body) = s.strip_suffix('Z') {
        return parse_timestamp(body);
    }
    Err(format!("`{s}` is not an ISO-8601 date or datetime"))
}

/// Days elapsed from `epoch` to `t`.
pub fn days_since(epoch: NaiveDateTime, t: NaiveDateTime) -> f64 {
    let d = t - epoch;
    let ms = d.num_milliseconds() as f64;
    ms / 86_400_000.0
}

/// Timestamp `days` after `epoch`, rounded to the second.
pub fn timestamp_at(epoch: NaiveDateTime, days: f64) -> NaiveDateTime {
    epoch + Duration::seconds((days * 86_400.0).round() as i64)
}

pub fn format_timestamp(t: NaiveDateTime) -> String {
    t.format("%Y-%m-%dT%H:%M:%S").to_string()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BadRow {
    /// 1-based line in the file.
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Series {
    /// `(days since epoch, value)` in file order.
    pub points: Vec<(f64, f64)>,
    pub rejected: Vec<BadRow>,
}

/// Reads a two-column `time,value` CSV with a header row. Lines starting
/// with `#` are skipped. Rows that do not parse, or whose value is negative
/// or not finite, are collected in [`Series::rejected`].
pub fn read_series(path: &Path, epoch: NaiveDateTime) -> Result<Series> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    read_series_from(file, epoch).map_err(|e| match e {
        CliError::Csv { source, .. } => CliError::csv(path, source),
        other => other,
    })
}

pub fn read_series_from<R: std::io::Read>(mut reader: R, epoch: NaiveDateTime) -> Result<Series> {
    let mut text = Vec::new();
    reader.read_to_end(&mut text).map_err(|e| CliError::io(PathBuf::new(), e))?;
    // The reader's own line counter skips comment lines, and a record's
    // offset can point at comments preceding it.
    let breaks: Vec<usize> = text.iter().enumerate().filter(|(_, &b)| b == b'\n').map(|(i, _)| i).collect();
    let line_of = |p: Option<&csv::Position>| {
        let Some(p) = p else { return 0 };
        let mut line = breaks.partition_point(|&b| b < p.byte() as usize);
        let mut start = p.byte() as usize;
        while text.get(start) == Some(&b'#') && line < breaks.len() {
            start = breaks[line] + 1;
            line += 1;
        }
        line as u64 + 1
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_slice());
    let mut out = Series::default();
    let mut record = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {
                let line = line_of(record.position());
                match parse_row(&record, epoch) {
                    Ok(p) => out.points.push(p),
                    Err(reason) => out.rejected.push(BadRow { line, reason }),
                }
            }
            Err(e) => {
                let line = line_of(e.position());
                if matches!(e.kind(), csv::ErrorKind::Io(_)) {
                    return Err(CliError::csv(PathBuf::new(), e));
                }
                out.rejected.push(BadRow { line, reason: e.to_string() });
            }
        }
    }
    Ok(out)
}

fn parse_row(r: &csv::StringRecord, epoch: NaiveDateTime) -> std::result::Result<(f64, f64), String> {
    if r.len() < 2 {
        return Err(format!("expected 2 fields, found {}", r.len()));
    }
    let t = parse_timestamp(&r[0])?;
    let v: f64 = r[1].parse().map_err(|_| format!("`{}` is not a number", &r[1]))?;
    if !v.is_finite() || v < 0.0 {
        return Err(format!("value {v} must be finite and nonnegative"));
    }
    Ok((days_since(epoch, t), v))
}

/// Shortest round-trip scientific form; identical across platforms.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x:e}")
    }
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// CSV file with a leading `#` comment naming the table it mirrors and a
/// header of `name [unit]` cells.
pub struct Table {
    path: PathBuf,
    inner: csv::Writer<BufWriter<File>>,
    rows: u64,
}

impl Table {
    pub fn create(path: &Path, comment: &str, columns: &[(&str, &str)]) -> Result<Self> {
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        let mut w = BufWriter::new(file);
        for line in comment.lines() {
            writeln!(w, "# {line}").map_err(|e| CliError::io(path, e))?;
        }
        let mut inner = csv::WriterBuilder::new().from_writer(w);
        let header: Vec<String> = columns.iter().map(|(n, u)| format!("{n} [{u}]")).collect();
        inner.write_record(&header).map_err(|e| CliError::csv(path, e))?;
        Ok(Self { path: path.to_path_buf(), inner, rows: 0 })
    }

    pub fn row<I, S>(&mut self, cells: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.rows += 1;
        self.inner.write_record(cells).map_err(|e| CliError::csv(&self.path, e))
    }

    pub fn finish(mut self) -> Result<PathBuf> {
        self.inner.flush().map_err(|e| CliError::io(&self.path, e))?;
        Ok(self.path)
    }

    pub fn rows(&self) -> u64 {
        self.rows
    }
}

/// Bytes a table of `rows` rows with `columns` numeric cells occupies,
/// at most.
pub fn table_bytes(rows: u64, columns: usize) -> f64 {
    rows as f64 * columns as f64 * 25.0
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}
