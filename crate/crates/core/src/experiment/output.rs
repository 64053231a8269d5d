use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;
use std::str::FromStr;

use super::config::Method;
use crate::dataset::EnvId;
use crate::error::{Error, Result};

pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const BOXPLOT_FILE: &str = "boxplot_data.csv";

const METRICS_HEADER: [&str; 6] = ["method", "setting", "replication", "scope", "coverage", "avg_length"];

/// Which test points a metric row covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scope {
    Pooled,
    Env(EnvId),
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scope::Pooled => f.write_str("pooled"),
            Scope::Env(e) => write!(f, "env{e}"),
        }
    }
}

impl FromStr for Scope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "pooled" {
            return Ok(Scope::Pooled);
        }
        s.strip_prefix("env")
            .and_then(|e| e.parse().ok())
            .map(Scope::Env)
            .ok_or_else(|| Error::invalid(format!("bad scope `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub method: Method,
    pub setting: String,
    pub replication: usize,
    pub scope: Scope,
    pub coverage: f64,
    pub avg_length: f64,
}

impl MetricsRow {
    pub(crate) fn sort_key(&self) -> (Method, &str, usize, Scope) {
        (self.method, &self.setting, self.replication, self.scope)
    }
}

/// Mean and sample standard deviation of a metric across replications.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: Method,
    pub setting: String,
    pub scope: Scope,
    pub replications: usize,
    pub coverage_mean: f64,
    pub coverage_sd: f64,
    pub length_mean: f64,
    pub length_sd: f64,
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if !mean.is_finite() {
        return (mean, f64::INFINITY);
    }
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Groups rows by method, setting and scope.
pub fn summarize(rows: &[MetricsRow]) -> Result<Vec<SummaryRow>> {
    if rows.is_empty() {
        return Err(Error::invalid("no metric rows to summarize"));
    }
    type Key<'a> = (Method, &'a str, Scope);
    let mut groups: BTreeMap<Key, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in rows {
        let g = groups.entry((r.method, &r.setting, r.scope)).or_default();
        g.0.push(r.coverage);
        g.1.push(r.avg_length);
    }
    Ok(groups
        .into_iter()
        .map(|((method, setting, scope), (cov, len))| {
            let (coverage_mean, coverage_sd) = mean_sd(&cov);
            let (length_mean, length_sd) = mean_sd(&len);
            SummaryRow {
                method,
                setting: setting.to_string(),
                scope,
                replications: cov.len(),
                coverage_mean,
                coverage_sd,
                length_mean,
                length_sd,
            }
        })
        .collect())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::invalid(format!("{}: {other:?}", path.display())),
    }
}

pub fn write_metrics(path: impl AsRef<Path>, rows: &[MetricsRow]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_writer(create(path)?);
    let err = |e| csv_err(path, e);
    w.write_record(METRICS_HEADER).map_err(err)?;
    for r in rows {
        w.write_record([
            r.method.to_string(),
            r.setting.clone(),
            r.replication.to_string(),
            r.scope.to_string(),
            r.coverage.to_string(),
            r.avg_length.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let err = |e| csv_err(path, e);
    w.write_record([
        "method",
        "setting",
        "scope",
        "replications",
        "coverage_mean",
        "coverage_sd",
        "length_mean",
        "length_sd",
    ])
    .map_err(err)?;
    for r in rows {
        w.write_record([
            r.method.to_string(),
            r.setting.clone(),
            r.scope.to_string(),
            r.replications.to_string(),
            r.coverage_mean.to_string(),
            r.coverage_sd.to_string(),
            r.length_mean.to_string(),
            r.length_sd.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

// Long format, one value per line, for plotting distributions over replications.
fn write_boxplot(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let err = |e| csv_err(path, e);
    w.write_record(["method", "setting", "scope", "replication", "metric", "value"])
        .map_err(err)?;
    for r in rows {
        for (metric, value) in [("coverage", r.coverage), ("avg_length", r.avg_length)] {
            w.write_record([
                r.method.to_string(),
                r.setting.clone(),
                r.scope.to_string(),
                r.replication.to_string(),
                metric.to_string(),
                value.to_string(),
            ])
            .map_err(err)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `metrics.csv`, `summary.csv` and `boxplot_data.csv` into `out_dir`,
/// creating it if needed.
pub fn emit_outputs(out_dir: impl AsRef<Path>, rows: &[MetricsRow]) -> Result<Vec<SummaryRow>> {
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let summary = if rows.is_empty() { Vec::new() } else { summarize(rows)? };
    write_metrics(dir.join(METRICS_FILE), rows)?;
    write_summary(&dir.join(SUMMARY_FILE), &summary)?;
    write_boxplot(&dir.join(BOXPLOT_FILE), rows)?;
    Ok(summary)
}

/// Reads a file written by [`write_metrics`].
pub fn read_metrics(path: impl AsRef<Path>) -> Result<Vec<MetricsRow>> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = rdr.headers().map_err(|e| csv_err(path, e))?;
    if header.iter().ne(METRICS_HEADER) {
        return Err(Error::parse(&name, 1, format!("expected header `{}`", METRICS_HEADER.join(","))));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |what: &str| Error::parse(&name, line, format!("bad {what}"));
        let float = |i: usize, what: &str| rec[i].trim().parse::<f64>().map_err(|_| bad(what));
        rows.push(MetricsRow {
            method: rec[0].parse().map_err(|_| bad("method"))?,
            setting: rec[1].to_string(),
            replication: rec[2].trim().parse().map_err(|_| bad("replication"))?,
            scope: rec[3].parse().map_err(|_| bad("scope"))?,
            coverage: float(4, "coverage")?,
            avg_length: float(5, "avg_length")?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: Method, rep: usize, scope: Scope, cov: f64, len: f64) -> MetricsRow {
        MetricsRow {
            method,
            setting: "FOU".into(),
            replication: rep,
            scope,
            coverage: cov,
            avg_length: len,
        }
    }

    #[test]
    fn sample_sd_matches_hand_computation() {
        let rows = vec![
            row(Method::ScIrm, 0, Scope::Pooled, 0.9, 1.0),
            row(Method::ScIrm, 1, Scope::Pooled, 1.0, 3.0),
        ];
        let s = summarize(&rows).unwrap();
        assert_eq!(s.len(), 1);
        assert!((s[0].coverage_mean - 0.95).abs() < 1e-15);
        assert!((s[0].coverage_sd - 0.1 / 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(s[0].length_mean, 2.0);
        assert!((s[0].length_sd - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn infinite_lengths_propagate() {
        let rows = vec![
            row(Method::AcIrm, 0, Scope::Env(1), 1.0, f64::INFINITY),
            row(Method::AcIrm, 1, Scope::Env(1), 1.0, 2.0),
        ];
        let s = summarize(&rows).unwrap();
        assert_eq!(s[0].length_mean, f64::INFINITY);
        assert_eq!(s[0].coverage_sd, 0.0);
    }

    #[test]
    fn roundtrip_and_files() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![
            row(Method::ScErm, 0, Scope::Pooled, 0.95, 1.25),
            row(Method::ScErm, 0, Scope::Env(2), 0.9, f64::INFINITY),
        ];
        emit_outputs(dir.path(), &rows).unwrap();
        assert_eq!(read_metrics(dir.path().join(METRICS_FILE)).unwrap(), rows);
        let summary = fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap();
        assert!(summary.starts_with("method,setting,scope,replications,"));
        let boxplot = fs::read_to_string(dir.path().join(BOXPLOT_FILE)).unwrap();
        assert_eq!(boxplot.lines().count(), 1 + 2 * rows.len());
    }

    #[test]
    fn empty_rows_write_headers_only() {
        let dir = tempfile::tempdir().unwrap();
        emit_outputs(dir.path(), &[]).unwrap();
        let metrics = fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap();
        assert_eq!(metrics.trim(), METRICS_HEADER.join(","));
    }

    #[test]
    fn grouping_keeps_scopes_apart() {
        let rows = vec![
            row(Method::ScIrm, 0, Scope::Pooled, 0.9, 1.0),
            row(Method::ScIrm, 0, Scope::Env(0), 0.8, 1.0),
        ];
        let s = summarize(&rows).unwrap();
        assert_eq!(s.len(), 2);
        assert!(s.iter().all(|r| r.replications == 1 && r.coverage_sd == 0.0));
        assert!(summarize(&[]).is_err());
    }

    #[test]
    fn scope_text() {
        assert_eq!("pooled".parse::<Scope>().unwrap(), Scope::Pooled);
        assert_eq!("env-3".parse::<Scope>().unwrap(), Scope::Env(-3));
        assert!("e1".parse::<Scope>().is_err());
    }
}
