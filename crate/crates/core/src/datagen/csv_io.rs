//! Multi-environment CSV: header `env,y,x1,...,xp`, one row per sample.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::dataset::{validate_collection, EnvDataset, EnvId};
use crate::error::{Error, Result};

pub fn load_csv(path: impl AsRef<Path>) -> Result<Vec<EnvDataset>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_csv(file, &path.display().to_string())
}

/// Parses CSV from any reader. `source_name` prefixes error messages.
///
/// Environments are returned in ascending env-id order.
pub fn parse_csv(reader: impl Read, source_name: &str) -> Result<Vec<EnvDataset>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();

    let header = match records.next() {
        Some(rec) => rec.map_err(|e| csv_error(source_name, &e))?,
        None => return Err(Error::parse(source_name, 1, "missing header row")),
    };
    let p = check_header(&header, source_name)?;

    let mut groups: BTreeMap<EnvId, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for rec in records {
        let rec = rec.map_err(|e| csv_error(source_name, &e))?;
        let line = rec.position().map_or(0, |pos| pos.line());
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != p + 2 {
            return Err(Error::parse(
                source_name,
                line,
                format!("expected {} columns, found {}", p + 2, rec.len()),
            ));
        }
        let env: EnvId = rec[0]
            .parse()
            .map_err(|_| Error::parse(source_name, line, format!("env `{}` is not an integer", &rec[0])))?;
        let mut values = rec.iter().skip(1).enumerate().map(|(col, cell)| {
            let v: f64 = cell.parse().map_err(|_| {
                Error::parse(source_name, line, format!("column {}: `{cell}` is not a number", col + 2))
            })?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::parse(source_name, line, format!("column {}: non-finite value", col + 2)))
            }
        });
        let y = values.next().unwrap()?;
        let entry = groups.entry(env).or_default();
        entry.1.push(y);
        for v in values {
            entry.0.push(v?);
        }
    }
    if groups.is_empty() {
        return Err(Error::parse(source_name, 1, "no data rows"));
    }

    groups
        .into_iter()
        .map(|(env, (xs, ys))| {
            let n = ys.len();
            let features = Array2::from_shape_vec((n, p), xs).expect("row lengths checked");
            EnvDataset::new(env, features, Array1::from(ys))
        })
        .collect()
}

fn check_header(header: &csv::StringRecord, source_name: &str) -> Result<usize> {
    let bad = |msg: String| Err(Error::parse(source_name, 1, msg));
    if header.len() < 3 {
        return bad(format!("header needs `env,y,x1,...`, found {} columns", header.len()));
    }
    if &header[0] != "env" || &header[1] != "y" {
        return bad(format!("header must start with `env,y`, found `{},{}`", &header[0], &header[1]));
    }
    for (j, name) in header.iter().skip(2).enumerate() {
        if name != format!("x{}", j + 1) {
            return bad(format!("expected column `x{}`, found `{name}`", j + 1));
        }
    }
    Ok(header.len() - 2)
}

fn csv_error(source_name: &str, e: &csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::parse(source_name, line, e.to_string())
}

/// Writes environments in the same schema `load_csv` reads. Values use the
/// shortest decimal form that round-trips exactly.
pub fn write_csv(path: impl AsRef<Path>, envs: &[EnvDataset]) -> Result<()> {
    let path = path.as_ref();
    let p = validate_collection(envs)?;
    let io = |e| Error::io(path, e);
    let mut out = std::io::BufWriter::new(File::create(path).map_err(io)?);
    write!(out, "env,y").map_err(io)?;
    for j in 1..=p {
        write!(out, ",x{j}").map_err(io)?;
    }
    writeln!(out).map_err(io)?;
    for env in envs {
        for (i, y) in env.targets().iter().enumerate() {
            write!(out, "{},{y}", env.env_id()).map_err(io)?;
            for x in env.row(i) {
                write!(out, ",{x}").map_err(io)?;
            }
            writeln!(out).map_err(io)?;
        }
    }
    out.flush().map_err(io)
}
