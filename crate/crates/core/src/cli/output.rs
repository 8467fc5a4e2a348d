//! CSV tables. Floats use the shortest representation that parses back to the same value.

use std::path::Path;

use nalgebra::DVector;

use crate::dof::{DofReport, SupportClass};
use crate::error::{Error, Result};
use crate::gridlasso::GridCompareRow;
use crate::model::{Certificate, DiscreteMeasure, ForwardModel};
use crate::risk::{Aggregate, Summary, SweepRecord};

pub const SWEEP_HEADER: [&str; 13] = [
    "lambda_index",
    "lambda",
    "replicate",
    "mse",
    "sure",
    "sure_param",
    "k",
    "divergence",
    "p",
    "converged",
    "fd_divergence",
    "mc_divergence",
    "mc_standard_error",
];

pub const GRID_HEADER: [&str; 10] = [
    "p",
    "lambda",
    "grid_dof",
    "grid_sure",
    "grid_mse",
    "grid_degenerate",
    "blasso_k",
    "blasso_divergence",
    "blasso_sure",
    "blasso_mse",
];

pub const DOF_HEADER: [&str; 7] = ["k", "P", "rank_gamma", "sigma_min_gamma", "divergence", "nu", "support_class"];

const SUMMARY_COLUMNS: [&str; 6] = ["mse", "sure", "sure_param", "divergence", "k", "p"];

pub fn fmt(v: f64) -> String {
    format!("{v:?}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn write_rows<P: AsRef<Path>>(path: P, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path.as_ref())
        .map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn owned(header: &[&str]) -> Vec<String> {
    header.iter().map(|s| s.to_string()).collect()
}

/// Header and rows of a CSV file.
pub fn read_table<P: AsRef<Path>>(path: P) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path.as_ref()).map_err(csv_err)?;
    let header = r.headers().map_err(csv_err)?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec.map_err(csv_err)?.iter().map(String::from).collect());
    }
    Ok((header, rows))
}

fn parse<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Io(format!("cannot parse {what} from {s:?}")))
}

fn parse_opt(s: &str, what: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse(s, what).map(Some)
    }
}

pub fn write_solution<P: AsRef<Path>>(path: P, m: &DiscreteMeasure) -> Result<()> {
    let d = m.dim();
    let mut header = vec!["index".to_string()];
    header.extend((0..d).map(|i| format!("x{i}")));
    header.push("amplitude".into());
    let rows: Vec<Vec<String>> = m
        .positions()
        .iter()
        .zip(m.amplitudes())
        .enumerate()
        .map(|(j, (x, b))| {
            let mut r = vec![j.to_string()];
            r.extend(x.iter().map(|v| fmt(*v)));
            r.push(fmt(*b));
            r
        })
        .collect();
    write_rows(path, &header, &rows)
}

pub fn read_solution<P: AsRef<Path>>(path: P) -> Result<DiscreteMeasure> {
    let (header, rows) = read_table(path)?;
    let d = header.len().saturating_sub(2);
    let mut positions = Vec::new();
    let mut amplitudes = Vec::new();
    for r in rows {
        let x: Vec<f64> = r[1..=d].iter().map(|s| parse(s, "position")).collect::<Result<_>>()?;
        positions.push(DVector::from_vec(x));
        amplitudes.push(parse(&r[d + 1], "amplitude")?);
    }
    if positions.is_empty() {
        return Ok(DiscreteMeasure::zero(d));
    }
    DiscreteMeasure::new(positions, amplitudes)
}

/// `eta` at the given sample points.
pub fn write_certificate<P: AsRef<Path>>(
    path: P,
    model: &ForwardModel,
    cert: &Certificate,
    points: &[DVector<f64>],
) -> Result<()> {
    let d = model.dim();
    let mut header: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
    header.push("eta".into());
    let rows = points
        .iter()
        .map(|x| {
            let mut r: Vec<String> = x.iter().map(|v| fmt(*v)).collect();
            r.push(fmt(cert.value(model, x)?));
            Ok(r)
        })
        .collect::<Result<Vec<_>>>()?;
    write_rows(path, &header, &rows)
}

pub fn write_dof_report<P: AsRef<Path>>(path: P, r: &DofReport) -> Result<()> {
    let row = vec![
        r.k.to_string(),
        r.p.to_string(),
        r.rank_gamma.to_string(),
        fmt(r.sigma_min_gamma),
        fmt(r.divergence),
        fmt_opt(r.nu),
        r.support_class.to_string(),
    ];
    write_rows(path, &owned(&DOF_HEADER), &[row])
}

/// The scalar columns of a dof report as written.
#[derive(Debug, Clone, PartialEq)]
pub struct DofRow {
    pub k: usize,
    pub p: usize,
    pub rank_gamma: usize,
    pub sigma_min_gamma: f64,
    pub divergence: f64,
    pub nu: Option<f64>,
    pub support_class: SupportClass,
}

pub fn read_dof_report<P: AsRef<Path>>(path: P) -> Result<DofRow> {
    let (_, rows) = read_table(path)?;
    let r = rows.first().ok_or_else(|| Error::Io("empty dof report".into()))?;
    Ok(DofRow {
        k: parse(&r[0], "k")?,
        p: parse(&r[1], "P")?,
        rank_gamma: parse(&r[2], "rank_gamma")?,
        sigma_min_gamma: parse(&r[3], "sigma_min_gamma")?,
        divergence: parse(&r[4], "divergence")?,
        nu: parse_opt(&r[5], "nu")?,
        support_class: r[6].parse()?,
    })
}

pub fn write_sweep<P: AsRef<Path>>(path: P, records: &[SweepRecord]) -> Result<()> {
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            vec![
                r.lambda_index.to_string(),
                fmt(r.lambda),
                r.replicate.to_string(),
                fmt(r.mse),
                fmt(r.sure),
                fmt(r.sure_param),
                r.k.to_string(),
                fmt(r.divergence),
                r.p.to_string(),
                r.converged.to_string(),
                fmt_opt(r.fd_divergence),
                fmt_opt(r.mc_divergence),
                fmt_opt(r.mc_standard_error),
            ]
        })
        .collect();
    write_rows(path, &owned(&SWEEP_HEADER), &rows)
}

pub fn read_sweep<P: AsRef<Path>>(path: P) -> Result<Vec<SweepRecord>> {
    let (_, rows) = read_table(path)?;
    rows.iter()
        .map(|r| {
            Ok(SweepRecord {
                lambda_index: parse(&r[0], "lambda_index")?,
                lambda: parse(&r[1], "lambda")?,
                replicate: parse(&r[2], "replicate")?,
                mse: parse(&r[3], "mse")?,
                sure: parse(&r[4], "sure")?,
                sure_param: parse(&r[5], "sure_param")?,
                k: parse(&r[6], "k")?,
                divergence: parse(&r[7], "divergence")?,
                p: parse(&r[8], "p")?,
                converged: parse(&r[9], "converged")?,
                fd_divergence: parse_opt(&r[10], "fd_divergence")?,
                mc_divergence: parse_opt(&r[11], "mc_divergence")?,
                mc_standard_error: parse_opt(&r[12], "mc_standard_error")?,
            })
        })
        .collect()
}

pub fn aggregate_header() -> Vec<String> {
    let mut h = owned(&["lambda", "count", "failures"]);
    for c in SUMMARY_COLUMNS {
        for s in ["mean", "std", "se"] {
            h.push(format!("{c}_{s}"));
        }
    }
    h
}

pub fn write_aggregates<P: AsRef<Path>>(path: P, aggs: &[Aggregate]) -> Result<()> {
    let rows: Vec<Vec<String>> = aggs
        .iter()
        .map(|a| {
            let mut r = vec![fmt(a.lambda), a.count.to_string(), a.failures.to_string()];
            for s in [&a.mse, &a.sure, &a.sure_param, &a.divergence, &a.k, &a.p] {
                r.extend([fmt(s.mean), fmt(s.std), fmt(s.se)]);
            }
            r
        })
        .collect();
    write_rows(path, &aggregate_header(), &rows)
}

pub fn read_aggregates<P: AsRef<Path>>(path: P) -> Result<Vec<Aggregate>> {
    let (_, rows) = read_table(path)?;
    rows.iter()
        .map(|r| {
            let s = |i: usize| -> Result<Summary> {
                let b = 3 + 3 * i;
                Ok(Summary { mean: parse(&r[b], "mean")?, std: parse(&r[b + 1], "std")?, se: parse(&r[b + 2], "se")? })
            };
            Ok(Aggregate {
                lambda: parse(&r[0], "lambda")?,
                count: parse(&r[1], "count")?,
                failures: parse(&r[2], "failures")?,
                mse: s(0)?,
                sure: s(1)?,
                sure_param: s(2)?,
                divergence: s(3)?,
                k: s(4)?,
                p: s(5)?,
            })
        })
        .collect()
}

pub fn write_grid_compare<P: AsRef<Path>>(path: P, rows: &[GridCompareRow]) -> Result<()> {
    let out: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.p.to_string(),
                fmt(r.lambda),
                r.grid_dof.to_string(),
                fmt(r.grid_sure),
                fmt_opt(r.grid_mse),
                r.grid_degenerate.to_string(),
                r.blasso_k.to_string(),
                fmt(r.blasso_divergence),
                fmt(r.blasso_sure),
                fmt_opt(r.blasso_mse),
            ]
        })
        .collect();
    write_rows(path, &owned(&GRID_HEADER), &out)
}

pub fn read_grid_compare<P: AsRef<Path>>(path: P) -> Result<Vec<GridCompareRow>> {
    let (_, rows) = read_table(path)?;
    rows.iter()
        .map(|r| {
            Ok(GridCompareRow {
                p: parse(&r[0], "p")?,
                lambda: parse(&r[1], "lambda")?,
                grid_dof: parse(&r[2], "grid_dof")?,
                grid_sure: parse(&r[3], "grid_sure")?,
                grid_mse: parse_opt(&r[4], "grid_mse")?,
                grid_degenerate: parse(&r[5], "grid_degenerate")?,
                blasso_k: parse(&r[6], "blasso_k")?,
                blasso_divergence: parse(&r[7], "blasso_divergence")?,
                blasso_sure: parse(&r[8], "blasso_sure")?,
                blasso_mse: parse_opt(&r[9], "blasso_mse")?,
            })
        })
        .collect()
}

/// A vector given one value per line, or as a single CSV row; a non-numeric
/// first line is taken as a header.
pub fn read_vector<P: AsRef<Path>>(path: P) -> Result<DVector<f64>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        for field in line.split(',') {
            let field = field.trim();
            match field.parse::<f64>() {
                Ok(v) => values.push(v),
                Err(_) if i == 0 => break,
                Err(_) => return Err(Error::Config(format!("{}: line {}: not a number: {field:?}", path.display(), i + 1))),
            }
        }
    }
    Ok(DVector::from_vec(values))
}
