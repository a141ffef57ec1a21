//! CSV formats. Complex numbers are written as adjacent `re,im` columns and
//! floats in shortest round-trip form, so files reproduce bit-for-bit.

use std::io::{Read, Write};

use num_complex::Complex64;

use crate::density::NodeSet;
use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::pipeline::{ErrorReport, RecoveryMethod, TailCertificate};
use crate::spectrum::SpectralBasis;

fn parse_f64(field: &str, line: u64) -> Result<f64> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}: {field:?} is not a number")))
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

/// One row per vector, `re,im` pairs, no header.
pub fn write_frame_csv<W: Write>(out: W, matrix: &CMat) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    for i in 0..matrix.nrows() {
        let mut fields = Vec::with_capacity(2 * matrix.ncols());
        for z in matrix.row(i).iter() {
            fields.push(z.re.to_string());
            fields.push(z.im.to_string());
        }
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_frame_csv<R: Read>(input: R) -> Result<CMat> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .from_reader(input);
    let mut entries = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for record in r.records() {
        let record = record?;
        let line = line_of(&record);
        if record.len() % 2 != 0 {
            return Err(Error::Parse(format!(
                "line {line}: {} fields, expected re,im pairs",
                record.len()
            )));
        }
        let c = record.len() / 2;
        match cols {
            None => cols = Some(c),
            Some(prev) if prev != c => {
                return Err(Error::Parse(format!(
                    "line {line}: {c} entries, previous rows have {prev}"
                )))
            }
            _ => {}
        }
        for pair in 0..c {
            entries.push(Complex64::new(
                parse_f64(&record[2 * pair], line)?,
                parse_f64(&record[2 * pair + 1], line)?,
            ));
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::Parse("empty frame file".into()))?;
    if cols == 0 {
        return Err(Error::Parse("frame rows are empty".into()));
    }
    Ok(CMat::from_row_slice(rows, cols, &entries))
}

/// Columns `k,sigma,sigma_sq,label` with one-based `k`.
pub fn write_spectrum_csv<W: Write>(out: W, basis: &SpectralBasis) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["k", "sigma", "sigma_sq", "label"])?;
    for k in 0..basis.count() {
        w.write_record([
            (k + 1).to_string(),
            basis.sigmas[k].to_string(),
            basis.lambdas[k].to_string(),
            basis.labels[k].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `x1..xd,density`.
pub fn write_nodes_csv<W: Write>(out: W, nodes: &NodeSet) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (1..=nodes.dim).map(|j| format!("x{j}")).collect();
    header.push("density".into());
    w.write_record(&header)?;
    for i in 0..nodes.len() {
        let mut fields: Vec<String> = nodes.node(i).iter().map(f64::to_string).collect();
        fields.push(nodes.density[i].to_string());
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a file written by [`write_nodes_csv`]; `m` is recorded on the set.
pub fn read_nodes_csv<R: Read>(input: R, m: usize) -> Result<NodeSet> {
    let mut r = csv::Reader::from_reader(input);
    let dim = r
        .headers()?
        .len()
        .checked_sub(1)
        .filter(|&d| d > 0)
        .ok_or_else(|| Error::Parse("node file needs x columns and a density".into()))?;
    let mut coords = Vec::new();
    let mut density = Vec::new();
    for record in r.records() {
        let record = record?;
        let line = line_of(&record);
        for j in 0..dim {
            coords.push(parse_f64(&record[j], line)?);
        }
        density.push(parse_f64(&record[dim], line)?);
    }
    NodeSet::from_parts(dim, coords, density, m)
}

const REPORT_HEADER: [&str; 15] = [
    "m",
    "n_drawn",
    "n_used",
    "wce",
    "sigma_m",
    "bound_rhs",
    "retries",
    "seed",
    "method",
    "wce_upper",
    "wce_truncated",
    "m_trunc",
    "tail",
    "tau_min",
    "tau_max",
];

pub fn write_reports_csv<W: Write>(out: W, reports: &[ErrorReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_HEADER)?;
    for r in reports {
        w.write_record([
            r.m.to_string(),
            r.n_drawn.to_string(),
            r.n_used.to_string(),
            r.wce.to_string(),
            r.sigma_m.to_string(),
            r.bound_rhs.to_string(),
            r.retries.to_string(),
            r.seed.to_string(),
            r.method.to_string(),
            r.wce_upper.to_string(),
            r.wce_truncated.to_string(),
            r.m_trunc.to_string(),
            format!("{:?}", r.tail_certificate).to_lowercase(),
            r.tau.0.to_string(),
            r.tau.1.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_reports_csv<R: Read>(input: R) -> Result<Vec<ErrorReport>> {
    let mut r = csv::Reader::from_reader(input);
    if r.headers()?.iter().collect::<Vec<_>>() != REPORT_HEADER {
        return Err(Error::Parse("unexpected results header".into()));
    }
    let mut out = Vec::new();
    for record in r.records() {
        let record = record?;
        let line = line_of(&record);
        let int = |i: usize| -> Result<u64> {
            record[i]
                .parse()
                .map_err(|_| Error::Parse(format!("line {line}: bad integer {:?}", &record[i])))
        };
        let tail = match &record[12] {
            "exact" => TailCertificate::Exact,
            "kernel" => TailCertificate::Kernel,
            "trace" => TailCertificate::Trace,
            other => return Err(Error::Parse(format!("line {line}: bad tail {other:?}"))),
        };
        out.push(ErrorReport {
            m: int(0)? as usize,
            n_drawn: int(1)? as usize,
            n_used: int(2)? as usize,
            wce: parse_f64(&record[3], line)?,
            sigma_m: parse_f64(&record[4], line)?,
            bound_rhs: parse_f64(&record[5], line)?,
            retries: int(6)? as usize,
            seed: int(7)?,
            method: record[8].parse::<RecoveryMethod>()?,
            wce_upper: parse_f64(&record[9], line)?,
            wce_truncated: parse_f64(&record[10], line)?,
            m_trunc: int(11)? as usize,
            tail_certificate: tail,
            tau: (parse_f64(&record[13], line)?, parse_f64(&record[14], line)?),
        });
    }
    Ok(out)
}
