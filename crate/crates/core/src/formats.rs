//! CSV interchange formats.
//!
//! | format        | header                                  |
//! |---------------|-----------------------------------------|
//! | `maskmatrix-v1` | `sample_id,<mod_0>,...,<mod_{M-1}>`   |
//! | `abltable-v1`   | `combination,metric,value`            |
//! | `gradtrace-v1`  | `step,modality,module,grad_l2`        |
//! | `gradagg-v1`    | `step,modality,G`                     |
//!
//! All files are UTF-8 with LF line endings, comma separated, unquoted and
//! newline terminated. Reals are written in Rust's shortest round-trip
//! form, so reading a file back yields bit-identical values.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::equity::{AblationTable, PerfMetric};
use crate::error::{Error, Result};
use crate::learning::{GradSample, GradTrace};
use crate::protocol::{MaskMatrix, MaskPattern};

pub const ABLATION_HEADER: &str = "combination,metric,value";
pub const GRADTRACE_HEADER: &str = "step,modality,module,grad_l2";
pub const GRADAGG_HEADER: &str = "step,modality,G";

fn check_field(field: &str, what: &str) -> Result<()> {
    if field.is_empty() || field.contains([',', '"', '\n', '\r']) {
        return Err(Error::config(
            what,
            format!("`{field}` cannot be written to an unquoted CSV field"),
        ));
    }
    Ok(())
}

pub fn write_mask_matrix(matrix: &MaskMatrix) -> Result<String> {
    let mut out = String::from("sample_id");
    for name in matrix.rates().names() {
        check_field(name, "modalities")?;
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (i, p) in matrix.masks().iter().enumerate() {
        write!(out, "{i}").unwrap();
        for bit in p.bits() {
            out.push_str(if bit { ",1" } else { ",0" });
        }
        out.push('\n');
    }
    Ok(out)
}

/// Contents of a `maskmatrix-v1` file.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskFile {
    pub modalities: Vec<String>,
    pub ids: Vec<u64>,
    pub masks: Vec<MaskPattern>,
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .quoting(false)
        .from_reader(text.as_bytes())
}

fn parse_err(source: &str, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: source.to_string(),
        line,
        message: message.into(),
    }
}

fn csv_err(source: &str, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    parse_err(source, line, e.to_string())
}

fn headers(rdr: &mut csv::Reader<&[u8]>, source: &str) -> Result<Vec<String>> {
    Ok(rdr
        .headers()
        .map_err(|e| csv_err(source, e))?
        .iter()
        .map(str::to_string)
        .collect())
}

fn expect_header(rdr: &mut csv::Reader<&[u8]>, source: &str, expected: &str) -> Result<()> {
    let got = headers(rdr, source)?.join(",");
    if got != expected {
        return Err(parse_err(source, 1, format!("expected header `{expected}`, got `{got}`")));
    }
    Ok(())
}

fn check_trailing_newline(text: &str, source: &str) -> Result<()> {
    if !text.ends_with('\n') {
        let line = text.lines().count() as u64;
        return Err(parse_err(source, line, "missing trailing newline"));
    }
    Ok(())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, idx: usize, name: &str, source: &str) -> Result<T> {
    let line = rec.position().map_or(0, |p| p.line());
    let raw = rec
        .get(idx)
        .ok_or_else(|| parse_err(source, line, format!("missing field `{name}`")))?;
    raw.parse()
        .map_err(|_| parse_err(source, line, format!("invalid {name} `{raw}`")))
}

/// Parse `maskmatrix-v1`; `source` names the input in error messages.
pub fn read_mask_matrix(text: &str, source: &str) -> Result<MaskFile> {
    check_trailing_newline(text, source)?;
    let mut rdr = reader(text);
    let hdr = headers(&mut rdr, source)?;
    if hdr.first().map(String::as_str) != Some("sample_id") || hdr.len() < 3 {
        return Err(parse_err(source, 1, "expected header `sample_id,<mod_0>,...`"));
    }
    let modalities = hdr[1..].to_vec();
    let mut ids = Vec::new();
    let mut masks = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(source, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        ids.push(field::<u64>(&rec, 0, "sample_id", source)?);
        let bits = (1..rec.len())
            .map(|j| match &rec[j] {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(parse_err(source, line, format!("mask value `{other}` is not 0 or 1"))),
            })
            .collect::<Result<Vec<_>>>()?;
        let pattern = MaskPattern::from_bits(&bits)
            .map_err(|e| parse_err(source, line, e.to_string()))?;
        masks.push(pattern);
    }
    Ok(MaskFile { modalities, ids, masks })
}

/// Write one or more tables; each contributes all `2^M - 1` rows in
/// canonical order.
pub fn write_ablation_tables(tables: &[AblationTable]) -> Result<String> {
    let mut out = format!("{ABLATION_HEADER}\n");
    for t in tables {
        check_field(&t.metric().name, "metrics")?;
        for (p, v) in t.rows() {
            writeln!(out, "{p},{},{v}", t.metric().name).unwrap();
        }
    }
    Ok(out)
}

/// Parse `abltable-v1` into one table per metric, in order of first
/// appearance. Metric orientation is inferred from the metric name.
pub fn read_ablation_tables(text: &str, source: &str) -> Result<Vec<AblationTable>> {
    check_trailing_newline(text, source)?;
    let mut rdr = reader(text);
    expect_header(&mut rdr, source, ABLATION_HEADER)?;
    let mut order: Vec<String> = Vec::new();
    let mut by_metric: BTreeMap<String, (usize, BTreeMap<MaskPattern, f64>)> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(source, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 3 {
            return Err(parse_err(source, line, format!("expected 3 fields, got {}", rec.len())));
        }
        let pattern: MaskPattern = rec[0]
            .parse()
            .map_err(|e: Error| parse_err(source, line, e.to_string()))?;
        let metric = rec[1].to_string();
        let value: f64 = field(&rec, 2, "value", source)?;
        if !value.is_finite() {
            return Err(parse_err(source, line, format!("value `{}` is not finite", &rec[2])));
        }
        if !by_metric.contains_key(&metric) {
            order.push(metric.clone());
        }
        let (m, scores) = by_metric
            .entry(metric.clone())
            .or_insert_with(|| (pattern.len(), BTreeMap::new()));
        if *m != pattern.len() {
            return Err(parse_err(
                source,
                line,
                format!("combination `{pattern}` has {} modalities, expected {m}", pattern.len()),
            ));
        }
        if scores.insert(pattern, value).is_some() {
            return Err(parse_err(source, line, format!("duplicate row for `{pattern}` / {metric}")));
        }
    }
    if order.is_empty() {
        return Err(parse_err(source, 1, "no ablation rows"));
    }
    order
        .iter()
        .map(|name| {
            let (m, scores) = &by_metric[name];
            AblationTable::from_scores(*m, PerfMetric::named(name), scores)
        })
        .collect()
}

pub fn write_grad_samples(samples: &[GradSample]) -> String {
    let mut out = format!("{GRADTRACE_HEADER}\n");
    for s in samples {
        writeln!(out, "{},{},{},{}", s.step, s.modality, s.module, s.grad_l2).unwrap();
    }
    out
}

pub fn read_grad_samples(text: &str, source: &str) -> Result<Vec<GradSample>> {
    check_trailing_newline(text, source)?;
    let mut rdr = reader(text);
    expect_header(&mut rdr, source, GRADTRACE_HEADER)?;
    rdr.records()
        .map(|rec| {
            let rec = rec.map_err(|e| csv_err(source, e))?;
            let line = rec.position().map_or(0, |p| p.line());
            if rec.len() != 4 {
                return Err(parse_err(source, line, format!("expected 4 fields, got {}", rec.len())));
            }
            let grad_l2: f64 = field(&rec, 3, "grad_l2", source)?;
            if !grad_l2.is_finite() || grad_l2 < 0.0 {
                return Err(parse_err(source, line, format!("grad_l2 `{}` must be finite and nonnegative", &rec[3])));
            }
            Ok(GradSample {
                step: field(&rec, 0, "step", source)?,
                modality: field(&rec, 1, "modality", source)?,
                module: field(&rec, 2, "module", source)?,
                grad_l2,
            })
        })
        .collect()
}

/// Write the aggregated `G` grid, one row per defined `(step, modality)`
/// cell, using the logged step ids.
pub fn write_grad_agg(trace: &GradTrace) -> String {
    let mut out = format!("{GRADAGG_HEADER}\n");
    for (t, step) in trace.source_steps().iter().enumerate() {
        for m in 0..trace.modalities() {
            if trace.is_defined(t, m) {
                writeln!(out, "{step},{m},{}", trace.g(t, m)).unwrap();
            }
        }
    }
    out
}

pub fn read_grad_agg(text: &str, source: &str) -> Result<Vec<(u64, usize, f64)>> {
    check_trailing_newline(text, source)?;
    let mut rdr = reader(text);
    expect_header(&mut rdr, source, GRADAGG_HEADER)?;
    rdr.records()
        .map(|rec| {
            let rec = rec.map_err(|e| csv_err(source, e))?;
            let line = rec.position().map_or(0, |p| p.line());
            if rec.len() != 3 {
                return Err(parse_err(source, line, format!("expected 3 fields, got {}", rec.len())));
            }
            let g: f64 = field(&rec, 2, "G", source)?;
            if !g.is_finite() || g < 0.0 {
                return Err(parse_err(source, line, format!("G `{}` must be finite and nonnegative", &rec[2])));
            }
            Ok((field(&rec, 0, "step", source)?, field(&rec, 1, "modality", source)?, g))
        })
        .collect()
}

/// A gradient file of either kind, detected from its header.
#[derive(Debug, Clone, PartialEq)]
pub enum TraceFile {
    PerModule(Vec<GradSample>),
    Aggregated(Vec<(u64, usize, f64)>),
}

pub fn read_trace_file(text: &str, source: &str) -> Result<TraceFile> {
    let first = text.lines().next().unwrap_or("");
    match first {
        GRADTRACE_HEADER => read_grad_samples(text, source).map(TraceFile::PerModule),
        GRADAGG_HEADER => read_grad_agg(text, source).map(TraceFile::Aggregated),
        other => Err(parse_err(
            source,
            1,
            format!("unrecognised header `{other}`; expected `{GRADTRACE_HEADER}` or `{GRADAGG_HEADER}`"),
        )),
    }
}

/// Plot-ready per-modality rates: nominal, exact truncated marginal and
/// empirical.
pub fn write_rate_table(names: &[String], nominal: &[f64], marginal: &[f64], empirical: &[f64]) -> String {
    let mut out = String::from("modality,nominal_rate,marginal_rate,empirical_rate\n");
    for i in 0..names.len() {
        writeln!(out, "{},{},{},{}", names[i], nominal[i], marginal[i], empirical[i]).unwrap();
    }
    out
}
