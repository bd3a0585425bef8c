use std::path::PathBuf;

use clap::Args;
use missdiag_core::equity::{mei_from_table, AblationTable, MeiMode, Orientation, PerfMetric, TableMei, DEFAULT_EPSILON};
use missdiag_core::formats::{read_ablation_tables, read_trace_file, TraceFile};
use missdiag_core::learning::{assemble_aggregated, assemble_trace, mli as compute_mli, MliResult, TraceWarning};
use missdiag_core::Error;
use serde::Serialize;

use crate::common::{display_name, read_text, write_json, CliError, CliResult, EXIT_DEGENERATE};

#[derive(Args)]
pub struct MeiArgs {
    /// An `abltable-v1` file.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
    /// Mode of the headline value; both modes are always computed.
    #[arg(long, default_value_t = MeiMode::BalancedIsOne)]
    mode: MeiMode,
    /// Treat this metric as lower-better (repeatable). MAE, MSE and RMSE
    /// are lower-better by default.
    #[arg(long = "lower-better", value_name = "METRIC")]
    lower_better: Vec<String>,
    /// Treat this metric as higher-better (repeatable).
    #[arg(long = "higher-better", value_name = "METRIC")]
    higher_better: Vec<String>,
    /// Also write the results as JSON.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
pub struct MliArgs {
    /// A `gradtrace-v1` or `gradagg-v1` file.
    #[arg(long)]
    input: PathBuf,
    /// Number of modalities; defaults to the largest index in the file plus one.
    #[arg(long)]
    modalities: Option<usize>,
    /// Number of modules per step; defaults to the largest index plus one.
    #[arg(long)]
    modules: Option<usize>,
    /// Use every `stride`-th step.
    #[arg(long, default_value_t = 1)]
    stride: usize,
    /// Also write the result as JSON.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Serialize)]
struct MeiOutput {
    source: String,
    headline_mode: MeiMode,
    metrics: Vec<MetricMei>,
}

#[derive(Serialize)]
struct MetricMei {
    metric: PerfMetric,
    /// `None` when every contribution is zero.
    balanced_is_one: Option<TableMei>,
    dominance_is_one: Option<TableMei>,
}

#[derive(Serialize)]
struct MliOutput {
    source: String,
    stride: usize,
    result: MliResult,
    warnings: Vec<TraceWarning>,
}

fn reorient(table: AblationTable, args: &MeiArgs) -> AblationTable {
    let name = table.metric().name.clone();
    let matches = |list: &[String]| list.iter().any(|n| n.eq_ignore_ascii_case(&name));
    if matches(&args.lower_better) {
        table.with_metric(PerfMetric::new(name, Orientation::LowerBetter))
    } else if matches(&args.higher_better) {
        table.with_metric(PerfMetric::new(name, Orientation::HigherBetter))
    } else {
        table
    }
}

fn optional(r: Result<TableMei, Error>) -> CliResult<Option<TableMei>> {
    match r {
        Ok(t) => Ok(Some(t)),
        Err(Error::DegenerateContribution) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

pub fn mei(args: MeiArgs) -> CliResult {
    if !(args.epsilon.is_finite() && args.epsilon > 0.0) {
        return Err(CliError::config("--epsilon must be positive"));
    }
    let source = display_name(&args.input);
    let tables = read_ablation_tables(&read_text(&args.input)?, &source)?;
    let mut metrics = Vec::new();
    for table in tables {
        let table = reorient(table, &args);
        metrics.push(MetricMei {
            metric: table.metric().clone(),
            balanced_is_one: optional(mei_from_table(&table, args.epsilon, MeiMode::BalancedIsOne))?,
            dominance_is_one: optional(mei_from_table(&table, args.epsilon, MeiMode::DominanceIsOne))?,
        });
    }
    let mut degenerate = Vec::new();
    for m in &metrics {
        let orientation = match m.metric.orientation {
            Orientation::HigherBetter => "higher-better",
            Orientation::LowerBetter => "lower-better",
        };
        out!("metric {} ({orientation})", m.metric.name);
        let Some(b) = &m.balanced_is_one else {
            out!("  all contributions are zero; MEI undefined");
            degenerate.push(m.metric.name.clone());
            continue;
        };
        out!("  {:<6} {:>12} {:>12} {:>12} {:>10}", "index", "mu", "sigma", "zeta", "p");
        for (i, c) in b.contributions.iter().enumerate() {
            out!(
                "  {i:<6} {:>12.6} {:>12.6} {:>12.6} {:>10.6}",
                c.mu, c.sigma, c.zeta, b.result.p[i]
            );
        }
        let dominance = m.dominance_is_one.as_ref().expect("same contributions");
        out!("  H2 {:.6}", b.result.h2);
        out!("  mei balanced-is-one  {:.6}", b.result.value);
        out!("  mei dominance-is-one {:.6}", dominance.result.value);
        let headline = match args.mode {
            MeiMode::BalancedIsOne => b,
            MeiMode::DominanceIsOne => dominance,
        };
        out!("  mei {} = {:.6}", args.mode, headline.result.value);
    }
    if let Some(path) = &args.output {
        write_json(
            path,
            &MeiOutput {
                source,
                headline_mode: args.mode,
                metrics,
            },
        )?;
    }
    if !degenerate.is_empty() {
        return Err(CliError {
            code: EXIT_DEGENERATE,
            message: format!("degenerate contributions for {}", degenerate.join(", ")),
        });
    }
    Ok(())
}

pub fn mli(args: MliArgs) -> CliResult {
    if args.stride == 0 {
        return Err(CliError::config("--stride must be positive"));
    }
    let source = display_name(&args.input);
    let (trace, warnings) = match read_trace_file(&read_text(&args.input)?, &source)? {
        TraceFile::PerModule(samples) => {
            let modalities = args
                .modalities
                .unwrap_or_else(|| samples.iter().map(|s| s.modality + 1).max().unwrap_or(0));
            let modules = args
                .modules
                .unwrap_or_else(|| samples.iter().map(|s| s.module + 1).max().unwrap_or(0));
            assemble_trace(&samples, modalities, modules)?
        }
        TraceFile::Aggregated(rows) => {
            let modalities = args
                .modalities
                .unwrap_or_else(|| rows.iter().map(|r| r.1 + 1).max().unwrap_or(0));
            assemble_aggregated(&rows, modalities)?
        }
    };
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let result = compute_mli(&trace.strided(args.stride))?;
    out!("mli {}", result.value);
    out!("raw_inner {}", result.raw_inner);
    out!("clamped {}", result.clamped);
    out!("steps {}", result.steps);
    out!("modalities {}", result.modalities);
    if let Some(path) = &args.output {
        write_json(
            path,
            &MliOutput {
                source,
                stride: args.stride,
                result,
                warnings,
            },
        )?;
    }
    Ok(())
}
