use std::path::PathBuf;

use clap::Args;
use missdiag_core::report::{MergedEntry, ReportFile, ReportPayload};

use crate::common::{display_name, read_text, write_file, CliError, CliResult};

#[derive(Args)]
pub struct MergeArgs {
    /// Report files to merge, in order.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    output: PathBuf,
}

pub fn merge(args: MergeArgs) -> CliResult {
    let mut entries = Vec::with_capacity(args.inputs.len());
    for path in &args.inputs {
        let report = ReportFile::from_json(&read_text(path)?)?;
        if !report.verify()? {
            return Err(CliError::config(format!("{}: payload checksum mismatch", display_name(path))));
        }
        entries.push(MergedEntry {
            source: display_name(path),
            payload: report.payload,
        });
    }
    let merged = ReportFile::now(ReportPayload::Merged(entries))?;
    write_file(&args.output, &merged.to_json()?)?;
    out!("merged {} reports into {}", args.inputs.len(), display_name(&args.output));
    Ok(())
}
