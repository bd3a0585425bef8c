use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use missdiag_core::config::ExperimentConfig;
use missdiag_core::protocol::{empirical_rates, RateVector};
use missdiag_core::report::{
    DiagnosticsReport, PairedReport, ProtocolSummary, Provenance, ReportFile, ReportPayload, TOOL_VERSION,
};
use missdiag_core::equity::Orientation;
use missdiag_core::simtrainer::{run_experiment, write_run_artifacts, RunLog};

use crate::common::{display_name, load_config, write_file, CliError, CliResult};
use crate::ConfigArgs;

#[derive(Args)]
pub struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Also run the mean-matched SMR protocol with the same seeds and
    /// report the differences.
    #[arg(long)]
    paired: bool,
    /// Overrides `output_dir` from the configuration.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

fn notes(run: &RunLog) -> Vec<String> {
    let mut notes = Vec::new();
    let lower: Vec<&str> = run
        .test_tables
        .iter()
        .filter(|t| t.metric().orientation == Orientation::LowerBetter)
        .map(|t| t.metric().name.as_str())
        .collect();
    if !lower.is_empty() {
        notes.push(format!("drops of lower-better metrics ({}) are sign-normalised", lower.join(", ")));
    }
    if let Some(e) = &run.mli_error {
        notes.push(format!("MLI unavailable: {e}"));
    }
    notes
}

fn simulate_one(
    config: &ExperimentConfig,
    protocol: RateVector,
    label: &str,
    dir: &std::path::Path,
) -> CliResult<DiagnosticsReport> {
    let sim = config.simulation.as_ref().expect("checked by caller");
    let train = config.train_config(protocol.clone()).expect("simulation present");
    let run = run_experiment(&sim.synth, &train)?;
    let manifest = write_run_artifacts(&run, &sim.synth, &train, dir, label)?;
    let summary = ProtocolSummary::new(&protocol, config.divergence)?
        .with_empirical(empirical_rates(&run.train_masks), run.train_masks.len());
    out!(
        "{label}: rates {:?}, final loss {:.6}, mli {}",
        protocol.rates(),
        run.steps.last().map_or(f64::NAN, |s| s.loss),
        run.mli.as_ref().map_or_else(|| "undefined".to_string(), |m| format!("{:.6}", m.value)),
    );
    for e in run.mei.iter().filter(|e| e.mode == config.mei_mode) {
        match &e.mei {
            Some(t) => out!("{label}: mei {} {} = {:.6}, p = {:?}", e.metric, e.mode, t.result.value, t.result.p),
            None => out!("{label}: mei {} undefined (all contributions zero)", e.metric),
        }
    }
    let mut seeds = BTreeMap::from([("config".to_string(), config.seed)]);
    seeds.extend(manifest.seeds.clone());
    Ok(DiagnosticsReport {
        label: label.to_string(),
        protocol: summary,
        notes: notes(&run),
        mei: run.mei,
        mli: run.mli,
        mli_error: run.mli_error,
        provenance: Provenance {
            tool_version: TOOL_VERSION.to_string(),
            config_hash: config.hash(),
            seeds,
            files: manifest.files,
        },
    })
}

pub fn run(args: RunArgs) -> CliResult {
    let config = load_config(&args.config)?;
    if config.simulation.is_none() {
        return Err(CliError::config("simulation: block required for `simulate run`"));
    }
    let dir = args.output_dir.clone().unwrap_or_else(|| config.output_dir.clone());
    std::fs::create_dir_all(&dir).map_err(|e| missdiag_core::Error::io(&dir, e))?;
    let protocol = config.protocol()?;
    let payload = if args.paired {
        let imr = simulate_one(&config, protocol.clone(), "imr", &dir)?;
        let smr = simulate_one(&config, protocol.mean_matched(), "smr", &dir)?;
        let paired = PairedReport::new(imr, smr);
        match paired.delta_mli {
            Some(d) => out!("delta mli (imr - smr) {d:.6}"),
            None => out!("delta mli undefined"),
        }
        ReportPayload::Paired(paired)
    } else {
        ReportPayload::Single(simulate_one(&config, protocol, "run", &dir)?)
    };
    let report = ReportFile::now(payload)?;
    let path = dir.join("report.json");
    write_file(&path, &report.to_json()?)?;
    out!("wrote {}", display_name(&path));
    Ok(())
}
