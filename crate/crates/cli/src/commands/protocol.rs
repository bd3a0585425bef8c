use std::path::PathBuf;

use clap::Args;
use missdiag_core::protocol::{divergence as pattern_divergence, mean_match_shared, DivergenceKind, RateVector};
use missdiag_core::report::ProtocolSummary;

use crate::common::{write_json, CliResult, Rates};

#[derive(Args)]
pub struct MeanMatchArgs {
    /// Per-modality missing rates, e.g. `0.1,0.2,0.6`.
    #[arg(long)]
    rates: Rates,
    /// Modality names, comma separated; defaults to m0, m1, ...
    #[arg(long, value_delimiter = ',')]
    modalities: Vec<String>,
    #[arg(long, default_value_t = DivergenceKind::Kl)]
    divergence: DivergenceKind,
    /// Also write the protocol summary as JSON.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
pub struct DivergenceArgs {
    /// Rates of the first protocol.
    #[arg(long)]
    from: Rates,
    /// Rates of the second protocol.
    #[arg(long)]
    to: Rates,
    #[arg(long, default_value_t = DivergenceKind::Kl)]
    kind: DivergenceKind,
}

fn rate_vector(names: &[String], rates: Vec<f64>) -> CliResult<RateVector> {
    if names.is_empty() {
        Ok(RateVector::from_rates(rates)?)
    } else {
        Ok(RateVector::new(names.to_vec(), rates)?)
    }
}

pub fn mean_match(args: MeanMatchArgs) -> CliResult {
    let rates = rate_vector(&args.modalities, args.rates.0)?;
    let summary = ProtocolSummary::new(&rates, args.divergence)?;
    out!("shared_rate {}", mean_match_shared(&rates));
    out!("divergence {} {}", args.divergence, summary.divergence);
    if let Some(path) = args.output {
        write_json(&path, &summary)?;
    }
    Ok(())
}

pub fn divergence(args: DivergenceArgs) -> CliResult {
    let from = RateVector::from_rates(args.from.0)?;
    let to = RateVector::from_rates(args.to.0)?;
    out!("{} {}", args.kind, pattern_divergence(&from, &to, args.kind)?);
    Ok(())
}
