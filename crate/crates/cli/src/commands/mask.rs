use std::path::PathBuf;

use clap::Args;
use missdiag_core::formats::{read_mask_matrix, write_mask_matrix, write_rate_table};
use missdiag_core::protocol::{
    empirical_rates, generate_mask_matrix, marginal_missing_rates, pattern_probability, MaskMatrix,
    RateVector,
};

use crate::common::{display_name, load_config, Rates, read_text, write_file, CliResult};
use crate::ConfigArgs;

/// Pattern tables get long quickly; larger M only prints per-modality rates.
const MAX_PATTERN_TABLE: usize = 8;

#[derive(Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Output file; defaults to `<output_dir>/masks.csv`.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
pub struct StatsArgs {
    /// A `maskmatrix-v1` file.
    #[arg(long)]
    input: PathBuf,
    /// Nominal rates to compare against, in column order.
    #[arg(long)]
    rates: Option<Rates>,
}

fn print_rates(rates: &RateVector, empirical: &[f64], n: usize) {
    let marginal = marginal_missing_rates(rates);
    out!("{:<16} {:>10} {:>10} {:>10} {:>8}", "modality", "nominal", "marginal", "empirical", "z");
    for (m, name) in rates.names().iter().enumerate() {
        let q = marginal[m];
        let sd = (q * (1.0 - q) / n as f64).sqrt();
        let z = if sd > 0.0 { (empirical[m] - q) / sd } else { 0.0 };
        out!(
            "{name:<16} {:>10.6} {:>10.6} {:>10.6} {z:>8.3}",
            rates.rate(m),
            q,
            empirical[m]
        );
    }
}

fn print_patterns(matrix: &MaskMatrix, rates: Option<&RateVector>) {
    if matrix.modalities() > MAX_PATTERN_TABLE {
        return;
    }
    let n = matrix.len() as f64;
    out!();
    out!("{:<10} {:>10} {:>12} {:>12}", "pattern", "count", "frequency", "exact");
    for (p, count) in matrix.pattern_counts() {
        let exact = rates
            .and_then(|r| pattern_probability(r, &p).ok())
            .map_or_else(|| "-".to_string(), |v| format!("{v:.6}"));
        out!("{:<10} {count:>10} {:>12.6} {exact:>12}", p.to_string(), count as f64 / n);
    }
}

pub fn generate(args: GenerateArgs) -> CliResult {
    let config = load_config(&args.config)?;
    let rates = config.protocol()?;
    let matrix = generate_mask_matrix(&rates, config.n, config.seed)?;
    let output = args.output.unwrap_or_else(|| config.output_dir.join("masks.csv"));
    write_file(&output, &write_mask_matrix(&matrix)?)?;
    let empirical = empirical_rates(&matrix);
    let rate_table = output.with_extension("rates.csv");
    write_file(
        &rate_table,
        &write_rate_table(rates.names(), rates.rates(), &marginal_missing_rates(&rates), &empirical),
    )?;
    out!("wrote {} ({} samples, seed {})", display_name(&output), matrix.len(), config.seed);
    out!("wrote {}", display_name(&rate_table));
    out!();
    print_rates(&rates, &empirical, matrix.len());
    print_patterns(&matrix, Some(&rates));
    Ok(())
}

pub fn stats(args: StatsArgs) -> CliResult {
    let text = read_text(&args.input)?;
    let file = read_mask_matrix(&text, &display_name(&args.input))?;
    let n = file.masks.len();
    let nominal = match args.rates {
        Some(Rates(r)) => RateVector::new(file.modalities.clone(), r)?,
        None => RateVector::new(file.modalities.clone(), vec![0.0; file.modalities.len()])?,
    };
    let matrix = MaskMatrix::from_rows(nominal.clone(), 0, file.masks)?;
    let empirical = empirical_rates(&matrix);
    out!("{} samples, {} modalities", n, matrix.modalities());
    out!();
    if nominal.rates().iter().all(|&r| r == 0.0) {
        out!("{:<16} {:>10}", "modality", "empirical");
        for (name, e) in nominal.names().iter().zip(&empirical) {
            out!("{name:<16} {e:>10.6}");
        }
        print_patterns(&matrix, None);
    } else {
        print_rates(&nominal, &empirical, n);
        print_patterns(&matrix, Some(&nominal));
    }
    Ok(())
}
