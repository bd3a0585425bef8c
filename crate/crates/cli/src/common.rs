use std::path::Path;

use missdiag_core::config::{parse_set, ExperimentConfig};
use missdiag_core::report::write_atomic;
use missdiag_core::Error;

pub use missdiag_core::config::Overrides;

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_DEGENERATE: u8 = 4;

pub const SEED_ENV: &str = "MISSDIAG_SEED";

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Io { .. } | Error::Parse { .. } | Error::Json(_) => EXIT_IO,
            Error::DegenerateContribution => EXIT_DEGENERATE,
            _ => EXIT_CONFIG,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

pub fn overrides(flag_seed: Option<u64>, sets: &[String]) -> CliResult<Overrides> {
    let env_seed = match std::env::var(SEED_ENV) {
        Ok(v) => Some(
            v.trim()
                .parse()
                .map_err(|_| CliError::config(format!("{SEED_ENV}: `{v}` is not an unsigned integer")))?,
        ),
        Err(_) => None,
    };
    let sets = sets.iter().map(|s| parse_set(s)).collect::<Result<_, _>>()?;
    Ok(Overrides {
        env_seed,
        sets,
        flag_seed,
    })
}

pub fn load_config(args: &crate::ConfigArgs) -> CliResult<ExperimentConfig> {
    Ok(ExperimentConfig::load(&args.config, &args.overrides()?)?)
}

pub fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e).into())
}

/// Create the parent directory if needed, then write atomically.
pub fn write_file(path: &Path, text: &str) -> CliResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    write_atomic(path, text.as_bytes())?;
    Ok(())
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    text.push('\n');
    write_file(path, &text)
}

/// A comma-separated rate list such as `0.1,0.2,0.6`.
#[derive(Debug, Clone)]
pub struct Rates(pub Vec<f64>);

impl std::str::FromStr for Rates {
    type Err = String;

    fn from_str(text: &str) -> Result<Self, String> {
        text.split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|_| format!("`{t}` is not a number")))
            .collect::<Result<_, _>>()
            .map(Rates)
    }
}

pub fn display_name(path: &Path) -> String {
    path.display().to_string()
}
