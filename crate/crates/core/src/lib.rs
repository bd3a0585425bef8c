//! Missing-modality protocols and modality-level diagnostics.
//!
//! * [`protocol`]: shared and imbalanced missing-rate masking, exact pattern
//!   probabilities, truncated marginals, divergences and mean matching.
//! * [`equity`]: the Modality Equity Index from ablation tables.
//! * [`learning`]: the Modality Learning Index from gradient-norm traces.
//! * [`simtrainer`]: a deterministic toy multimodal trainer that produces
//!   both kinds of input.
//! * [`formats`], [`report`], [`config`]: file interfaces and provenance.

pub mod config;
pub mod equity;
mod error;
pub mod formats;
pub mod learning;
pub mod protocol;
pub mod report;
pub mod rng;
pub mod simtrainer;

pub use error::{Error, Result};

pub use equity::{mei_from_table, AblationTable, MeiMode, MeiResult, PerfMetric};
pub use learning::{mli, GradSample, GradTrace, MliResult};
pub use protocol::{MaskMatrix, MaskPattern, RateVector};
