//! Shared (SMR) and imbalanced (IMR) missing-rate protocols.
//!
//! A protocol is a [`RateVector`]; each sample keeps modality `m` with
//! probability `1 - r_m` independently, conditioned on at least one
//! modality being observed.

mod distribution;
mod pattern;
mod rates;
mod sampling;

pub use distribution::{
    divergence, marginal_missing_rate, marginal_missing_rates, pattern_probability, Divergence,
    DivergenceKind, PatternDistribution, MAX_ENUMERATED_MODALITIES,
};
pub use pattern::{MaskPattern, MAX_MODALITIES};
pub use rates::{mean_match_shared, RateVector};
pub use sampling::{
    apply_mask, empirical_rates, generate_mask_matrix, mask_row, sample_pattern, MaskMatrix,
};
