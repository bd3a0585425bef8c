pub mod mask;
pub mod metrics;
pub mod protocol;
pub mod report;
pub mod simulate;
