//! Diagnostics reports, provenance and atomic file output.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::equity::{MeiEntry, MeiMode};
use crate::error::{Error, Result};
use crate::learning::MliResult;
use crate::protocol::{
    divergence, marginal_missing_rates, mean_match_shared, Divergence, DivergenceKind, RateVector,
};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Write `bytes` to `path` through a temporary file in the same directory,
/// then rename over the target.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.flush().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolKind {
    Smr,
    Imr,
}

/// Protocol-level diagnostics: exact marginals, the divergence from the
/// mean-matched shared-rate protocol, and (optionally) empirical rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSummary {
    pub modalities: Vec<String>,
    pub kind: ProtocolKind,
    pub rates: Vec<f64>,
    pub mean_matched_shared_rate: f64,
    pub divergence_kind: DivergenceKind,
    /// Divergence of this protocol's pattern distribution from its
    /// mean-matched SMR counterpart.
    pub divergence: Divergence,
    pub exact_marginals: Vec<f64>,
    pub empirical_rates: Option<Vec<f64>>,
    pub samples: Option<usize>,
}

impl ProtocolSummary {
    pub fn new(rates: &RateVector, kind: DivergenceKind) -> Result<Self> {
        Ok(ProtocolSummary {
            modalities: rates.names().to_vec(),
            kind: if rates.is_shared() { ProtocolKind::Smr } else { ProtocolKind::Imr },
            rates: rates.rates().to_vec(),
            mean_matched_shared_rate: mean_match_shared(rates),
            divergence_kind: kind,
            divergence: divergence(rates, &rates.mean_matched(), kind)?,
            exact_marginals: marginal_missing_rates(rates),
            empirical_rates: None,
            samples: None,
        })
    }

    pub fn with_empirical(mut self, empirical: Vec<f64>, samples: usize) -> Self {
        self.empirical_rates = Some(empirical);
        self.samples = Some(samples);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileChecksum {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub config_hash: String,
    pub seeds: BTreeMap<String, u64>,
    pub files: Vec<FileChecksum>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub label: String,
    pub protocol: ProtocolSummary,
    pub mei: Vec<MeiEntry>,
    pub mli: Option<MliResult>,
    pub mli_error: Option<String>,
    /// Caveats about how values were derived, e.g. sign-normalised
    /// lower-better metrics.
    pub notes: Vec<String>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeiDelta {
    pub metric: String,
    pub mode: MeiMode,
    pub imr: Option<f64>,
    pub smr: Option<f64>,
    /// `imr - smr`, when both are defined.
    pub delta: Option<f64>,
}

/// An IMR run and its mean-matched SMR run with paired seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedReport {
    pub imr: DiagnosticsReport,
    pub smr: DiagnosticsReport,
    /// `MLI(IMR) - MLI(SMR)`.
    pub delta_mli: Option<f64>,
    pub delta_mei: Vec<MeiDelta>,
}

impl PairedReport {
    pub fn new(imr: DiagnosticsReport, smr: DiagnosticsReport) -> Self {
        let delta_mli = match (&imr.mli, &smr.mli) {
            (Some(a), Some(b)) => Some(a.value - b.value),
            _ => None,
        };
        let delta_mei = imr
            .mei
            .iter()
            .map(|e| {
                let a = e.mei.as_ref().map(|r| r.result.value);
                let b = smr
                    .mei
                    .iter()
                    .find(|o| o.metric == e.metric && o.mode == e.mode)
                    .and_then(|o| o.mei.as_ref())
                    .map(|r| r.result.value);
                MeiDelta {
                    metric: e.metric.clone(),
                    mode: e.mode,
                    imr: a,
                    smr: b,
                    delta: a.zip(b).map(|(a, b)| a - b),
                }
            })
            .collect();
        PairedReport {
            imr,
            smr,
            delta_mli,
            delta_mei,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedEntry {
    pub source: String,
    pub payload: ReportPayload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportPayload {
    Single(DiagnosticsReport),
    Paired(PairedReport),
    Merged(Vec<MergedEntry>),
}

/// The report file: a checksummed payload plus a timestamp kept outside the
/// checksum so that reports of identical runs compare equal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub generated_at_unix: u64,
    pub payload_sha256: String,
    pub payload: ReportPayload,
}

impl ReportFile {
    pub fn new(payload: ReportPayload, generated_at_unix: u64) -> Result<Self> {
        let payload_sha256 = sha256_hex(&serde_json::to_vec(&payload)?);
        Ok(ReportFile {
            generated_at_unix,
            payload_sha256,
            payload,
        })
    }

    pub fn now(payload: ReportPayload) -> Result<Self> {
        let secs = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        Self::new(payload, secs)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Whether the stored checksum matches the payload.
    pub fn verify(&self) -> Result<bool> {
        Ok(sha256_hex(&serde_json::to_vec(&self.payload)?) == self.payload_sha256)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equity::{mei_entries, AblationTable, PerfMetric};
    use crate::learning::{mli, GradTrace};
    use crate::protocol::MaskPattern;

    fn sample_report(label: &str, rates: &[f64]) -> DiagnosticsReport {
        let r = RateVector::new(vec!["A", "V", "L"], rates.to_vec()).unwrap();
        let scores = MaskPattern::all(3)
            .map(|p| (p, 0.3 + 0.1 * p.observed_count() as f64 + if p.is_observed(2) { 0.07 } else { 0.0 }))
            .collect();
        let t = AblationTable::from_scores(3, PerfMetric::named("UA"), &scores).unwrap();
        let trace = GradTrace::from_series(&[vec![0.1, 0.3, 0.2], vec![0.5, 0.1, 0.4], vec![0.3, 0.3, 0.3]]).unwrap();
        DiagnosticsReport {
            label: label.into(),
            protocol: ProtocolSummary::new(&r, DivergenceKind::Kl).unwrap().with_empirical(vec![0.1, 0.2, 0.55], 100),
            mei: mei_entries(&[t], 1e-8).unwrap(),
            mli: Some(mli(&trace).unwrap()),
            mli_error: None,
            notes: vec![],
            provenance: Provenance {
                tool_version: TOOL_VERSION.into(),
                config_hash: sha256_hex(b"cfg"),
                seeds: BTreeMap::from([("seed".to_string(), 7)]),
                files: vec![],
            },
        }
    }

    #[test]
    fn report_json_round_trip() {
        let paired = PairedReport::new(sample_report("imr", &[0.1, 0.2, 0.6]), sample_report("smr", &[0.3, 0.3, 0.3]));
        assert_eq!(paired.delta_mli, Some(0.0));
        let file = ReportFile::new(ReportPayload::Paired(paired), 1234).unwrap();
        let back = ReportFile::from_json(&file.to_json().unwrap()).unwrap();
        assert_eq!(back, file);
        assert!(back.verify().unwrap());
    }

    #[test]
    fn checksum_ignores_timestamp() {
        let a = ReportFile::new(ReportPayload::Single(sample_report("x", &[0.3, 0.3, 0.3])), 1).unwrap();
        let b = ReportFile::new(ReportPayload::Single(sample_report("x", &[0.3, 0.3, 0.3])), 2).unwrap();
        assert_eq!(a.payload_sha256, b.payload_sha256);
    }

    #[test]
    fn smr_summary_has_zero_divergence() {
        let r = RateVector::from_rates(vec![0.4; 3]).unwrap();
        let s = ProtocolSummary::new(&r, DivergenceKind::Js).unwrap();
        assert_eq!(s.kind, ProtocolKind::Smr);
        assert_eq!(s.divergence, Divergence::Finite(0.0));
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
