//! Modality Equity Index.
//!
//! For each modality `m`, the drops `Perf_full - Perf_c` over every
//! combination `c` without `m` are summarised as a signal-to-noise ratio
//! `zeta_m = mu_m / (sigma_m + eps)`. The magnitudes `|zeta_m|` are normalised
//! into a distribution `p`, and MEI is read off its order-2 Renyi entropy
//! `H2(p) = -ln sum p_m^2` relative to `ln M`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::MaskPattern;

pub const DEFAULT_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    HigherBetter,
    LowerBetter,
}

/// A task metric and which direction is better.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerfMetric {
    pub name: String,
    pub orientation: Orientation,
}

impl PerfMetric {
    pub fn new(name: impl Into<String>, orientation: Orientation) -> Self {
        PerfMetric {
            name: name.into(),
            orientation,
        }
    }

    /// Orientation inferred from the name: error metrics (MAE, MSE, RMSE)
    /// are lower-better, everything else higher-better.
    pub fn named(name: &str) -> Self {
        let orientation = match name.to_ascii_uppercase().as_str() {
            "MAE" | "MSE" | "RMSE" => Orientation::LowerBetter,
            _ => Orientation::HigherBetter,
        };
        PerfMetric::new(name, orientation)
    }

    /// Sign-normalised degradation: positive when `score` is worse than `full`.
    pub fn drop(&self, full: f64, score: f64) -> f64 {
        match self.orientation {
            Orientation::HigherBetter => full - score,
            Orientation::LowerBetter => score - full,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeiMode {
    /// `(ln M - H2) / ln M`: 1 when one modality dominates.
    DominanceIsOne,
    /// `H2 / ln M`: 1 when contributions are perfectly balanced.
    #[default]
    BalancedIsOne,
}

impl MeiMode {
    pub const ALL: [MeiMode; 2] = [MeiMode::BalancedIsOne, MeiMode::DominanceIsOne];
}

impl fmt::Display for MeiMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MeiMode::DominanceIsOne => "dominance-is-one",
            MeiMode::BalancedIsOne => "balanced-is-one",
        })
    }
}

impl FromStr for MeiMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dominance-is-one" => Ok(MeiMode::DominanceIsOne),
            "balanced-is-one" => Ok(MeiMode::BalancedIsOne),
            _ => Err(Error::config("mei_mode", format!("unknown mode `{s}`"))),
        }
    }
}

/// Scores of one metric for the full configuration and every strict,
/// nonempty modality subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    modalities: usize,
    metric: PerfMetric,
    perf_full: f64,
    entries: BTreeMap<MaskPattern, f64>,
}

impl AblationTable {
    /// Build from a map over all `2^M - 1` patterns, including the full one.
    pub fn from_scores(
        modalities: usize,
        metric: PerfMetric,
        scores: &BTreeMap<MaskPattern, f64>,
    ) -> Result<Self> {
        let full = MaskPattern::full(modalities);
        let perf_full = match scores.get(&full) {
            Some(&v) => v,
            None => {
                return Err(Error::IncompleteTable {
                    missing: missing_combinations(modalities, scores),
                })
            }
        };
        let entries = scores
            .iter()
            .filter(|(p, _)| **p != full)
            .map(|(p, v)| (*p, *v))
            .collect();
        Self::new(modalities, metric, perf_full, entries)
    }

    pub fn new(
        modalities: usize,
        metric: PerfMetric,
        perf_full: f64,
        entries: BTreeMap<MaskPattern, f64>,
    ) -> Result<Self> {
        if modalities < 2 {
            return Err(Error::TooFewModalities {
                min: 2,
                got: modalities,
            });
        }
        if modalities > crate::protocol::MAX_ENUMERATED_MODALITIES {
            return Err(Error::TooManyModalities {
                max: crate::protocol::MAX_ENUMERATED_MODALITIES,
                got: modalities,
            });
        }
        if let Some(p) = entries.keys().find(|p| p.len() != modalities) {
            return Err(Error::InvalidTable(format!(
                "combination {p} has {} modalities, expected {modalities}",
                p.len()
            )));
        }
        if entries.contains_key(&MaskPattern::full(modalities)) {
            return Err(Error::InvalidTable(
                "full combination belongs in perf_full, not entries".into(),
            ));
        }
        if !perf_full.is_finite() {
            return Err(Error::InvalidTable("perf_full is not finite".into()));
        }
        if let Some((p, v)) = entries.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidTable(format!("score {v} for {p} is not finite")));
        }
        let mut with_full = entries.clone();
        with_full.insert(MaskPattern::full(modalities), perf_full);
        let missing = missing_combinations(modalities, &with_full);
        if !missing.is_empty() {
            return Err(Error::IncompleteTable { missing });
        }
        Ok(AblationTable {
            modalities,
            metric,
            perf_full,
            entries,
        })
    }

    /// The same scores under a different metric declaration, e.g. to
    /// override an orientation inferred from the name.
    pub fn with_metric(mut self, metric: PerfMetric) -> Self {
        self.metric = metric;
        self
    }

    pub fn modalities(&self) -> usize {
        self.modalities
    }

    pub fn metric(&self) -> &PerfMetric {
        &self.metric
    }

    pub fn perf_full(&self) -> f64 {
        self.perf_full
    }

    pub fn entries(&self) -> &BTreeMap<MaskPattern, f64> {
        &self.entries
    }

    /// Score under `pattern`; the full pattern yields `perf_full`.
    pub fn score(&self, pattern: &MaskPattern) -> Option<f64> {
        if pattern.is_full() && pattern.len() == self.modalities {
            Some(self.perf_full)
        } else {
            self.entries.get(pattern).copied()
        }
    }

    /// All rows including the full configuration, in canonical order.
    pub fn rows(&self) -> impl Iterator<Item = (MaskPattern, f64)> + '_ {
        MaskPattern::all(self.modalities).map(move |p| (p, self.score(&p).expect("complete")))
    }
}

fn missing_combinations(modalities: usize, scores: &BTreeMap<MaskPattern, f64>) -> Vec<String> {
    MaskPattern::all(modalities)
        .filter(|p| !scores.contains_key(p))
        .map(|p| p.to_string())
        .collect()
}

/// Every nonempty combination in which modality `m` is unavailable, in
/// canonical order. There are `2^(M-1) - 1` of them.
pub fn combos_excluding(modalities: usize, m: usize) -> Result<Vec<MaskPattern>> {
    if modalities < 2 {
        return Err(Error::TooFewModalities {
            min: 2,
            got: modalities,
        });
    }
    if m >= modalities {
        return Err(Error::Dimension {
            context: "modality index",
            expected: modalities,
            got: m,
        });
    }
    Ok(MaskPattern::all(modalities)
        .filter(|p| !p.is_observed(m))
        .collect())
}

/// The drop vector `s_m`, sign-normalised so positive means degradation.
pub fn perf_drops(table: &AblationTable, m: usize) -> Result<Vec<f64>> {
    combos_excluding(table.modalities, m)?
        .into_iter()
        .map(|c| {
            table
                .score(&c)
                .map(|v| table.metric.drop(table.perf_full, v))
                .ok_or_else(|| Error::IncompleteTable {
                    missing: vec![c.to_string()],
                })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub mu: f64,
    /// Population standard deviation of the drops.
    pub sigma: f64,
    pub zeta: f64,
}

pub fn contribution(drops: &[f64], epsilon: f64) -> Result<Contribution> {
    if drops.is_empty() {
        return Err(Error::Dimension {
            context: "drop vector",
            expected: 1,
            got: 0,
        });
    }
    let n = drops.len() as f64;
    let mu = drops.iter().sum::<f64>() / n;
    let var = drops.iter().map(|d| (d - mu).powi(2)).sum::<f64>() / n;
    let sigma = var.sqrt();
    Ok(Contribution {
        mu,
        sigma,
        zeta: mu / (sigma + epsilon),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeiResult {
    /// Clamped to `[0, 1]`.
    pub value: f64,
    /// Before clamping.
    pub raw: f64,
    pub mode: MeiMode,
    pub h2: f64,
    pub p: Vec<f64>,
}

/// Contribution distribution `p_m = |zeta_m| / (sum |zeta| + eps)`.
pub fn contribution_distribution(zetas: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    let total: f64 = zetas.iter().map(|z| z.abs()).sum();
    if total == 0.0 {
        return Err(Error::DegenerateContribution);
    }
    let denom = total + epsilon;
    Ok(zetas.iter().map(|z| z.abs() / denom).collect())
}

pub fn mei(zetas: &[f64], epsilon: f64, mode: MeiMode) -> Result<MeiResult> {
    if zetas.len() < 2 {
        return Err(Error::TooFewModalities {
            min: 2,
            got: zetas.len(),
        });
    }
    if let Some(z) = zetas.iter().find(|z| !z.is_finite()) {
        return Err(Error::InvalidTable(format!("contribution {z} is not finite")));
    }
    let p = contribution_distribution(zetas, epsilon)?;
    let h2 = -p.iter().map(|x| x * x).sum::<f64>().ln();
    let ln_m = (zetas.len() as f64).ln();
    let raw = match mode {
        MeiMode::DominanceIsOne => (ln_m - h2) / ln_m,
        MeiMode::BalancedIsOne => h2 / ln_m,
    };
    Ok(MeiResult {
        value: raw.clamp(0.0, 1.0),
        raw,
        mode,
        h2,
        p,
    })
}

/// MEI of a table together with the per-modality statistics behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableMei {
    pub metric: PerfMetric,
    pub epsilon: f64,
    pub contributions: Vec<Contribution>,
    pub result: MeiResult,
}

pub fn contributions(table: &AblationTable, epsilon: f64) -> Result<Vec<Contribution>> {
    (0..table.modalities)
        .map(|m| contribution(&perf_drops(table, m)?, epsilon))
        .collect()
}

pub fn mei_from_table(table: &AblationTable, epsilon: f64, mode: MeiMode) -> Result<TableMei> {
    let contributions = contributions(table, epsilon)?;
    let zetas: Vec<f64> = contributions.iter().map(|c| c.zeta).collect();
    let result = mei(&zetas, epsilon, mode)?;
    Ok(TableMei {
        metric: table.metric.clone(),
        epsilon,
        contributions,
        result,
    })
}

/// MEI of one table under one orientation mode; `mei` is `None` when the
/// contributions are all zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeiEntry {
    pub metric: String,
    pub mode: MeiMode,
    pub mei: Option<TableMei>,
}

pub fn mei_entries(tables: &[AblationTable], epsilon: f64) -> Result<Vec<MeiEntry>> {
    let mut out = Vec::new();
    for table in tables {
        for mode in MeiMode::ALL {
            let mei = match mei_from_table(table, epsilon, mode) {
                Ok(r) => Some(r),
                Err(Error::DegenerateContribution) => None,
                Err(e) => return Err(e),
            };
            out.push(MeiEntry {
                metric: table.metric().name.clone(),
                mode,
                mei,
            });
        }
    }
    Ok(out)
}
