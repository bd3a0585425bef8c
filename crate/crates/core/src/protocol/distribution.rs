use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::protocol::pattern::MaskPattern;
use crate::protocol::rates::RateVector;

/// Largest modality count for which the pattern support is enumerated.
pub const MAX_ENUMERATED_MODALITIES: usize = 20;

/// Probability of `pattern` under the truncated product distribution.
///
/// Each modality is kept with probability `1 - r_m` independently, and the
/// all-missing outcome is conditioned away.
pub fn pattern_probability(rates: &RateVector, pattern: &MaskPattern) -> Result<f64> {
    if pattern.len() != rates.len() {
        return Err(Error::Dimension {
            context: "pattern length vs modality count",
            expected: rates.len(),
            got: pattern.len(),
        });
    }
    Ok(untruncated(rates.rates(), pattern) / (1.0 - rates.all_missing_probability()))
}

fn untruncated(rates: &[f64], pattern: &MaskPattern) -> f64 {
    rates
        .iter()
        .zip(pattern.bits())
        .map(|(&r, observed)| if observed { 1.0 - r } else { r })
        .product()
}

/// Exact marginal `P(e_m = 0)` after removing the all-missing pattern.
///
/// Equals `r_m (1 - prod_{m' != m} r_m') / (1 - prod_m' r_m')`, which is
/// below `r_m` whenever every rate is positive.
pub fn marginal_missing_rate(rates: &RateVector, m: usize) -> Result<f64> {
    if m >= rates.len() {
        return Err(Error::Dimension {
            context: "modality index",
            expected: rates.len(),
            got: m,
        });
    }
    let others: f64 = rates
        .rates()
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != m)
        .map(|(_, &r)| r)
        .product();
    let r = rates.rate(m);
    Ok(r * (1.0 - others) / (1.0 - r * others))
}

pub fn marginal_missing_rates(rates: &RateVector) -> Vec<f64> {
    (0..rates.len())
        .map(|m| marginal_missing_rate(rates, m).expect("index in range"))
        .collect()
}

/// The full table of pattern probabilities over the `2^M - 1` support.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternDistribution {
    modalities: usize,
    // indexed by pattern code - 1
    probabilities: Vec<f64>,
}

impl PatternDistribution {
    pub fn new(rates: &RateVector) -> Result<Self> {
        let m = rates.len();
        if m > MAX_ENUMERATED_MODALITIES {
            return Err(Error::TooManyModalities {
                max: MAX_ENUMERATED_MODALITIES,
                got: m,
            });
        }
        let norm = 1.0 - rates.all_missing_probability();
        let probabilities = MaskPattern::all(m)
            .map(|p| untruncated(rates.rates(), &p) / norm)
            .collect();
        Ok(PatternDistribution {
            modalities: m,
            probabilities,
        })
    }

    pub fn modalities(&self) -> usize {
        self.modalities
    }

    pub fn probability(&self, pattern: &MaskPattern) -> f64 {
        assert_eq!(pattern.len(), self.modalities);
        self.probabilities[(pattern.code() - 1) as usize]
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn support(&self) -> impl Iterator<Item = (MaskPattern, f64)> + '_ {
        MaskPattern::all(self.modalities).zip(self.probabilities.iter().copied())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DivergenceKind {
    #[default]
    Kl,
    Js,
}

impl fmt::Display for DivergenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DivergenceKind::Kl => "kl",
            DivergenceKind::Js => "js",
        })
    }
}

impl FromStr for DivergenceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "kl" => Ok(DivergenceKind::Kl),
            "js" => Ok(DivergenceKind::Js),
            _ => Err(Error::config("divergence", format!("unknown kind `{s}`"))),
        }
    }
}

/// A divergence value; KL is infinite when `a` puts mass where `b` has none.
///
/// Serialized as a JSON number, or as the string `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Divergence {
    Finite(f64),
    Infinite,
}

impl Divergence {
    pub fn value(&self) -> f64 {
        match *self {
            Divergence::Finite(v) => v,
            Divergence::Infinite => f64::INFINITY,
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Divergence::Infinite)
    }
}

impl fmt::Display for Divergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Divergence::Finite(v) => write!(f, "{v}"),
            Divergence::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for Divergence {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match *self {
            Divergence::Finite(v) => serializer.serialize_f64(v),
            Divergence::Infinite => serializer.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Divergence {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Num(v) => Ok(Divergence::Finite(v)),
            Repr::Str(s) if s == "inf" => Ok(Divergence::Infinite),
            Repr::Str(s) => Err(serde::de::Error::custom(format!(
                "expected number or \"inf\", got {s:?}"
            ))),
        }
    }
}

/// `D(p_a || p_b)` between the pattern distributions induced by two rate
/// vectors, summed over the explicit pattern support with `0 log 0 = 0`.
pub fn divergence(a: &RateVector, b: &RateVector, kind: DivergenceKind) -> Result<Divergence> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            context: "divergence operands",
            expected: a.len(),
            got: b.len(),
        });
    }
    let p = PatternDistribution::new(a)?;
    let q = PatternDistribution::new(b)?;
    Ok(match kind {
        DivergenceKind::Kl => kl(p.probabilities(), q.probabilities()),
        DivergenceKind::Js => {
            let mid: Vec<f64> = p
                .probabilities()
                .iter()
                .zip(q.probabilities())
                .map(|(x, y)| 0.5 * (x + y))
                .collect();
            // the midpoint dominates both sides, so both terms are finite
            let js = 0.5 * kl(p.probabilities(), &mid).value()
                + 0.5 * kl(q.probabilities(), &mid).value();
            Divergence::Finite(js.clamp(0.0, std::f64::consts::LN_2))
        }
    })
}

fn kl(p: &[f64], q: &[f64]) -> Divergence {
    let mut total = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Divergence::Infinite;
        }
        total += pi * (pi / qi).ln();
    }
    Divergence::Finite(total.max(0.0))
}
