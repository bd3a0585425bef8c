use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::pattern::MAX_MODALITIES;

/// Per-modality missing probabilities, in modality order.
///
/// Every rate lies in `[0, 1)`. A shared-rate (SMR) protocol is the special
/// case where all entries are equal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RateVectorRepr", into = "RateVectorRepr")]
pub struct RateVector {
    names: Vec<String>,
    rates: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RateVectorRepr {
    modalities: Vec<String>,
    rates: Vec<f64>,
}

impl TryFrom<RateVectorRepr> for RateVector {
    type Error = Error;

    fn try_from(repr: RateVectorRepr) -> Result<Self> {
        RateVector::new(repr.modalities, repr.rates)
    }
}

impl From<RateVector> for RateVectorRepr {
    fn from(rates: RateVector) -> Self {
        RateVectorRepr {
            modalities: rates.names,
            rates: rates.rates,
        }
    }
}

impl RateVector {
    pub fn new<S: Into<String>>(names: Vec<S>, rates: Vec<f64>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.len() != rates.len() {
            return Err(Error::Dimension {
                context: "modality names vs rates",
                expected: names.len(),
                got: rates.len(),
            });
        }
        if rates.len() < 2 {
            return Err(Error::TooFewModalities {
                min: 2,
                got: rates.len(),
            });
        }
        if rates.len() > MAX_MODALITIES {
            return Err(Error::TooManyModalities {
                max: MAX_MODALITIES,
                got: rates.len(),
            });
        }
        for (index, &value) in rates.iter().enumerate() {
            if !(0.0..1.0).contains(&value) {
                return Err(Error::InvalidRate { index, value });
            }
        }
        let mut seen = HashSet::new();
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(Error::DuplicateName(name.clone()));
            }
        }
        Ok(RateVector { names, rates })
    }

    /// Rates with generated names `m0, m1, ...`.
    pub fn from_rates(rates: Vec<f64>) -> Result<Self> {
        let names = (0..rates.len()).map(|m| format!("m{m}")).collect();
        Self::new(names, rates)
    }

    /// The SMR vector: every modality missing with probability `rate`.
    pub fn shared<S: Into<String>>(names: Vec<S>, rate: f64) -> Result<Self> {
        let rates = vec![rate; names.len()];
        Self::new(names, rates)
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn rate(&self, m: usize) -> f64 {
        self.rates[m]
    }

    pub fn is_shared(&self) -> bool {
        self.rates.windows(2).all(|w| w[0] == w[1])
    }

    /// Probability that the untruncated product measure drops every modality.
    pub fn all_missing_probability(&self) -> f64 {
        self.rates.iter().product()
    }

    /// The mean-matched SMR counterpart of this vector.
    pub fn mean_matched(&self) -> RateVector {
        RateVector {
            names: self.names.clone(),
            rates: vec![mean_match_shared(self); self.len()],
        }
    }
}

/// Shared rate with the same expected number of missing modalities as `rates`.
pub fn mean_match_shared(rates: &RateVector) -> f64 {
    // exact for SMR input; the summed mean can drift by an ulp
    if rates.is_shared() {
        return rates.rates[0];
    }
    rates.rates.iter().sum::<f64>() / rates.len() as f64
}
