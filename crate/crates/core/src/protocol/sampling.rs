use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::protocol::pattern::MaskPattern;
use crate::protocol::rates::RateVector;
use crate::rng::{self, Domain};

/// Draw one pattern from the truncated distribution by rejection.
///
/// Each modality is kept when a uniform draw is at least `r_m`; an
/// all-missing draw is discarded and redrawn. Terminates almost surely
/// because every `r_m < 1`.
pub fn sample_pattern<R: Rng + ?Sized>(rates: &RateVector, rng: &mut R) -> MaskPattern {
    let m = rates.len();
    loop {
        let code = rates
            .rates()
            .iter()
            .fold(0u64, |acc, &r| (acc << 1) | u64::from(rng.random::<f64>() >= r));
        if code != 0 {
            return MaskPattern::from_code(code, m).expect("nonzero code of valid length");
        }
    }
}

/// Observation masks for a whole dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskMatrix {
    rates: RateVector,
    seed: u64,
    masks: Vec<MaskPattern>,
}

impl MaskMatrix {
    /// Assemble a matrix from existing rows, e.g. read back from a file.
    pub fn from_rows(rates: RateVector, seed: u64, masks: Vec<MaskPattern>) -> Result<Self> {
        if masks.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if let Some(bad) = masks.iter().find(|p| p.len() != rates.len()) {
            return Err(Error::Dimension {
                context: "mask row length",
                expected: rates.len(),
                got: bad.len(),
            });
        }
        Ok(MaskMatrix { rates, seed, masks })
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn modalities(&self) -> usize {
        self.rates.len()
    }

    pub fn rates(&self) -> &RateVector {
        &self.rates
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn masks(&self) -> &[MaskPattern] {
        &self.masks
    }

    pub fn row(&self, i: usize) -> MaskPattern {
        self.masks[i]
    }

    /// Column `m` as 0/1 observation indicators.
    pub fn column(&self, m: usize) -> Vec<u8> {
        self.masks.iter().map(|p| u8::from(p.is_observed(m))).collect()
    }

    /// Occurrence count of every pattern, in canonical order.
    pub fn pattern_counts(&self) -> Vec<(MaskPattern, u64)> {
        let m = self.modalities();
        assert!(m < 64);
        let mut counts = vec![0u64; (1usize << m) - 1];
        for p in &self.masks {
            counts[(p.code() - 1) as usize] += 1;
        }
        MaskPattern::all(m).zip(counts).collect()
    }
}

/// The mask for row `index`, a pure function of `(rates, seed, index)`.
pub fn mask_row(rates: &RateVector, seed: u64, index: u64) -> MaskPattern {
    let mut rng = rng::stream(seed, Domain::Mask, index);
    sample_pattern(rates, &mut rng)
}

/// Generate `n` masks; rows are independent, so generation runs in parallel
/// without affecting the result.
pub fn generate_mask_matrix(rates: &RateVector, n: usize, seed: u64) -> Result<MaskMatrix> {
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let masks = (0..n as u64)
        .into_par_iter()
        .map(|i| mask_row(rates, seed, i))
        .collect();
    Ok(MaskMatrix {
        rates: rates.clone(),
        seed,
        masks,
    })
}

/// Fraction of rows in which each modality is missing.
pub fn empirical_rates(matrix: &MaskMatrix) -> Vec<f64> {
    let n = matrix.len() as f64;
    (0..matrix.modalities())
        .map(|m| matrix.masks.iter().filter(|p| !p.is_observed(m)).count() as f64 / n)
        .collect()
}

/// Replace the features of unobserved modalities by zero vectors of the
/// same length.
pub fn apply_mask<V: AsRef<[f64]>>(features: &[V], pattern: &MaskPattern) -> Result<Vec<Vec<f64>>> {
    if features.len() != pattern.len() {
        return Err(Error::Dimension {
            context: "feature modalities vs pattern length",
            expected: pattern.len(),
            got: features.len(),
        });
    }
    Ok(features
        .iter()
        .zip(pattern.bits())
        .map(|(x, observed)| {
            let x = x.as_ref();
            if observed {
                x.to_vec()
            } else {
                vec![0.0; x.len()]
            }
        })
        .collect())
}
