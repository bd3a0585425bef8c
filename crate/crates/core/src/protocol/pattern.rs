use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Largest modality count a [`MaskPattern`] can represent.
pub const MAX_MODALITIES: usize = 64;

/// Binary observation indicators for one sample; never all-missing.
///
/// Modality 0 is the most significant bit of [`code`](Self::code), so
/// sorting patterns by code gives the canonical combination order used in
/// ablation tables and drop vectors. The textual form is an M-character
/// `0`/`1` string in modality order, `1` meaning observed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MaskPattern {
    code: u64,
    len: u8,
}

impl MaskPattern {
    pub fn from_code(code: u64, len: usize) -> Result<Self> {
        if len == 0 || len > MAX_MODALITIES {
            return Err(Error::InvalidPattern(format!(
                "pattern length {len} outside 1..={MAX_MODALITIES}"
            )));
        }
        if len < 64 && code >> len != 0 {
            return Err(Error::InvalidPattern(format!(
                "code {code:#b} does not fit in {len} bits"
            )));
        }
        if code == 0 {
            return Err(Error::InvalidPattern(
                "all-missing pattern is not allowed".into(),
            ));
        }
        Ok(MaskPattern {
            code,
            len: len as u8,
        })
    }

    pub fn from_bits(bits: &[bool]) -> Result<Self> {
        if bits.len() > MAX_MODALITIES {
            return Err(Error::InvalidPattern(format!(
                "pattern length {} exceeds {MAX_MODALITIES}",
                bits.len()
            )));
        }
        let code = bits
            .iter()
            .fold(0u64, |acc, &b| (acc << 1) | u64::from(b));
        Self::from_code(code, bits.len())
    }

    /// Every modality observed.
    pub fn full(len: usize) -> Self {
        assert!((1..=MAX_MODALITIES).contains(&len));
        let code = if len == 64 { u64::MAX } else { (1u64 << len) - 1 };
        MaskPattern {
            code,
            len: len as u8,
        }
    }

    pub fn code(&self) -> u64 {
        self.code
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_observed(&self, m: usize) -> bool {
        debug_assert!(m < self.len());
        (self.code >> (self.len() - 1 - m)) & 1 == 1
    }

    pub fn observed_count(&self) -> usize {
        self.code.count_ones() as usize
    }

    pub fn is_full(&self) -> bool {
        self.observed_count() == self.len()
    }

    pub fn bits(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len()).map(move |m| self.is_observed(m))
    }

    /// All `2^len - 1` non-all-missing patterns in canonical order.
    pub fn all(len: usize) -> impl Iterator<Item = MaskPattern> {
        assert!((1..64).contains(&len), "enumeration needs 1 <= len < 64");
        (1u64..(1u64 << len)).map(move |code| MaskPattern {
            code,
            len: len as u8,
        })
    }
}

impl fmt::Display for MaskPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for bit in self.bits() {
            f.write_str(if bit { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for MaskPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::InvalidPattern(format!(
                    "unexpected character {other:?} in `{s}`"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_bits(&bits)
    }
}

impl Serialize for MaskPattern {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MaskPattern {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
