//! ICD-10 and CPT code handling.
//!
//! Diagnosis codes are normalized to an uppercase, dot-free string of 3 to 7
//! characters and carry a fixed-width vector of per-position character
//! indices. Letters map to `0..=25`, digits to `26..=35`, and positions past
//! the end of the code hold [`PAD`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Maximum number of characters in an ICD-10 code.
pub const ICD_POSITIONS: usize = 7;
/// Number of distinct real characters (A-Z, 0-9).
pub const ALPHABET_SIZE: usize = 36;
/// Index reserved for positions beyond the end of a code.
pub const PAD: u8 = 36;
/// Size of each per-position embedding table (alphabet plus PAD).
pub const CHAR_VOCAB: usize = ALPHABET_SIZE + 1;

const CPT_LEN: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodeError {
    #[error("empty code")]
    EmptyCode,
    #[error("code {code:?} has length {len}, expected {expected}")]
    BadLength {
        code: String,
        len: usize,
        expected: &'static str,
    },
    #[error("code {0:?} must start with a letter")]
    BadFirstChar(String),
    #[error("invalid character {ch:?} in code {code:?}")]
    BadChar { code: String, ch: char },
    #[error("code {0:?} contains more than one '.'")]
    MultipleDots(String),
}

/// Maps `A..=Z` to `0..=25` and `0..=9` to `26..=35`, case-insensitively.
pub fn char_index(ch: char) -> Result<u8, CodeError> {
    match ch.to_ascii_uppercase() {
        c @ 'A'..='Z' => Ok(c as u8 - b'A'),
        c @ '0'..='9' => Ok(c as u8 - b'0' + 26),
        _ => Err(CodeError::BadChar {
            code: ch.to_string(),
            ch,
        }),
    }
}

/// Inverse of [`char_index`] for real characters. Returns `None` for PAD
/// and anything out of range.
pub fn index_char(index: u8) -> Option<char> {
    match index {
        0..=25 => Some((b'A' + index) as char),
        26..=35 => Some((b'0' + index - 26) as char),
        _ => None,
    }
}

/// A normalized ICD-10 diagnosis code.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IcdCode {
    text: String,
    indices: [u8; ICD_POSITIONS],
}

impl IcdCode {
    /// Uppercases, strips a single '.', and validates the result.
    pub fn normalize(raw: &str) -> Result<Self, CodeError> {
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            return Err(CodeError::EmptyCode);
        }
        if trimmed.matches('.').count() > 1 {
            return Err(CodeError::MultipleDots(trimmed.to_string()));
        }
        let text: String = trimmed
            .chars()
            .filter(|&c| c != '.')
            .map(|c| c.to_ascii_uppercase())
            .collect();
        if text.is_empty() {
            return Err(CodeError::EmptyCode);
        }

        let mut indices = [PAD; ICD_POSITIONS];
        for (pos, ch) in text.chars().enumerate() {
            if pos >= ICD_POSITIONS {
                break;
            }
            let idx = char_index(ch).map_err(|_| CodeError::BadChar {
                code: text.clone(),
                ch,
            })?;
            if pos == 0 && idx >= 26 {
                return Err(CodeError::BadFirstChar(text));
            }
            indices[pos] = idx;
        }
        // Check characters before length so that "9E11" reports the bad first
        // character rather than a length problem when both apply.
        let len = text.chars().count();
        if !(3..=ICD_POSITIONS).contains(&len) {
            return Err(CodeError::BadLength {
                code: text,
                len,
                expected: "3..=7",
            });
        }
        Ok(IcdCode { text, indices })
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    /// Per-position character indices, PAD-filled past the code length.
    pub fn indices(&self) -> [u8; ICD_POSITIONS] {
        self.indices
    }
}

impl fmt::Display for IcdCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

impl fmt::Debug for IcdCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "IcdCode({})", self.text)
    }
}

impl FromStr for IcdCode {
    type Err = CodeError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        IcdCode::normalize(s)
    }
}

/// A five character alphanumeric procedure code, stored uppercase.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CptCode(String);

impl CptCode {
    pub fn parse(raw: &str) -> Result<Self, CodeError> {
        let text = raw.trim().to_ascii_uppercase();
        if text.is_empty() {
            return Err(CodeError::EmptyCode);
        }
        if let Some(ch) = text.chars().find(|c| !c.is_ascii_alphanumeric()) {
            return Err(CodeError::BadChar { code: text, ch });
        }
        if text.len() != CPT_LEN {
            let len = text.len();
            return Err(CodeError::BadLength {
                code: text,
                len,
                expected: "5",
            });
        }
        Ok(CptCode(text))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CptCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for CptCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CptCode({})", self.0)
    }
}

impl FromStr for CptCode {
    type Err = CodeError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CptCode::parse(s)
    }
}

macro_rules! string_serde {
    ($ty:ty) => {
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(self.as_str())
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let raw = String::deserialize(d)?;
                raw.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

string_serde!(IcdCode);
string_serde!(CptCode);

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalizes_examples() {
        assert_eq!(IcdCode::normalize("E11.9").unwrap().as_str(), "E119");
        assert_eq!(IcdCode::normalize("e119").unwrap().as_str(), "E119");
        let full = IcdCode::normalize("A01B2C3").unwrap();
        assert_eq!(full.as_str(), "A01B2C3");
        assert!(full.indices().iter().all(|&i| i != PAD));
    }

    #[test]
    fn rejects_bad_codes() {
        assert_eq!(
            IcdCode::normalize("9E11"),
            Err(CodeError::BadFirstChar("9E11".into()))
        );
        assert_eq!(IcdCode::normalize(""), Err(CodeError::EmptyCode));
        assert_eq!(IcdCode::normalize("  "), Err(CodeError::EmptyCode));
        assert_eq!(IcdCode::normalize("."), Err(CodeError::EmptyCode));
        assert!(matches!(
            IcdCode::normalize("E1.1.9"),
            Err(CodeError::MultipleDots(_))
        ));
        assert!(matches!(
            IcdCode::normalize("E1"),
            Err(CodeError::BadLength { len: 2, .. })
        ));
        assert!(matches!(
            IcdCode::normalize("A01B2C3D"),
            Err(CodeError::BadLength { len: 8, .. })
        ));
        assert!(matches!(
            IcdCode::normalize("E1-9"),
            Err(CodeError::BadChar { ch: '-', .. })
        ));
    }

    #[test]
    fn char_indices() {
        assert_eq!(char_index('A'), Ok(0));
        assert_eq!(char_index('0'), Ok(26));
        assert_eq!(char_index('9'), Ok(35));
        assert_eq!(char_index('z'), Ok(25));
        assert!(char_index('#').is_err());
        for i in 0..ALPHABET_SIZE as u8 {
            assert_eq!(char_index(index_char(i).unwrap()), Ok(i));
        }
        assert_eq!(index_char(PAD), None);
    }

    #[test]
    fn icd_index_vectors() {
        let idx = |s: &str| IcdCode::normalize(s).unwrap().indices();
        assert_eq!(idx("E119"), [4, 27, 27, 35, 36, 36, 36]);
        assert_eq!(idx("A00"), [0, 26, 26, 36, 36, 36, 36]);
        assert_eq!(idx("Z99ZZ99"), [25, 35, 35, 25, 25, 35, 35]);
    }

    #[test]
    fn cpt_parsing() {
        assert_eq!(CptCode::parse("99213").unwrap().as_str(), "99213");
        assert_eq!(CptCode::parse("g0439").unwrap().as_str(), "G0439");
        assert!(CptCode::parse("9921").is_err());
        assert!(CptCode::parse("992134").is_err());
        assert!(CptCode::parse("99-13").is_err());
    }

    #[test]
    fn serde_normalizes() {
        let c: IcdCode = serde_json::from_str("\"e11.9\"").unwrap();
        assert_eq!(serde_json::to_string(&c).unwrap(), "\"E119\"");
        assert!(serde_json::from_str::<IcdCode>("\"11\"").is_err());
    }

    fn icd_strategy() -> impl Strategy<Value = String> {
        "[A-Za-z][A-Za-z0-9]{2,6}"
    }

    proptest! {
        #[test]
        fn round_trip_and_pad_monotone(raw in icd_strategy()) {
            let code = IcdCode::normalize(&raw).unwrap();
            let idx = code.indices();
            let rebuilt: String = idx.iter().filter_map(|&i| index_char(i)).collect();
            prop_assert_eq!(&rebuilt, code.as_str());
            if let Some(first_pad) = idx.iter().position(|&i| i == PAD) {
                prop_assert!(idx[first_pad..].iter().all(|&i| i == PAD));
                prop_assert_eq!(first_pad, code.as_str().len());
            }
        }

        #[test]
        fn normalization_idempotent(raw in "[A-Za-z][A-Za-z0-9]{1,2}\\.?[A-Za-z0-9]{0,4}") {
            if let Ok(code) = IcdCode::normalize(&raw) {
                prop_assert_eq!(IcdCode::normalize(code.as_str()).unwrap(), code);
            }
        }
    }
}
