//! Fixed age and gender rules applied to predicted procedure codes.
//!
//! Rules file format, one rule per line, `#` starts a comment:
//!
//! ```text
//! # cpt,sex,min_age,max_age   (sex is M, F or A)
//! 59400,F,12,55
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codes::CptCode;
use crate::dataset::Gender;

pub const MAX_AGE: u8 = 120;

#[derive(Debug, Error)]
pub enum RulesError {
    #[error("reading rules: {0}")]
    Io(#[from] io::Error),
    #[error("rules line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sex {
    M,
    F,
    #[serde(rename = "A")]
    Any,
}

impl Sex {
    pub fn allows(self, gender: Gender) -> bool {
        matches!(
            (self, gender),
            (Sex::Any, _) | (Sex::M, Gender::M) | (Sex::F, Gender::F)
        )
    }

    fn code(self) -> char {
        match self {
            Sex::M => 'M',
            Sex::F => 'F',
            Sex::Any => 'A',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgeGenderRule {
    pub cpt: CptCode,
    pub sex: Sex,
    pub min_age: u8,
    pub max_age: u8,
}

impl AgeGenderRule {
    pub fn new(cpt: CptCode, sex: Sex, min_age: u8, max_age: u8) -> Option<Self> {
        (min_age <= max_age && max_age <= MAX_AGE).then_some(AgeGenderRule {
            cpt,
            sex,
            min_age,
            max_age,
        })
    }

    pub fn allows(&self, age: u8, gender: Gender) -> bool {
        self.sex.allows(gender) && (self.min_age..=self.max_age).contains(&age)
    }
}

impl fmt::Display for AgeGenderRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{}",
            self.cpt,
            self.sex.code(),
            self.min_age,
            self.max_age
        )
    }
}

/// Rules keyed by CPT. Codes without a rule are unconstrained.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RuleBook {
    rules: BTreeMap<CptCode, AgeGenderRule>,
}

impl RuleBook {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RulesError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self, RulesError> {
        let mut book = RuleBook::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let rule = parse_rule(line).map_err(|reason| RulesError::Parse {
                line: n + 1,
                reason,
            })?;
            if book.rules.contains_key(&rule.cpt) {
                log::warn!("rules line {}: duplicate rule for {}, keeping the later one", n + 1, rule.cpt);
            }
            book.insert(rule);
        }
        Ok(book)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> io::Result<()> {
        fs::write(path, self.to_text())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# cpt,sex,min_age,max_age\n");
        for rule in self.rules.values() {
            out.push_str(&rule.to_string());
            out.push('\n');
        }
        out
    }

    pub fn insert(&mut self, rule: AgeGenderRule) {
        self.rules.insert(rule.cpt.clone(), rule);
    }

    pub fn get(&self, cpt: &CptCode) -> Option<&AgeGenderRule> {
        self.rules.get(cpt)
    }

    pub fn allows(&self, cpt: &CptCode, age: u8, gender: Gender) -> bool {
        self.rules.get(cpt).is_none_or(|r| r.allows(age, gender))
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &AgeGenderRule> {
        self.rules.values()
    }

    /// Drops every prediction whose rule rejects `(age, gender)`, keeping the
    /// order and scores of the rest.
    pub fn filter<T>(&self, predictions: Vec<(CptCode, T)>, age: u8, gender: Gender) -> Vec<(CptCode, T)> {
        predictions
            .into_iter()
            .filter(|(cpt, _)| self.allows(cpt, age, gender))
            .collect()
    }
}

fn parse_rule(line: &str) -> Result<AgeGenderRule, String> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    let [cpt, sex, min_age, max_age] = fields[..] else {
        return Err(format!("expected 4 comma-separated fields, found {}", fields.len()));
    };
    let cpt = CptCode::parse(cpt).map_err(|e| e.to_string())?;
    let sex = match sex.to_ascii_uppercase().as_str() {
        "M" => Sex::M,
        "F" => Sex::F,
        "A" => Sex::Any,
        other => return Err(format!("sex must be M, F or A, found {other:?}")),
    };
    let age = |s: &str| s.parse::<u8>().map_err(|_| format!("bad age {s:?}"));
    let (min_age, max_age) = (age(min_age)?, age(max_age)?);
    AgeGenderRule::new(cpt, sex, min_age, max_age)
        .ok_or_else(|| format!("need 0 <= min_age <= max_age <= {MAX_AGE}, found {min_age}..{max_age}"))
}
