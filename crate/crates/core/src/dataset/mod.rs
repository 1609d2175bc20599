//! Claims, claim files, splitting, label vocabularies and the synthetic
//! corpus generator.
//!
//! A claims file holds one JSON object per line:
//!
//! ```text
//! {"claim_id":"c1","provider_id":"p9","age":44,"gender":"F","icds":["E11.9"],"cpts":["99213"]}
//! ```
//!
//! `payer_id` is optional and unknown fields are ignored, so draft logs
//! written by the service can be read back as training data.

mod synth;
mod vocab;

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codes::{CptCode, IcdCode};

pub use synth::{generate_synthetic, GroundTruth, SyntheticSpec};
pub use vocab::{ClaimFeatures, Vocabularies};

pub const MAX_ICDS: usize = 12;
pub const MAX_AGE: u8 = 120;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("need at least 2 claims to split, found {0}")]
    TooFewClaims(usize),
    #[error("test fraction must lie strictly between 0 and 1, found {0}")]
    BadFraction(f64),
    #[error("no CPT occurs at least {0} times")]
    NoLabels(usize),
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Gender {
    M,
    F,
}

impl Gender {
    pub fn index(self) -> usize {
        match self {
            Gender::M => 0,
            Gender::F => 1,
        }
    }
}

/// One encounter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawClaim")]
pub struct Claim {
    pub claim_id: String,
    pub provider_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payer_id: Option<String>,
    pub age: u8,
    pub gender: Gender,
    pub icds: BTreeSet<IcdCode>,
    pub cpts: BTreeSet<CptCode>,
}

#[derive(Deserialize)]
struct RawClaim {
    claim_id: String,
    provider_id: String,
    #[serde(default)]
    payer_id: Option<String>,
    age: i64,
    gender: Gender,
    icds: Vec<String>,
    #[serde(default)]
    cpts: Vec<String>,
}

impl TryFrom<RawClaim> for Claim {
    type Error = String;

    fn try_from(raw: RawClaim) -> Result<Self, String> {
        if !(0..=MAX_AGE as i64).contains(&raw.age) {
            return Err(format!("age {} outside 0..={MAX_AGE}", raw.age));
        }
        let icds = raw
            .icds
            .iter()
            .map(|s| IcdCode::normalize(s))
            .collect::<Result<BTreeSet<_>, _>>()
            .map_err(|e| e.to_string())?;
        if icds.is_empty() {
            return Err("empty diagnosis set".into());
        }
        if icds.len() > MAX_ICDS {
            return Err(format!("{} diagnoses, at most {MAX_ICDS} allowed", icds.len()));
        }
        let cpts = raw
            .cpts
            .iter()
            .map(|s| CptCode::parse(s))
            .collect::<Result<BTreeSet<_>, _>>()
            .map_err(|e| e.to_string())?;
        Ok(Claim {
            claim_id: raw.claim_id,
            provider_id: raw.provider_id,
            payer_id: raw.payer_id,
            age: raw.age as u8,
            gender: raw.gender,
            icds,
            cpts,
        })
    }
}

impl Claim {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("claim serializes")
    }
}

/// Reads a claims file. Blank lines are skipped; every other line must be a
/// complete claim with at least one procedure code.
pub fn load_claims(path: impl AsRef<Path>) -> Result<Vec<Claim>, DatasetError> {
    let reader = BufReader::new(File::open(path)?);
    let mut claims = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let claim = parse_claim_line(&line).map_err(|reason| DatasetError::Parse {
            line: n + 1,
            reason,
        })?;
        claims.push(claim);
    }
    if claims.is_empty() {
        return Err(DatasetError::EmptyDataset);
    }
    Ok(claims)
}

fn parse_claim_line(line: &str) -> Result<Claim, String> {
    let claim: Claim = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if claim.cpts.is_empty() {
        return Err("training record has no procedure codes".into());
    }
    Ok(claim)
}

pub fn write_claims(path: impl AsRef<Path>, claims: &[Claim]) -> io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for claim in claims {
        writeln!(out, "{}", claim.to_json_line())?;
    }
    out.flush()
}

/// Shuffles under `seed` and moves `round(test_fraction * n)` claims (ties to
/// even) into the test part.
pub fn split(
    claims: &[Claim],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<Claim>, Vec<Claim>), DatasetError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DatasetError::BadFraction(test_fraction));
    }
    if claims.len() < 2 {
        return Err(DatasetError::TooFewClaims(claims.len()));
    }
    let n_test = (test_fraction * claims.len() as f64).round_ties_even() as usize;
    let mut order: Vec<usize> = (0..claims.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = order[..n_test].iter().map(|&i| claims[i].clone()).collect();
    let train = order[n_test..].iter().map(|&i| claims[i].clone()).collect();
    Ok((train, test))
}
