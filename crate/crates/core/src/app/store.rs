//! Append-only log of accepted claim drafts.
//!
//! Each line is a claims-file record (so the log can be fed straight back to
//! [`load_claims`](crate::dataset::load_claims)) with the accepted CPTs as
//! `cpts`, plus `draft_id`, `timestamp`, `method` and `k`.

use std::collections::BTreeSet;
use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use thiserror::Error;

use super::registry::Method;
use crate::codes::{CptCode, IcdCode};
use crate::dataset::Gender;
use crate::filter::RuleBook;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("a draft needs at least one accepted CPT")]
    NothingAccepted,
    #[error("{cpt} is not allowed for a {age}-year-old {gender:?} patient")]
    Validation { cpt: CptCode, age: u8, gender: Gender },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClaimDraft {
    pub provider_id: String,
    pub payer_id: Option<String>,
    pub age: u8,
    pub gender: Gender,
    pub icds: BTreeSet<IcdCode>,
    pub accepted: BTreeSet<CptCode>,
    pub method: Method,
    pub k: usize,
}

#[derive(Serialize)]
struct Record<'a> {
    claim_id: &'a str,
    draft_id: &'a str,
    timestamp: u64,
    provider_id: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    payer_id: Option<&'a str>,
    age: u8,
    gender: Gender,
    icds: &'a BTreeSet<IcdCode>,
    cpts: &'a BTreeSet<CptCode>,
    method: Method,
    k: usize,
}

pub struct DraftStore {
    path: PathBuf,
    lock: Mutex<()>,
}

impl DraftStore {
    /// Creates the log file (and its directory) if missing.
    pub fn open(path: impl AsRef<Path>) -> io::Result<Self> {
        let path = path.as_ref().to_path_buf();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(DraftStore {
            path,
            lock: Mutex::new(()),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Checks every accepted CPT against `rules`, then appends the draft as one
    /// line and returns its fresh id.
    pub fn persist(&self, draft: &ClaimDraft, rules: &RuleBook) -> Result<String, StoreError> {
        if draft.accepted.is_empty() {
            return Err(StoreError::NothingAccepted);
        }
        if let Some(cpt) = draft.accepted.iter().find(|c| !rules.allows(c, draft.age, draft.gender)) {
            return Err(StoreError::Validation {
                cpt: cpt.clone(),
                age: draft.age,
                gender: draft.gender,
            });
        }
        let id = uuid::Uuid::new_v4().to_string();
        let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        let record = Record {
            claim_id: &id,
            draft_id: &id,
            timestamp,
            provider_id: &draft.provider_id,
            payer_id: draft.payer_id.as_deref(),
            age: draft.age,
            gender: draft.gender,
            icds: &draft.icds,
            cpts: &draft.accepted,
            method: draft.method,
            k: draft.k,
        };
        let mut line = serde_json::to_string(&record).expect("draft record serializes");
        line.push('\n');

        let _guard = self.lock.lock().unwrap_or_else(|p| p.into_inner());
        let mut file = OpenOptions::new().create(true).append(true).open(&self.path)?;
        file.write_all(line.as_bytes())?;
        file.sync_data()?;
        Ok(id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::load_claims;
    use crate::filter::{AgeGenderRule, Sex};

    fn draft(accepted: &[&str]) -> ClaimDraft {
        ClaimDraft {
            provider_id: "P0001".into(),
            payer_id: None,
            age: 30,
            gender: Gender::M,
            icds: [IcdCode::normalize("E11.9").unwrap()].into(),
            accepted: accepted.iter().map(|c| CptCode::parse(c).unwrap()).collect(),
            method: Method::Nn,
            k: 3,
        }
    }

    fn rules() -> RuleBook {
        let mut r = RuleBook::new();
        r.insert(AgeGenderRule::new(CptCode::parse("59400").unwrap(), Sex::F, 12, 55).unwrap());
        r
    }

    #[test]
    fn persisted_drafts_load_as_claims() {
        let dir = tempfile::tempdir().unwrap();
        let store = DraftStore::open(dir.path().join("logs/drafts.jsonl")).unwrap();
        let a = store.persist(&draft(&["99213", "83036"]), &rules()).unwrap();
        let b = store.persist(&draft(&["99214"]), &rules()).unwrap();
        assert_ne!(a, b);
        let claims = load_claims(store.path()).unwrap();
        assert_eq!(claims.len(), 2);
        assert_eq!(claims[0].claim_id, a);
        assert_eq!(claims[0].cpts.len(), 2);
        assert_eq!(claims[1].icds.iter().next().unwrap().as_str(), "E119");
    }

    #[test]
    fn rejects_rule_violations_and_empty_drafts() {
        let dir = tempfile::tempdir().unwrap();
        let store = DraftStore::open(dir.path().join("d.jsonl")).unwrap();
        assert!(matches!(
            store.persist(&draft(&["59400"]), &rules()),
            Err(StoreError::Validation { .. })
        ));
        assert!(matches!(store.persist(&draft(&[]), &rules()), Err(StoreError::NothingAccepted)));
        assert_eq!(fs::read_to_string(store.path()).unwrap(), "");
    }
}
