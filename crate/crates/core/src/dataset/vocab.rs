use std::collections::{BTreeSet, HashMap};

use sha2::{Digest, Sha256};

use super::{Claim, DatasetError};
use crate::codes::{CptCode, IcdCode, ICD_POSITIONS};

/// Label space and provider index fixed at training time.
///
/// Labels are ordered by descending training frequency, ties broken by
/// code. Providers are numbered in order of first appearance; the extra
/// index `provider_count()` stands for any provider not seen in training.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabularies {
    cpt_labels: Vec<CptCode>,
    label_index: HashMap<CptCode, usize>,
    providers: Vec<String>,
    provider_index: HashMap<String, usize>,
    icd_count: usize,
    fingerprint: u64,
}

/// Encoded network input for one claim.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClaimFeatures {
    pub icd_indices: Vec<[u8; ICD_POSITIONS]>,
    pub provider_index: usize,
    pub fingerprint: u64,
}

impl Vocabularies {
    pub fn build(train: &[Claim], min_cpt_count: usize) -> Result<Self, DatasetError> {
        if train.is_empty() {
            return Err(DatasetError::EmptyDataset);
        }
        let mut counts: HashMap<&CptCode, usize> = HashMap::new();
        let mut providers = Vec::new();
        let mut seen = HashMap::new();
        let mut icds = BTreeSet::new();
        for claim in train {
            for cpt in &claim.cpts {
                *counts.entry(cpt).or_default() += 1;
            }
            if !seen.contains_key(claim.provider_id.as_str()) {
                seen.insert(claim.provider_id.as_str(), providers.len());
                providers.push(claim.provider_id.clone());
            }
            icds.extend(claim.icds.iter());
        }
        let mut labels: Vec<(&CptCode, usize)> = counts
            .into_iter()
            .filter(|&(_, n)| n >= min_cpt_count)
            .collect();
        if labels.is_empty() {
            return Err(DatasetError::NoLabels(min_cpt_count));
        }
        labels.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let labels = labels.into_iter().map(|(c, _)| c.clone()).collect();
        Ok(Self::from_parts(labels, providers, icds.len()))
    }

    /// Rebuilds vocabularies from stored lists, e.g. when loading a model.
    pub fn from_parts(cpt_labels: Vec<CptCode>, providers: Vec<String>, icd_count: usize) -> Self {
        let label_index = cpt_labels.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect();
        let provider_index = providers.iter().enumerate().map(|(i, p)| (p.clone(), i)).collect();
        let fingerprint = fingerprint(&cpt_labels, &providers);
        Vocabularies {
            cpt_labels,
            label_index,
            providers,
            provider_index,
            icd_count,
            fingerprint,
        }
    }

    pub fn labels(&self) -> &[CptCode] {
        &self.cpt_labels
    }

    pub fn label_count(&self) -> usize {
        self.cpt_labels.len()
    }

    pub fn label(&self, index: usize) -> &CptCode {
        &self.cpt_labels[index]
    }

    pub fn label_of(&self, cpt: &CptCode) -> Option<usize> {
        self.label_index.get(cpt).copied()
    }

    pub fn providers(&self) -> &[String] {
        &self.providers
    }

    pub fn provider_count(&self) -> usize {
        self.providers.len()
    }

    pub fn unk_provider(&self) -> usize {
        self.providers.len()
    }

    /// Index of a known provider, `None` for unseen ones.
    pub fn provider_of(&self, provider_id: &str) -> Option<usize> {
        self.provider_index.get(provider_id).copied()
    }

    pub fn icd_count(&self) -> usize {
        self.icd_count
    }

    /// Hash of the label and provider lists; binds a model to the vocabularies
    /// it was trained with.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn features<'a>(
        &self,
        provider_id: &str,
        icds: impl IntoIterator<Item = &'a IcdCode>,
    ) -> ClaimFeatures {
        ClaimFeatures {
            icd_indices: icds.into_iter().map(IcdCode::indices).collect(),
            provider_index: self.provider_of(provider_id).unwrap_or(self.unk_provider()),
            fingerprint: self.fingerprint(),
        }
    }

    pub fn claim_features(&self, claim: &Claim) -> ClaimFeatures {
        self.features(&claim.provider_id, &claim.icds)
    }

    /// Label indices of the claim's CPTs that belong to the label space, ascending.
    pub fn target_labels(&self, cpts: &BTreeSet<CptCode>) -> Vec<usize> {
        let mut out: Vec<usize> = cpts.iter().filter_map(|c| self.label_of(c)).collect();
        out.sort_unstable();
        out
    }

    /// The claim's CPTs restricted to the label space.
    pub fn restrict(&self, cpts: &BTreeSet<CptCode>) -> BTreeSet<CptCode> {
        cpts.iter().filter(|c| self.label_index.contains_key(*c)).cloned().collect()
    }
}

fn fingerprint(labels: &[CptCode], providers: &[String]) -> u64 {
    let mut h = Sha256::new();
    h.update((labels.len() as u64).to_le_bytes());
    for c in labels {
        h.update(c.as_str().as_bytes());
        h.update([0u8]);
    }
    h.update((providers.len() as u64).to_le_bytes());
    for p in providers {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}
