//! The interface shared by every CPT predictor, and the filtered suggestion
//! path used by both evaluation and the service.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codes::{CptCode, IcdCode};
use crate::dataset::{Claim, Gender};
use crate::filter::RuleBook;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PredictError {
    #[error("k must be at least 1")]
    ZeroK,
    #[error("features were encoded with different vocabularies than the model")]
    VocabMismatch,
    #[error("query has no diagnosis codes")]
    NoDiagnoses,
}

/// Encounter context a predictor sees at inference time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub provider_id: String,
    pub age: u8,
    pub gender: Gender,
    pub icds: BTreeSet<IcdCode>,
}

impl From<&Claim> for Query {
    fn from(c: &Claim) -> Self {
        Query {
            provider_id: c.provider_id.clone(),
            age: c.age,
            gender: c.gender,
            icds: c.icds.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Suggestion {
    pub cpt: CptCode,
    pub score: f64,
}

pub trait Predictor: Send + Sync {
    /// Short method name (`nn`, `bayes`, `apriori`, ...).
    fn method(&self) -> &'static str;

    /// Up to `k` codes, best first.
    fn predict(&self, query: &Query, k: usize) -> Result<Vec<Suggestion>, PredictError>;

    /// Codes this predictor can emit, when it has a fixed label space.
    fn label_space(&self) -> Option<Vec<CptCode>> {
        None
    }
}

/// A suggestion after filtering, with the number of higher-ranked candidates
/// the rules removed ahead of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilteredSuggestion {
    pub cpt: CptCode,
    pub score: f64,
    pub filtered_count: usize,
}

/// Asks for `2k` candidates, drops those the age/gender rules reject and keeps
/// the first `k` survivors. The result equals filtering a top-`k` list and
/// re-querying with `2k` only when fewer than `k` survive.
pub fn suggest(
    predictor: &dyn Predictor,
    query: &Query,
    k: usize,
    rules: &RuleBook,
) -> Result<Vec<FilteredSuggestion>, PredictError> {
    if k == 0 {
        return Err(PredictError::ZeroK);
    }
    let candidates = predictor.predict(query, 2 * k)?;
    let mut out = Vec::with_capacity(k);
    let mut removed = 0;
    for s in candidates {
        if out.len() == k {
            break;
        }
        if rules.allows(&s.cpt, query.age, query.gender) {
            out.push(FilteredSuggestion {
                cpt: s.cpt,
                score: s.score,
                filtered_count: removed,
            });
        } else {
            removed += 1;
        }
    }
    Ok(out)
}

/// Indices of the `k` largest scores, ties broken by lower index.
pub(crate) fn top_k_indices(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(k);
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::{AgeGenderRule, Sex};

    struct Fixed(Vec<&'static str>);

    impl Predictor for Fixed {
        fn method(&self) -> &'static str {
            "fixed"
        }
        fn predict(&self, _: &Query, k: usize) -> Result<Vec<Suggestion>, PredictError> {
            Ok(self
                .0
                .iter()
                .take(k)
                .enumerate()
                .map(|(i, c)| Suggestion {
                    cpt: CptCode::parse(c).unwrap(),
                    score: 1.0 - i as f64 * 0.1,
                })
                .collect())
        }
    }

    fn query(gender: Gender) -> Query {
        Query {
            provider_id: "p".into(),
            age: 30,
            gender,
            icds: [IcdCode::normalize("O80").unwrap()].into(),
        }
    }

    #[test]
    fn backfills_after_filtering() {
        let mut rules = RuleBook::new();
        rules.insert(AgeGenderRule::new(CptCode::parse("59400").unwrap(), Sex::F, 12, 55).unwrap());
        let p = Fixed(vec!["59400", "99213", "99214", "99215"]);
        let got = suggest(&p, &query(Gender::M), 2, &rules).unwrap();
        let codes: Vec<_> = got.iter().map(|s| s.cpt.as_str()).collect();
        assert_eq!(codes, ["99213", "99214"]);
        assert_eq!(got[0].filtered_count, 1);

        let got = suggest(&p, &query(Gender::F), 2, &rules).unwrap();
        assert_eq!(got[0].cpt.as_str(), "59400");
        assert_eq!(got[0].filtered_count, 0);
        assert_eq!(suggest(&p, &query(Gender::F), 0, &rules), Err(PredictError::ZeroK));
    }

    #[test]
    fn top_k_breaks_ties_by_index() {
        assert_eq!(top_k_indices(&[0.5, 0.7, 0.5, 0.7], 3), vec![1, 3, 0]);
        assert_eq!(top_k_indices(&[0.1, 0.2], 5), vec![1, 0]);
    }
}
