//! Precision@K / recall@K and the method comparison harness.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codes::CptCode;
use crate::dataset::Claim;
use crate::filter::RuleBook;
use crate::predict::{suggest, PredictError, Predictor, Query};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("truth set is empty")]
    EmptyTruth,
    #[error("K must be at least 1")]
    ZeroK,
    #[error(transparent)]
    Predict(#[from] PredictError),
}

/// Hits among the first `k` predictions over `k` and over `|truth|`.
/// A list shorter than `k` still divides by `k`.
pub fn precision_recall_at_k<T: Ord>(
    predicted: &[T],
    truth: &BTreeSet<T>,
    k: usize,
) -> Result<(f64, f64), EvalError> {
    if k == 0 {
        return Err(EvalError::ZeroK);
    }
    if truth.is_empty() {
        return Err(EvalError::EmptyTruth);
    }
    let hits = hits_at_k(predicted, truth, k);
    Ok((hits as f64 / k as f64, hits as f64 / truth.len() as f64))
}

fn hits_at_k<T: Ord>(predicted: &[T], truth: &BTreeSet<T>, k: usize) -> usize {
    let mut seen = BTreeSet::new();
    predicted
        .iter()
        .take(k)
        .filter(|p| truth.contains(*p) && seen.insert(*p))
        .count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: String,
    pub recall_at_k: BTreeMap<usize, f64>,
    pub precision_at_k: BTreeMap<usize, f64>,
    pub n_claims: usize,
    pub n_skipped: usize,
    /// Seconds spent predicting and scoring.
    pub wall_time: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub methods: Vec<MethodReport>,
}

impl EvalReport {
    pub fn get(&self, method: &str) -> Option<&MethodReport> {
        self.methods.iter().find(|m| m.method == method)
    }

    /// Plain-text table with one row per method and recall/precision columns per K.
    pub fn render(&self) -> String {
        let ks: BTreeSet<usize> = self
            .methods
            .iter()
            .flat_map(|m| m.recall_at_k.keys().copied())
            .collect();
        let mut out = format!("{:<10} {:>8} {:>8}", "method", "claims", "skipped");
        for k in &ks {
            let _ = write!(out, " {:>9} {:>9}", format!("R@{k}"), format!("P@{k}"));
        }
        let _ = write!(out, " {:>9}", "time(s)");
        out.push('\n');
        for m in &self.methods {
            let _ = write!(out, "{:<10} {:>8} {:>8}", m.method, m.n_claims, m.n_skipped);
            for k in &ks {
                let pct = |v: Option<&f64>| v.map_or("-".into(), |v| format!("{:.2}", 100.0 * v));
                let _ = write!(out, " {:>9} {:>9}", pct(m.recall_at_k.get(k)), pct(m.precision_at_k.get(k)));
            }
            let _ = writeln!(out, " {:>9.2}", m.wall_time);
        }
        out
    }
}

/// Runs the filtered suggestion path on every test claim and macro-averages
/// precision and recall per K. Truth is first restricted to `label_space`;
/// claims left with no truth are counted as skipped.
pub fn evaluate(
    predictor: &dyn Predictor,
    test: &[Claim],
    ks: &[usize],
    rules: &RuleBook,
    label_space: &HashSet<CptCode>,
) -> Result<MethodReport, EvalError> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(EvalError::ZeroK);
    }
    let start = Instant::now();
    let max_k = *ks.iter().max().unwrap();
    // integer hit totals keep the average independent of claim order
    let mut hits: BTreeMap<usize, usize> = ks.iter().map(|&k| (k, 0)).collect();
    let mut recall_sum: BTreeMap<usize, f64> = ks.iter().map(|&k| (k, 0.0)).collect();
    let mut n_claims = 0;
    let mut n_skipped = 0;
    let mut per_truth: BTreeMap<usize, BTreeMap<usize, usize>> = BTreeMap::new();

    for claim in test {
        let truth: BTreeSet<CptCode> = claim.cpts.iter().filter(|c| label_space.contains(*c)).cloned().collect();
        if truth.is_empty() {
            n_skipped += 1;
            continue;
        }
        n_claims += 1;
        let ranked: Vec<CptCode> = suggest(predictor, &Query::from(claim), max_k, rules)?
            .into_iter()
            .map(|s| s.cpt)
            .collect();
        for &k in ks {
            let h = hits_at_k(&ranked, &truth, k);
            *hits.get_mut(&k).unwrap() += h;
            *per_truth.entry(k).or_default().entry(truth.len()).or_default() += h;
        }
    }
    // recall: sum over truth sizes of hits/size, grouped so the float sum is order free
    for (&k, by_size) in &per_truth {
        recall_sum.insert(k, by_size.iter().map(|(&size, &h)| h as f64 / size as f64).sum());
    }
    let n = n_claims.max(1) as f64;
    Ok(MethodReport {
        method: predictor.method().to_string(),
        recall_at_k: recall_sum.into_iter().map(|(k, s)| (k, s / n)).collect(),
        precision_at_k: hits.into_iter().map(|(k, h)| (k, h as f64 / (k as f64 * n))).collect(),
        n_claims,
        n_skipped,
        wall_time: start.elapsed().as_secs_f64(),
    })
}
