//! Count-based probabilistic baseline.
//!
//! Labels are ranked by
//!
//! ```text
//! log P(c) + sum_i log P(icd_i | c) + log P(gender | c) + log P(age_bucket | c)
//! ```
//!
//! with every factor Laplace-smoothed: `(count + a) / (total + a * family_size)`.
//! ICDs never seen in training contribute the same amount to every label and
//! are left out of the sum.
//!
//! Persisted as a tab-separated count table:
//!
//! ```text
//! # bayes counts v1
//! alpha   1
//! labels  99213   83036 ...
//! icds    E119    A00 ...
//! prior   <label> <count>
//! icd     <icd>   <label> <count>
//! gender  <M|F>   <label> <count>
//! age     <bucket> <label> <count>
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::codes::{CptCode, IcdCode};
use crate::dataset::{Claim, Gender, Vocabularies};
use crate::predict::{top_k_indices, PredictError, Predictor, Query, Suggestion};

/// Lower bounds of the age buckets 0-1, 2-11, 12-17, 18-39, 40-64, 65+.
pub const AGE_BUCKET_STARTS: [u8; 6] = [0, 2, 12, 18, 40, 65];
const HEADER: &str = "# bayes counts v1";

#[derive(Debug, Error)]
pub enum BayesError {
    #[error("training set is empty")]
    EmptyDataset,
    #[error("no training claim carries a label from the vocabulary")]
    NoLabels,
    #[error("smoothing must be positive, found {0}")]
    BadAlpha(f64),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("count table line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

pub fn age_bucket(age: u8) -> usize {
    AGE_BUCKET_STARTS.iter().rposition(|&s| age >= s).unwrap()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BayesModel {
    alpha: f64,
    labels: Vec<CptCode>,
    icds: Vec<IcdCode>,
    icd_index: HashMap<IcdCode, usize>,
    prior: Vec<u64>,
    /// Per ICD, sparse counts keyed by label index.
    icd_given_label: Vec<BTreeMap<usize, u64>>,
    /// Sum of ICD counts per label.
    icd_totals: Vec<u64>,
    gender_given_label: Vec<[u64; 2]>,
    age_given_label: Vec<[u64; 6]>,
}

impl BayesModel {
    /// For each claim and each of its labelled CPTs, counts the label, every
    /// ICD on the claim, the gender and the age bucket.
    pub fn fit(train: &[Claim], vocabs: &Vocabularies, alpha: f64) -> Result<Self, BayesError> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(BayesError::BadAlpha(alpha));
        }
        if train.is_empty() {
            return Err(BayesError::EmptyDataset);
        }
        let n_labels = vocabs.label_count();
        let mut model = BayesModel::empty(alpha, vocabs.labels().to_vec());
        for claim in train {
            for &label in &vocabs.target_labels(&claim.cpts) {
                model.prior[label] += 1;
                model.gender_given_label[label][claim.gender.index()] += 1;
                model.age_given_label[label][age_bucket(claim.age)] += 1;
                for icd in &claim.icds {
                    let i = model.icd_slot(icd);
                    *model.icd_given_label[i].entry(label).or_default() += 1;
                    model.icd_totals[label] += 1;
                }
            }
            // ICD vocabulary covers every training ICD, labelled or not
            for icd in &claim.icds {
                model.icd_slot(icd);
            }
        }
        if model.prior.iter().all(|&c| c == 0) {
            return Err(BayesError::NoLabels);
        }
        debug_assert_eq!(model.prior.len(), n_labels);
        Ok(model)
    }

    fn empty(alpha: f64, labels: Vec<CptCode>) -> Self {
        let n = labels.len();
        BayesModel {
            alpha,
            labels,
            icds: Vec::new(),
            icd_index: HashMap::new(),
            prior: vec![0; n],
            icd_given_label: Vec::new(),
            icd_totals: vec![0; n],
            gender_given_label: vec![[0; 2]; n],
            age_given_label: vec![[0; 6]; n],
        }
    }

    fn icd_slot(&mut self, icd: &IcdCode) -> usize {
        if let Some(&i) = self.icd_index.get(icd) {
            return i;
        }
        let i = self.icds.len();
        self.icds.push(icd.clone());
        self.icd_index.insert(icd.clone(), i);
        self.icd_given_label.push(BTreeMap::new());
        i
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn labels(&self) -> &[CptCode] {
        &self.labels
    }

    pub fn prior_count(&self, label: usize) -> u64 {
        self.prior[label]
    }

    pub fn icd_count(&self, icd: &IcdCode, label: usize) -> u64 {
        self.icd_index
            .get(icd)
            .and_then(|&i| self.icd_given_label[i].get(&label))
            .copied()
            .unwrap_or(0)
    }

    pub fn gender_count(&self, gender: Gender, label: usize) -> u64 {
        self.gender_given_label[label][gender.index()]
    }

    pub fn age_count(&self, bucket: usize, label: usize) -> u64 {
        self.age_given_label[label][bucket]
    }

    pub fn knows_icd(&self, icd: &IcdCode) -> bool {
        self.icd_index.contains_key(icd)
    }

    /// Number of distinct ICDs seen in training.
    pub fn icd_vocab_size(&self) -> usize {
        self.icds.len()
    }

    fn smoothed(&self, count: u64, total: u64, family: usize) -> f64 {
        ((count as f64 + self.alpha) / (total as f64 + self.alpha * family as f64)).ln()
    }

    /// Log-score per label.
    pub fn score(&self, query: &Query) -> Vec<f64> {
        let pairs: u64 = self.prior.iter().sum();
        let known: Vec<usize> = query.icds.iter().filter_map(|c| self.icd_index.get(c).copied()).collect();
        let bucket = age_bucket(query.age);
        (0..self.labels.len())
            .map(|c| {
                let n_c = self.prior[c];
                let mut s = self.smoothed(n_c, pairs, self.labels.len());
                for &i in &known {
                    let n = self.icd_given_label[i].get(&c).copied().unwrap_or(0);
                    s += self.smoothed(n, self.icd_totals[c], self.icds.len());
                }
                s += self.smoothed(self.gender_given_label[c][query.gender.index()], n_c, 2);
                s += self.smoothed(self.age_given_label[c][bucket], n_c, AGE_BUCKET_STARTS.len());
                s
            })
            .collect()
    }

    /// Top `k` labels by log-score (ties to the lower index), each paired with
    /// its softmax share over all labels.
    pub fn predict_topk(&self, query: &Query, k: usize) -> Vec<(CptCode, f64)> {
        let scores = self.score(query);
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let norm: f64 = scores.iter().map(|s| (s - max).exp()).sum();
        top_k_indices(&scores, k)
            .into_iter()
            .map(|j| (self.labels[j].clone(), (scores[j] - max).exp() / norm))
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{HEADER}\nalpha\t{}\n", self.alpha);
        let join = |items: Vec<&str>| items.join("\t");
        let _ = writeln!(out, "labels\t{}", join(self.labels.iter().map(CptCode::as_str).collect()));
        let _ = writeln!(out, "icds\t{}", join(self.icds.iter().map(IcdCode::as_str).collect()));
        for (c, label) in self.labels.iter().enumerate() {
            if self.prior[c] > 0 {
                let _ = writeln!(out, "prior\t{label}\t{}", self.prior[c]);
            }
        }
        for (i, icd) in self.icds.iter().enumerate() {
            for (&c, &n) in &self.icd_given_label[i] {
                let _ = writeln!(out, "icd\t{icd}\t{}\t{n}", self.labels[c]);
            }
        }
        for (c, label) in self.labels.iter().enumerate() {
            for (g, name) in ["M", "F"].iter().enumerate() {
                let n = self.gender_given_label[c][g];
                if n > 0 {
                    let _ = writeln!(out, "gender\t{name}\t{label}\t{n}");
                }
            }
            for b in 0..AGE_BUCKET_STARTS.len() {
                let n = self.age_given_label[c][b];
                if n > 0 {
                    let _ = writeln!(out, "age\t{b}\t{label}\t{n}");
                }
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, BayesError> {
        let mut lines = text.lines().enumerate();
        let err = |line: usize, reason: &str| BayesError::Parse {
            line: line + 1,
            reason: reason.to_string(),
        };
        match lines.next() {
            Some((_, HEADER)) => {}
            _ => return Err(err(0, "missing or unsupported header")),
        }
        let mut next_fields = |name: &str| -> Result<(usize, Vec<String>), BayesError> {
            let (n, line) = lines.next().ok_or_else(|| err(0, "truncated table"))?;
            let mut fields = line.split('\t');
            if fields.next() != Some(name) {
                return Err(err(n, &format!("expected `{name}` line")));
            }
            Ok((n, fields.filter(|f| !f.is_empty()).map(str::to_string).collect()))
        };
        let (n, alpha) = next_fields("alpha")?;
        let alpha: f64 = alpha
            .first()
            .and_then(|a| a.parse().ok())
            .filter(|a: &f64| *a > 0.0)
            .ok_or_else(|| err(n, "bad alpha"))?;
        let (n, labels) = next_fields("labels")?;
        let labels = labels
            .iter()
            .map(|l| CptCode::parse(l))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| err(n, &e.to_string()))?;
        let (n, icds) = next_fields("icds")?;
        let icds = icds
            .iter()
            .map(|l| IcdCode::normalize(l))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| err(n, &e.to_string()))?;

        let mut model = BayesModel::empty(alpha, labels);
        for icd in &icds {
            model.icd_slot(icd);
        }
        let label_index: HashMap<&CptCode, usize> = model.labels.iter().enumerate().map(|(i, c)| (c, i)).collect();
        let label_index = label_index
            .into_iter()
            .map(|(c, i)| (c.as_str().to_string(), i))
            .collect::<HashMap<String, usize>>();

        for (n, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            let label = |s: &str| label_index.get(s).copied().ok_or_else(|| err(n, "unknown label"));
            let count = |s: &str| s.parse::<u64>().map_err(|_| err(n, "bad count"));
            match f[..] {
                ["prior", l, c] => model.prior[label(l)?] = count(c)?,
                ["icd", icd, l, c] => {
                    let icd = IcdCode::normalize(icd).map_err(|e| err(n, &e.to_string()))?;
                    let i = *model.icd_index.get(&icd).ok_or_else(|| err(n, "ICD not in vocabulary"))?;
                    let (l, c) = (label(l)?, count(c)?);
                    model.icd_given_label[i].insert(l, c);
                    model.icd_totals[l] += c;
                }
                ["gender", g, l, c] => {
                    let g = match g {
                        "M" => 0,
                        "F" => 1,
                        _ => return Err(err(n, "bad gender")),
                    };
                    model.gender_given_label[label(l)?][g] = count(c)?;
                }
                ["age", b, l, c] => {
                    let b: usize = b.parse().ok().filter(|&b| b < 6).ok_or_else(|| err(n, "bad bucket"))?;
                    model.age_given_label[label(l)?][b] = count(c)?;
                }
                _ => return Err(err(n, "unrecognized record")),
            }
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> io::Result<()> {
        fs::write(path, self.to_text())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, BayesError> {
        Self::parse(&fs::read_to_string(path)?)
    }
}

impl Predictor for BayesModel {
    fn method(&self) -> &'static str {
        "bayes"
    }

    fn predict(&self, query: &Query, k: usize) -> Result<Vec<Suggestion>, PredictError> {
        if k == 0 {
            return Err(PredictError::ZeroK);
        }
        Ok(self
            .predict_topk(query, k)
            .into_iter()
            .map(|(cpt, score)| Suggestion { cpt, score })
            .collect())
    }

    fn label_space(&self) -> Option<Vec<CptCode>> {
        Some(self.labels.clone())
    }
}
