//! Association-rule baseline.
//!
//! Every claim is a transaction of `D:<icd>` and `P:<cpt>` items. Frequent
//! itemsets are mined level by level; each frequent itemset that mixes both
//! kinds yields one rule, all of its diagnoses implying all of its procedures.
//! A query is answered from the rules whose antecedent is contained in its
//! diagnosis set, larger antecedents first, then higher confidence.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codes::{CptCode, IcdCode};
use crate::dataset::{Claim, MAX_ICDS};
use crate::predict::{PredictError, Predictor, Query, Suggestion};

pub const DEFAULT_MIN_SUPPORT: f64 = 0.001;
pub const DEFAULT_MIN_CONFIDENCE: f64 = 0.2;
const HEADER: &str = "# apriori rules v1";

#[derive(Debug, Error)]
pub enum AprioriError {
    #[error("no transactions")]
    EmptyDataset,
    #[error("min_support must be in (0, 1], found {0}")]
    BadSupport(f64),
    #[error("min_confidence must be in [0, 1], found {0}")]
    BadConfidence(f64),
    #[error("support of {0} is missing from the itemsets")]
    MissingSubsetSupport(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("rules file line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ItemKind {
    Diag,
    Proc,
}

/// Ordered by kind, then code, so every `D:` item sorts before every `P:` item.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Item {
    pub kind: ItemKind,
    pub code: String,
}

impl Item {
    pub fn diag(code: impl Into<String>) -> Self {
        Item {
            kind: ItemKind::Diag,
            code: code.into(),
        }
    }

    pub fn proc(code: impl Into<String>) -> Self {
        Item {
            kind: ItemKind::Proc,
            code: code.into(),
        }
    }
}

impl fmt::Display for Item {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.kind {
            ItemKind::Diag => "D",
            ItemKind::Proc => "P",
        };
        write!(f, "{tag}:{}", self.code)
    }
}

impl FromStr for Item {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (tag, code) = s.split_once(':').ok_or_else(|| format!("item `{s}` lacks a kind tag"))?;
        if code.is_empty() || code.contains(|c: char| c.is_whitespace() || c == ';') {
            return Err(format!("bad item code in `{s}`"));
        }
        match tag {
            "D" => Ok(Item::diag(code)),
            "P" => Ok(Item::proc(code)),
            _ => Err(format!("unknown item kind `{tag}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequentItemset {
    /// Sorted, no duplicates.
    pub items: Vec<Item>,
    pub support_count: u64,
    pub support: f64,
}

/// One transaction per claim: its ICDs as `D:` items and CPTs as `P:` items.
pub fn transactions(claims: &[Claim]) -> Vec<Vec<Item>> {
    claims
        .iter()
        .map(|c| {
            c.icds
                .iter()
                .map(|i| Item::diag(i.as_str()))
                .chain(c.cpts.iter().map(|p| Item::proc(p.as_str())))
                .collect()
        })
        .collect()
}

/// Smallest count that reaches `min_support` of `n` transactions (at least one).
pub fn min_count(min_support: f64, n: usize) -> u64 {
    ((min_support * n as f64 - 1e-9).ceil() as u64).max(1)
}

/// Level-wise Apriori. Output is sorted by itemset size, then items.
pub fn mine_frequent(transactions: &[Vec<Item>], min_support: f64) -> Result<Vec<FrequentItemset>, AprioriError> {
    if !(min_support > 0.0 && min_support <= 1.0) {
        return Err(AprioriError::BadSupport(min_support));
    }
    if transactions.is_empty() {
        return Err(AprioriError::EmptyDataset);
    }
    let n = transactions.len();
    let threshold = min_count(min_support, n);

    // intern items so that id order equals item order
    let universe: Vec<Item> = transactions.iter().flatten().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let id_of: HashMap<&Item, u32> = universe.iter().enumerate().map(|(i, it)| (it, i as u32)).collect();
    let mut tx: Vec<Vec<u32>> = transactions
        .iter()
        .map(|t| {
            let mut ids: Vec<u32> = t.iter().map(|it| id_of[it]).collect();
            ids.sort_unstable();
            ids.dedup();
            ids
        })
        .collect();

    let mut counts = vec![0u64; universe.len()];
    for t in &tx {
        for &i in t {
            counts[i as usize] += 1;
        }
    }
    let mut level: Vec<(Vec<u32>, u64)> = (0..universe.len() as u32)
        .filter(|&i| counts[i as usize] >= threshold)
        .map(|i| (vec![i], counts[i as usize]))
        .collect();
    let mut found: Vec<(Vec<u32>, u64)> = Vec::new();

    while !level.is_empty() {
        let k = level[0].0.len() + 1;
        let candidates = join_and_prune(&level);
        found.append(&mut level);
        if candidates.is_empty() {
            break;
        }
        // items that can still take part in a frequent k-itemset
        let live: HashSet<u32> = candidates.iter().flatten().copied().collect();
        for t in &mut tx {
            t.retain(|i| live.contains(i));
        }
        tx.retain(|t| t.len() >= k);
        let counted = count_candidates(&tx, candidates, k);
        level = counted.into_iter().filter(|(_, c)| *c >= threshold).collect();
    }

    let mut out: Vec<FrequentItemset> = found
        .into_iter()
        .map(|(ids, count)| FrequentItemset {
            items: ids.iter().map(|&i| universe[i as usize].clone()).collect(),
            support_count: count,
            support: count as f64 / n as f64,
        })
        .collect();
    out.sort_by(|a, b| a.items.len().cmp(&b.items.len()).then_with(|| a.items.cmp(&b.items)));
    Ok(out)
}

/// Joins sorted (k-1)-itemsets that share their first k-2 items and drops
/// candidates with an infrequent (k-1)-subset.
fn join_and_prune(level: &[(Vec<u32>, u64)]) -> Vec<Vec<u32>> {
    let mut sets: Vec<&Vec<u32>> = level.iter().map(|(s, _)| s).collect();
    sets.sort();
    let frequent: HashSet<&[u32]> = sets.iter().map(|s| s.as_slice()).collect();
    let m = sets.first().map_or(0, |s| s.len());
    let mut out = Vec::new();
    let mut start = 0;
    while start < sets.len() {
        let prefix = &sets[start][..m - 1];
        let end = start + sets[start..].iter().take_while(|s| &s[..m - 1] == prefix).count();
        for a in start..end {
            for b in a + 1..end {
                let mut cand = sets[a].clone();
                cand.push(sets[b][m - 1]);
                let all_frequent = (0..cand.len() - 2).all(|skip| {
                    let sub: Vec<u32> = cand.iter().enumerate().filter(|&(i, _)| i != skip).map(|(_, &x)| x).collect();
                    frequent.contains(sub.as_slice())
                });
                if all_frequent {
                    out.push(cand);
                }
            }
        }
        start = end;
    }
    out
}

fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let mut r: u64 = 1;
    for i in 0..k.min(n - k) {
        r = r.saturating_mul((n - i) as u64) / (i as u64 + 1);
    }
    r
}

/// One pass over the transactions. Short transactions enumerate their own
/// k-subsets; long ones test each candidate for containment.
fn count_candidates(tx: &[Vec<u32>], candidates: Vec<Vec<u32>>, k: usize) -> Vec<(Vec<u32>, u64)> {
    let index: HashMap<&[u32], usize> = candidates.iter().enumerate().map(|(i, c)| (c.as_slice(), i)).collect();
    let mut counts = vec![0u64; candidates.len()];
    let mut subset = Vec::with_capacity(k);
    for t in tx {
        if binomial(t.len(), k) <= candidates.len() as u64 {
            for_each_subset(t, k, &mut subset, 0, &mut |s| {
                if let Some(&i) = index.get(s) {
                    counts[i] += 1;
                }
            });
        } else {
            for (i, c) in candidates.iter().enumerate() {
                if is_sorted_subset(c, t) {
                    counts[i] += 1;
                }
            }
        }
    }
    candidates.into_iter().zip(counts).collect()
}

fn for_each_subset(items: &[u32], k: usize, buf: &mut Vec<u32>, from: usize, f: &mut impl FnMut(&[u32])) {
    if buf.len() == k {
        f(buf);
        return;
    }
    let need = k - buf.len();
    for i in from..=items.len() - need {
        buf.push(items[i]);
        for_each_subset(items, k, buf, i + 1, f);
        buf.pop();
    }
}

fn is_sorted_subset(small: &[u32], big: &[u32]) -> bool {
    let mut it = big.iter();
    small.iter().all(|x| it.any(|y| y == x))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    /// Diagnosis codes, sorted.
    pub antecedent: Vec<String>,
    /// Procedure codes, sorted.
    pub consequent: Vec<String>,
    pub support: f64,
    pub confidence: f64,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let side = |kind: &str, codes: &[String]| codes.iter().map(|c| format!("{kind}:{c}")).collect::<Vec<_>>().join(";");
        write!(
            f,
            "{} -> {} support={} confidence={}",
            side("D", &self.antecedent),
            side("P", &self.consequent),
            self.support,
            self.confidence
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuleSet {
    pub min_support: f64,
    pub min_confidence: f64,
    rules: Vec<Rule>,
    by_antecedent: HashMap<Vec<String>, Vec<usize>>,
}

/// Turns every frequent itemset holding both kinds of item into the rule
/// diagnoses -> procedures, kept when its confidence reaches `min_confidence`.
pub fn derive_rules(
    itemsets: &[FrequentItemset],
    min_support: f64,
    min_confidence: f64,
) -> Result<RuleSet, AprioriError> {
    if !(0.0..=1.0).contains(&min_confidence) {
        return Err(AprioriError::BadConfidence(min_confidence));
    }
    let support: HashMap<&[Item], u64> = itemsets.iter().map(|s| (s.items.as_slice(), s.support_count)).collect();
    let mut rules = Vec::new();
    for set in itemsets {
        let split = set.items.iter().position(|i| i.kind == ItemKind::Proc).unwrap_or(set.items.len());
        if split == 0 || split == set.items.len() {
            continue;
        }
        let diag = &set.items[..split];
        let diag_count = *support.get(diag).ok_or_else(|| {
            AprioriError::MissingSubsetSupport(diag.iter().map(Item::to_string).collect::<Vec<_>>().join(";"))
        })?;
        let confidence = set.support_count as f64 / diag_count as f64;
        if confidence >= min_confidence {
            rules.push(Rule {
                antecedent: diag.iter().map(|i| i.code.clone()).collect(),
                consequent: set.items[split..].iter().map(|i| i.code.clone()).collect(),
                support: set.support,
                confidence,
            });
        }
    }
    Ok(RuleSet::new(rules, min_support, min_confidence))
}

/// Mines a claim corpus end to end.
pub fn mine_rules(claims: &[Claim], min_support: f64, min_confidence: f64) -> Result<RuleSet, AprioriError> {
    let itemsets = mine_frequent(&transactions(claims), min_support)?;
    derive_rules(&itemsets, min_support, min_confidence)
}

impl RuleSet {
    pub fn new(mut rules: Vec<Rule>, min_support: f64, min_confidence: f64) -> Self {
        rules.sort_by(|a, b| a.antecedent.cmp(&b.antecedent).then_with(|| a.consequent.cmp(&b.consequent)));
        rules.dedup_by(|a, b| a.antecedent == b.antecedent && a.consequent == b.consequent);
        let mut by_antecedent: HashMap<Vec<String>, Vec<usize>> = HashMap::new();
        for (i, r) in rules.iter().enumerate() {
            by_antecedent.entry(r.antecedent.clone()).or_default().push(i);
        }
        RuleSet {
            min_support,
            min_confidence,
            rules,
            by_antecedent,
        }
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Rules whose antecedent is contained in `diagnoses`, in precedence order:
    /// larger antecedent, higher confidence, then consequent.
    pub fn matching<'a>(&'a self, diagnoses: &BTreeSet<String>) -> Vec<&'a Rule> {
        let codes: Vec<&String> = diagnoses.iter().take(MAX_ICDS).collect();
        let mut hits: Vec<&Rule> = Vec::new();
        let mut key: Vec<String> = Vec::new();
        for mask in 1u32..(1 << codes.len()) {
            key.clear();
            key.extend((0..codes.len()).filter(|i| mask >> i & 1 == 1).map(|i| codes[i].clone()));
            if let Some(ids) = self.by_antecedent.get(&key) {
                hits.extend(ids.iter().map(|&i| &self.rules[i]));
            }
        }
        hits.sort_by(|a, b| {
            b.antecedent
                .len()
                .cmp(&a.antecedent.len())
                .then_with(|| b.confidence.total_cmp(&a.confidence))
                .then_with(|| a.consequent.cmp(&b.consequent))
        });
        hits
    }

    /// Up to `k` procedure codes, each with the confidence of the first rule
    /// that produced it.
    pub fn predict(&self, diagnoses: &BTreeSet<String>, k: usize) -> Vec<(String, f64)> {
        let mut out: Vec<(String, f64)> = Vec::new();
        for rule in self.matching(diagnoses) {
            for c in &rule.consequent {
                if out.len() == k {
                    return out;
                }
                if !out.iter().any(|(seen, _)| seen == c) {
                    out.push((c.clone(), rule.confidence));
                }
            }
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{HEADER} min_support={} min_confidence={}\n",
            self.min_support, self.min_confidence
        );
        for r in &self.rules {
            out.push_str(&r.to_string());
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, AprioriError> {
        let err = |line: usize, reason: String| AprioriError::Parse { line, reason };
        let mut lines = text.lines().enumerate();
        let header = lines.next().map(|(_, l)| l).unwrap_or_default();
        let params = header
            .strip_prefix(HEADER)
            .ok_or_else(|| err(1, "missing or unsupported header".into()))?;
        let mut min_support = None;
        let mut min_confidence = None;
        for field in params.split_whitespace() {
            match field.split_once('=') {
                Some(("min_support", v)) => min_support = v.parse::<f64>().ok(),
                Some(("min_confidence", v)) => min_confidence = v.parse::<f64>().ok(),
                _ => return Err(err(1, format!("unknown header field `{field}`"))),
            }
        }
        let (Some(min_support), Some(min_confidence)) = (min_support, min_confidence) else {
            return Err(err(1, "header lacks mining parameters".into()));
        };

        let mut rules = Vec::new();
        for (i, line) in lines {
            let n = i + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (lhs, rest) = line.split_once(" -> ").ok_or_else(|| err(n, "missing `->`".into()))?;
            let mut fields = rest.split_whitespace();
            let rhs = fields.next().ok_or_else(|| err(n, "missing consequent".into()))?;
            let mut support = None;
            let mut confidence = None;
            for f in fields {
                match f.split_once('=') {
                    Some(("support", v)) => support = v.parse::<f64>().ok(),
                    Some(("confidence", v)) => confidence = v.parse::<f64>().ok(),
                    _ => return Err(err(n, format!("unknown field `{f}`"))),
                }
            }
            let side = |s: &str, kind: ItemKind| -> Result<Vec<String>, AprioriError> {
                let mut codes = Vec::new();
                for part in s.split(';') {
                    let item: Item = part.parse().map_err(|e| err(n, e))?;
                    if item.kind != kind {
                        return Err(err(n, format!("`{part}` on the wrong side of the rule")));
                    }
                    let valid = match kind {
                        ItemKind::Diag => IcdCode::normalize(&item.code).is_ok_and(|c| c.as_str() == item.code),
                        ItemKind::Proc => CptCode::parse(&item.code).is_ok_and(|c| c.as_str() == item.code),
                    };
                    if !valid {
                        return Err(err(n, format!("`{}` is not a normalized code", item.code)));
                    }
                    codes.push(item.code);
                }
                codes.sort();
                codes.dedup();
                Ok(codes)
            };
            let confidence = confidence
                .filter(|c| *c > 0.0 && *c <= 1.0)
                .ok_or_else(|| err(n, "confidence missing or outside (0, 1]".into()))?;
            let support = support
                .filter(|s| (0.0..=1.0).contains(s))
                .ok_or_else(|| err(n, "support missing or outside [0, 1]".into()))?;
            rules.push(Rule {
                antecedent: side(lhs, ItemKind::Diag)?,
                consequent: side(rhs, ItemKind::Proc)?,
                support,
                confidence,
            });
        }
        Ok(RuleSet::new(rules, min_support, min_confidence))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> io::Result<()> {
        fs::write(path, self.to_text())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, AprioriError> {
        Self::parse(&fs::read_to_string(path)?)
    }
}

impl Predictor for RuleSet {
    fn method(&self) -> &'static str {
        "apriori"
    }

    fn predict(&self, query: &Query, k: usize) -> Result<Vec<Suggestion>, PredictError> {
        if k == 0 {
            return Err(PredictError::ZeroK);
        }
        let diagnoses: BTreeSet<String> = query.icds.iter().map(|c| c.as_str().to_string()).collect();
        // a larger antecedent can outrank a more confident rule; cap each score
        // at its predecessor's so the list reads best first
        let mut cap = f64::INFINITY;
        Ok(RuleSet::predict(self, &diagnoses, k)
            .into_iter()
            .filter_map(|(code, confidence)| {
                cap = cap.min(confidence);
                CptCode::parse(&code).ok().map(|cpt| Suggestion { cpt, score: cap })
            })
            .collect())
    }

    fn label_space(&self) -> Option<Vec<CptCode>> {
        let codes: BTreeSet<&String> = self.rules.iter().flat_map(|r| &r.consequent).collect();
        Some(codes.into_iter().filter_map(|c| CptCode::parse(c).ok()).collect())
    }
}
