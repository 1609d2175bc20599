//! Synthetic claims with a planted diagnosis-to-procedure mapping.
//!
//! Every synthetic ICD maps to 1-3 CPTs. Each provider copies that map and,
//! with probability `provider_swap` per ICD, replaces one of the mapped CPTs
//! with an alternative of its own. A claim picks a provider, 1-4 ICDs and a
//! patient whose age and gender satisfy every mapped CPT's rule, emits the
//! union of the provider's mapped CPTs, then applies drop/add noise.
//!
//! Sidecar `.truth` format (one record per line, `#` comments):
//!
//! ```text
//! E119 -> 99213,83036            base mapping
//! @P0003 E119 -> 99213,82947     provider override
//! rule 59400,F,12,55             age/gender rule
//! ```

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use rand::seq::{IteratorRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Claim, DatasetError, Gender};
use crate::codes::{index_char, CptCode, IcdCode};
use crate::filter::{AgeGenderRule, RuleBook, Sex};
use crate::predict::{PredictError, Predictor, Query, Suggestion};

/// Oldest age the generator assigns when a claim's rules do not cap it lower.
const SAMPLED_MAX_AGE: u8 = 95;
/// Share of CPTs that carry an age/gender rule.
const CONSTRAINED_SHARE: f64 = 0.1;
const PAYERS: usize = 5;

const RULE_TEMPLATES: [(Sex, u8, u8); 5] = [
    (Sex::F, 12, 55),
    (Sex::M, 40, 120),
    (Sex::Any, 0, 17),
    (Sex::Any, 65, 120),
    (Sex::F, 18, 120),
];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_providers: usize,
    pub n_icds: usize,
    pub n_cpts: usize,
    pub n_claims: usize,
    pub noise_drop: f64,
    pub noise_add: f64,
    pub provider_swap: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_providers: 40,
            n_icds: 500,
            n_cpts: 300,
            n_claims: 50_000,
            noise_drop: 0.05,
            noise_add: 0.05,
            provider_swap: 0.2,
            seed: 2024,
        }
    }
}

impl SyntheticSpec {
    fn validate(&self) -> Result<(), DatasetError> {
        let counts = [
            ("n_providers", self.n_providers),
            ("n_icds", self.n_icds),
            ("n_cpts", self.n_cpts),
            ("n_claims", self.n_claims),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(DatasetError::InvalidSpec(format!("{name} must be at least 1")));
            }
        }
        if self.n_cpts > 90_000 {
            return Err(DatasetError::InvalidSpec("n_cpts must be at most 90000".into()));
        }
        let probs = [
            ("noise_drop", self.noise_drop),
            ("noise_add", self.noise_add),
            ("provider_swap", self.provider_swap),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(DatasetError::InvalidSpec(format!("{name} must lie in [0, 1], found {p}")));
            }
        }
        Ok(())
    }
}

/// The planted mapping and rules behind a synthetic corpus.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GroundTruth {
    pub base_map: BTreeMap<IcdCode, BTreeSet<CptCode>>,
    /// Per-provider entries that differ from `base_map`.
    pub provider_maps: BTreeMap<String, BTreeMap<IcdCode, BTreeSet<CptCode>>>,
    pub constraints: RuleBook,
}

impl GroundTruth {
    /// CPTs the given provider bills for `icd`.
    pub fn mapped(&self, provider_id: &str, icd: &IcdCode) -> Option<&BTreeSet<CptCode>> {
        self.provider_maps
            .get(provider_id)
            .and_then(|m| m.get(icd))
            .or_else(|| self.base_map.get(icd))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# synthetic ground truth v1\n");
        let join = |set: &BTreeSet<CptCode>| set.iter().map(CptCode::as_str).collect::<Vec<_>>().join(",");
        for (icd, cpts) in &self.base_map {
            let _ = writeln!(out, "{icd} -> {}", join(cpts));
        }
        for (provider, map) in &self.provider_maps {
            for (icd, cpts) in map {
                let _ = writeln!(out, "@{provider} {icd} -> {}", join(cpts));
            }
        }
        for rule in self.constraints.iter() {
            let _ = writeln!(out, "rule {rule}");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, DatasetError> {
        let mut truth = GroundTruth::default();
        let mut rules = String::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: String| DatasetError::Parse { line: n + 1, reason };
            if let Some(rule) = line.strip_prefix("rule ") {
                rules.push_str(rule);
                rules.push('\n');
                continue;
            }
            let (lhs, rhs) = line
                .split_once("->")
                .ok_or_else(|| err("expected `ICD -> CPT,...`".into()))?;
            let cpts = rhs
                .split(',')
                .map(|c| CptCode::parse(c.trim()))
                .collect::<Result<BTreeSet<_>, _>>()
                .map_err(|e| err(e.to_string()))?;
            let mut lhs = lhs.split_whitespace();
            let (provider, icd) = match (lhs.next(), lhs.next(), lhs.next()) {
                (Some(p), Some(icd), None) if p.starts_with('@') => (Some(&p[1..]), icd),
                (Some(icd), None, None) => (None, icd),
                _ => return Err(err("bad left-hand side".into())),
            };
            let icd = IcdCode::normalize(icd).map_err(|e| err(e.to_string()))?;
            match provider {
                Some(p) => {
                    truth.provider_maps.entry(p.to_string()).or_default().insert(icd, cpts);
                }
                None => {
                    truth.base_map.insert(icd, cpts);
                }
            }
        }
        truth.constraints = RuleBook::parse(&rules).map_err(|e| DatasetError::Parse {
            line: 0,
            reason: e.to_string(),
        })?;
        Ok(truth)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> io::Result<()> {
        fs::write(path, self.to_text())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        Self::parse(&fs::read_to_string(path)?)
    }
}

/// Scores each CPT by how many of the query's ICDs map to it under the
/// provider's planted map; the best achievable predictor for the corpus.
impl Predictor for GroundTruth {
    fn method(&self) -> &'static str {
        "ceiling"
    }

    fn predict(&self, query: &Query, k: usize) -> Result<Vec<Suggestion>, PredictError> {
        if k == 0 {
            return Err(PredictError::ZeroK);
        }
        let mut votes: BTreeMap<&CptCode, usize> = BTreeMap::new();
        for icd in &query.icds {
            for cpt in self.mapped(&query.provider_id, icd).into_iter().flatten() {
                *votes.entry(cpt).or_default() += 1;
            }
        }
        let mut ranked: Vec<_> = votes.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        Ok(ranked
            .into_iter()
            .take(k)
            .map(|(cpt, n)| Suggestion {
                cpt: cpt.clone(),
                score: n as f64,
            })
            .collect())
    }
}

/// Demographic region a set of rules allows.
#[derive(Debug, Clone, Copy)]
struct Region {
    male: bool,
    female: bool,
    min_age: u8,
    max_age: u8,
}

impl Region {
    const ALL: Region = Region {
        male: true,
        female: true,
        min_age: 0,
        max_age: SAMPLED_MAX_AGE,
    };

    fn narrow(self, rule: Option<&AgeGenderRule>) -> Option<Region> {
        let Some(rule) = rule else { return Some(self) };
        let r = Region {
            male: self.male && rule.sex.allows(Gender::M),
            female: self.female && rule.sex.allows(Gender::F),
            min_age: self.min_age.max(rule.min_age),
            max_age: self.max_age.min(rule.max_age),
        };
        ((r.male || r.female) && r.min_age <= r.max_age).then_some(r)
    }

    fn narrow_all<'a>(self, cpts: impl IntoIterator<Item = &'a CptCode>, rules: &RuleBook) -> Option<Region> {
        cpts.into_iter().try_fold(self, |r, c| r.narrow(rules.get(c)))
    }
}

fn random_icd(rng: &mut ChaCha8Rng) -> String {
    let alnum = |rng: &mut ChaCha8Rng| index_char(rng.gen_range(0..36)).unwrap();
    let mut code = String::new();
    code.push(index_char(rng.gen_range(0..26)).unwrap());
    code.push(index_char(rng.gen_range(26..36)).unwrap());
    code.push(index_char(rng.gen_range(26..36)).unwrap());
    for _ in 0..rng.gen_range(0..=4) {
        code.push(alnum(rng));
    }
    code
}

/// Draws `n` distinct CPTs from `pool` whose joint rules leave a non-empty region.
fn draw_feasible(
    rng: &mut ChaCha8Rng,
    pool: &[CptCode],
    n: usize,
    rules: &RuleBook,
) -> BTreeSet<CptCode> {
    loop {
        let set: BTreeSet<CptCode> = pool.choose_multiple(rng, n).cloned().collect();
        if Region::ALL.narrow_all(&set, rules).is_some() {
            return set;
        }
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(Vec<Claim>, GroundTruth), DatasetError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut seen = HashSet::new();
    let mut icds = Vec::with_capacity(spec.n_icds);
    while icds.len() < spec.n_icds {
        let raw = random_icd(&mut rng);
        if seen.insert(raw.clone()) {
            icds.push(IcdCode::normalize(&raw).expect("generated ICD is valid"));
        }
    }
    let cpts: Vec<CptCode> = rand::seq::index::sample(&mut rng, 90_000, spec.n_cpts)
        .into_iter()
        .map(|i| CptCode::parse(&format!("{}", 10_000 + i)).unwrap())
        .collect();

    let mut constraints = RuleBook::new();
    for cpt in &cpts {
        if rng.gen_bool(CONSTRAINED_SHARE) {
            let (sex, lo, hi) = *RULE_TEMPLATES.choose(&mut rng).unwrap();
            constraints.insert(AgeGenderRule::new(cpt.clone(), sex, lo, hi).unwrap());
        }
    }

    let max_mapped = spec.n_cpts.min(3);
    let mut base_map = BTreeMap::new();
    for icd in &icds {
        let n = rng.gen_range(1..=max_mapped);
        base_map.insert(icd.clone(), draw_feasible(&mut rng, &cpts, n, &constraints));
    }

    let providers: Vec<String> = (0..spec.n_providers).map(|i| format!("P{i:04}")).collect();
    let mut provider_maps: BTreeMap<String, BTreeMap<IcdCode, BTreeSet<CptCode>>> = BTreeMap::new();
    for provider in &providers {
        for icd in &icds {
            if !rng.gen_bool(spec.provider_swap) {
                continue;
            }
            let base = &base_map[icd];
            let replaced = base.iter().choose(&mut rng).unwrap().clone();
            let kept: Vec<&CptCode> = base.iter().filter(|c| **c != replaced).collect();
            let region = Region::ALL.narrow_all(kept.iter().copied(), &constraints).unwrap();
            let alternatives: Vec<&CptCode> = cpts
                .iter()
                .filter(|c| !base.contains(*c) && region.narrow(constraints.get(c)).is_some())
                .collect();
            if let Some(alt) = alternatives.choose(&mut rng) {
                let mut variant: BTreeSet<CptCode> = kept.into_iter().cloned().collect();
                variant.insert((*alt).clone());
                provider_maps.entry(provider.clone()).or_default().insert(icd.clone(), variant);
            }
        }
    }

    let truth = GroundTruth {
        base_map,
        provider_maps,
        constraints,
    };

    let max_icds = spec.n_icds.min(4);
    let mut claims = Vec::with_capacity(spec.n_claims);
    for i in 0..spec.n_claims {
        let provider = providers.choose(&mut rng).unwrap();
        let wanted = rng.gen_range(1..=max_icds);
        let mut chosen = BTreeSet::new();
        let mut region = Region::ALL;
        let mut attempts = 0;
        while chosen.len() < wanted && attempts < 50 {
            attempts += 1;
            let icd = icds.choose(&mut rng).unwrap();
            if chosen.contains(icd) {
                continue;
            }
            let mapped = truth.mapped(provider, icd).unwrap();
            if let Some(r) = region.narrow_all(mapped, &truth.constraints) {
                region = r;
                chosen.insert(icd.clone());
            }
        }

        let gender = match (region.male, region.female) {
            (true, true) => *[Gender::M, Gender::F].choose(&mut rng).unwrap(),
            (true, false) => Gender::M,
            _ => Gender::F,
        };
        let age = rng.gen_range(region.min_age..=region.max_age);

        let union: BTreeSet<CptCode> = chosen
            .iter()
            .flat_map(|icd| truth.mapped(provider, icd).unwrap().iter().cloned())
            .collect();
        let mut emitted: BTreeSet<CptCode> = union
            .iter()
            .filter(|_| !rng.gen_bool(spec.noise_drop))
            .cloned()
            .collect();
        if rng.gen_bool(spec.noise_add) {
            for _ in 0..100 {
                let extra = cpts.choose(&mut rng).unwrap();
                if truth.constraints.allows(extra, age, gender) {
                    emitted.insert(extra.clone());
                    break;
                }
            }
        }
        if emitted.is_empty() {
            // training records need at least one procedure
            emitted.insert(union.first().unwrap().clone());
        }

        claims.push(Claim {
            claim_id: format!("C{i:07}"),
            provider_id: provider.clone(),
            payer_id: Some(format!("Y{:02}", rng.gen_range(0..PAYERS))),
            age,
            gender,
            icds: chosen,
            cpts: emitted,
        });
    }
    Ok((claims, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            n_providers: 5,
            n_icds: 40,
            n_cpts: 30,
            n_claims: 400,
            noise_drop: 0.1,
            noise_add: 0.1,
            provider_swap: 0.3,
            seed,
        }
    }

    #[test]
    fn noiseless_claims_equal_mapped_union() {
        let spec = SyntheticSpec {
            noise_drop: 0.0,
            noise_add: 0.0,
            provider_swap: 0.0,
            ..small(3)
        };
        let (claims, truth) = generate_synthetic(&spec).unwrap();
        assert!(truth.provider_maps.is_empty());
        for c in &claims {
            let union: BTreeSet<CptCode> = c.icds.iter().flat_map(|i| truth.base_map[i].clone()).collect();
            assert_eq!(c.cpts, union);
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let (a, ta) = generate_synthetic(&small(9)).unwrap();
        let (b, tb) = generate_synthetic(&small(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        let (c, _) = generate_synthetic(&small(10)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn claims_respect_rules_and_invariants() {
        let (claims, truth) = generate_synthetic(&small(4)).unwrap();
        assert_eq!(claims.len(), 400);
        for c in &claims {
            assert!((1..=4).contains(&c.icds.len()));
            assert!(!c.cpts.is_empty());
            assert!(c.age <= SAMPLED_MAX_AGE);
            for cpt in &c.cpts {
                assert!(truth.constraints.allows(cpt, c.age, c.gender), "{cpt} in {c:?}");
            }
        }
        for cpts in truth.base_map.values() {
            assert!((1..=3).contains(&cpts.len()));
        }
    }

    #[test]
    fn provider_overrides_differ_by_one_code() {
        let (_, truth) = generate_synthetic(&small(5)).unwrap();
        assert!(!truth.provider_maps.is_empty());
        for map in truth.provider_maps.values() {
            for (icd, variant) in map {
                let base = &truth.base_map[icd];
                assert_eq!(variant.len(), base.len());
                assert_eq!(variant.difference(base).count(), 1);
            }
        }
    }

    #[test]
    fn truth_text_round_trip() {
        let (_, truth) = generate_synthetic(&small(6)).unwrap();
        assert_eq!(GroundTruth::parse(&truth.to_text()).unwrap(), truth);
        assert!(GroundTruth::parse("E119 => 99213").is_err());
    }

    #[test]
    fn rejects_invalid_spec() {
        let bad = SyntheticSpec { noise_drop: 1.5, ..small(1) };
        assert!(matches!(generate_synthetic(&bad), Err(DatasetError::InvalidSpec(_))));
        let bad = SyntheticSpec { n_claims: 0, ..small(1) };
        assert!(generate_synthetic(&bad).is_err());
    }

    #[test]
    fn ceiling_predictor_votes() {
        let (claims, truth) = generate_synthetic(&small(7)).unwrap();
        let q = Query::from(&claims[0]);
        let got = truth.predict(&q, 50).unwrap();
        let union: BTreeSet<CptCode> = q
            .icds
            .iter()
            .flat_map(|i| truth.mapped(&q.provider_id, i).unwrap().clone())
            .collect();
        assert_eq!(got.iter().map(|s| s.cpt.clone()).collect::<BTreeSet<_>>(), union);
        assert!(got.windows(2).all(|w| w[0].score >= w[1].score));
    }
}
