use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use cptsuggest::apriori::{mine_frequent, Item};
use cptsuggest::codes::{CptCode, IcdCode};
use cptsuggest::dataset::{split, Claim, Gender};
use cptsuggest::eval::precision_recall_at_k;
use cptsuggest::filter::{AgeGenderRule, RuleBook, Sex};
use cptsuggest::predict::{suggest, PredictError, Predictor, Query, Suggestion};

fn claim(i: usize) -> Claim {
    Claim {
        claim_id: format!("C{i}"),
        provider_id: "P1".into(),
        payer_id: None,
        age: 40,
        gender: Gender::F,
        icds: [IcdCode::normalize("E119").unwrap()].into(),
        cpts: [CptCode::parse("99213").unwrap()].into(),
    }
}

struct Fixed(Vec<Suggestion>);

impl Predictor for Fixed {
    fn method(&self) -> &'static str {
        "fixed"
    }
    fn predict(&self, _: &Query, k: usize) -> Result<Vec<Suggestion>, PredictError> {
        Ok(self.0.iter().take(k).cloned().collect())
    }
}

fn sex() -> impl Strategy<Value = Sex> {
    prop_oneof![Just(Sex::M), Just(Sex::F), Just(Sex::Any)]
}

proptest! {
    #[test]
    fn split_partitions_the_corpus(n in 2usize..300, f in 0.01f64..0.99, seed: u64) {
        let claims: Vec<Claim> = (0..n).map(claim).collect();
        let (train, test) = split(&claims, f, seed).unwrap();
        prop_assert_eq!(train.len() + test.len(), n);
        let mut ids: Vec<String> = train.iter().chain(&test).map(|c| c.claim_id.clone()).collect();
        ids.sort();
        ids.dedup();
        prop_assert_eq!(ids.len(), n);
        prop_assert_eq!(split(&claims, f, seed).unwrap(), (train, test));
    }

    #[test]
    fn metrics_stay_in_unit_interval(
        predicted in prop::collection::vec(0u8..20, 0..12),
        truth in prop::collection::btree_set(0u8..20, 1..8),
        k in 1usize..10,
    ) {
        let (p, r) = precision_recall_at_k(&predicted, &truth, k).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!((0.0..=1.0).contains(&r));
        let (p_next, r_next) = precision_recall_at_k(&predicted, &truth, k + 1).unwrap();
        prop_assert!(r_next >= r);
        prop_assert!(p_next * (k + 1) as f64 >= p * k as f64 - 1e-12);
    }

    #[test]
    fn frequent_itemsets_are_downward_closed(
        tx in prop::collection::vec(prop::collection::btree_set(0usize..8, 0..6), 1..40),
        s in 0.05f64..0.7,
    ) {
        let names = ["D:A", "D:B", "D:C", "D:D", "P:W", "P:X", "P:Y", "P:Z"];
        let typed: Vec<Vec<Item>> = tx.iter().map(|t| t.iter().map(|&i| names[i].parse().unwrap()).collect()).collect();
        let sets: BTreeMap<BTreeSet<String>, u64> = mine_frequent(&typed, s)
            .unwrap()
            .into_iter()
            .map(|f| (f.items.iter().map(Item::to_string).collect(), f.support_count))
            .collect();
        for (items, &count) in &sets {
            for drop in items {
                let mut sub = items.clone();
                sub.remove(drop);
                if sub.is_empty() {
                    continue;
                }
                let sub_count = sets.get(&sub).copied();
                prop_assert!(sub_count.is_some_and(|c| c >= count), "{:?} frequent but {:?} is not", items, sub);
            }
        }
    }

    #[test]
    fn suggestions_are_allowed_descending_and_bounded(
        ranked in prop::collection::vec((10000u32..10030, 0.0f64..1.0), 0..30),
        rules in prop::collection::vec((10000u32..10030, sex(), 0u8..60, 0u8..60), 0..10),
        age in 0u8..=120,
        male: bool,
        k in 1usize..8,
    ) {
        let mut book = RuleBook::new();
        for (cpt, sex, a, b) in rules {
            book.insert(AgeGenderRule::new(CptCode::parse(&cpt.to_string()).unwrap(), sex, a.min(b), a.max(b) + 30).unwrap());
        }
        let mut seen = BTreeSet::new();
        let mut list: Vec<Suggestion> = ranked
            .into_iter()
            .filter(|(c, _)| seen.insert(*c))
            .map(|(c, s)| Suggestion { cpt: CptCode::parse(&c.to_string()).unwrap(), score: s })
            .collect();
        list.sort_by(|a, b| b.score.total_cmp(&a.score));
        let gender = if male { Gender::M } else { Gender::F };
        let query = Query {
            provider_id: "P1".into(),
            age,
            gender,
            icds: [IcdCode::normalize("E119").unwrap()].into(),
        };
        let out = suggest(&Fixed(list.clone()), &query, k, &book).unwrap();
        prop_assert!(out.len() <= k);
        prop_assert!(out.iter().all(|s| book.allows(&s.cpt, age, gender)));
        prop_assert!(out.windows(2).all(|w| w[0].score >= w[1].score && w[0].filtered_count <= w[1].filtered_count));
        let allowed_in_window = list.iter().take(2 * k).filter(|s| book.allows(&s.cpt, age, gender)).count();
        prop_assert_eq!(out.len(), allowed_in_window.min(k));
    }
}
