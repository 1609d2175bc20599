//! Applies age and gender rules on top of a predictor's ranked list.

use cptsuggest::codes::{CptCode, IcdCode};
use cptsuggest::dataset::Gender;
use cptsuggest::filter::RuleBook;
use cptsuggest::predict::{suggest, PredictError, Predictor, Query, Suggestion};

/// Always ranks the same codes.
struct Ranked(Vec<&'static str>);

impl Predictor for Ranked {
    fn method(&self) -> &'static str {
        "ranked"
    }
    fn predict(&self, _: &Query, k: usize) -> Result<Vec<Suggestion>, PredictError> {
        Ok(self
            .0
            .iter()
            .take(k)
            .enumerate()
            .map(|(i, c)| Suggestion {
                cpt: CptCode::parse(c).expect("valid cpt"),
                score: 0.9 - 0.1 * i as f64,
            })
            .collect())
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let rules = RuleBook::parse("59400,F,12,55\n99381,A,0,0\n")?;
    let predictor = Ranked(vec!["59400", "99381", "99213", "83036", "80053"]);
    for (age, gender) in [(30, Gender::F), (30, Gender::M), (0, Gender::M)] {
        let query = Query {
            provider_id: "P0001".into(),
            age,
            gender,
            icds: [IcdCode::normalize("Z34.90")?].into(),
        };
        println!("age {age} {gender:?}:");
        for s in suggest(&predictor, &query, 3, &rules)? {
            println!("  {} {:.2} (filtered before it: {})", s.cpt.as_str(), s.score, s.filtered_count);
        }
    }
    Ok(())
}
