//! Fits the naive Bayes baseline and shows its count tables round-tripping.

use cptsuggest::bayes::BayesModel;
use cptsuggest::dataset::{generate_synthetic, split, SyntheticSpec, Vocabularies};
use cptsuggest::predict::Query;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SyntheticSpec {
        n_providers: 5,
        n_icds: 50,
        n_cpts: 40,
        n_claims: 3_000,
        seed: 5,
        ..SyntheticSpec::default()
    };
    let (claims, _) = generate_synthetic(&spec)?;
    let (train, test) = split(&claims, 0.2, 1)?;
    let vocabs = Vocabularies::build(&train, 5)?;
    let model = BayesModel::fit(&train, &vocabs, 1.0)?;
    println!("{} labels, {} ICDs seen", model.labels().len(), model.icd_vocab_size());

    let reparsed = BayesModel::parse(&model.to_text())?;
    assert_eq!(reparsed.to_text(), model.to_text());

    for claim in test.iter().take(3) {
        let top = model.predict_topk(&Query::from(claim), 3);
        let shown: Vec<String> = top.iter().map(|(c, p)| format!("{}:{p:.2}", c.as_str())).collect();
        let truth: Vec<&str> = claim.cpts.iter().map(|c| c.as_str()).collect();
        println!("truth {truth:?} -> {}", shown.join(" "));
    }
    Ok(())
}
