//! Evaluates every method on one held-out split and prints the comparison table.

use std::collections::HashSet;

use cptsuggest::apriori::mine_rules;
use cptsuggest::bayes::BayesModel;
use cptsuggest::dataset::{generate_synthetic, split, SyntheticSpec, Vocabularies};
use cptsuggest::eval::{evaluate, EvalReport};
use cptsuggest::nn::{train, Dims, TrainHyper};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SyntheticSpec {
        n_providers: 8,
        n_icds: 80,
        n_cpts: 60,
        n_claims: 5_000,
        seed: 21,
        ..SyntheticSpec::default()
    };
    let (claims, truth) = generate_synthetic(&spec)?;
    let (train_all, test) = split(&claims, 0.2, 1)?;
    let (train_set, val) = split(&train_all, 0.1, 2)?;
    let vocabs = Vocabularies::build(&train_all, 5)?;
    let space: HashSet<_> = vocabs.labels().iter().cloned().collect();
    let ks = [1, 3, 5];
    let rules = &truth.constraints;

    let dims = Dims {
        char_dim: 16,
        provider_dim: 8,
        hidden: [128, 128, 64],
    };
    let hyper = TrainHyper {
        epochs: 8,
        batch_size: 64,
        ..TrainHyper::default()
    };
    let (nn, _) = train(&train_set, &val, &vocabs, dims, &hyper)?;
    let bayes = BayesModel::fit(&train_all, &vocabs, 1.0)?;
    let apriori = mine_rules(&train_all, 0.001, 0.2)?;

    let mut report = EvalReport::default();
    for predictor in [&nn as &dyn cptsuggest::predict::Predictor, &bayes, &apriori, &truth] {
        report.methods.push(evaluate(predictor, &test, &ks, rules, &space)?);
    }
    print!("{}", report.render());
    Ok(())
}
