//! Trains a small multi-label network, saves it and reloads it.

use cptsuggest::dataset::{generate_synthetic, split, SyntheticSpec, Vocabularies};
use cptsuggest::nn::{load_model_for, save_model, train, Dims, TrainHyper};
use cptsuggest::predict::{Predictor, Query};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SyntheticSpec {
        n_providers: 5,
        n_icds: 50,
        n_cpts: 40,
        n_claims: 3_000,
        seed: 3,
        ..SyntheticSpec::default()
    };
    let (claims, _) = generate_synthetic(&spec)?;
    let (train_set, val) = split(&claims, 0.1, 1)?;
    let vocabs = Vocabularies::build(&train_set, 5)?;
    let dims = Dims {
        char_dim: 8,
        provider_dim: 8,
        hidden: [64, 64, 32],
    };
    let hyper = TrainHyper {
        epochs: 5,
        batch_size: 64,
        ..TrainHyper::default()
    };
    let (model, history) = train(&train_set, &val, &vocabs, dims, &hyper)?;
    println!("initial loss {:.4}", history.initial_train_loss);
    for e in &history.epochs {
        println!("{e:?}");
    }

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("demo.nn");
    save_model(&model, &path)?;
    let reloaded = load_model_for(&path, &vocabs)?;
    let query = Query::from(&val[0]);
    let truth: Vec<&str> = val[0].cpts.iter().map(|c| c.as_str()).collect();
    println!("truth {truth:?}");
    for s in reloaded.predict(&query, 3)? {
        println!("  {} {:.3}", s.cpt.as_str(), s.score);
    }
    Ok(())
}
