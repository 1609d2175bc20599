//! Mines diagnosis -> procedure rules and predicts from matching antecedents.

use std::collections::BTreeSet;

use cptsuggest::apriori::mine_rules;
use cptsuggest::dataset::{generate_synthetic, SyntheticSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SyntheticSpec {
        n_providers: 5,
        n_icds: 50,
        n_cpts: 40,
        n_claims: 3_000,
        seed: 11,
        ..SyntheticSpec::default()
    };
    let (claims, _) = generate_synthetic(&spec)?;
    let rules = mine_rules(&claims, 0.01, 0.3)?;
    println!("{} rules", rules.len());
    for r in rules.rules().iter().take(5) {
        println!("  {r}");
    }

    let claim = &claims[0];
    let diagnoses: BTreeSet<String> = claim.icds.iter().map(|c| c.as_str().to_string()).collect();
    let billed: Vec<&str> = claim.cpts.iter().map(|c| c.as_str()).collect();
    println!("diagnoses {diagnoses:?}, billed {billed:?}");
    for (cpt, conf) in rules.predict(&diagnoses, 3) {
        println!("  {cpt} {conf:.3}");
    }
    Ok(())
}
