//! Generates a small synthetic corpus, writes it as JSONL and reads it back.

use cptsuggest::dataset::{generate_synthetic, load_claims, split, write_claims, SyntheticSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SyntheticSpec {
        n_providers: 5,
        n_icds: 50,
        n_cpts: 40,
        n_claims: 2_000,
        seed: 7,
        ..SyntheticSpec::default()
    };
    let (claims, truth) = generate_synthetic(&spec)?;
    println!("{} claims, {} mapped ICDs, {} rules", claims.len(), truth.base_map.len(), truth.constraints.len());
    println!("first: {}", claims[0].to_json_line());

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("claims.jsonl");
    write_claims(&path, &claims)?;
    let back = load_claims(&path)?;
    assert_eq!(back, claims);

    let (train, test) = split(&back, 0.2, 1)?;
    println!("train {} / test {}", train.len(), test.len());
    Ok(())
}
