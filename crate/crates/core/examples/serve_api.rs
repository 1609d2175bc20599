//! Starts the HTTP service on an ephemeral port over a freshly trained model
//! registry and sends it one suggestion request.

use std::io::{Read, Write};
use std::net::TcpStream;
use std::sync::Arc;

use cptsuggest::app::{router, AppState, ServeConfig};
use cptsuggest::bayes::BayesModel;
use cptsuggest::dataset::{generate_synthetic, SyntheticSpec, Vocabularies};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SyntheticSpec {
        n_providers: 5,
        n_icds: 50,
        n_cpts: 40,
        n_claims: 2_000,
        seed: 13,
        ..SyntheticSpec::default()
    };
    let (claims, truth) = generate_synthetic(&spec)?;
    let dir = tempfile::tempdir()?;
    let models = dir.path().join("models");
    std::fs::create_dir(&models)?;
    let vocabs = Vocabularies::build(&claims, 5)?;
    BayesModel::fit(&claims, &vocabs, 1.0)?.save(models.join("demo.bayes"))?;
    truth.constraints.save(dir.path().join("rules.txt"))?;

    let config = ServeConfig {
        registry: models,
        rules: Some(dir.path().join("rules.txt")),
        store: dir.path().join("drafts.jsonl"),
        default_method: cptsuggest::app::Method::Bayes,
        ..ServeConfig::default()
    };
    let state = Arc::new(AppState::new(config)?);
    println!("model version {}", state.reload()?);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
    let addr = listener.local_addr()?;
    tokio::spawn(async move { axum::serve(listener, router(state)).await });

    let claim = &claims[0];
    let body = serde_json::json!({
        "provider_id": claim.provider_id,
        "age": claim.age,
        "gender": claim.gender,
        "icds": claim.icds,
        "k": 3,
    })
    .to_string();
    let reply = tokio::task::spawn_blocking(move || -> std::io::Result<String> {
        let mut stream = TcpStream::connect(addr)?;
        write!(
            stream,
            "POST /v1/suggest HTTP/1.1\r\nhost: {addr}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
            body.len()
        )?;
        let mut out = String::new();
        stream.read_to_string(&mut out)?;
        Ok(out)
    })
    .await??;
    println!("{}", reply.split("\r\n\r\n").nth(1).unwrap_or(&reply));
    Ok(())
}
