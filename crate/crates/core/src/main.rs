use std::collections::HashSet;
use std::error::Error;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cptsuggest::app::{self, LoadedModel, Method, ServeConfig, Snapshot, SuggestRequest};
use cptsuggest::apriori::{mine_rules, DEFAULT_MIN_CONFIDENCE, DEFAULT_MIN_SUPPORT};
use cptsuggest::bayes::BayesModel;
use cptsuggest::codes::CptCode;
use cptsuggest::dataset::{generate_synthetic, load_claims, split, write_claims, GroundTruth, SyntheticSpec, Vocabularies};
use cptsuggest::eval::{evaluate, EvalReport};
use cptsuggest::filter::RuleBook;
use cptsuggest::nn::{save_model, train, Dims, TrainHyper};
use cptsuggest::predict::Predictor;

type Result<T> = std::result::Result<T, Box<dyn Error>>;

#[derive(Parser)]
#[command(version, about = "CPT code suggestion from ICD-10 diagnoses")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic claims corpus with its ground truth (.truth) and rules (.rules).
    GenData {
        #[arg(long, default_value_t = 40)]
        providers: usize,
        #[arg(long, default_value_t = 500)]
        icds: usize,
        #[arg(long, default_value_t = 300)]
        cpts: usize,
        #[arg(long, default_value_t = 50_000)]
        claims: usize,
        #[arg(long, default_value_t = 0.05)]
        drop: f64,
        #[arg(long, default_value_t = 0.05)]
        add: f64,
        #[arg(long, default_value_t = 0.2)]
        swap: f64,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        /// Hold this fraction out into `<out stem>.test.jsonl`.
        #[arg(long)]
        test_fraction: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the neural model.
    TrainNn {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        val_fraction: f64,
        #[arg(long, default_value_t = 8)]
        dc: usize,
        #[arg(long, default_value_t = 16)]
        dp: usize,
        #[arg(long, default_value = "256,256,128", value_parser = parse_hidden)]
        hidden: [usize; 3],
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long, default_value_t = 256)]
        batch: usize,
        #[arg(long, default_value_t = 20)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        min_cpt_count: usize,
        /// Also write the per-epoch loss history as JSON.
        #[arg(long)]
        history: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the count-based Bayes ranker.
    TrainBayes {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 5)]
        min_cpt_count: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mine association rules.
    MineRules {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MIN_SUPPORT)]
        min_support: f64,
        #[arg(long, default_value_t = DEFAULT_MIN_CONFIDENCE)]
        min_confidence: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a model on held-out claims.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        /// Model file; for `--method ceiling`, a generator `.truth` file.
        #[arg(long)]
        model: PathBuf,
        /// nn, bayes, apriori or ceiling. Defaults to the model's extension.
        #[arg(long)]
        method: Option<String>,
        #[arg(long, default_value = "1,3,5", value_delimiter = ',')]
        k: Vec<usize>,
        #[arg(long)]
        rules: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Answer one request. Reads a JSON request from stdin when no --icd is given.
    Suggest {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        method: Option<Method>,
        #[arg(long)]
        rules: Option<PathBuf>,
        #[arg(long, default_value = "")]
        provider: String,
        #[arg(long, default_value_t = 40)]
        age: i64,
        #[arg(long, default_value = "F")]
        gender: String,
        #[arg(long = "icd")]
        icds: Vec<String>,
        #[arg(long, default_value_t = 3)]
        k: i64,
    },
    /// Run the HTTP suggestion service.
    Serve {
        /// TOML config; flags override its values.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        registry: Option<PathBuf>,
        #[arg(long)]
        rules: Option<PathBuf>,
        #[arg(long)]
        store: Option<PathBuf>,
    },
}

fn parse_hidden(s: &str) -> std::result::Result<[usize; 3], String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse().map_err(|_| format!("bad width `{p}`")))
        .collect::<std::result::Result<_, _>>()?;
    v.try_into().map_err(|_| "expected three comma-separated widths".to_string())
}

fn method_of(path: &Path, explicit: Option<&str>) -> Result<String> {
    match explicit.or_else(|| path.extension().and_then(|e| e.to_str())) {
        Some(m) => Ok(m.to_string()),
        None => Err(format!("cannot tell the method of {}; pass --method", path.display()).into()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn ensure_parent(path: &std::path::Path) -> std::io::Result<()> {
    match path.parent().filter(|d| !d.as_os_str().is_empty()) {
        Some(dir) => std::fs::create_dir_all(dir),
        None => Ok(()),
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenData {
            providers,
            icds,
            cpts,
            claims,
            drop,
            add,
            swap,
            seed,
            test_fraction,
            out,
        } => {
            ensure_parent(&out)?;
            let spec = SyntheticSpec {
                n_providers: providers,
                n_icds: icds,
                n_cpts: cpts,
                n_claims: claims,
                noise_drop: drop,
                noise_add: add,
                provider_swap: swap,
                seed,
            };
            let (all, truth) = generate_synthetic(&spec)?;
            match test_fraction {
                Some(f) => {
                    let (train_set, test) = split(&all, f, seed)?;
                    write_claims(&out, &train_set)?;
                    write_claims(out.with_extension("test.jsonl"), &test)?;
                }
                None => write_claims(&out, &all)?,
            }
            truth.save(out.with_extension("truth"))?;
            truth.constraints.save(out.with_extension("rules"))?;
            log::info!("wrote {} claims and {} rules", all.len(), truth.constraints.len());
        }
        Command::TrainNn {
            data,
            val_fraction,
            dc,
            dp,
            hidden,
            lr,
            batch,
            epochs,
            seed,
            min_cpt_count,
            history,
            out,
        } => {
            ensure_parent(&out)?;
            let claims = load_claims(&data)?;
            let (train_set, val) = if val_fraction > 0.0 {
                split(&claims, val_fraction, seed)?
            } else {
                (claims, Vec::new())
            };
            let vocabs = Vocabularies::build(&train_set, min_cpt_count)?;
            log::info!(
                "{} training claims, {} validation, {} labels",
                train_set.len(),
                val.len(),
                vocabs.label_count()
            );
            let dims = Dims {
                char_dim: dc,
                provider_dim: dp,
                hidden,
            };
            let hyper = TrainHyper {
                learning_rate: lr,
                batch_size: batch,
                epochs,
                seed,
                ..TrainHyper::default()
            };
            let (model, hist) = train(&train_set, &val, &vocabs, dims, &hyper)?;
            save_model(&model, &out)?;
            if let Some(path) = history {
                std::fs::write(path, serde_json::to_string_pretty(&hist)?)?;
            }
            log::info!("best epoch {:?}; saved {}", hist.best_epoch, out.display());
        }
        Command::TrainBayes {
            data,
            alpha,
            min_cpt_count,
            out,
        } => {
            ensure_parent(&out)?;
            let claims = load_claims(&data)?;
            let vocabs = Vocabularies::build(&claims, min_cpt_count)?;
            BayesModel::fit(&claims, &vocabs, alpha)?.save(&out)?;
            log::info!("{} labels; saved {}", vocabs.label_count(), out.display());
        }
        Command::MineRules {
            data,
            min_support,
            min_confidence,
            out,
        } => {
            ensure_parent(&out)?;
            let claims = load_claims(&data)?;
            let rules = mine_rules(&claims, min_support, min_confidence)?;
            rules.save(&out)?;
            log::info!("{} rules; saved {}", rules.len(), out.display());
        }
        Command::Evaluate {
            data,
            model,
            method,
            k,
            rules,
            out,
        } => {
            let test = load_claims(&data)?;
            let rules = match rules {
                Some(p) => RuleBook::load(p)?,
                None => RuleBook::new(),
            };
            let method = method_of(&model, method.as_deref())?;
            let loaded: Box<dyn Predictor> = if method == "ceiling" || method == "truth" {
                Box::new(GroundTruth::load(&model)?)
            } else {
                let m: Method = method.parse()?;
                match LoadedModel::load(m, &model)? {
                    LoadedModel::Nn(x) => Box::new(x),
                    LoadedModel::Bayes(x) => Box::new(x),
                    LoadedModel::Apriori(x) => Box::new(x),
                }
            };
            let space: HashSet<CptCode> = match loaded.label_space() {
                Some(labels) => labels.into_iter().collect(),
                None => test.iter().flat_map(|c| c.cpts.iter().cloned()).collect(),
            };
            let report = EvalReport {
                methods: vec![evaluate(loaded.as_ref(), &test, &k, &rules, &space)?],
            };
            print!("{}", report.render());
            if let Some(out) = out {
                ensure_parent(&out)?;
                std::fs::write(out, serde_json::to_string_pretty(&report)?)?;
            }
        }
        Command::Suggest {
            model,
            method,
            rules,
            provider,
            age,
            gender,
            icds,
            k,
        } => {
            let method = match method {
                Some(m) => m,
                None => method_of(&model, None)?.parse()?,
            };
            let request = if icds.is_empty() {
                let mut text = String::new();
                std::io::stdin().read_to_string(&mut text)?;
                serde_json::from_str(&text)?
            } else {
                SuggestRequest {
                    provider_id: provider,
                    age,
                    gender,
                    icds,
                    k: Some(k),
                    method: None,
                }
            };
            let file = model.file_name().map_or(String::new(), |f| f.to_string_lossy().into_owned());
            let snapshot = Snapshot {
                models: [(
                    method,
                    app::registry::ActiveModel {
                        file,
                        model: LoadedModel::load(method, &model)?,
                    },
                )]
                .into(),
                rules: match rules {
                    Some(p) => RuleBook::load(p)?,
                    None => RuleBook::new(),
                },
            };
            let config = ServeConfig {
                default_method: method,
                ..ServeConfig::default()
            };
            match app::answer_with(&snapshot, &config, &request) {
                Ok(resp) => println!("{}", serde_json::to_string_pretty(&resp)?),
                Err(app::ApiError::Invalid(fields)) => {
                    let msgs: Vec<String> = fields.iter().map(|f| format!("{}: {}", f.field, f.message)).collect();
                    return Err(msgs.join("; ").into());
                }
                Err(e) => return Err(e.into()),
            }
        }
        Command::Serve {
            config,
            port,
            registry,
            rules,
            store,
        } => {
            let mut cfg = match config {
                Some(p) => ServeConfig::load(p)?,
                None => ServeConfig::default(),
            };
            if let Some(p) = port {
                cfg.port = p;
            }
            if let Some(r) = registry {
                cfg.registry = r;
            }
            if rules.is_some() {
                cfg.rules = rules;
            }
            if let Some(s) = store {
                cfg.store = s;
            }
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(app::serve(cfg))?;
        }
    }
    Ok(())
}
