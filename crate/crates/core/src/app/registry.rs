//! A directory of model files, one method per extension, and the immutable
//! snapshot the service answers from.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::UNIX_EPOCH;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::apriori::{AprioriError, RuleSet};
use crate::bayes::{BayesError, BayesModel};
use crate::filter::{RuleBook, RulesError};
use crate::nn::{load_model, ModelParams, NnError};
use crate::predict::{Predictor, Query};

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("cannot read registry {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("no loadable model in {0}")]
    NoModels(PathBuf),
    #[error("no model file with stem `{stem}` in {dir}")]
    MissingActive { stem: String, dir: PathBuf },
    #[error("{path}: {source}")]
    Nn { path: PathBuf, source: NnError },
    #[error("{path}: {source}")]
    Bayes { path: PathBuf, source: BayesError },
    #[error("{path}: {source}")]
    Apriori { path: PathBuf, source: AprioriError },
    #[error("{path}: {source}")]
    Rules { path: PathBuf, source: RulesError },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Nn,
    Bayes,
    Apriori,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Nn, Method::Bayes, Method::Apriori];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Nn => "nn",
            Method::Bayes => "bayes",
            Method::Apriori => "apriori",
        }
    }

    /// Model file extension.
    pub fn extension(self) -> &'static str {
        self.as_str()
    }

    pub fn from_extension(ext: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.extension() == ext)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown method `{s}` (expected nn, bayes or apriori)"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub file: String,
    pub method: Method,
    pub bytes: u64,
    /// Seconds since the Unix epoch.
    pub modified: u64,
    pub active: bool,
}

/// Model files in `dir`, sorted by name. Files with other extensions are ignored.
pub fn scan(dir: &Path) -> Result<Vec<ModelEntry>, RegistryError> {
    let io_err = |source| RegistryError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err)? {
        let entry = entry.map_err(io_err)?;
        let path = entry.path();
        let Some(method) = path.extension().and_then(|e| e.to_str()).and_then(Method::from_extension) else {
            continue;
        };
        let meta = entry.metadata().map_err(io_err)?;
        if !meta.is_file() {
            continue;
        }
        let modified = meta
            .modified()
            .ok()
            .and_then(|t| t.duration_since(UNIX_EPOCH).ok())
            .map_or(0, |d| d.as_secs());
        out.push(ModelEntry {
            file: entry.file_name().to_string_lossy().into_owned(),
            method,
            bytes: meta.len(),
            modified,
            active: false,
        });
    }
    out.sort_by(|a, b| a.file.cmp(&b.file));
    Ok(out)
}

pub enum LoadedModel {
    Nn(ModelParams),
    Bayes(BayesModel),
    Apriori(RuleSet),
}

impl LoadedModel {
    pub fn load(method: Method, path: &Path) -> Result<Self, RegistryError> {
        let path_buf = path.to_path_buf();
        Ok(match method {
            Method::Nn => LoadedModel::Nn(load_model(path).map_err(|source| RegistryError::Nn { path: path_buf, source })?),
            Method::Bayes => LoadedModel::Bayes(
                BayesModel::load(path).map_err(|source| RegistryError::Bayes { path: path_buf, source })?,
            ),
            Method::Apriori => LoadedModel::Apriori(
                RuleSet::load(path).map_err(|source| RegistryError::Apriori { path: path_buf, source })?,
            ),
        })
    }

    pub fn predictor(&self) -> &dyn Predictor {
        match self {
            LoadedModel::Nn(m) => m,
            LoadedModel::Bayes(m) => m,
            LoadedModel::Apriori(m) => m,
        }
    }

    /// Notes about parts of the query the model cannot use.
    pub fn warnings(&self, query: &Query) -> Vec<String> {
        match self {
            LoadedModel::Nn(m) if m.vocabs.provider_of(&query.provider_id).is_none() => {
                vec![format!("unknown provider `{}`; using the UNK provider embedding", query.provider_id)]
            }
            LoadedModel::Bayes(m) => query
                .icds
                .iter()
                .filter(|c| !m.knows_icd(c))
                .map(|c| format!("diagnosis {c} was not seen in training and is ignored"))
                .collect(),
            _ => Vec::new(),
        }
    }
}

pub struct ActiveModel {
    pub file: String,
    pub model: LoadedModel,
}

/// Everything a request needs, loaded once and shared read-only.
pub struct Snapshot {
    pub models: BTreeMap<Method, ActiveModel>,
    pub rules: RuleBook,
}

impl Snapshot {
    /// Loads one model per method present in `dir`: the file whose stem equals
    /// `active` when given, otherwise the newest (ties to the larger name).
    pub fn load(dir: &Path, active: Option<&str>, rules: Option<&Path>) -> Result<Self, RegistryError> {
        let entries = scan(dir)?;
        let mut models = BTreeMap::new();
        for method in Method::ALL {
            let mut candidates: Vec<&ModelEntry> = entries.iter().filter(|e| e.method == method).collect();
            if let Some(stem) = active {
                candidates.retain(|e| Path::new(&e.file).file_stem().is_some_and(|s| s == stem));
            }
            let Some(chosen) = candidates.into_iter().max_by(|a, b| a.modified.cmp(&b.modified).then(a.file.cmp(&b.file)))
            else {
                continue;
            };
            let model = LoadedModel::load(method, &dir.join(&chosen.file))?;
            log::info!("loaded {method} model {}", chosen.file);
            models.insert(
                method,
                ActiveModel {
                    file: chosen.file.clone(),
                    model,
                },
            );
        }
        if models.is_empty() {
            return Err(match active {
                Some(stem) => RegistryError::MissingActive {
                    stem: stem.to_string(),
                    dir: dir.to_path_buf(),
                },
                None => RegistryError::NoModels(dir.to_path_buf()),
            });
        }
        let rules = match rules {
            Some(path) => RuleBook::load(path).map_err(|source| RegistryError::Rules {
                path: path.to_path_buf(),
                source,
            })?,
            None => RuleBook::new(),
        };
        Ok(Snapshot { models, rules })
    }

    pub fn get(&self, method: Method) -> Option<&ActiveModel> {
        self.models.get(&method)
    }

    /// Loaded model files joined with `+`.
    pub fn version(&self) -> String {
        self.models.values().map(|m| m.file.as_str()).collect::<Vec<_>>().join("+")
    }
}
