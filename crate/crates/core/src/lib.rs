//! Procedure code (CPT) suggestion from diagnosis codes (ICD-10).
//!
//! Three predictors share one interface ([`predict::Predictor`]):
//!
//! - [`nn`]: a multi-label network over per-character ICD embeddings and a
//!   provider embedding, trained with Adam on sigmoid cross-entropy;
//! - [`bayes`]: a count-based naive Bayes ranker over ICDs, gender and age;
//! - [`apriori`]: association rules mined from claim itemsets.
//!
//! Predictions pass through fixed age/gender rules ([`filter`]) before they
//! are scored ([`eval`]) or served ([`app`]).

pub mod codes;
pub mod dataset;
pub mod filter;
pub mod predict;
pub mod nn;
pub mod eval;
pub mod bayes;
pub mod apriori;
pub mod app;
