//! Evaluation of classifiers against rule-based protocols.
//!
//! The crate is `no_std` and only needs `alloc`. It contains the pure parts
//! of the pipeline:
//!
//! * [`dataset`]: labelled tabular data, median imputation and scaling.
//! * [`folds`]: repeated stratified k-fold plans.
//! * [`rules`]: the interval-condition rule language, parsing and evaluation.
//! * [`vectorize`]: threshold discretisation and rule / local-explanation vectors.
//! * [`similarity`]: XNOR, Jaccard, Cosine and Dice similarity and their aggregates.
//! * [`metrics`]: standard binary metrics and the protocol-relative RA, RR, RS.
//! * [`neural`]: a small feed-forward network trained with the knowledge-weighted loss.
//! * [`cart`]: best-first Gini trees and their conversion into rule sets.
//! * [`stats`]: Student-t distribution and the corrected resampled t-test.
//!
//! IO, the experiment runner and the command line live in the `protofid` crate.
#![no_std]

#[cfg(test)]
extern crate std;

extern crate alloc;

pub mod cart;
pub mod dataset;
pub mod folds;
pub mod metrics;
pub mod neural;
pub mod rules;
pub mod similarity;
pub mod stats;
pub mod vectorize;


pub use cart::{fidelity, fit_cart, tree_to_rules, CartTree, Fidelity, SurrogateRuleSet, TreeNode};
pub use dataset::{FeatureSchema, LabeledDataset, ScalerParams};
pub use folds::{make_folds, FoldPlan, Split};
pub use metrics::{MetricsReport, PredictionBundle, RsMode};
pub use neural::{NetworkConfig, Optimizer, TrainedNetwork};
pub use rules::{Condition, Rule, RuleSet};
pub use similarity::{SimilarityKind, SimilarityReport};
pub use stats::{corrected_ttest, TTest};
pub use vectorize::{DiscretizationMap, ExplanationVector, LocalExplanations};
