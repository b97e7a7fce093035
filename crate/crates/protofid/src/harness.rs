//! Repeated cross-validation experiment: data-driven vs knowledge-weighted
//! networks, surrogate extraction, explanation similarity and robustness.

use protofid_core::cart::{fidelity, fit_cart, tree_to_rules_with, CartError, Fidelity};
use protofid_core::dataset::{DataError, PIMA_MISSING};
use protofid_core::folds::FoldError;
use protofid_core::metrics::{MetricsReport, PredictionBundle, METRIC_NAMES};
use protofid_core::neural::{self, NetworkConfig, NeuralError};
use protofid_core::rules::RuleError;
use protofid_core::similarity::{robustness_matrix, ruleset_similarity, SimilarityError, SimilarityKind};
use protofid_core::stats::{ci95_half_width, corrected_ttest, mean, StatsError};
use protofid_core::vectorize::{assign_local_explanations, collect_thresholds, restrict_to_common, VectorizeError};
use protofid_core::{make_folds, LabeledDataset, RuleSet, Split};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::report::{
    FidelityRow, Report, RobustnessRow, SimilarityRow, SweepRow, Table3Row,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Folds(#[from] FoldError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Rule(#[from] RuleError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("repeat {repeat}, fold {fold}: {source}")]
    Fold {
        repeat: usize,
        fold: usize,
        source: Box<HarnessError>,
    },
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Cart(#[from] CartError),
    #[error(transparent)]
    Vectorize(#[from] VectorizeError),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsetMode {
    /// Samples explained by every rule set.
    AllPredicted,
    /// Of those, samples that the protocol and both networks classify correctly.
    AllCorrect,
}

impl SubsetMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SubsetMode::AllPredicted => "all_predicted",
            SubsetMode::AllCorrect => "all_correct",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Model {
    #[serde(rename = "dd_ml")]
    DdMl,
    #[serde(rename = "kb_ml")]
    KbMl,
}

impl Model {
    pub fn as_str(self) -> &'static str {
        match self {
            Model::DdMl => "dd_ml",
            Model::KbMl => "kb_ml",
        }
    }
}

/// Rows whose network predictions the surrogate tree is fitted to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurrogateFit {
    /// Fit on the training fold, score fidelity on the test fold.
    #[default]
    TrainFold,
    /// Fit on the test fold and score fidelity on the same rows.
    TestFold,
}

/// Which parts of the experiment to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stages {
    pub table3: bool,
    pub sweep: bool,
    pub fidelity: bool,
    pub similarity: bool,
    pub robustness: bool,
}

impl Stages {
    pub const ALL: Stages = Stages {
        table3: true,
        sweep: true,
        fidelity: true,
        similarity: true,
        robustness: true,
    };
    pub const NONE: Stages = Stages {
        table3: false,
        sweep: false,
        fidelity: false,
        similarity: false,
        robustness: false,
    };

    fn needs_surrogates(&self) -> bool {
        self.fidelity || self.similarity || self.robustness
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub repeats: usize,
    pub k: usize,
    pub seed: u64,
    /// Values of alpha for the sweep; 0 is the data-driven model.
    pub alpha_grid: Vec<f64>,
    /// Alpha of the knowledge-weighted model in the comparison and the surrogates.
    pub kb_alpha: f64,
    pub leaf_budgets: Vec<usize>,
    pub subset_modes: Vec<SubsetMode>,
    pub similarity_kinds: Vec<SimilarityKind>,
    /// Features whose zeros are treated as missing and imputed.
    pub missing_features: Vec<String>,
    pub surrogate_fit: SurrogateFit,
    /// Network hyperparameters; `alpha` and `seed` are set per run.
    pub network: NetworkConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            repeats: 10,
            k: 10,
            seed: 42,
            alpha_grid: (0..=8).map(|i| i as f64 * 0.5).collect(),
            kb_alpha: 1.5,
            leaf_budgets: (2..=12).collect(),
            subset_modes: vec![SubsetMode::AllPredicted, SubsetMode::AllCorrect],
            similarity_kinds: SimilarityKind::ALL.to_vec(),
            missing_features: PIMA_MISSING.iter().map(|s| s.to_string()).collect(),
            surrogate_fit: SurrogateFit::TrainFold,
            network: NetworkConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.alpha_grid.iter().chain([&self.kb_alpha]).any(|a| !(*a >= 0.0 && a.is_finite())) {
            return Err(HarnessError::Config("alpha values must be finite and non-negative".into()));
        }
        if self.leaf_budgets.contains(&0) {
            return Err(HarnessError::Config("leaf budgets must be positive".into()));
        }
        self.network.validate()?;
        Ok(())
    }

    /// Sorted alphas that need a trained network under `stages`.
    fn alphas(&self, stages: &Stages) -> Vec<f64> {
        let mut out = Vec::new();
        if stages.sweep {
            out.extend_from_slice(&self.alpha_grid);
        }
        if stages.table3 || stages.needs_surrogates() {
            out.push(0.0);
            out.push(self.kb_alpha);
        }
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }
}

/// Seed of the networks trained in one fold; all alphas share it.
pub fn fold_seed(seed: u64, repeat: usize, fold: usize) -> u64 {
    // splitmix64 finaliser over the packed coordinates
    let mut z = seed ^ ((repeat as u64) << 32 | fold as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateRecord {
    pub model: Model,
    pub budget: usize,
    pub rules: RuleSet,
    /// Agreement with the network on the test fold.
    pub fidelity: Fidelity,
    /// Agreement on the training fold.
    pub fidelity_train: Fidelity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityRecord {
    pub subset: SubsetMode,
    pub budget: usize,
    pub n_samples: usize,
    /// Per kind, in config order: similarity of KB with DD-ML_X and with KB-ML_X.
    pub dd: Vec<f64>,
    pub kb: Vec<f64>,
}

/// Everything computed on one train/test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub repeat: usize,
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub metrics: Vec<(f64, MetricsReport)>,
    pub surrogates: Vec<SurrogateRecord>,
    pub similarity: Vec<SimilarityRecord>,
}

impl FoldRecord {
    pub fn metrics_at(&self, alpha: f64) -> Option<&MetricsReport> {
        self.metrics.iter().find(|(a, _)| *a == alpha).map(|(_, m)| m)
    }

    pub fn surrogate(&self, model: Model, budget: usize) -> Option<&SurrogateRecord> {
        self.surrogates.iter().find(|s| s.model == model && s.budget == budget)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecords {
    pub test_train_ratio: f64,
    pub folds: Vec<FoldRecord>,
}

struct Context<'a> {
    data: &'a LabeledDataset,
    kb: &'a RuleSet,
    kb_complete: RuleSet,
    bounds: Vec<(f64, f64)>,
    cfg: &'a ExperimentConfig,
    stages: Stages,
    alphas: Vec<f64>,
}

fn hard(p: &[f64]) -> Vec<u8> {
    p.iter().map(|&v| u8::from(v >= 0.5)).collect()
}

fn run_fold(ctx: &Context, split: &Split) -> Result<FoldRecord, HarnessError> {
    let cfg = ctx.cfg;
    let missing: Vec<&str> = cfg.missing_features.iter().map(String::as_str).collect();
    let data = ctx.data.impute_median(&missing, &split.train)?;
    let r = ctx.kb.protocol_vector(&data)?;
    let y_test: Vec<u8> = split.test.iter().map(|&i| data.labels()[i]).collect();
    let r_test: Vec<Option<u8>> = split.test.iter().map(|&i| r[i]).collect();

    let seed = fold_seed(cfg.seed, split.repeat, split.fold);
    let mut metrics = Vec::with_capacity(ctx.alphas.len());
    // (train predictions, test predictions) for the two compared models
    let mut dd = None;
    let mut kbm = None;
    for &alpha in &ctx.alphas {
        let net_cfg = NetworkConfig {
            alpha,
            seed,
            ..cfg.network.clone()
        };
        let net = neural::train(&data, &split.train, &r, &net_cfg)?;
        let p_test = net.predict_indices(&data, &split.test)?;
        let bundle = PredictionBundle::from_probabilities(y_test.clone(), p_test.clone(), r_test.clone(), 0.5)
            .expect("network outputs are probabilities");
        metrics.push((alpha, MetricsReport::compute(&bundle, 1)));
        if ctx.stages.needs_surrogates() && (alpha == 0.0 || alpha == cfg.kb_alpha) {
            let p_train = net.predict_indices(&data, &split.train)?;
            let pair = (hard(&p_train), hard(&p_test));
            if alpha == 0.0 {
                dd = Some(pair.clone());
            }
            if alpha == cfg.kb_alpha {
                kbm = Some(pair);
            }
        }
    }

    let mut surrogates = Vec::new();
    let mut similarity = Vec::new();
    if ctx.stages.needs_surrogates() {
        let (dd, kbm) = (dd.expect("alpha 0 trained"), kbm.expect("kb alpha trained"));
        let schema = data.schema();
        let train_rows: Vec<&[f64]> = split.train.iter().map(|&i| data.row(i)).collect();
        let test_rows: Vec<&[f64]> = split.test.iter().map(|&i| data.row(i)).collect();
        for (model, (train_hat, test_hat)) in [(Model::DdMl, &dd), (Model::KbMl, &kbm)] {
            for &budget in &cfg.leaf_budgets {
                let tree = match cfg.surrogate_fit {
                    SurrogateFit::TrainFold => fit_cart(&train_rows, train_hat, budget)?,
                    SurrogateFit::TestFold => fit_cart(&test_rows, test_hat, budget)?,
                };
                let sr = tree_to_rules_with(&tree, schema, &ctx.bounds)?;
                let fid = fidelity(&sr.rules, schema, &test_rows, test_hat)?;
                let fid_train = fidelity(&sr.rules, schema, &train_rows, train_hat)?;
                surrogates.push(SurrogateRecord {
                    model,
                    budget,
                    rules: sr.rules,
                    fidelity: fid,
                    fidelity_train: fid_train,
                });
            }
        }

        if ctx.stages.similarity {
            let test = data.subset(&split.test)?;
            let correct: Vec<bool> = (0..split.test.len())
                .map(|s| r_test[s] == Some(y_test[s]) && dd.1[s] == y_test[s] && kbm.1[s] == y_test[s])
                .collect();
            for &budget in &cfg.leaf_budgets {
                let find = |m: Model| {
                    surrogates
                        .iter()
                        .find(|s: &&SurrogateRecord| s.model == m && s.budget == budget)
                        .map(|s| &s.rules)
                        .expect("surrogate fitted")
                };
                let (ddx, kbx) = (find(Model::DdMl), find(Model::KbMl));
                let dmap = collect_thresholds(&[&ctx.kb_complete, ddx, kbx], schema)?;
                let le_kb = assign_local_explanations(&ctx.kb_complete, &test, &dmap)?;
                let le_dd = assign_local_explanations(ddx, &test, &dmap)?;
                let le_kbx = assign_local_explanations(kbx, &test, &dmap)?;
                let common = restrict_to_common(&[&le_kb, &le_dd, &le_kbx]);
                for &mode in &cfg.subset_modes {
                    let idx: Vec<usize> = match mode {
                        SubsetMode::AllPredicted => common.clone(),
                        SubsetMode::AllCorrect => common.iter().copied().filter(|&s| correct[s]).collect(),
                    };
                    if idx.is_empty() {
                        log::warn!(
                            "repeat {}, fold {}: empty {} subset at budget {budget}",
                            split.repeat,
                            split.fold,
                            mode.as_str()
                        );
                        continue;
                    }
                    let mut rec = SimilarityRecord {
                        subset: mode,
                        budget,
                        n_samples: idx.len(),
                        dd: Vec::new(),
                        kb: Vec::new(),
                    };
                    for &kind in &cfg.similarity_kinds {
                        rec.dd.push(ruleset_similarity(kind, &le_kb, &le_dd, &idx)?);
                        rec.kb.push(ruleset_similarity(kind, &le_kb, &le_kbx, &idx)?);
                    }
                    similarity.push(rec);
                }
            }
        }
    }

    Ok(FoldRecord {
        repeat: split.repeat,
        fold: split.fold,
        n_train: split.train.len(),
        n_test: split.test.len(),
        metrics,
        surrogates,
        similarity,
    })
}

/// Global imputation used for bound completion and robustness.
fn globally_imputed(data: &LabeledDataset, cfg: &ExperimentConfig) -> Result<LabeledDataset, HarnessError> {
    let missing: Vec<&str> = cfg.missing_features.iter().map(String::as_str).collect();
    let all: Vec<usize> = (0..data.n_rows()).collect();
    Ok(data.impute_median(&missing, &all)?)
}

/// Runs every fold of the plan. Folds run in parallel; results keep plan order.
pub fn run_folds(
    data: &LabeledDataset,
    kb: &RuleSet,
    cfg: &ExperimentConfig,
    stages: Stages,
) -> Result<ExperimentRecords, HarnessError> {
    cfg.validate()?;
    let plan = make_folds(data.labels(), cfg.repeats, cfg.k, cfg.seed)?;
    let global = globally_imputed(data, cfg)?;
    let bounds = global.bounds().to_vec();
    let ctx = Context {
        data,
        kb,
        kb_complete: kb.complete_bounds_with(data.schema(), &bounds)?,
        bounds,
        cfg,
        stages,
        alphas: cfg.alphas(&stages),
    };
    let folds = plan
        .splits
        .par_iter()
        .map(|split| {
            run_fold(&ctx, split).map_err(|e| HarnessError::Fold {
                repeat: split.repeat,
                fold: split.fold,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ExperimentRecords {
        test_train_ratio: plan.test_train_ratio(),
        folds,
    })
}

fn metric_values(folds: &[FoldRecord], alpha: f64, name: &str) -> Vec<Option<f64>> {
    folds
        .iter()
        .map(|f| f.metrics_at(alpha).and_then(|m| m.get(name)))
        .collect()
}

fn defined(xs: &[Option<f64>]) -> Vec<f64> {
    xs.iter().flatten().copied().collect()
}

pub fn table3(records: &ExperimentRecords, cfg: &ExperimentConfig) -> Result<Vec<Table3Row>, HarnessError> {
    let mut rows = Vec::new();
    for name in METRIC_NAMES {
        let a = metric_values(&records.folds, 0.0, name);
        let b = metric_values(&records.folds, cfg.kb_alpha, name);
        let (pa, pb): (Vec<f64>, Vec<f64>) = a
            .iter()
            .zip(&b)
            .filter_map(|(x, y)| Some(((*x)?, (*y)?)))
            .unzip();
        let test = if pa.len() >= 2 {
            Some(corrected_ttest(&pb, &pa, records.test_train_ratio)?)
        } else {
            None
        };
        let (da, db) = (defined(&a), defined(&b));
        rows.push(Table3Row {
            metric: name.to_string(),
            dd_ml: (!da.is_empty()).then(|| mean(&da)),
            kb_ml: (!db.is_empty()).then(|| mean(&db)),
            t: test.map(|t| t.t),
            p_value: test.map(|t| t.p_value),
            folds: pa.len(),
        });
    }
    Ok(rows)
}

/// Metrics shown in the alpha sweep.
pub const SWEEP_METRICS: [&str; 6] = ["a", "roc_auc", "mcc", "ra", "f1", "ba"];

pub fn alpha_sweep(records: &ExperimentRecords, cfg: &ExperimentConfig) -> Vec<SweepRow> {
    let mut rows = Vec::new();
    for &alpha in &cfg.alpha_grid {
        for name in SWEEP_METRICS {
            let v = defined(&metric_values(&records.folds, alpha, name));
            if v.is_empty() {
                continue;
            }
            rows.push(SweepRow {
                alpha,
                metric: name.to_string(),
                mean: mean(&v),
                ci: ci95_half_width(&v),
            });
        }
    }
    rows
}

struct FidelityMeans {
    accuracy: f64,
    f1: Option<f64>,
    f1_macro: Option<f64>,
}

impl FidelityMeans {
    fn of<'a>(fids: impl Iterator<Item = &'a Fidelity>) -> Self {
        let fids: Vec<&Fidelity> = fids.collect();
        let acc: Vec<f64> = fids.iter().map(|f| f.accuracy).collect();
        let f1: Vec<f64> = fids.iter().filter_map(|f| f.f1).collect();
        let f1m: Vec<f64> = fids.iter().filter_map(|f| f.f1_macro).collect();
        Self {
            accuracy: mean(&acc),
            f1: (!f1.is_empty()).then(|| mean(&f1)),
            f1_macro: (!f1m.is_empty()).then(|| mean(&f1m)),
        }
    }
}

pub fn fidelity_summary(records: &ExperimentRecords, cfg: &ExperimentConfig) -> Vec<FidelityRow> {
    let mut rows = Vec::new();
    for &budget in &cfg.leaf_budgets {
        for model in [Model::DdMl, Model::KbMl] {
            let recs: Vec<&SurrogateRecord> = records
                .folds
                .iter()
                .filter_map(|f| f.surrogate(model, budget))
                .collect();
            if recs.is_empty() {
                continue;
            }
            let test = FidelityMeans::of(recs.iter().map(|s| &s.fidelity));
            let train = FidelityMeans::of(recs.iter().map(|s| &s.fidelity_train));
            let n_rules: Vec<f64> = records
                .folds
                .iter()
                .filter_map(|f| f.surrogate(model, budget))
                .map(|s| s.rules.len() as f64)
                .collect();
            rows.push(FidelityRow {
                budget,
                model,
                accuracy: test.accuracy,
                f1: test.f1,
                f1_macro: test.f1_macro,
                train_accuracy: train.accuracy,
                train_f1: train.f1,
                train_f1_macro: train.f1_macro,
                mean_rules: mean(&n_rules),
            });
        }
    }
    rows
}

pub fn similarity_summary(
    records: &ExperimentRecords,
    cfg: &ExperimentConfig,
) -> Result<Vec<SimilarityRow>, HarnessError> {
    let mut rows = Vec::new();
    for &mode in &cfg.subset_modes {
        for &budget in &cfg.leaf_budgets {
            let recs: Vec<&SimilarityRecord> = records
                .folds
                .iter()
                .flat_map(|f| &f.similarity)
                .filter(|s| s.subset == mode && s.budget == budget)
                .collect();
            if recs.is_empty() {
                continue;
            }
            for (k, &kind) in cfg.similarity_kinds.iter().enumerate() {
                let dd: Vec<f64> = recs.iter().map(|r| r.dd[k]).collect();
                let kb: Vec<f64> = recs.iter().map(|r| r.kb[k]).collect();
                let test = if recs.len() >= 2 {
                    Some(corrected_ttest(&kb, &dd, records.test_train_ratio)?)
                } else {
                    None
                };
                rows.push(SimilarityRow {
                    subset: mode,
                    budget,
                    kind,
                    dd_ml: mean(&dd),
                    kb_ml: mean(&kb),
                    t: test.map(|t| t.t),
                    p_value: test.map(|t| t.p_value),
                    folds: recs.len(),
                    mean_samples: mean(&recs.iter().map(|r| r.n_samples as f64).collect::<Vec<_>>()),
                });
            }
        }
    }
    Ok(rows)
}

/// XNOR robustness of the surrogates of each model across all folds, on the
/// globally imputed dataset.
pub fn robustness(
    data: &LabeledDataset,
    records: &ExperimentRecords,
    cfg: &ExperimentConfig,
) -> Result<Vec<RobustnessRow>, HarnessError> {
    let global = globally_imputed(data, cfg)?;
    let schema = global.schema();
    let jobs: Vec<(usize, Model)> = cfg
        .leaf_budgets
        .iter()
        .flat_map(|&b| [(b, Model::DdMl), (b, Model::KbMl)])
        .collect();
    jobs.par_iter()
        .map(|&(budget, model)| {
            let sets: Vec<&RuleSet> = records
                .folds
                .iter()
                .filter_map(|f| f.surrogate(model, budget))
                .map(|s| &s.rules)
                .collect();
            let dmap = collect_thresholds(&sets, schema)?;
            let les = sets
                .iter()
                .map(|rs| assign_local_explanations(rs, &global, &dmap))
                .collect::<Result<Vec<_>, _>>()?;
            let refs: Vec<_> = les.iter().collect();
            let common = restrict_to_common(&refs);
            let m = robustness_matrix(SimilarityKind::Xnor, &refs, &common)?;
            Ok(RobustnessRow {
                budget,
                model,
                robustness: m.off_diagonal_mean(),
                full_mean: m.full_mean(),
                instances: m.size,
                samples: common.len(),
            })
        })
        .collect()
}

/// Runs the requested stages and assembles the report.
pub fn run_experiment(
    data: &LabeledDataset,
    kb: &RuleSet,
    cfg: &ExperimentConfig,
    stages: Stages,
) -> Result<Report, HarnessError> {
    let records = run_folds(data, kb, cfg, stages)?;
    summarize(data, &records, cfg, stages)
}

pub fn summarize(
    data: &LabeledDataset,
    records: &ExperimentRecords,
    cfg: &ExperimentConfig,
    stages: Stages,
) -> Result<Report, HarnessError> {
    Ok(Report {
        config: cfg.clone(),
        folds: records.folds.len(),
        test_train_ratio: records.test_train_ratio,
        table3: stages.table3.then(|| table3(records, cfg)).transpose()?,
        alpha_sweep: stages.sweep.then(|| alpha_sweep(records, cfg)),
        fidelity: stages.fidelity.then(|| fidelity_summary(records, cfg)),
        similarity: stages.similarity.then(|| similarity_summary(records, cfg)).transpose()?,
        robustness: stages.robustness.then(|| robustness(data, records, cfg)).transpose()?,
    })
}
