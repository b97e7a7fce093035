//! Report tables and the on-disk report bundle.

use std::path::Path;

use protofid_core::similarity::SimilarityKind;
use serde::{Deserialize, Serialize};

use crate::harness::{ExperimentConfig, Model, SubsetMode};
use crate::io::{self, IoError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table3Row {
    pub metric: String,
    pub dd_ml: Option<f64>,
    pub kb_ml: Option<f64>,
    /// Corrected paired t statistic of KB-ML minus DD-ML.
    pub t: Option<f64>,
    pub p_value: Option<f64>,
    /// Folds on which the metric was defined for both models.
    pub folds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub metric: String,
    pub mean: f64,
    /// Half-width of the 95% interval.
    pub ci: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityRow {
    pub budget: usize,
    pub model: Model,
    pub accuracy: f64,
    pub f1: Option<f64>,
    pub f1_macro: Option<f64>,
    pub train_accuracy: f64,
    pub train_f1: Option<f64>,
    pub train_f1_macro: Option<f64>,
    pub mean_rules: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityRow {
    pub subset: SubsetMode,
    pub budget: usize,
    pub kind: SimilarityKind,
    /// Similarity of KB with DD-ML_X.
    pub dd_ml: f64,
    /// Similarity of KB with KB-ML_X.
    pub kb_ml: f64,
    pub t: Option<f64>,
    pub p_value: Option<f64>,
    pub folds: usize,
    pub mean_samples: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub budget: usize,
    pub model: Model,
    /// Mean of the off-diagonal entries of the instance similarity matrix.
    pub robustness: f64,
    /// Mean over all entries, diagonal included.
    pub full_mean: f64,
    pub instances: usize,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config: ExperimentConfig,
    pub folds: usize,
    pub test_train_ratio: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub table3: Option<Vec<Table3Row>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub alpha_sweep: Option<Vec<SweepRow>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fidelity: Option<Vec<FidelityRow>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub similarity: Option<Vec<SimilarityRow>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub robustness: Option<Vec<RobustnessRow>>,
}

impl Report {
    pub fn table3_row(&self, metric: &str) -> Option<&Table3Row> {
        self.table3.as_ref()?.iter().find(|r| r.metric == metric)
    }

    pub fn sweep_mean(&self, alpha: f64, metric: &str) -> Option<f64> {
        self.alpha_sweep
            .as_ref()?
            .iter()
            .find(|r| r.alpha == alpha && r.metric == metric)
            .map(|r| r.mean)
    }

    pub fn similarity_row(&self, subset: SubsetMode, budget: usize, kind: SimilarityKind) -> Option<&SimilarityRow> {
        self.similarity
            .as_ref()?
            .iter()
            .find(|r| r.subset == subset && r.budget == budget && r.kind == kind)
    }

    pub fn robustness_of(&self, budget: usize, model: Model) -> Option<&RobustnessRow> {
        self.robustness
            .as_ref()?
            .iter()
            .find(|r| r.budget == budget && r.model == model)
    }
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Writes `report.json` and one CSV per computed table into `dir`.
pub fn write_bundle(dir: &Path, report: &Report) -> Result<(), IoError> {
    io::write_json(&dir.join("report.json"), report)?;
    if let Some(rows) = &report.table3 {
        let body: Vec<Vec<String>> = rows
            .iter()
            .map(|r| vec![r.metric.clone(), opt(r.dd_ml), opt(r.kb_ml), opt(r.p_value)])
            .collect();
        io::write_csv(&dir.join("table3.csv"), &["metric", "dd_ml", "kb_ml", "p_value"], &body)?;
    }
    if let Some(rows) = &report.alpha_sweep {
        let body: Vec<Vec<String>> = rows
            .iter()
            .map(|r| vec![num(r.alpha), r.metric.clone(), num(r.mean), num(r.ci)])
            .collect();
        io::write_csv(&dir.join("fig2a.csv"), &["alpha", "metric", "mean", "ci"], &body)?;
    }
    if let Some(rows) = &report.fidelity {
        let body: Vec<Vec<String>> = rows
            .iter()
            .map(|r| {
                vec![
                    r.budget.to_string(),
                    r.model.as_str().to_string(),
                    num(r.accuracy),
                    opt(r.f1),
                    opt(r.f1_macro),
                    num(r.train_accuracy),
                    opt(r.train_f1),
                    opt(r.train_f1_macro),
                ]
            })
            .collect();
        io::write_csv(&dir.join("fig3a.csv"), &[
                "budget",
                "model",
                "accuracy",
                "f1",
                "f1_macro",
                "train_accuracy",
                "train_f1",
                "train_f1_macro",
            ], &body)?;
    }
    if let Some(rows) = &report.similarity {
        for (mode, file) in [
            (SubsetMode::AllPredicted, "fig3b.csv"),
            (SubsetMode::AllCorrect, "fig3b_correct.csv"),
        ] {
            let mut body: Vec<Vec<String>> = Vec::new();
            for r in rows.iter().filter(|r| r.subset == mode) {
                for (model, v) in [(Model::DdMl, r.dd_ml), (Model::KbMl, r.kb_ml)] {
                    body.push(vec![
                        r.budget.to_string(),
                        r.kind.to_string(),
                        model.as_str().to_string(),
                        num(v),
                        opt(r.p_value),
                    ]);
                }
            }
            if !body.is_empty() {
                io::write_csv(&dir.join(file), &["budget", "kind", "model", "mean", "significance"], &body)?;
            }
        }
    }
    if let Some(rows) = &report.robustness {
        let body: Vec<Vec<String>> = rows
            .iter()
            .map(|r| vec![r.budget.to_string(), r.model.as_str().to_string(), num(r.robustness)])
            .collect();
        io::write_csv(&dir.join("fig3c.csv"), &["budget", "model", "robustness"], &body)?;
    }
    Ok(())
}
