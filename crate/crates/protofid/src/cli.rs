//! Command-line front end.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _};
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use protofid_core::dataset::{FeatureSchema, PIMA_LABEL};
use protofid_core::neural::{self, Optimizer};
use protofid_core::similarity::SimilarityKind;
use protofid_core::{LabeledDataset, RuleSet};
use serde::Serialize;

use crate::harness::{self, ExperimentConfig, Stages, SubsetMode, SurrogateFit};
use crate::io;
use crate::report::write_bundle;

#[derive(Debug, Parser)]
#[command(name = "protofid", version, about = "Protocol-relative evaluation of knowledge-weighted classifiers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load and validate the dataset and rule file, print a summary.
    Ingest(Common),
    /// Train one network on the whole dataset and write its checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
        /// Knowledge weight of the loss (0 trains the data-driven model).
        #[arg(long, default_value_t = 1.5)]
        alpha: f64,
    },
    /// Cross-validated comparison of the data-driven and knowledge-weighted models.
    Metrics {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1.5)]
        alpha: f64,
    },
    /// Surrogate extraction and fidelity.
    Extract {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        budget: Budget,
    },
    /// Explanation similarity of both surrogates to the protocol.
    Similarity {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        budget: Budget,
        /// Restrict to one similarity kind.
        #[arg(long)]
        metric: Option<SimilarityKind>,
        #[arg(long, value_enum, default_value_t = SubsetArg::Both)]
        subset: SubsetArg,
    },
    /// Pairwise XNOR similarity across fold instances of each surrogate.
    Robustness {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        budget: Budget,
    },
    /// Metrics for every alpha of the grid.
    SweepAlpha(Common),
    /// Full experiment; writes the report bundle into --out (default results/).
    RunAll(Common),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SubsetArg {
    Predicted,
    Correct,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OptimizerArg {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FitArg {
    Train,
    Test,
}

#[derive(Debug, Clone, Args)]
pub struct Budget {
    /// Use this single leaf budget instead of 2 to 12.
    #[arg(long)]
    pub max_rules: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    #[arg(long, default_value = "data/pima.csv")]
    pub data: PathBuf,
    #[arg(long, default_value = "data/kb.rules")]
    pub rules: PathBuf,
    #[arg(long, default_value = PIMA_LABEL)]
    pub label: String,
    /// Overridden by the PF_SEED environment variable.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Output path; JSON goes to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, default_value_t = 25)]
    pub epochs: usize,
    #[arg(long, default_value_t = 20)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.05)]
    pub learning_rate: f64,
    #[arg(long, value_enum, default_value_t = OptimizerArg::Sgd)]
    pub optimizer: OptimizerArg,
    /// Widths of the two hidden layers.
    #[arg(long, value_delimiter = ',', default_values_t = [16, 8])]
    pub hidden: Vec<usize>,
    /// Fold whose network predictions the surrogate trees are fitted to.
    #[arg(long, value_enum, default_value_t = FitArg::Train)]
    pub surrogate_fit: FitArg,
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Ingest(c) | Command::SweepAlpha(c) | Command::RunAll(c) => c,
            Command::Train { common, .. }
            | Command::Metrics { common, .. }
            | Command::Extract { common, .. }
            | Command::Similarity { common, .. }
            | Command::Robustness { common, .. } => common,
        }
    }
}

/// Raised for problems the user can fix by changing the invocation.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(String);

fn seed_from_env(flag: u64) -> anyhow::Result<u64> {
    match std::env::var("PF_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| UsageError(format!("PF_SEED is not an unsigned integer: {v:?}")).into()),
        Err(_) => Ok(flag),
    }
}

impl Common {
    pub fn config(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig {
            repeats: self.repeats,
            k: self.folds,
            seed: seed_from_env(self.seed)?,
            ..ExperimentConfig::default()
        };
        cfg.network.epochs = self.epochs;
        cfg.network.batch_size = self.batch_size;
        cfg.network.learning_rate = self.learning_rate;
        let [h1, h2] = self.hidden[..] else {
            bail!(UsageError("--hidden takes two comma-separated widths".into()));
        };
        cfg.network.hidden_sizes = (h1, h2);
        cfg.network.optimizer = match self.optimizer {
            OptimizerArg::Sgd => Optimizer::Sgd,
            OptimizerArg::Adam => Optimizer::Adam,
        };
        cfg.surrogate_fit = match self.surrogate_fit {
            FitArg::Train => SurrogateFit::TrainFold,
            FitArg::Test => SurrogateFit::TestFold,
        };
        cfg.validate().map_err(|e| UsageError(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(&self) -> anyhow::Result<(LabeledDataset, RuleSet)> {
        let data = io::load_csv(&self.data, &FeatureSchema::pima(), &self.label)
            .with_context(|| format!("loading {}", self.data.display()))?;
        let kb = io::load_rules(&self.rules)?;
        Ok((data, kb))
    }
}

fn emit<T: Serialize>(out: Option<&Path>, value: &T) -> anyhow::Result<()> {
    let text = io::to_json(value)?;
    match out {
        Some(p) => io::write_text(p, &text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn with_budget(cfg: &mut ExperimentConfig, b: &Budget) -> anyhow::Result<()> {
    if let Some(n) = b.max_rules {
        if n == 0 {
            bail!(UsageError("--max-rules must be positive".into()));
        }
        cfg.leaf_budgets = vec![n];
    }
    Ok(())
}

#[derive(Serialize)]
struct IngestSummary {
    rows: usize,
    features: Vec<String>,
    class_counts: [usize; 2],
    zero_fraction: Vec<(String, f64)>,
    bounds_raw: Vec<(String, f64, f64)>,
    bounds_imputed: Vec<(String, f64, f64)>,
    rules: String,
    protocol_coverage: f64,
    protocol_accuracy: Option<f64>,
}

fn ingest(common: &Common, cfg: &ExperimentConfig) -> anyhow::Result<IngestSummary> {
    let (data, kb) = common.load()?;
    let missing: Vec<&str> = cfg.missing_features.iter().map(String::as_str).collect();
    let all: Vec<usize> = (0..data.n_rows()).collect();
    let imputed = data.impute_median(&missing, &all)?;
    let names = data.feature_names().to_vec();
    let bounds = |d: &LabeledDataset| {
        names
            .iter()
            .zip(d.bounds())
            .map(|(n, &(lo, hi))| (n.clone(), lo, hi))
            .collect()
    };
    let r = kb.protocol_vector(&imputed)?;
    let covered: Vec<usize> = (0..r.len()).filter(|&i| r[i].is_some()).collect();
    let correct = covered.iter().filter(|&&i| r[i] == Some(imputed.labels()[i])).count();
    let pos = data.labels().iter().filter(|&&y| y == 1).count();
    Ok(IngestSummary {
        rows: data.n_rows(),
        features: names.clone(),
        class_counts: [data.n_rows() - pos, pos],
        zero_fraction: missing
            .iter()
            .map(|&f| Ok((f.to_string(), data.zero_fraction(f)?)))
            .collect::<anyhow::Result<_>>()?,
        bounds_raw: bounds(&data),
        bounds_imputed: bounds(&imputed),
        rules: kb.to_string(),
        protocol_coverage: covered.len() as f64 / r.len() as f64,
        protocol_accuracy: (!covered.is_empty()).then(|| correct as f64 / covered.len() as f64),
    })
}

fn dispatch(cmd: &Command) -> anyhow::Result<()> {
    let common = cmd.common();
    let mut cfg = common.config()?;
    if let Some(n) = common.threads {
        // only the first call in a process can size the global pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let out = common.out.as_deref();
    match cmd {
        Command::Ingest(_) => emit(out, &ingest(common, &cfg)?),
        Command::Train { alpha, .. } => {
            let (data, kb) = common.load()?;
            let missing: Vec<&str> = cfg.missing_features.iter().map(String::as_str).collect();
            let all: Vec<usize> = (0..data.n_rows()).collect();
            let data = data.impute_median(&missing, &all)?;
            let r = kb.protocol_vector(&data)?;
            let net_cfg = neural::NetworkConfig {
                alpha: *alpha,
                seed: cfg.seed,
                ..cfg.network.clone()
            };
            net_cfg.validate().map_err(|e| UsageError(e.to_string()))?;
            let net = neural::train(&data, &all, &r, &net_cfg)?;
            emit(out, &net)
        }
        Command::Metrics { alpha, .. } => {
            let (data, kb) = common.load()?;
            cfg.kb_alpha = *alpha;
            let stages = Stages {
                table3: true,
                ..Stages::NONE
            };
            let records = harness::run_folds(&data, &kb, &cfg, stages)?;
            emit(out, &harness::table3(&records, &cfg)?)
        }
        Command::SweepAlpha(_) => {
            let (data, kb) = common.load()?;
            let stages = Stages {
                sweep: true,
                ..Stages::NONE
            };
            let records = harness::run_folds(&data, &kb, &cfg, stages)?;
            emit(out, &harness::alpha_sweep(&records, &cfg))
        }
        Command::Extract { budget, .. } => {
            let (data, kb) = common.load()?;
            with_budget(&mut cfg, budget)?;
            let stages = Stages {
                fidelity: true,
                ..Stages::NONE
            };
            let records = harness::run_folds(&data, &kb, &cfg, stages)?;
            emit(out, &harness::fidelity_summary(&records, &cfg))
        }
        Command::Similarity {
            budget, metric, subset, ..
        } => {
            let (data, kb) = common.load()?;
            with_budget(&mut cfg, budget)?;
            if let Some(kind) = metric {
                cfg.similarity_kinds = vec![*kind];
            }
            cfg.subset_modes = match subset {
                SubsetArg::Predicted => vec![SubsetMode::AllPredicted],
                SubsetArg::Correct => vec![SubsetMode::AllCorrect],
                SubsetArg::Both => vec![SubsetMode::AllPredicted, SubsetMode::AllCorrect],
            };
            let stages = Stages {
                similarity: true,
                ..Stages::NONE
            };
            let records = harness::run_folds(&data, &kb, &cfg, stages)?;
            emit(out, &harness::similarity_summary(&records, &cfg)?)
        }
        Command::Robustness { budget, .. } => {
            let (data, kb) = common.load()?;
            with_budget(&mut cfg, budget)?;
            let stages = Stages {
                robustness: true,
                ..Stages::NONE
            };
            let records = harness::run_folds(&data, &kb, &cfg, stages)?;
            emit(out, &harness::robustness(&data, &records, &cfg)?)
        }
        Command::RunAll(_) => {
            let (data, kb) = common.load()?;
            let report = harness::run_experiment(&data, &kb, &cfg, Stages::ALL)?;
            let dir = out.unwrap_or(Path::new("results"));
            write_bundle(dir, &report)?;
            eprintln!("report written to {}", dir.display());
            Ok(())
        }
    }
}

fn usage_for(args: &[OsString]) -> clap::builder::StyledStr {
    let mut cmd = Cli::command();
    cmd.build();
    let sub = args.get(1).and_then(|a| a.to_str()).map(str::to_string);
    match sub.and_then(|name| cmd.find_subcommand_mut(&name).map(|c| c.render_usage())) {
        Some(u) => u,
        None => cmd.render_usage(),
    }
}

/// Parses `args`, runs the command and returns the process exit code:
/// 0 on success, 1 for usage errors, 2 for failures while running.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            if !e.use_stderr() {
                return 0;
            }
            if !e.to_string().contains("Usage:") {
                eprintln!("\n{}", usage_for(&args));
            }
            return 1;
        }
    };
    match dispatch(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                1
            } else {
                2
            }
        }
    }
}
