//! Replicated experiment runner: one-parameter hyperparameter sweeps,
//! per-replication data generation and fitting, GFA evaluation on train and
//! valid domains, and aggregation into report rows.

mod report;

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attribution::identity_max_diff;
use crate::data::Dataset;
use crate::datagen::{chip_pipeline, gen_additive, gen_simulated, AdditiveComponent, GroundTruth, Task};
use crate::error::{Error, Result};
use crate::gfa::{
    abs_gfa, forest_inner, permutation_importance, tree_inner, Domain, Family, GFAResult,
    IfaChoice,
};
use crate::metrics::{auc, normalize_l2, risk};
use crate::{GBTModel, TrainConfig};

pub use report::{emit_report, emit_series, ExperimentReport, ReportFormat, ReportRow};

/// Stable seed derivation for partial re-runs: mixes the base seed, the
/// replication index, and the sweep value index through a splitmix64
/// finalizer.
pub fn derive_seed(base_seed: u64, replication: u64, sweep_index: u64) -> u64 {
    let mut z = base_seed
        .wrapping_add(replication.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(sweep_index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Where the data for each replication comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    /// The 50-feature discrete benchmark.
    Simulated,
    /// ChIP-style preprocessing over a user-supplied CSV. When
    /// `label_column` is given that column is excluded from the features.
    Chip {
        path: PathBuf,
        #[serde(default)]
        label_column: Option<String>,
    },
    /// Additive ground truth with independent uniform features.
    Additive {
        components: Vec<AdditiveComponent>,
        #[serde(default)]
        noise_sd: f64,
    },
}

impl DatasetSpec {
    pub fn label(&self) -> String {
        match self {
            DatasetSpec::Simulated => "simulated".into(),
            DatasetSpec::Chip { path, .. } => format!("chip:{}", path.display()),
            DatasetSpec::Additive { .. } => "additive".into(),
        }
    }
}

/// The hyperparameter a sweep varies; everything else stays at the
/// standard value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Eta,
    MaxDepth,
    MinChildWeight,
    NumBoostRound,
    RegLambda,
}

impl SweepParam {
    pub fn label(self) -> &'static str {
        match self {
            SweepParam::Eta => "eta",
            SweepParam::MaxDepth => "max_depth",
            SweepParam::MinChildWeight => "min_child_weight",
            SweepParam::NumBoostRound => "num_boost_round",
            SweepParam::RegLambda => "reg_lambda",
        }
    }
}

/// One hyperparameter name plus the values to sweep over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub name: SweepParam,
    pub values: Vec<f64>,
}

/// One GFA method to evaluate: a family, the IFA it consumes (`none` for
/// permutation), and which domain's dataset to evaluate on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub family: Family,
    #[serde(default)]
    pub ifa: IfaChoice,
    pub domain: Domain,
}

impl MethodSpec {
    fn validate(&self) -> Result<()> {
        match (self.family, self.ifa) {
            (Family::Permutation, IfaChoice::None) => Ok(()),
            (Family::Permutation, _) => Err(Error::Config(
                "permutation importance takes no IFA; use ifa = none".into(),
            )),
            (_, IfaChoice::None) => Err(Error::Config(format!(
                "{} requires an IFA (predecomp or saabas_tilde)",
                self.family.label()
            ))),
            _ => Ok(()),
        }
    }
}

fn default_replications() -> usize {
    20
}
fn default_split() -> usize {
    1000
}
fn default_permutation_repeats() -> usize {
    1
}

/// Full description of a replicated sweep experiment. The JSON form uses
/// the hyperparameter names `eta`, `max_depth`, `min_child_weight`,
/// `num_boost_round`, `reg_lambda` for the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub task: Task,
    #[serde(default = "default_replications")]
    pub replications: usize,
    pub sweep: Sweep,
    pub methods: Vec<MethodSpec>,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_split")]
    pub n_train: usize,
    /// Validation rows for generated datasets; chip tables use whatever
    /// remains after the first `n_train` rows instead.
    #[serde(default = "default_split")]
    pub n_valid: usize,
    #[serde(default = "default_permutation_repeats")]
    pub permutation_repeats: usize,
}

impl ExperimentConfig {
    pub fn load_json(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: ExperimentConfig = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications < 1 {
            return Err(Error::Config("replications must be >= 1".into()));
        }
        if self.sweep.values.is_empty() {
            return Err(Error::Config("sweep.values must be non-empty".into()));
        }
        if self.n_train < 1 || self.n_valid < 1 {
            return Err(Error::Config("n_train and n_valid must be >= 1".into()));
        }
        if self.permutation_repeats < 1 {
            return Err(Error::Config("permutation_repeats must be >= 1".into()));
        }
        for m in &self.methods {
            m.validate()?;
        }
        for &v in &self.sweep.values {
            sweep_config(&TrainConfig::default(), self.sweep.name, v)?;
        }
        if let DatasetSpec::Additive { components, .. } = &self.dataset {
            if self.task != Task::Regression {
                return Err(Error::Config(
                    "additive datasets support regression only".into(),
                ));
            }
            if components.is_empty() {
                return Err(Error::Config("additive components must be non-empty".into()));
            }
        }
        Ok(())
    }
}

/// Standard configuration with one swept parameter overridden.
fn sweep_config(standard: &TrainConfig, param: SweepParam, value: f64) -> Result<TrainConfig> {
    let mut cfg = standard.clone();
    let as_count = |value: f64, name: &str| -> Result<usize> {
        if value.fract() != 0.0 || value < 1.0 {
            return Err(Error::Config(format!(
                "{name} must be a positive integer, got {value}"
            )));
        }
        Ok(value as usize)
    };
    match param {
        SweepParam::Eta => cfg.eta = value,
        SweepParam::MaxDepth => cfg.max_depth = as_count(value, "max_depth")?,
        SweepParam::MinChildWeight => cfg.min_child_weight = value,
        SweepParam::NumBoostRound => cfg.num_boost_round = as_count(value, "num_boost_round")?,
        SweepParam::RegLambda => cfg.reg_lambda = value,
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Per-method outcome of one replication.
#[derive(Debug, Clone)]
pub struct MethodOutcome {
    pub auc: f64,
    /// Mean ℓ2-normalized score over the noisy features.
    pub noisy_score_mean: f64,
    /// Mean ℓ2-normalized score over the relevant features.
    pub relevant_score_mean: f64,
}

/// Everything measured in one replication.
#[derive(Debug, Clone)]
pub struct ReplicationOutcome {
    pub methods: Vec<MethodOutcome>,
    pub risk: f64,
    pub identity_max_diff: f64,
}

/// Per-replication outcomes for one sweep value, in replication order.
#[derive(Debug, Clone)]
pub struct SweepDetail {
    pub sweep_value: f64,
    pub replications: Vec<ReplicationOutcome>,
}

struct ReplicationData {
    train: Dataset<f64>,
    valid: Dataset<f64>,
    truth: GroundTruth,
}

fn generate_data(
    config: &ExperimentConfig,
    chip_raw: Option<&Dataset<f64>>,
    seed: u64,
) -> Result<ReplicationData> {
    match &config.dataset {
        DatasetSpec::Simulated => {
            let (train, valid, truth) =
                gen_simulated(config.n_train, config.n_valid, config.task, seed)?;
            Ok(ReplicationData { train, valid, truth })
        }
        DatasetSpec::Chip { .. } => {
            let raw = chip_raw.expect("chip table loaded before replications");
            let out = chip_pipeline(raw, config.task, config.n_train, seed)?;
            Ok(ReplicationData {
                train: out.train,
                valid: out.valid,
                truth: out.truth,
            })
        }
        DatasetSpec::Additive {
            components,
            noise_sd,
        } => {
            let (all, truth) =
                gen_additive(config.n_train + config.n_valid, components, *noise_sd, seed)?;
            let (train, valid) = all.split_at(config.n_train)?;
            Ok(ReplicationData { train, valid, truth })
        }
    }
}

fn evaluate_method(
    model: &GBTModel,
    method: &MethodSpec,
    data: &ReplicationData,
    permutation_repeats: usize,
    seed: u64,
    method_index: usize,
) -> Result<MethodOutcome> {
    let ds = match method.domain {
        Domain::Train => &data.train,
        Domain::Valid => &data.valid,
    };
    let result: GFAResult<f64> = match method.family {
        Family::TreeInner => tree_inner(
            model,
            method.ifa.as_attr().expect("validated"),
            ds,
            method.domain,
        )?,
        Family::ForestInner => forest_inner(
            model,
            method.ifa.as_attr().expect("validated"),
            ds,
            method.domain,
        )?,
        Family::Abs => abs_gfa(
            model,
            method.ifa.as_attr().expect("validated"),
            ds,
            method.domain,
        )?,
        Family::Permutation => {
            let perm_seed = derive_seed(seed, method_index as u64, 0x7065_726d);
            permutation_importance(model, ds, method.domain, permutation_repeats, perm_seed)?
        }
    };
    let mask = data.truth.relevance_mask(model.n_features);
    let auc_value = auc(&result.scores, &mask)?;
    let normalized = normalize_l2(&result.scores)?;
    let (mut noisy_sum, mut noisy_n) = (0.0, 0usize);
    let (mut rel_sum, mut rel_n) = (0.0, 0usize);
    for (k, &v) in normalized.iter().enumerate() {
        if mask[k] {
            rel_sum += v;
            rel_n += 1;
        } else {
            noisy_sum += v;
            noisy_n += 1;
        }
    }
    Ok(MethodOutcome {
        auc: auc_value,
        noisy_score_mean: noisy_sum / noisy_n.max(1) as f64,
        relevant_score_mean: rel_sum / rel_n.max(1) as f64,
    })
}

fn run_replication(
    config: &ExperimentConfig,
    chip_raw: Option<&Dataset<f64>>,
    train_config: &TrainConfig,
    sweep_index: usize,
    replication: usize,
) -> Result<ReplicationOutcome> {
    let seed = derive_seed(config.base_seed, replication as u64, sweep_index as u64);
    let data = generate_data(config, chip_raw, seed)?;
    let mut cfg = train_config.clone();
    cfg.loss = config.task.loss();
    cfg.seed = seed;
    let model = GBTModel::fit(&data.train, cfg)?;

    let methods = config
        .methods
        .iter()
        .enumerate()
        .map(|(mi, m)| evaluate_method(&model, m, &data, config.permutation_repeats, seed, mi))
        .collect::<Result<Vec<_>>>()?;
    let risk_valid = risk(&model, &data.valid)?;
    let identity = identity_max_diff(&model, &data.train)?;
    Ok(ReplicationOutcome {
        methods,
        risk: risk_valid,
        identity_max_diff: identity,
    })
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let ss = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    (mean, (ss / (n - 1) as f64).sqrt())
}

fn aggregate_rows(
    config: &ExperimentConfig,
    sweep_value: f64,
    outcomes: &[ReplicationOutcome],
) -> Vec<ReportRow> {
    let risks: Vec<f64> = outcomes.iter().map(|o| o.risk).collect();
    let (risk_mean, risk_std) = mean_std(&risks);
    let identity_max = outcomes
        .iter()
        .map(|o| o.identity_max_diff)
        .fold(0.0, f64::max);
    config
        .methods
        .iter()
        .enumerate()
        .map(|(mi, method)| {
            let aucs: Vec<f64> = outcomes.iter().map(|o| o.methods[mi].auc).collect();
            let noisy: Vec<f64> = outcomes
                .iter()
                .map(|o| o.methods[mi].noisy_score_mean)
                .collect();
            let relevant: Vec<f64> = outcomes
                .iter()
                .map(|o| o.methods[mi].relevant_score_mean)
                .collect();
            let (auc_mean, auc_std) = mean_std(&aucs);
            let (noisy_mean, noisy_std) = mean_std(&noisy);
            let (relevant_mean, relevant_std) = mean_std(&relevant);
            ReportRow {
                dataset: config.dataset.label(),
                task: config.task,
                family: method.family,
                domain: method.domain,
                ifa: method.ifa,
                sweep_name: config.sweep.name,
                sweep_value,
                auc_mean,
                auc_std,
                risk_mean,
                risk_std,
                score_noisy_mean: noisy_mean,
                score_noisy_std: noisy_std,
                score_relevant_mean: relevant_mean,
                score_relevant_std: relevant_std,
                identity_max_diff: identity_max,
            }
        })
        .collect()
}

/// Run the experiment and also return the per-replication detail, one
/// entry per sweep value.
pub fn run_experiment_detailed(
    config: &ExperimentConfig,
) -> Result<(ExperimentReport, Vec<SweepDetail>)> {
    config.validate()?;
    let chip_raw = match &config.dataset {
        DatasetSpec::Chip { path, label_column } => Some(match label_column {
            Some(label) => {
                // The label column is excluded; the pipeline synthesizes
                // its own labels.
                Dataset::read_csv(path, label)?
            }
            None => Dataset::read_feature_csv(path)?,
        }),
        _ => None,
    };

    let standard = TrainConfig::default();
    let mut rows = Vec::new();
    let mut details = Vec::new();
    for (sweep_index, &sweep_value) in config.sweep.values.iter().enumerate() {
        let train_config = sweep_config(&standard, config.sweep.name, sweep_value)?;
        // Replications run in parallel; the collect restores replication
        // order, so aggregation is independent of execution order.
        let outcomes: Vec<ReplicationOutcome> = (0..config.replications)
            .into_par_iter()
            .map(|r| {
                run_replication(config, chip_raw.as_ref(), &train_config, sweep_index, r)
                    .map_err(|e| Error::Replication {
                        index: r,
                        source: Box::new(e),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.extend(aggregate_rows(config, sweep_value, &outcomes));
        details.push(SweepDetail {
            sweep_value,
            replications: outcomes,
        });
    }
    Ok((
        ExperimentReport {
            config: config.clone(),
            rows,
        },
        details,
    ))
}

/// Run the experiment: for every sweep value and replication, generate
/// data, fit, evaluate every requested GFA, and aggregate means and
/// unbiased standard deviations across replications.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    run_experiment_detailed(config).map(|(report, _)| report)
}
