//! Synthetic benchmark generators for feature-selection experiments.
//!
//! All generators draw from a seeded ChaCha8 stream, so identical seeds
//! yield byte-identical datasets. The simulated benchmark uses 50 discrete
//! features where feature j (1-based) is uniform on {0..j} and five
//! relevant features are sampled from the first ten; the ChIP-style
//! pipeline min-max scales a user-supplied table, plants five relevant
//! columns, and permutes the remaining ones to break their dependencies
//! before labels are synthesized.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Matrix};
use crate::error::{Error, Result};
use crate::gbt::Loss;
use crate::scalar::Scalar;

/// Number of features in the simulated benchmark.
pub const SIMULATED_FEATURES: usize = 50;
/// Size of the planted relevant set.
pub const RELEVANT_COUNT: usize = 5;
/// The relevant set is sampled from this many leading features.
pub const SIMULATED_CANDIDATES: usize = 10;

/// Prediction task; decides the label rule and the training loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regression,
    Classification,
}

impl Task {
    pub fn loss(self) -> Loss {
        match self {
            Task::Regression => Loss::SquaredError,
            Task::Classification => Loss::Logistic,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Task::Regression => "regression",
            Task::Classification => "classification",
        }
    }
}

/// Centered univariate component for additive ground truths; every variant
/// has mean zero under a uniform unit-interval input (the analytic mean is
/// subtracted).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AdditiveComponent {
    Zero,
    Linear { slope: f64 },
    Quadratic { scale: f64 },
    Sine { freq: f64, amp: f64 },
}

impl AdditiveComponent {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            AdditiveComponent::Zero => 0.0,
            AdditiveComponent::Linear { slope } => slope * (x - 0.5),
            AdditiveComponent::Quadratic { scale } => scale * (x * x - 1.0 / 3.0),
            AdditiveComponent::Sine { freq, amp } => {
                let w = 2.0 * std::f64::consts::PI * freq;
                amp * ((w * x).sin() - (1.0 - w.cos()) / w)
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, AdditiveComponent::Zero)
    }
}

/// What the generator planted: the relevant set, the task, and the noise
/// scale actually used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// 0-based indices of the relevant features, ascending.
    pub relevant: Vec<usize>,
    pub task: Task,
    /// Standard deviation of the additive label noise (0 for
    /// classification, where labels are Bernoulli draws).
    pub noise_sd: f64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub additive: Option<Vec<AdditiveComponent>>,
}

impl GroundTruth {
    /// Relevance labels over `p` features: true for planted features.
    pub fn relevance_mask(&self, p: usize) -> Vec<bool> {
        let mut mask = vec![false; p];
        for &k in &self.relevant {
            mask[k] = true;
        }
        mask
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_reader(BufReader::new(file))?)
    }
}

/// `(1/5) Σ_{j in S} x_j / j` with 1-based feature numbers.
pub(crate) fn simulated_signal(row: &[f64], relevant: &[usize]) -> f64 {
    relevant
        .iter()
        .map(|&k| row[k] / (k + 1) as f64)
        .sum::<f64>()
        / RELEVANT_COUNT as f64
}

/// Analytic variance of the simulated signal: feature j is uniform on
/// {0..j}, so Var(x_j / j) = (j + 2) / (12 j).
pub(crate) fn simulated_signal_variance(relevant: &[usize]) -> f64 {
    let sum: f64 = relevant
        .iter()
        .map(|&k| {
            let j = (k + 1) as f64;
            (j + 2.0) / (12.0 * j)
        })
        .sum();
    sum / (RELEVANT_COUNT * RELEVANT_COUNT) as f64
}

fn sorted_sample(rng: &mut ChaCha8Rng, pool: usize, amount: usize) -> Vec<usize> {
    let mut picks = rand::seq::index::sample(rng, pool, amount).into_vec();
    picks.sort_unstable();
    picks
}

fn to_dataset<S: Scalar>(rows: Vec<Vec<f64>>, labels: Vec<f64>) -> Result<Dataset<S>> {
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    let mut data = Vec::with_capacity(n * p);
    for row in rows {
        data.extend(row.into_iter().map(|v| S::from(v).expect("finite value")));
    }
    let labels = labels
        .into_iter()
        .map(|v| S::from(v).expect("finite label"))
        .collect();
    Dataset::new(Matrix::from_vec(n, p, data)?, labels)
}

fn draw_labels(
    rng: &mut ChaCha8Rng,
    signals: &[f64],
    task: Task,
    noise_sd: f64,
) -> Vec<f64> {
    signals
        .iter()
        .map(|&s| match task {
            Task::Regression => {
                let z: f64 = StandardNormal.sample(rng);
                s + noise_sd * z
            }
            Task::Classification => {
                let p = crate::scalar::sigmoid(2.0 * s - 1.0);
                f64::from(rng.random::<f64>() < p)
            }
        })
        .collect()
}

/// Simulated benchmark: `n_train + n_valid` rows drawn i.i.d. from one
/// stream (the first `n_train` become the training split), 50 discrete
/// features, 5 relevant features sampled from the first 10. Regression
/// labels add Gaussian noise with variance 100x the analytic signal
/// variance; classification labels are Bernoulli with
/// `sigmoid((2/5) Σ x_j/j - 1)`.
pub fn gen_simulated<S: Scalar>(
    n_train: usize,
    n_valid: usize,
    task: Task,
    seed: u64,
) -> Result<(Dataset<S>, Dataset<S>, GroundTruth)> {
    if n_train < 1 || n_valid < 1 {
        return Err(Error::Config(
            "n_train and n_valid must both be >= 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let relevant = sorted_sample(&mut rng, SIMULATED_CANDIDATES, RELEVANT_COUNT);

    let n = n_train + n_valid;
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (1..=SIMULATED_FEATURES)
            .map(|j| rng.random_range(0..=j) as f64)
            .collect();
        rows.push(row);
    }
    let signals: Vec<f64> = rows.iter().map(|r| simulated_signal(r, &relevant)).collect();
    let noise_sd = match task {
        Task::Regression => (100.0 * simulated_signal_variance(&relevant)).sqrt(),
        Task::Classification => 0.0,
    };
    let labels = draw_labels(&mut rng, &signals, task, noise_sd);

    let all = to_dataset::<S>(rows, labels)?;
    let (train, valid) = all.split_at(n_train)?;
    Ok((
        train,
        valid,
        GroundTruth {
            relevant,
            task,
            noise_sd,
            seed,
            additive: None,
        },
    ))
}

/// ChIP-style preprocessing over any user-supplied table: min-max scale
/// every feature to the unit interval (constant columns become all-zeros and are
/// reported), sample 5 relevant features, independently permute every
/// other column across the full table, synthesize labels, and split the
/// first `n_train` rows off as the training set.
///
pub struct ChipOutput<S> {
    pub train: Dataset<S>,
    pub valid: Dataset<S>,
    pub truth: GroundTruth,
    /// Columns that were constant before scaling (now all-zero).
    pub constant_columns: Vec<usize>,
}

pub fn chip_pipeline<S: Scalar>(
    raw: &Dataset<S>,
    task: Task,
    n_train: usize,
    seed: u64,
) -> Result<ChipOutput<S>> {
    let n = raw.n_rows();
    let p = raw.n_features();
    if p < 6 {
        return Err(Error::InvalidInput(format!(
            "chip pipeline needs at least 6 feature columns, got {p}"
        )));
    }
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "chip pipeline needs at least 2 rows, got {n}"
        )));
    }
    if n_train < 1 || n_train >= n {
        return Err(Error::Config(format!(
            "n_train must be in [1, {}), got {n_train}",
            n
        )));
    }

    // Scale in f64 regardless of the input scalar type.
    let mut columns: Vec<Vec<f64>> = (0..p)
        .map(|k| {
            raw.features()
                .column(k)
                .iter()
                .map(|v| v.to_f64().expect("finite feature"))
                .collect()
        })
        .collect();
    let mut constant_columns = Vec::new();
    for (k, col) in columns.iter_mut().enumerate() {
        let min = col.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if max > min {
            for v in col.iter_mut() {
                *v = (*v - min) / (max - min);
            }
        } else {
            col.fill(0.0);
            constant_columns.push(k);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let relevant = sorted_sample(&mut rng, p, RELEVANT_COUNT);
    for (k, col) in columns.iter_mut().enumerate() {
        if !relevant.contains(&k) {
            col.shuffle(&mut rng);
        }
    }

    let signals: Vec<f64> = (0..n)
        .map(|i| {
            relevant.iter().map(|&k| columns[k][i]).sum::<f64>() / RELEVANT_COUNT as f64
        })
        .collect();
    let noise_sd = match task {
        Task::Regression => {
            let mean = signals.iter().sum::<f64>() / n as f64;
            let var = signals.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n as f64;
            (100.0 * var).sqrt()
        }
        Task::Classification => 0.0,
    };
    let labels = draw_labels(&mut rng, &signals, task, noise_sd);

    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| columns.iter().map(|col| col[i]).collect())
        .collect();
    let all = to_dataset::<S>(rows, labels)?;
    let all = Dataset::with_names(
        all.features().clone(),
        all.labels().to_vec(),
        raw.feature_names().map(<[String]>::to_vec),
    )?;
    let (train, valid) = all.split_at(n_train)?;
    Ok(ChipOutput {
        train,
        valid,
        truth: GroundTruth {
            relevant,
            task,
            noise_sd,
            seed,
            additive: None,
        },
        constant_columns,
    })
}

/// Independent uniform [0,1) features with an additive ground truth
/// `y = Σ h_k(x_k)` plus optional Gaussian noise.
pub fn gen_additive<S: Scalar>(
    n: usize,
    components: &[AdditiveComponent],
    noise_sd: f64,
    seed: u64,
) -> Result<(Dataset<S>, GroundTruth)> {
    if n < 1 || components.is_empty() {
        return Err(Error::Config(
            "need at least one row and one component".into(),
        ));
    }
    if noise_sd < 0.0 {
        return Err(Error::Config("noise_sd must be >= 0".into()));
    }
    let p = components.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    for _ in 0..n {
        rows.push((0..p).map(|_| rng.random::<f64>()).collect());
    }
    let labels: Vec<f64> = rows
        .iter()
        .map(|row| {
            let signal: f64 = components
                .iter()
                .zip(row)
                .map(|(h, &x)| h.eval(x))
                .sum();
            if noise_sd > 0.0 {
                let z: f64 = StandardNormal.sample(&mut rng);
                signal + noise_sd * z
            } else {
                signal
            }
        })
        .collect();
    let relevant: Vec<usize> = components
        .iter()
        .enumerate()
        .filter(|(_, h)| !h.is_zero())
        .map(|(k, _)| k)
        .collect();
    let dataset = to_dataset::<S>(rows, labels)?;
    Ok((
        dataset,
        GroundTruth {
            relevant,
            task: Task::Regression,
            noise_sd,
            seed,
            additive: Some(components.to_vec()),
        },
    ))
}
