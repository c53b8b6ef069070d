//! Second-order gradient boosted regression trees with ℓ2 leaf
//! regularization.
//!
//! Training is exact greedy: every boosting round grows one tree by scanning
//! all features and all boundaries between consecutive distinct values.
//! Leaf weights and cached node values follow the regularized second-order
//! objective, `-eta * ΣG / (ΣH + λ)`. The raw ensemble prediction starts at
//! a base score of zero for both losses; logistic consumers apply the
//! sigmoid themselves.

mod tree;

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Matrix};
use crate::error::{Error, Result};
use crate::scalar::{cast, sigmoid, Scalar};

pub use tree::{grow_tree, split_gain, NodeKind, Tree, TreeNode, GAIN_EPSILON};

/// Training loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    SquaredError,
    Logistic,
}

/// Per-sample gradient and hessian of `loss` at the raw score `raw`.
///
/// Squared error returns `(raw - y, 1)`. Logistic returns
/// `(p - y, p(1 - p))` with `p = sigmoid(raw)` clamped away from 0 and 1 so
/// the hessian stays positive.
pub fn grad_hess<S: Scalar>(loss: Loss, y: S, raw: S) -> Result<(S, S)> {
    if !y.is_finite() || !raw.is_finite() {
        return Err(Error::InvalidInput(
            "gradient requires finite label and raw score".into(),
        ));
    }
    match loss {
        Loss::SquaredError => Ok((raw - y, S::one())),
        Loss::Logistic => {
            if y != S::zero() && y != S::one() {
                return Err(Error::InvalidInput(format!(
                    "logistic loss requires labels in {{0,1}}, got {y}"
                )));
            }
            let eps = S::epsilon();
            let p = sigmoid(raw).max(eps).min(S::one() - eps);
            Ok((p - y, p * (S::one() - p)))
        }
    }
}

/// Negative gradient, the boosting residual: `y - raw` for squared error,
/// `y - sigmoid(raw)` for logistic.
pub fn residual<S: Scalar>(loss: Loss, y: S, raw: S) -> Result<S> {
    let (g, _) = grad_hess(loss, y, raw)?;
    Ok(-g)
}

/// Training hyperparameters. Defaults are the standard configuration:
/// eta 1e-2, max_depth 4, min_child_weight 1, num_boost_round 400,
/// reg_lambda 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig<S> {
    pub eta: S,
    pub reg_lambda: S,
    pub max_depth: usize,
    pub min_child_weight: S,
    pub num_boost_round: usize,
    pub loss: Loss,
    pub seed: u64,
}

impl<S: Scalar> Default for TrainConfig<S> {
    fn default() -> Self {
        TrainConfig {
            eta: cast(1e-2),
            reg_lambda: S::one(),
            max_depth: 4,
            min_child_weight: S::one(),
            num_boost_round: 400,
            loss: Loss::SquaredError,
            seed: 0,
        }
    }
}

impl<S: Scalar> TrainConfig<S> {
    pub fn validate(&self) -> Result<()> {
        if !self.eta.is_finite() || self.eta <= S::zero() {
            return Err(Error::Config(format!("eta must be > 0, got {}", self.eta)));
        }
        if !self.reg_lambda.is_finite() || self.reg_lambda < S::zero() {
            return Err(Error::Config(format!(
                "reg_lambda must be >= 0, got {}",
                self.reg_lambda
            )));
        }
        if self.max_depth < 1 {
            return Err(Error::Config("max_depth must be >= 1".into()));
        }
        if !self.min_child_weight.is_finite() || self.min_child_weight < S::zero() {
            return Err(Error::Config(format!(
                "min_child_weight must be >= 0, got {}",
                self.min_child_weight
            )));
        }
        if self.num_boost_round < 1 {
            return Err(Error::Config("num_boost_round must be >= 1".into()));
        }
        Ok(())
    }
}

/// A fitted ensemble: ordered trees, the configuration that produced them,
/// and the training dimensions (kept so attribution calls can check they
/// are handed the right dataset).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GBTModel<S> {
    pub config: TrainConfig<S>,
    pub base_score: S,
    pub n_train_rows: usize,
    pub n_features: usize,
    pub feature_names: Option<Vec<String>>,
    pub trees: Vec<Tree<S>>,
}

impl<S: Scalar> GBTModel<S> {
    /// Train an ensemble of `config.num_boost_round` trees. Deterministic
    /// given `(train, config)`.
    pub fn fit(train: &Dataset<S>, config: TrainConfig<S>) -> Result<Self> {
        config.validate()?;
        if config.loss == Loss::Logistic && !train.labels_are_binary() {
            return Err(Error::InvalidInput(
                "logistic loss requires labels in {0,1}".into(),
            ));
        }
        let n = train.n_rows();
        let presorted = tree::presort_features(train.features());
        let mut raw = vec![S::zero(); n];
        let mut grad = vec![S::zero(); n];
        let mut hess = vec![S::zero(); n];
        let labels = train.labels();

        let mut trees = Vec::with_capacity(config.num_boost_round);
        for _ in 0..config.num_boost_round {
            for i in 0..n {
                let (g, h) = grad_hess(config.loss, labels[i], raw[i])?;
                grad[i] = g;
                hess[i] = h;
            }
            let tree = tree::grow_tree_presorted(train, &grad, &hess, &config, &presorted)?;
            for (i, r) in raw.iter_mut().enumerate() {
                *r = *r + tree.predict_row(train.features().row(i));
            }
            trees.push(tree);
        }
        Ok(GBTModel {
            config,
            base_score: S::zero(),
            n_train_rows: n,
            n_features: train.n_features(),
            feature_names: train.feature_names().map(<[String]>::to_vec),
            trees,
        })
    }

    pub fn num_trees(&self) -> usize {
        self.trees.len()
    }

    /// Raw scores of the first `upto_m` trees plus the base score;
    /// `upto_m = 0` returns the base score everywhere.
    pub fn predict(&self, x: &Matrix<S>, upto_m: usize) -> Result<Vec<S>> {
        if x.n_cols() != self.n_features {
            return Err(Error::Shape(format!(
                "model expects {} features, data has {}",
                self.n_features,
                x.n_cols()
            )));
        }
        if upto_m > self.num_trees() {
            return Err(Error::InvalidInput(format!(
                "upto_m {} exceeds tree count {}",
                upto_m,
                self.num_trees()
            )));
        }
        let mut out = vec![self.base_score; x.n_rows()];
        for tree in &self.trees[..upto_m] {
            for (i, o) in out.iter_mut().enumerate() {
                *o = *o + tree.predict_row(x.row(i));
            }
        }
        Ok(out)
    }

    /// Raw scores of the full ensemble.
    pub fn predict_full(&self, x: &Matrix<S>) -> Result<Vec<S>> {
        self.predict(x, self.num_trees())
    }

    /// Replays the boosting sequence on `x`: for each round m, calls
    /// `visit(m, raw_before_tree_m)` and then adds tree m's predictions.
    /// The raw scores seen by `visit` are bit-identical to the training-time
    /// `f_[m-1]` when `x` is the training matrix.
    pub fn for_each_round<F: FnMut(usize, &[S])>(&self, x: &Matrix<S>, mut visit: F) -> Result<()> {
        if x.n_cols() != self.n_features {
            return Err(Error::Shape(format!(
                "model expects {} features, data has {}",
                self.n_features,
                x.n_cols()
            )));
        }
        let mut raw = vec![self.base_score; x.n_rows()];
        for (m, tree) in self.trees.iter().enumerate() {
            visit(m, &raw);
            for (i, r) in raw.iter_mut().enumerate() {
                *r = *r + tree.predict_row(x.row(i));
            }
        }
        Ok(())
    }

    /// Gains accumulated at split time, one row per tree.
    pub fn per_tree_total_gain(&self) -> Matrix<S> {
        let mut m = Matrix::zeros(self.num_trees(), self.n_features);
        for (i, tree) in self.trees.iter().enumerate() {
            for (k, &g) in tree.total_gain.iter().enumerate() {
                m.set(i, k, g);
            }
        }
        m
    }

    /// Name of feature `k` as recorded at fit time.
    pub fn feature_name(&self, k: usize) -> String {
        match &self.feature_names {
            Some(names) => names[k].clone(),
            None => crate::data::default_feature_name(k),
        }
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
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

    /// Cheap stable identifier for report rows.
    pub fn fingerprint(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut mix = |v: u64| {
            h ^= v;
            h = h.wrapping_mul(0x1000_0000_01b3);
        };
        mix(self.n_train_rows as u64);
        mix(self.n_features as u64);
        mix(self.num_trees() as u64);
        mix(self.config.seed);
        for tree in &self.trees {
            mix(tree.nodes.len() as u64);
            mix(tree.root().p_hat.to_f64().unwrap_or(0.0).to_bits());
            let gain_sum: f64 = tree
                .total_gain
                .iter()
                .map(|g| g.to_f64().unwrap_or(0.0))
                .sum();
            mix(gain_sum.to_bits());
        }
        format!("{h:016x}")
    }
}
