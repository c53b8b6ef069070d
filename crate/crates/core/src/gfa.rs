//! Global feature attributions induced from an IFA, plus a permutation
//! importance baseline.
//!
//! TreeInner scores a feature by the per-tree inner product between its
//! individualized attribution and the boosting residuals, summed over
//! trees; on in-sample data with PreDecomp this reproduces the forest total
//! gain. ForestInner first aggregates the per-tree attributions and takes
//! one inner product with the labels. Abs is the conventional mean absolute
//! forest-level contribution. Evaluating on out-sample data is what
//! debiases the inner-product families; the caller picks the dataset, the
//! domain argument is carried as metadata only.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attribution::{visit_tree_contributions, IfaKind, NodeValueVariant};
use crate::data::{Dataset, Matrix};
use crate::error::{Error, Result};
use crate::gbt::{residual, GBTModel};
use crate::metrics::risk;
use crate::scalar::{cast_usize, Scalar};

/// GFA family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    TreeInner,
    ForestInner,
    Abs,
    Permutation,
}

/// Which dataset a score was evaluated on. Metadata only: callers pass
/// whichever dataset they choose.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Train,
    Valid,
}

/// IFA choice for a GFA method; `None` is reserved for permutation
/// importance, which consumes no IFA.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IfaChoice {
    Predecomp,
    SaabasTilde,
    #[default]
    None,
}

impl IfaChoice {
    pub fn as_attr(self) -> Option<IfaKind> {
        match self {
            IfaChoice::Predecomp => Some(IfaKind::Predecomp),
            IfaChoice::SaabasTilde => Some(IfaKind::SaabasTilde),
            IfaChoice::None => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            IfaChoice::Predecomp => "predecomp",
            IfaChoice::SaabasTilde => "saabas_tilde",
            IfaChoice::None => "none",
        }
    }
}

impl From<IfaKind> for IfaChoice {
    fn from(kind: IfaKind) -> Self {
        match kind {
            IfaKind::Predecomp => IfaChoice::Predecomp,
            IfaKind::SaabasTilde => IfaChoice::SaabasTilde,
        }
    }
}

impl Family {
    pub fn label(self) -> &'static str {
        match self {
            Family::TreeInner => "tree_inner",
            Family::ForestInner => "forest_inner",
            Family::Abs => "abs",
            Family::Permutation => "permutation",
        }
    }
}

impl Domain {
    pub fn label(self) -> &'static str {
        match self {
            Domain::Train => "train",
            Domain::Valid => "valid",
        }
    }
}

/// One score per feature plus the metadata identifying how it was computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GFAResult<S> {
    pub scores: Vec<S>,
    pub family: Family,
    pub ifa_kind: IfaChoice,
    pub domain: Domain,
    pub model_id: String,
}

impl<S: Scalar> GFAResult<S> {
    /// CSV with columns `(feature, score, family, ifa, domain)`.
    pub fn write_csv(&self, names: &[String], path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        writeln!(w, "feature,score,family,ifa,domain").map_err(|e| Error::io(path, e))?;
        for (k, &s) in self.scores.iter().enumerate() {
            writeln!(
                w,
                "{},{s},{},{},{}",
                names[k],
                self.family.label(),
                self.ifa_kind.label(),
                self.domain.label()
            )
            .map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }

    /// JSON mirror of the CSV with a metadata block.
    pub fn write_json(&self, names: &[String], path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let scores: Vec<serde_json::Value> = self
            .scores
            .iter()
            .enumerate()
            .map(|(k, s)| serde_json::json!({ "feature": names[k], "score": s }))
            .collect();
        let doc = serde_json::json!({
            "metadata": {
                "family": self.family.label(),
                "ifa": self.ifa_kind.label(),
                "domain": self.domain.label(),
                "model_id": self.model_id,
            },
            "scores": scores,
        });
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(BufWriter::new(file), &doc)?;
        Ok(())
    }
}

fn cached_values<S: Scalar>(model: &GBTModel<S>, m: usize, kind: IfaKind, out: &mut Vec<S>) {
    out.clear();
    out.extend(model.trees[m].nodes.iter().map(|n| match kind.variant() {
        NodeValueVariant::Hat => n.p_hat,
        NodeValueVariant::Tilde => n.p_tilde,
    }));
}

/// TreeInner: `scores[k] = eta^{-1} Σ_m Σ_i r_{m,k}(x_i) (y_i - f_[m-1](x_i))`,
/// with the residual taken as the negative gradient (so logistic models use
/// `y - sigmoid(raw)`).
pub fn tree_inner<S: Scalar>(
    model: &GBTModel<S>,
    ifa: IfaKind,
    data: &Dataset<S>,
    domain: Domain,
) -> Result<GFAResult<S>> {
    let n = data.n_rows();
    let labels = data.labels();
    let loss = model.config.loss;
    let mut scores = vec![S::zero(); model.n_features];
    let mut residuals = vec![S::zero(); n];
    let mut values: Vec<S> = Vec::new();
    let mut failure: Option<Error> = None;
    model.for_each_round(data.features(), |m, raw_prev| {
        if failure.is_some() {
            return;
        }
        for i in 0..n {
            match residual(loss, labels[i], raw_prev[i]) {
                Ok(r) => residuals[i] = r,
                Err(e) => {
                    failure = Some(e);
                    return;
                }
            }
        }
        cached_values(model, m, ifa, &mut values);
        visit_tree_contributions(&model.trees[m], &values, data.features(), |i, k, delta| {
            scores[k] = scores[k] + delta * residuals[i];
        });
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    let scale = model.config.eta.recip();
    for s in &mut scores {
        *s = *s * scale;
    }
    Ok(GFAResult {
        scores,
        family: Family::TreeInner,
        ifa_kind: ifa.into(),
        domain,
        model_id: model.fingerprint(),
    })
}

fn forest_contributions<S: Scalar>(
    model: &GBTModel<S>,
    ifa: IfaKind,
    x: &Matrix<S>,
) -> Result<Matrix<S>> {
    if x.n_cols() != model.n_features {
        return Err(Error::Shape(format!(
            "model expects {} features, data has {}",
            model.n_features,
            x.n_cols()
        )));
    }
    let mut acc = Matrix::zeros(x.n_rows(), model.n_features);
    let mut values: Vec<S> = Vec::new();
    for (m, tree) in model.trees.iter().enumerate() {
        cached_values(model, m, ifa, &mut values);
        visit_tree_contributions(tree, &values, x, |i, k, delta| {
            acc.add_assign_at(i, k, delta);
        });
    }
    Ok(acc)
}

/// ForestInner: `scores[k] = eta^{-1} Σ_i (Σ_m r_{m,k}(x_i)) y_i`.
pub fn forest_inner<S: Scalar>(
    model: &GBTModel<S>,
    ifa: IfaKind,
    data: &Dataset<S>,
    domain: Domain,
) -> Result<GFAResult<S>> {
    let acc = forest_contributions(model, ifa, data.features())?;
    let labels = data.labels();
    let scale = model.config.eta.recip();
    let scores = (0..model.n_features)
        .map(|k| {
            let mut s = S::zero();
            for (i, &y) in labels.iter().enumerate() {
                s = s + acc.get(i, k) * y;
            }
            s * scale
        })
        .collect();
    Ok(GFAResult {
        scores,
        family: Family::ForestInner,
        ifa_kind: ifa.into(),
        domain,
        model_id: model.fingerprint(),
    })
}

/// Abs: mean over samples of the absolute per-tree contributions,
/// `scores[k] = (1/n) Σ_i Σ_m |r_{m,k}(x_i)|`. Nonnegative by
/// construction. Aggregating per tree (rather than over the forest-level
/// sum, which lets opposite-signed contributions cancel) is what
/// reproduces the family's characteristic cardinality bias.
pub fn abs_gfa<S: Scalar>(
    model: &GBTModel<S>,
    ifa: IfaKind,
    data: &Dataset<S>,
    domain: Domain,
) -> Result<GFAResult<S>> {
    let x = data.features();
    if x.n_cols() != model.n_features {
        return Err(Error::Shape(format!(
            "model expects {} features, data has {}",
            model.n_features,
            x.n_cols()
        )));
    }
    let mut row_acc = vec![S::zero(); model.n_features];
    let mut scores = vec![S::zero(); model.n_features];
    let mut values: Vec<S> = Vec::new();
    for (m, tree) in model.trees.iter().enumerate() {
        cached_values(model, m, ifa, &mut values);
        for i in 0..x.n_rows() {
            row_acc.fill(S::zero());
            tree.visit_path(x.row(i), |node, feature, child| {
                row_acc[feature] = row_acc[feature] + values[child] - values[node];
            });
            for (s, &v) in scores.iter_mut().zip(&row_acc) {
                *s = *s + v.abs();
            }
        }
    }
    let n = cast_usize::<S>(data.n_rows());
    for s in &mut scores {
        *s = *s / n;
    }
    Ok(GFAResult {
        scores,
        family: Family::Abs,
        ifa_kind: ifa.into(),
        domain,
        model_id: model.fingerprint(),
    })
}

/// Permutation importance: mean over `n_repeats` of the risk increase when
/// feature `k`'s column is permuted. Permutations come from a seeded
/// ChaCha8 stream, one shuffle per (feature, repeat) in feature-major
/// order.
pub fn permutation_importance<S: Scalar>(
    model: &GBTModel<S>,
    data: &Dataset<S>,
    domain: Domain,
    n_repeats: usize,
    seed: u64,
) -> Result<GFAResult<S>> {
    if n_repeats < 1 {
        return Err(Error::Config("n_repeats must be >= 1".into()));
    }
    let baseline = risk(model, data)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let reps = cast_usize::<S>(n_repeats);

    let mut scores = Vec::with_capacity(model.n_features);
    let mut features = data.features().clone();
    for k in 0..model.n_features {
        let original = data.features().column(k);
        let mut acc = S::zero();
        for _ in 0..n_repeats {
            let mut permuted = original.clone();
            permuted.shuffle(&mut rng);
            features.set_column(k, &permuted);
            let shuffled = Dataset::with_names(
                features.clone(),
                data.labels().to_vec(),
                data.feature_names().map(<[String]>::to_vec),
            )?;
            acc = acc + (risk(model, &shuffled)? - baseline);
        }
        features.set_column(k, &original);
        scores.push(acc / reps);
    }
    Ok(GFAResult {
        scores,
        family: Family::Permutation,
        ifa_kind: IfaChoice::None,
        domain,
        model_id: model.fingerprint(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::total_gain;
    use crate::data::{Dataset, Matrix};
    use crate::gbt::{GBTModel, Loss, TrainConfig};

    fn three_specimens() -> Dataset<f64> {
        let x = Matrix::from_vec(3, 2, vec![0.0, 0.0, 0.0, 1.0, 1.0, 0.0]).unwrap();
        Dataset::new(x, vec![0.0, 1.0, -1.0]).unwrap()
    }

    fn structure_one() -> (Dataset<f64>, GBTModel<f64>) {
        let data = three_specimens();
        let config = TrainConfig {
            eta: 1.0,
            reg_lambda: 1.0,
            max_depth: 1,
            min_child_weight: 1.0,
            num_boost_round: 1,
            loss: Loss::SquaredError,
            seed: 0,
        };
        let model = GBTModel::fit(&data, config).unwrap();
        (data, model)
    }

    fn random_regression(n: usize, p: usize, seed: u64) -> Dataset<f64> {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = Vec::with_capacity(n * p);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let row: Vec<f64> = (0..p).map(|_| rng.random_range(0.0..2.0)).collect();
            y.push(row[0] * 1.5 - row[1 % p] + rng.random_range(-0.3..0.3));
            data.extend(row);
        }
        Dataset::new(Matrix::from_vec(n, p, data).unwrap(), y).unwrap()
    }

    #[test]
    fn tree_inner_train_matches_total_gain_on_worked_example() {
        let (data, model) = structure_one();
        let r = tree_inner(&model, IfaKind::Predecomp, &data, Domain::Train).unwrap();
        assert!((r.scores[0] - 5.0 / 6.0).abs() < 1e-12);
        assert!(r.scores[1].abs() < 1e-15);
        assert_eq!(r.family, Family::TreeInner);
        assert_eq!(r.ifa_kind, IfaChoice::Predecomp);
    }

    #[test]
    fn zero_labels_give_zero_inner_scores() {
        let (data, model) = structure_one();
        let zeros = Dataset::new(data.features().clone(), vec![0.0; 3]).unwrap();
        let t = tree_inner(&model, IfaKind::Predecomp, &zeros, Domain::Train).unwrap();
        assert_eq!(t.scores, vec![0.0, 0.0]);
        let f = forest_inner(&model, IfaKind::Predecomp, &zeros, Domain::Train).unwrap();
        assert_eq!(f.scores, vec![0.0, 0.0]);
    }

    #[test]
    fn forest_inner_coincides_with_tree_inner_for_single_tree() {
        let (data, model) = structure_one();
        let t = tree_inner(&model, IfaKind::Predecomp, &data, Domain::Train).unwrap();
        let f = forest_inner(&model, IfaKind::Predecomp, &data, Domain::Train).unwrap();
        for (a, b) in t.scores.iter().zip(&f.scores) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((f.scores[0] - 5.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn abs_worked_example() {
        let (data, model) = structure_one();
        let r = abs_gfa(&model, IfaKind::Predecomp, &data, Domain::Train).unwrap();
        assert!((r.scores[0] - 7.0 / 18.0).abs() < 1e-15);
        assert_eq!(r.scores[1], 0.0);
        assert!(r.scores.iter().all(|&s| s >= 0.0));
    }

    #[test]
    fn tree_inner_bridges_to_total_gain_on_fitted_models() {
        let data = random_regression(250, 6, 41);
        let config = TrainConfig {
            num_boost_round: 40,
            max_depth: 3,
            ..TrainConfig::default()
        };
        let model = GBTModel::fit(&data, config).unwrap();
        let (_, forest) = total_gain(&model);
        let r = tree_inner(&model, IfaKind::Predecomp, &data, Domain::Train).unwrap();
        for (k, (&a, &b)) in forest.iter().zip(&r.scores).enumerate() {
            let scale = a.abs().max(b.abs()).max(1e-300);
            assert!(
                ((a - b) / scale).abs() <= 1e-8,
                "feature {k}: gain {a} vs inner {b}"
            );
        }
    }

    #[test]
    fn permutation_score_is_exactly_zero_for_unused_features() {
        let (data, model) = structure_one();
        // The depth-1 model splits only feature 0.
        for seed in 0..5 {
            let r = permutation_importance(&model, &data, Domain::Train, 3, seed).unwrap();
            assert_eq!(r.scores[1], 0.0);
            assert_eq!(r.ifa_kind, IfaChoice::None);
        }
    }

    #[test]
    fn permutation_scores_vanish_for_single_leaf_models() {
        let x = Matrix::from_vec(3, 2, vec![1.0, 0.0, 1.0, 1.0, 1.0, 2.0]).unwrap();
        let data = Dataset::new(x, vec![5.0, 5.0, 5.0]).unwrap();
        let model = GBTModel::fit(
            &data,
            TrainConfig {
                num_boost_round: 2,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        let r = permutation_importance(&model, &data, Domain::Valid, 2, 0).unwrap();
        assert_eq!(r.scores, vec![0.0, 0.0]);
    }

    #[test]
    fn permutation_rejects_zero_repeats() {
        let (data, model) = structure_one();
        assert!(matches!(
            permutation_importance(&model, &data, Domain::Train, 0, 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn permutation_standard_error_shrinks_with_repeats() {
        let data = random_regression(120, 4, 77);
        let model = GBTModel::fit(
            &data,
            TrainConfig {
                num_boost_round: 25,
                max_depth: 3,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        let variance_at = |repeats: usize| -> f64 {
            let vals: Vec<f64> = (0..40)
                .map(|seed| {
                    permutation_importance(&model, &data, Domain::Train, repeats, 1000 + seed)
                        .unwrap()
                        .scores[0]
                })
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (vals.len() - 1) as f64
        };
        let v1 = variance_at(1);
        let v4 = variance_at(4);
        let v16 = variance_at(16);
        // Ratios concentrate near 4; wide bands absorb the chi-square noise
        // of 40-draw variance estimates.
        assert!(v1 / v4 > 1.8 && v1 / v4 < 9.0, "v1/v4 = {}", v1 / v4);
        assert!(v4 / v16 > 1.8 && v4 / v16 < 9.0, "v4/v16 = {}", v4 / v16);
    }

    #[test]
    fn positive_scaling_leaves_auc_unchanged() {
        let data = random_regression(200, 8, 5);
        let model = GBTModel::fit(
            &data,
            TrainConfig {
                num_boost_round: 30,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        let r = tree_inner(&model, IfaKind::Predecomp, &data, Domain::Train).unwrap();
        let relevance: Vec<bool> = (0..8).map(|k| k < 2).collect();
        let base = crate::metrics::auc(&r.scores, &relevance).unwrap();
        let scaled: Vec<f64> = r.scores.iter().map(|&s| 17.5 * s).collect();
        assert_eq!(crate::metrics::auc(&scaled, &relevance).unwrap(), base);
    }

    #[test]
    fn csv_and_json_exports_write_all_features() {
        let (data, model) = structure_one();
        let r = tree_inner(&model, IfaKind::Predecomp, &data, Domain::Train).unwrap();
        let dir = std::env::temp_dir().join("predecomp-gfa-test");
        std::fs::create_dir_all(&dir).unwrap();
        let names = vec!["x1".to_string(), "x2".to_string()];
        let csv_path = dir.join("gfa.csv");
        let json_path = dir.join("gfa.json");
        r.write_csv(&names, &csv_path).unwrap();
        r.write_json(&names, &json_path).unwrap();
        let text = std::fs::read_to_string(&csv_path).unwrap();
        assert!(text.starts_with("feature,score,family,ifa,domain"));
        assert_eq!(text.lines().count(), 3);
        assert!(text.contains("tree_inner"));
        let doc: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&json_path).unwrap()).unwrap();
        assert_eq!(doc["metadata"]["family"], "tree_inner");
        assert_eq!(doc["scores"].as_array().unwrap().len(), 2);
    }
}
