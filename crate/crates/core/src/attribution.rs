//! Individualized feature attributions for fitted ensembles.
//!
//! Every node of a fitted tree carries two values: `p_hat`, the minimizer of
//! the regularized second-order objective on the node's training rows, and
//! `p_tilde`, the count-weighted average of the leaf values below it.
//! PreDecomp credits each split's feature with the change in `p_hat` along a
//! sample's root-to-leaf path; the Saabas-style comparator does the same
//! with `p_tilde`. Attributions default to the values cached at fit time;
//! recomputation on a different background dataset is an explicit opt-in
//! via [`node_values_hat`] / [`node_values_tilde`] and
//! [`predecomp_with_values`].

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Matrix};
use crate::error::{Error, Result};
use crate::gbt::{grad_hess, GBTModel, NodeKind, Tree};
use crate::scalar::{cast_usize, Scalar};

/// Which node values drive the decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IfaKind {
    /// Regularized node values `p_hat`.
    Predecomp,
    /// Count-weighted child averages `p_tilde`.
    SaabasTilde,
}

/// Node-value variant, mirroring [`IfaKind`] at the node-value level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeValueVariant {
    Hat,
    Tilde,
}

impl IfaKind {
    pub fn variant(self) -> NodeValueVariant {
        match self {
            IfaKind::Predecomp => NodeValueVariant::Hat,
            IfaKind::SaabasTilde => NodeValueVariant::Tilde,
        }
    }
}

/// Node values of one tree, indexed by node id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeValues<S> {
    pub variant: NodeValueVariant,
    pub tree_index: usize,
    pub values: Vec<S>,
    /// Nodes whose background intersection was empty; their value is 0.
    pub empty_nodes: Vec<usize>,
}

impl<S: Scalar> NodeValues<S> {
    pub fn has_warnings(&self) -> bool {
        !self.empty_nodes.is_empty()
    }

    /// Values cached at fit time (training background).
    pub fn cached(model: &GBTModel<S>, m: usize, variant: NodeValueVariant) -> Self {
        let tree = &model.trees[m];
        let values = tree
            .nodes
            .iter()
            .map(|n| match variant {
                NodeValueVariant::Hat => n.p_hat,
                NodeValueVariant::Tilde => n.p_tilde,
            })
            .collect();
        NodeValues {
            variant,
            tree_index: m,
            values,
            empty_nodes: Vec::new(),
        }
    }
}

/// Per-node gradient/hessian/count sums of a background dataset routed
/// through one tree, with gradients taken at the supplied raw scores.
struct NodeSums<S> {
    sum_g: Vec<S>,
    sum_h: Vec<S>,
    count: Vec<usize>,
}

fn background_sums<S: Scalar>(
    model: &GBTModel<S>,
    tree: &Tree<S>,
    background: &Dataset<S>,
    raw_prev: &[S],
) -> Result<NodeSums<S>> {
    let n_nodes = tree.nodes.len();
    let mut sums = NodeSums {
        sum_g: vec![S::zero(); n_nodes],
        sum_h: vec![S::zero(); n_nodes],
        count: vec![0usize; n_nodes],
    };
    for (i, &raw) in raw_prev.iter().enumerate() {
        let (g, h) = grad_hess(model.config.loss, background.labels()[i], raw)?;
        let row = background.features().row(i);
        let mut t = 0usize;
        loop {
            sums.sum_g[t] = sums.sum_g[t] + g;
            sums.sum_h[t] = sums.sum_h[t] + h;
            sums.count[t] += 1;
            match tree.nodes[t].kind {
                NodeKind::Leaf { .. } => break,
                NodeKind::Inner {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    t = if row[feature] < threshold { left } else { right };
                }
            }
        }
    }
    Ok(sums)
}

fn hat_from_sums<S: Scalar>(model: &GBTModel<S>, m: usize, sums: &NodeSums<S>) -> NodeValues<S> {
    let eta = model.config.eta;
    let lambda = model.config.reg_lambda;
    let mut values = Vec::with_capacity(sums.count.len());
    let mut empty = Vec::new();
    for t in 0..sums.count.len() {
        if sums.count[t] == 0 {
            values.push(S::zero());
            empty.push(t);
        } else {
            values.push(-eta * sums.sum_g[t] / (sums.sum_h[t] + lambda));
        }
    }
    NodeValues {
        variant: NodeValueVariant::Hat,
        tree_index: m,
        values,
        empty_nodes: empty,
    }
}

fn replay_to_tree<S: Scalar>(
    model: &GBTModel<S>,
    m: usize,
    background: &Dataset<S>,
) -> Result<Vec<S>> {
    if m >= model.num_trees() {
        return Err(Error::InvalidInput(format!(
            "tree index {m} out of range for {} trees",
            model.num_trees()
        )));
    }
    model.predict(background.features(), m)
}

/// Regularized node values of tree `m` recomputed on `background`:
/// `-eta * ΣG / (ΣH + λ)` over the background rows reaching each node, with
/// gradients taken at the ensemble prediction before tree `m`. On the
/// training set this reproduces the cached `p_hat` on every node. Nodes no
/// background row reaches get value 0 and a warning entry.
pub fn node_values_hat<S: Scalar>(
    model: &GBTModel<S>,
    m: usize,
    background: &Dataset<S>,
) -> Result<NodeValues<S>> {
    let raw_prev = replay_to_tree(model, m, background)?;
    let sums = background_sums(model, &model.trees[m], background, &raw_prev)?;
    Ok(hat_from_sums(model, m, &sums))
}

/// Count-weighted node values of tree `m` on `background`: leaves take the
/// hat leaf values, inner nodes average their children weighted by
/// background counts. Empty nodes get value 0 and a warning entry.
pub fn node_values_tilde<S: Scalar>(
    model: &GBTModel<S>,
    m: usize,
    background: &Dataset<S>,
) -> Result<NodeValues<S>> {
    let raw_prev = replay_to_tree(model, m, background)?;
    let tree = &model.trees[m];
    let sums = background_sums(model, tree, background, &raw_prev)?;
    let hat = hat_from_sums(model, m, &sums);

    let n_nodes = tree.nodes.len();
    let mut values = vec![S::zero(); n_nodes];
    let mut empty = Vec::new();
    // Children carry larger ids than their parent, so a reverse scan sees
    // every child before its parent.
    for t in (0..n_nodes).rev() {
        if sums.count[t] == 0 {
            values[t] = S::zero();
            empty.push(t);
            continue;
        }
        match tree.nodes[t].kind {
            NodeKind::Leaf { .. } => values[t] = hat.values[t],
            NodeKind::Inner { left, right, .. } => {
                values[t] = (cast_usize::<S>(sums.count[left]) * values[left]
                    + cast_usize::<S>(sums.count[right]) * values[right])
                    / cast_usize::<S>(sums.count[t]);
            }
        }
    }
    empty.reverse();
    Ok(NodeValues {
        variant: NodeValueVariant::Tilde,
        tree_index: m,
        values,
        empty_nodes: empty,
    })
}

/// Per-tree, per-sample, per-feature contributions plus the per-tree bias
/// (the root node value).
#[derive(Debug, Clone, PartialEq)]
pub struct AttributionMatrix<S> {
    pub ifa_kind: IfaKind,
    /// One n×p matrix per tree.
    pub per_tree: Vec<Matrix<S>>,
    /// Root node value per tree.
    pub bias: Vec<S>,
}

impl<S: Scalar> AttributionMatrix<S> {
    pub fn num_trees(&self) -> usize {
        self.per_tree.len()
    }

    /// Sum of the per-tree contributions, `n x p`.
    pub fn forest_level(&self) -> Matrix<S> {
        let n = self.per_tree[0].n_rows();
        let p = self.per_tree[0].n_cols();
        let mut out = Matrix::zeros(n, p);
        for slice in &self.per_tree {
            for i in 0..n {
                for j in 0..p {
                    out.add_assign_at(i, j, slice.get(i, j));
                }
            }
        }
        out
    }
}

/// Walk every row of `x` down `tree`, reporting `(row, feature, delta)` for
/// each crossed split, where `delta` is the node-value change toward the
/// child taken.
pub fn visit_tree_contributions<S: Scalar, F: FnMut(usize, usize, S)>(
    tree: &Tree<S>,
    values: &[S],
    x: &Matrix<S>,
    mut visit: F,
) {
    for i in 0..x.n_rows() {
        tree.visit_path(x.row(i), |node, feature, child| {
            visit(i, feature, values[child] - values[node]);
        });
    }
}

fn check_shape<S: Scalar>(model: &GBTModel<S>, x: &Matrix<S>) -> Result<()> {
    if x.n_cols() != model.n_features {
        return Err(Error::Shape(format!(
            "model expects {} features, data has {}",
            model.n_features,
            x.n_cols()
        )));
    }
    Ok(())
}

/// Stream per-tree attribution slices without materializing the full
/// `M x n x p` array: calls `visit(m, slice, bias_m)` for every tree, with
/// the `n x p` buffer reused between trees.
pub fn for_each_tree_slice<S: Scalar, F: FnMut(usize, &Matrix<S>, S)>(
    model: &GBTModel<S>,
    x: &Matrix<S>,
    kind: IfaKind,
    mut visit: F,
) -> Result<()> {
    check_shape(model, x)?;
    let mut slice = Matrix::zeros(x.n_rows(), model.n_features);
    let mut values: Vec<S> = Vec::new();
    for (m, tree) in model.trees.iter().enumerate() {
        values.clear();
        values.extend(tree.nodes.iter().map(|n| match kind.variant() {
            NodeValueVariant::Hat => n.p_hat,
            NodeValueVariant::Tilde => n.p_tilde,
        }));
        slice.fill(S::zero());
        visit_tree_contributions(tree, &values, x, |i, k, delta| {
            slice.add_assign_at(i, k, delta);
        });
        visit(m, &slice, values[0]);
    }
    Ok(())
}

/// PreDecomp attributions of every tree on the rows of `x`, using the
/// training-cached hat node values.
pub fn predecomp<S: Scalar>(model: &GBTModel<S>, x: &Matrix<S>) -> Result<AttributionMatrix<S>> {
    materialize(model, x, IfaKind::Predecomp)
}

/// Saabas-style attributions driven by the tilde node values.
pub fn saabas_tilde_ifa<S: Scalar>(
    model: &GBTModel<S>,
    x: &Matrix<S>,
) -> Result<AttributionMatrix<S>> {
    materialize(model, x, IfaKind::SaabasTilde)
}

fn materialize<S: Scalar>(
    model: &GBTModel<S>,
    x: &Matrix<S>,
    kind: IfaKind,
) -> Result<AttributionMatrix<S>> {
    let mut per_tree = Vec::with_capacity(model.num_trees());
    let mut bias = Vec::with_capacity(model.num_trees());
    for_each_tree_slice(model, x, kind, |_, slice, b| {
        per_tree.push(slice.clone());
        bias.push(b);
    })?;
    Ok(AttributionMatrix {
        ifa_kind: kind,
        per_tree,
        bias,
    })
}

/// PreDecomp with explicitly supplied node values (one table per tree),
/// the opt-in path for non-training backgrounds.
pub fn predecomp_with_values<S: Scalar>(
    model: &GBTModel<S>,
    x: &Matrix<S>,
    node_values: &[NodeValues<S>],
) -> Result<AttributionMatrix<S>> {
    check_shape(model, x)?;
    if node_values.len() != model.num_trees() {
        return Err(Error::InvalidInput(format!(
            "{} node-value tables for {} trees",
            node_values.len(),
            model.num_trees()
        )));
    }
    let kind = match node_values.first().map(|v| v.variant) {
        Some(NodeValueVariant::Tilde) => IfaKind::SaabasTilde,
        _ => IfaKind::Predecomp,
    };
    let mut per_tree = Vec::with_capacity(model.num_trees());
    let mut bias = Vec::with_capacity(model.num_trees());
    for (m, tree) in model.trees.iter().enumerate() {
        let values = &node_values[m].values;
        if values.len() != tree.nodes.len() {
            return Err(Error::InvalidInput(format!(
                "node-value table {m} has {} entries for {} nodes",
                values.len(),
                tree.nodes.len()
            )));
        }
        let mut slice = Matrix::zeros(x.n_rows(), model.n_features);
        visit_tree_contributions(tree, values, x, |i, k, delta| {
            slice.add_assign_at(i, k, delta);
        });
        per_tree.push(slice);
        bias.push(values[0]);
    }
    Ok(AttributionMatrix {
        ifa_kind: kind,
        per_tree,
        bias,
    })
}

/// Split-time total gain: the per-tree `M x p` matrix and its column sums,
/// the forest-level total gain per feature.
pub fn total_gain<S: Scalar>(model: &GBTModel<S>) -> (Matrix<S>, Vec<S>) {
    let per_tree = model.per_tree_total_gain();
    let forest = per_tree.col_sums();
    (per_tree, forest)
}

/// Total gain recovered through the attribution route:
/// `(m, k) = -eta^{-1} Σ_i f_{m,k}(x_i) G_{i,m}` with training-cached hat
/// values. `train` must be the exact training set.
pub fn total_gain_via_inner<S: Scalar>(
    model: &GBTModel<S>,
    train: &Dataset<S>,
) -> Result<Matrix<S>> {
    if train.n_rows() != model.n_train_rows {
        return Err(Error::InvalidInput(format!(
            "dataset has {} rows but the model was trained on {}",
            train.n_rows(),
            model.n_train_rows
        )));
    }
    check_shape(model, train.features())?;
    let mut out = Matrix::zeros(model.num_trees(), model.n_features);
    let mut grads = vec![S::zero(); train.n_rows()];
    let mut values: Vec<S> = Vec::new();
    let loss = model.config.loss;
    let labels = train.labels();
    let mut failure: Option<Error> = None;
    model.for_each_round(train.features(), |m, raw_prev| {
        if failure.is_some() {
            return;
        }
        for i in 0..train.n_rows() {
            match grad_hess(loss, labels[i], raw_prev[i]) {
                Ok((g, _)) => grads[i] = g,
                Err(e) => {
                    failure = Some(e);
                    return;
                }
            }
        }
        let tree = &model.trees[m];
        values.clear();
        values.extend(tree.nodes.iter().map(|n| n.p_hat));
        visit_tree_contributions(tree, &values, train.features(), |i, k, delta| {
            out.add_assign_at(m, k, delta * grads[i]);
        });
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    let scale = -model.config.eta.recip();
    for m in 0..out.n_rows() {
        for k in 0..out.n_cols() {
            let v = out.get(m, k);
            out.set(m, k, v * scale);
        }
    }
    Ok(out)
}

/// ℓ1-normalize in place; an all-zero vector is left untouched.
fn l1_normalize_or_zero<S: Scalar>(v: &mut [S]) {
    let norm = v.iter().fold(S::zero(), |acc, &x| acc + x.abs());
    if norm > S::zero() {
        for x in v.iter_mut() {
            *x = *x / norm;
        }
    }
}

/// The identity diagnostic: max over features of the absolute difference
/// between the ℓ1-normalized forest total gain and its attribution-route
/// counterpart.
pub fn identity_max_diff<S: Scalar>(model: &GBTModel<S>, train: &Dataset<S>) -> Result<S> {
    let (_, forest) = total_gain(model);
    let via = total_gain_via_inner(model, train)?;
    let mut a = forest;
    let mut b = via.col_sums();
    l1_normalize_or_zero(&mut a);
    l1_normalize_or_zero(&mut b);
    Ok(a.iter()
        .zip(&b)
        .map(|(&x, &y)| (x - y).abs())
        .fold(S::zero(), S::max))
}

/// Per-tree sums `Σ_i f_{m,k}(x_i)` over the rows of `x` (hat values);
/// the per-feature zero-sum quantity that vanishes at λ=0.
pub fn per_tree_contribution_sums<S: Scalar>(
    model: &GBTModel<S>,
    x: &Matrix<S>,
) -> Result<Matrix<S>> {
    let mut out = Matrix::zeros(model.num_trees(), model.n_features);
    check_shape(model, x)?;
    let mut values: Vec<S> = Vec::new();
    for (m, tree) in model.trees.iter().enumerate() {
        values.clear();
        values.extend(tree.nodes.iter().map(|n| n.p_hat));
        visit_tree_contributions(tree, &values, x, |_, k, delta| {
            out.add_assign_at(m, k, delta);
        });
    }
    Ok(out)
}

/// Largest violation of per-tree local accuracy on the rows of `x`:
/// `max |f_m(x) - Σ_k f_{m,k}(x) - bias_m|`.
pub fn local_accuracy_max_residual<S: Scalar>(
    model: &GBTModel<S>,
    x: &Matrix<S>,
    kind: IfaKind,
) -> Result<S> {
    check_shape(model, x)?;
    let mut worst = S::zero();
    let mut values: Vec<S> = Vec::new();
    for tree in &model.trees {
        values.clear();
        values.extend(tree.nodes.iter().map(|n| match kind.variant() {
            NodeValueVariant::Hat => n.p_hat,
            NodeValueVariant::Tilde => n.p_tilde,
        }));
        let bias = values[0];
        for i in 0..x.n_rows() {
            let row = x.row(i);
            let mut sum = S::zero();
            tree.visit_path(row, |node, _, child| {
                sum = sum + values[child] - values[node];
            });
            let resid = (tree.predict_row(row) - sum - bias).abs();
            worst = worst.max(resid);
        }
    }
    Ok(worst)
}

/// Stream the sparse per-tree attribution rows to CSV with columns
/// `(tree, sample_index, feature, contribution)`; zero contributions are
/// omitted. Also writes the forest-level `n x p` aggregate next to it when
/// `forest_path` is given, and the per-tree biases as a JSON sidecar.
pub fn export_attribution_csv<S: Scalar>(
    model: &GBTModel<S>,
    x: &Matrix<S>,
    kind: IfaKind,
    csv_path: impl AsRef<Path>,
    bias_json_path: impl AsRef<Path>,
    forest_path: Option<&Path>,
) -> Result<()> {
    let csv_path = csv_path.as_ref();
    let file = File::create(csv_path).map_err(|e| Error::io(csv_path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "tree,sample_index,feature,contribution").map_err(|e| Error::io(csv_path, e))?;

    let n = x.n_rows();
    let p = model.n_features;
    let mut forest = Matrix::zeros(n, p);
    let mut biases: Vec<S> = Vec::with_capacity(model.num_trees());
    let mut io_err: Option<std::io::Error> = None;
    for_each_tree_slice(model, x, kind, |m, slice, bias| {
        biases.push(bias);
        if io_err.is_some() {
            return;
        }
        for i in 0..n {
            for k in 0..p {
                let v = slice.get(i, k);
                if v != S::zero() {
                    forest.add_assign_at(i, k, v);
                    if let Err(e) = writeln!(w, "{m},{i},{},{v}", model.feature_name(k)) {
                        io_err = Some(e);
                        return;
                    }
                }
            }
        }
    })?;
    if let Some(e) = io_err {
        return Err(Error::io(csv_path, e));
    }
    drop(w);

    let bias_json_path = bias_json_path.as_ref();
    let sidecar = serde_json::json!({
        "ifa": kind,
        "bias": biases,
    });
    let file = File::create(bias_json_path).map_err(|e| Error::io(bias_json_path, e))?;
    serde_json::to_writer_pretty(BufWriter::new(file), &sidecar)?;

    if let Some(forest_path) = forest_path {
        let file = File::create(forest_path).map_err(|e| Error::io(forest_path, e))?;
        let mut w = BufWriter::new(file);
        let header: Vec<String> = (0..p).map(|k| model.feature_name(k)).collect();
        writeln!(w, "{}", header.join(",")).map_err(|e| Error::io(forest_path, e))?;
        for i in 0..n {
            let line: Vec<String> = (0..p).map(|k| format!("{}", forest.get(i, k))).collect();
            writeln!(w, "{}", line.join(",")).map_err(|e| Error::io(forest_path, e))?;
        }
    }
    Ok(())
}
