//! Regression tree growth with exact greedy split enumeration.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Matrix};
use crate::error::{Error, Result};
use crate::scalar::{cast, cast_usize, Scalar};

use super::TrainConfig;

/// Splits require strictly more gain than this; keeps floating-point noise
/// from growing spurious branches.
pub const GAIN_EPSILON: f64 = 1e-12;

/// Node payload: either a binary split or a terminal weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NodeKind<S> {
    Inner {
        feature: usize,
        threshold: S,
        left: usize,
        right: usize,
    },
    Leaf {
        weight: S,
    },
}

/// One tree node. Every node caches its regularized value `p_hat`, the
/// count-weighted child average `p_tilde`, and the training hessian sum
/// `cover`; for a leaf `p_hat` equals the leaf weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode<S> {
    #[serde(flatten)]
    pub kind: NodeKind<S>,
    pub p_hat: S,
    pub p_tilde: S,
    pub cover: S,
}

impl<S: Scalar> TreeNode<S> {
    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, NodeKind::Leaf { .. })
    }
}

/// A fitted regression tree plus the per-feature gain accumulated by its
/// splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree<S> {
    pub nodes: Vec<TreeNode<S>>,
    pub total_gain: Vec<S>,
}

impl<S: Scalar> Tree<S> {
    pub fn root(&self) -> &TreeNode<S> {
        &self.nodes[0]
    }

    /// Index of the leaf this row lands in. Routing is `value < threshold`
    /// goes left, else right.
    pub fn leaf_index(&self, row: &[S]) -> usize {
        let mut t = 0usize;
        loop {
            match self.nodes[t].kind {
                NodeKind::Leaf { .. } => return t,
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

    /// Prediction of this tree for one row (its leaf weight).
    pub fn predict_row(&self, row: &[S]) -> S {
        match self.nodes[self.leaf_index(row)].kind {
            NodeKind::Leaf { weight } => weight,
            NodeKind::Inner { .. } => unreachable!("leaf_index returns a leaf"),
        }
    }

    /// Walk the row's root-to-leaf path, calling `visit(node, feature, child)`
    /// for every inner node crossed.
    pub fn visit_path<F: FnMut(usize, usize, usize)>(&self, row: &[S], mut visit: F) {
        let mut t = 0usize;
        loop {
            match self.nodes[t].kind {
                NodeKind::Leaf { .. } => return,
                NodeKind::Inner {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let child = if row[feature] < threshold { left } else { right };
                    visit(t, feature, child);
                    t = child;
                }
            }
        }
    }

    pub fn num_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    /// Cached regularized root value, the tree-level bias.
    pub fn p_hat_root(&self) -> S {
        self.nodes[0].p_hat
    }
}

/// Second-order split gain: `GL²/(HL+λ) + GR²/(HR+λ) − (GL+GR)²/(HL+HR+λ)`.
/// The degenerate 0/0 term at λ=0 with an empty side is defined as 0.
pub fn split_gain<S: Scalar>(gl: S, hl: S, gr: S, hr: S, lambda: S) -> S {
    score_term(gl, hl, lambda) + score_term(gr, hr, lambda)
        - score_term(gl + gr, hl + hr, lambda)
}

#[inline]
fn score_term<S: Scalar>(g: S, h: S, lambda: S) -> S {
    let denom = h + lambda;
    if denom == S::zero() {
        S::zero()
    } else {
        g * g / denom
    }
}

struct BestSplit<S> {
    feature: usize,
    threshold: S,
    gain: S,
}

struct NodeStats<S> {
    sum_g: S,
    sum_h: S,
    count: usize,
    cover: S,
    p_tilde: S,
}

struct TreeBuilder<'a, S> {
    x: &'a Matrix<S>,
    grad: &'a [S],
    hess: &'a [S],
    eta: S,
    lambda: S,
    min_child_weight: S,
    max_depth: usize,
    gain_epsilon: S,
    nodes: Vec<TreeNode<S>>,
    total_gain: Vec<S>,
}

impl<S: Scalar> TreeBuilder<'_, S> {
    /// Grow the subtree for `rows` (ascending row order) whose per-feature
    /// sorted views are `sorted`. Returns the node id and its stats.
    fn build(&mut self, rows: Vec<u32>, sorted: Vec<Vec<u32>>, depth: usize) -> (usize, NodeStats<S>) {
        let mut sum_g = S::zero();
        let mut sum_h = S::zero();
        for &r in &rows {
            sum_g = sum_g + self.grad[r as usize];
            sum_h = sum_h + self.hess[r as usize];
        }
        let p_hat = -self.eta * sum_g / (sum_h + self.lambda);
        let count = rows.len();

        let node_id = self.nodes.len();
        self.nodes.push(TreeNode {
            kind: NodeKind::Leaf { weight: p_hat },
            p_hat,
            p_tilde: p_hat,
            cover: sum_h,
        });

        if depth < self.max_depth && count >= 2 {
            if let Some(best) = self.find_best_split(&sorted, sum_g, sum_h) {
                let feature = best.feature;
                let threshold = best.threshold;
                let goes_left = |r: u32| self.x.get(r as usize, feature) < threshold;

                let mut rows_l = Vec::new();
                let mut rows_r = Vec::new();
                for &r in &rows {
                    if goes_left(r) {
                        rows_l.push(r);
                    } else {
                        rows_r.push(r);
                    }
                }
                drop(rows);
                let mut sorted_l = Vec::with_capacity(sorted.len());
                let mut sorted_r = Vec::with_capacity(sorted.len());
                for list in &sorted {
                    let mut l = Vec::with_capacity(rows_l.len());
                    let mut rt = Vec::with_capacity(rows_r.len());
                    for &r in list {
                        if goes_left(r) {
                            l.push(r);
                        } else {
                            rt.push(r);
                        }
                    }
                    sorted_l.push(l);
                    sorted_r.push(rt);
                }
                drop(sorted);

                let (left_id, left) = self.build(rows_l, sorted_l, depth + 1);
                let (right_id, right) = self.build(rows_r, sorted_r, depth + 1);

                // Record the gain from the children's own sums so it agrees
                // exactly with the cached node values.
                let gain = split_gain(left.sum_g, left.sum_h, right.sum_g, right.sum_h, self.lambda);
                self.total_gain[feature] = self.total_gain[feature] + gain;

                let cover = left.cover + right.cover;
                let p_tilde = (cast_usize::<S>(left.count) * left.p_tilde
                    + cast_usize::<S>(right.count) * right.p_tilde)
                    / cast_usize::<S>(count);
                self.nodes[node_id] = TreeNode {
                    kind: NodeKind::Inner {
                        feature,
                        threshold,
                        left: left_id,
                        right: right_id,
                    },
                    p_hat,
                    p_tilde,
                    cover,
                };
                return (
                    node_id,
                    NodeStats {
                        sum_g,
                        sum_h,
                        count,
                        cover,
                        p_tilde,
                    },
                );
            }
        }

        (
            node_id,
            NodeStats {
                sum_g,
                sum_h,
                count,
                cover: sum_h,
                p_tilde: p_hat,
            },
        )
    }

    /// Exact greedy scan: every feature, every boundary between consecutive
    /// distinct sorted values, threshold at the midpoint. Equal gains keep
    /// the earliest candidate, so ties resolve to the lowest feature index
    /// and then the smallest threshold.
    fn find_best_split(&self, sorted: &[Vec<u32>], sum_g: S, sum_h: S) -> Option<BestSplit<S>> {
        let parent_term = score_term(sum_g, sum_h, self.lambda);
        let half = cast::<S>(0.5);
        let mut best: Option<BestSplit<S>> = None;
        for (k, idx) in sorted.iter().enumerate() {
            let mut gl = S::zero();
            let mut hl = S::zero();
            for i in 0..idx.len() - 1 {
                let r = idx[i] as usize;
                gl = gl + self.grad[r];
                hl = hl + self.hess[r];
                let v = self.x.get(r, k);
                let v_next = self.x.get(idx[i + 1] as usize, k);
                if v < v_next {
                    let threshold = v * half + v_next * half;
                    // Midpoint can collapse onto v for adjacent floats; such
                    // a boundary has no representable separating threshold.
                    if threshold <= v {
                        continue;
                    }
                    let gr = sum_g - gl;
                    let hr = sum_h - hl;
                    if hl < self.min_child_weight || hr < self.min_child_weight {
                        continue;
                    }
                    let gain = score_term(gl, hl, self.lambda) + score_term(gr, hr, self.lambda)
                        - parent_term;
                    if best.as_ref().is_none_or(|b| gain > b.gain) {
                        best = Some(BestSplit {
                            feature: k,
                            threshold,
                            gain,
                        });
                    }
                }
            }
        }
        best.filter(|b| b.gain > self.gain_epsilon)
    }
}

/// Row ids sorted by each feature's value (stable on ties by row index).
/// Computed once per fit since feature order never changes across rounds.
pub(crate) fn presort_features<S: Scalar>(x: &Matrix<S>) -> Vec<Vec<u32>> {
    (0..x.n_cols())
        .map(|k| {
            let mut idx: Vec<u32> = (0..x.n_rows() as u32).collect();
            idx.sort_by(|&a, &b| {
                x.get(a as usize, k)
                    .partial_cmp(&x.get(b as usize, k))
                    .expect("finite feature values")
                    .then(a.cmp(&b))
            });
            idx
        })
        .collect()
}

pub(crate) fn grow_tree_presorted<S: Scalar>(
    data: &Dataset<S>,
    grad: &[S],
    hess: &[S],
    config: &TrainConfig<S>,
    presorted: &[Vec<u32>],
) -> Result<Tree<S>> {
    let n = data.n_rows();
    if grad.len() != n || hess.len() != n {
        return Err(Error::Shape(format!(
            "{} gradients / {} hessians for {} rows",
            grad.len(),
            hess.len(),
            n
        )));
    }
    if hess.iter().any(|&h| !h.is_finite() || h <= S::zero()) {
        return Err(Error::InvalidInput("hessians must be positive".into()));
    }
    let mut builder = TreeBuilder {
        x: data.features(),
        grad,
        hess,
        eta: config.eta,
        lambda: config.reg_lambda,
        min_child_weight: config.min_child_weight,
        max_depth: config.max_depth,
        gain_epsilon: cast(GAIN_EPSILON),
        nodes: Vec::new(),
        total_gain: vec![S::zero(); data.n_features()],
    };
    let rows: Vec<u32> = (0..n as u32).collect();
    builder.build(rows, presorted.to_vec(), 0);
    Ok(Tree {
        nodes: builder.nodes,
        total_gain: builder.total_gain,
    })
}

/// Grow a single tree by exact greedy search over all features and split
/// points, using the supplied per-row gradients and hessians.
pub fn grow_tree<S: Scalar>(
    data: &Dataset<S>,
    grad: &[S],
    hess: &[S],
    config: &TrainConfig<S>,
) -> Result<Tree<S>> {
    config.validate()?;
    let presorted = presort_features(data.features());
    grow_tree_presorted(data, grad, hess, config, &presorted)
}
