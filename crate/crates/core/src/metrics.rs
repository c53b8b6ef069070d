//! Scoring utilities: noisy-feature AUC, score normalizations, and
//! held-out risk.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gbt::{GBTModel, Loss};
use crate::scalar::{cast, cast_usize, sigmoid, Scalar};

/// AUC of `scores` against binary `relevance` labels, the Mann–Whitney
/// statistic: the fraction of (relevant, noisy) pairs where the relevant
/// feature scores higher, ties counted one half.
///
/// Computed by rank summation; agrees exactly with brute-force pair
/// enumeration.
pub fn auc<S: Scalar>(scores: &[S], relevance: &[bool]) -> Result<S> {
    if scores.len() != relevance.len() {
        return Err(Error::Shape(format!(
            "{} scores for {} relevance labels",
            scores.len(),
            relevance.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidInput("non-finite score".into()));
    }
    let n_pos = relevance.iter().filter(|&&r| r).count();
    let n_neg = relevance.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedAuc);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));

    // Average ranks within tie groups, then the rank-sum U statistic.
    let mut rank_sum_pos = S::zero();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j share the average (i + 1 + j) / 2
        let avg_rank = cast_usize::<S>(i + 1 + j) / cast(2.0);
        for &idx in &order[i..j] {
            if relevance[idx] {
                rank_sum_pos = rank_sum_pos + avg_rank;
            }
        }
        i = j;
    }
    let np = cast_usize::<S>(n_pos);
    let nn = cast_usize::<S>(n_neg);
    let u = rank_sum_pos - np * (np + S::one()) / cast(2.0);
    Ok(u / (np * nn))
}

/// Scale to unit ℓ1 norm. Errors on the zero vector.
pub fn normalize_l1<S: Scalar>(v: &[S]) -> Result<Vec<S>> {
    let norm = v.iter().fold(S::zero(), |acc, &x| acc + x.abs());
    if !norm.is_finite() || norm <= S::zero() {
        return Err(Error::InvalidInput("cannot normalize a zero vector".into()));
    }
    Ok(v.iter().map(|&x| x / norm).collect())
}

/// Scale to unit ℓ2 norm. Errors on the zero vector.
pub fn normalize_l2<S: Scalar>(v: &[S]) -> Result<Vec<S>> {
    let norm = v.iter().fold(S::zero(), |acc, &x| acc + x * x).sqrt();
    if !norm.is_finite() || norm <= S::zero() {
        return Err(Error::InvalidInput("cannot normalize a zero vector".into()));
    }
    Ok(v.iter().map(|&x| x / norm).collect())
}

/// Held-out risk: mean squared error of raw predictions for squared-error
/// models, misclassification rate at probability threshold 0.5 for logistic
/// models (a probability of exactly 0.5 predicts class 1).
pub fn risk<S: Scalar>(model: &GBTModel<S>, data: &Dataset<S>) -> Result<S> {
    let raw = model.predict_full(data.features())?;
    let n = cast_usize::<S>(data.n_rows());
    match model.config.loss {
        Loss::SquaredError => {
            let sse = data
                .labels()
                .iter()
                .zip(&raw)
                .fold(S::zero(), |acc, (&y, &r)| acc + (y - r) * (y - r));
            Ok(sse / n)
        }
        Loss::Logistic => {
            let half = cast::<S>(0.5);
            let errors = data
                .labels()
                .iter()
                .zip(&raw)
                .filter(|(&y, &r)| {
                    let predicted = if sigmoid(r) >= half { S::one() } else { S::zero() };
                    predicted != y
                })
                .count();
            Ok(cast_usize::<S>(errors) / n)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Matrix;
    use crate::gbt::TrainConfig;

    /// O(p²) oracle used to pin the rank-based implementation.
    pub(crate) fn auc_brute_force(scores: &[f64], relevance: &[bool]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &ri) in relevance.iter().enumerate() {
            if !ri {
                continue;
            }
            for (j, &rj) in relevance.iter().enumerate() {
                if rj {
                    continue;
                }
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn auc_perfect_separation() {
        let a = auc(&[0.9, 0.8, 0.1], &[true, true, false]).unwrap();
        assert_eq!(a, 1.0);
    }

    #[test]
    fn auc_perfect_inversion() {
        let a = auc(&[0.1, 0.9], &[true, false]).unwrap();
        assert_eq!(a, 0.0);
    }

    #[test]
    fn auc_tie_counts_half() {
        let a = auc(&[0.5, 0.5, 0.2], &[true, false, false]).unwrap();
        assert_eq!(a, 0.75);
    }

    #[test]
    fn auc_single_class_is_an_error() {
        assert!(matches!(
            auc(&[1.0, 2.0], &[true, true]),
            Err(Error::UndefinedAuc)
        ));
        assert!(matches!(
            auc(&[1.0, 2.0], &[false, false]),
            Err(Error::UndefinedAuc)
        ));
    }

    #[test]
    fn auc_invariant_under_increasing_transform() {
        let scores = [0.3, -1.0, 2.5, 0.3, 0.0];
        let relevance = [true, false, true, false, false];
        let base = auc(&scores, &relevance).unwrap();
        let cubed: Vec<f64> = scores.iter().map(|&s| s * s * s).collect();
        let affine: Vec<f64> = scores.iter().map(|&s| 3.0 * s + 7.0).collect();
        assert_eq!(auc(&cubed, &relevance).unwrap(), base);
        assert_eq!(auc(&affine, &relevance).unwrap(), base);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        /// Coarse score grid so ties actually occur.
        fn instances() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
            proptest::collection::vec(((-8i32..=8), any::<bool>()), 2..64).prop_filter_map(
                "needs both classes",
                |items| {
                    let scores: Vec<f64> = items.iter().map(|(s, _)| f64::from(*s) / 4.0).collect();
                    let relevance: Vec<bool> = items.iter().map(|(_, r)| *r).collect();
                    (relevance.contains(&true) && relevance.contains(&false))
                        .then_some((scores, relevance))
                },
            )
        }

        proptest! {
            #[test]
            fn auc_matches_pair_enumeration((scores, relevance) in instances()) {
                let fast = auc(&scores, &relevance).unwrap();
                prop_assert_eq!(fast, auc_brute_force(&scores, &relevance));
            }

            #[test]
            fn auc_unchanged_by_positive_affine_maps(
                (scores, relevance) in instances(),
                scale in 0.05f64..20.0,
                shift in -10.0f64..10.0,
            ) {
                let base = auc(&scores, &relevance).unwrap();
                let mapped: Vec<f64> = scores.iter().map(|&s| scale * s + shift).collect();
                prop_assert_eq!(auc(&mapped, &relevance).unwrap(), base);
            }

            #[test]
            fn normalizations_preserve_order_of_nonnegative_vectors(
                v in proptest::collection::vec(0.0f64..10.0, 1..32),
            ) {
                prop_assume!(v.iter().any(|&x| x > 0.0));
                for f in [normalize_l1::<f64>, normalize_l2::<f64>] {
                    let once = f(&v).unwrap();
                    let twice = f(&once).unwrap();
                    for (a, b) in once.iter().zip(&twice) {
                        prop_assert!((a - b).abs() <= 1e-12);
                    }
                    for i in 0..v.len() {
                        for j in 0..v.len() {
                            prop_assert_eq!(v[i] < v[j], once[i] < once[j]);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_l1(&[2.0, 2.0]).unwrap(), vec![0.5, 0.5]);
        assert_eq!(normalize_l2(&[3.0, 4.0]).unwrap(), vec![0.6, 0.8]);
        assert!(normalize_l1(&[0.0, 0.0]).is_err());
        assert!(normalize_l2(&[0.0]).is_err());
    }

    #[test]
    fn normalize_is_idempotent_and_order_preserving() {
        let v = [0.2, 3.0, 1.5, 0.2];
        for f in [normalize_l1::<f64>, normalize_l2::<f64>] {
            let once = f(&v).unwrap();
            let twice = f(&once).unwrap();
            for (a, b) in once.iter().zip(&twice) {
                assert!((a - b).abs() < 1e-15);
            }
            for i in 0..v.len() {
                for j in 0..v.len() {
                    assert_eq!(v[i] < v[j], once[i] < once[j]);
                }
            }
        }
    }

    #[test]
    fn risk_examples() {
        // constant-0 raw prediction on labels (0, 2) -> MSE 2
        let x = Matrix::from_vec(2, 1, vec![1.0, 1.0]).unwrap();
        let data = Dataset::new(x, vec![0.0, 2.0]).unwrap();
        let model = GBTModel::fit(
            &data,
            TrainConfig {
                eta: 1e-9, // essentially zero update; raw stays ~0
                num_boost_round: 1,
                max_depth: 1,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        let r: f64 = risk(&model, &data).unwrap();
        assert!((r - 2.0).abs() < 1e-6);
    }

    #[test]
    fn classification_risk_tie_breaks_to_class_one() {
        // A constant x column yields a single-leaf tree; with one positive
        // and one negative label the first-round gradients cancel, so the
        // raw score stays 0 (probability exactly 0.5) and everything is
        // classified as 1.
        let x = Matrix::from_vec(2, 1, vec![1.0, 1.0]).unwrap();
        let data = Dataset::new(x, vec![1.0, 0.0]).unwrap();
        let model = GBTModel::fit(
            &data,
            TrainConfig {
                loss: Loss::Logistic,
                num_boost_round: 1,
                max_depth: 1,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        let raw = model.predict_full(data.features()).unwrap();
        assert_eq!(raw, vec![0.0, 0.0]);
        let r = risk(&model, &data).unwrap();
        assert_eq!(r, 0.5);
    }

    #[test]
    fn perfect_predictions_have_zero_risk() {
        let x = Matrix::from_vec(4, 1, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let data = Dataset::new(x, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let model = GBTModel::fit(
            &data,
            TrainConfig {
                eta: 1.0,
                reg_lambda: 0.0,
                min_child_weight: 0.0,
                max_depth: 3,
                num_boost_round: 2,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        let r = risk(&model, &data).unwrap();
        assert!(r < 1e-20, "risk {r}");
    }
}
