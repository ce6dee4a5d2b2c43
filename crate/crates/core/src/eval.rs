//! AUC on a 0–100 scale, the AUC recovery rate, and weekly curves.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EvalError {
    #[error("AUC is undefined: {0}")]
    UndefinedAuc(String),
    #[error("ARR is undefined: oracle and baseline AUC coincide at {0}")]
    UndefinedArr(f64),
    #[error("no curves given")]
    NoCurves,
}

/// Area under the ROC curve in percent, by the rank statistic.
///
/// Equivalent to the probability that a random positive outscores a random
/// negative, ties counted half. Computed from average ranks in
/// `O(n log n)`; the unit tests pin it to the quadratic all-pairs count.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    assert_eq!(scores.len(), labels.len(), "one label per score");
    let positives = labels.iter().filter(|&&y| y).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(EvalError::UndefinedAuc(format!(
            "need both classes, got {positives} positives / {negatives} negatives"
        )));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));

    // average ranks over tied groups, ranks are 1-based
    let mut rank_sum_positive = 0.0;
    let mut idx = 0;
    while idx < order.len() {
        let mut end = idx + 1;
        while end < order.len() && scores[order[end]] == scores[order[idx]] {
            end += 1;
        }
        let average_rank = (idx + 1 + end) as f64 / 2.0;
        for &orig in &order[idx..end] {
            if labels[orig] {
                rank_sum_positive += average_rank;
            }
        }
        idx = end;
    }

    let p = positives as f64;
    let n = negatives as f64;
    let u = rank_sum_positive - p * (p + 1.0) / 2.0;
    Ok(u / (p * n) * 100.0)
}

/// AUC recovery rate: the share of the baseline-to-oracle gap that the
/// adapted system recovers. Oracle recovery is 1.0 by definition.
pub fn arr(auc_baseline: f64, auc_adapted: f64, auc_oracle: f64) -> Result<f64, EvalError> {
    let gap = auc_oracle - auc_baseline;
    if gap == 0.0 {
        return Err(EvalError::UndefinedArr(auc_oracle));
    }
    Ok((auc_adapted - auc_baseline) / gap)
}

/// Mean/std point of one week in a system's curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeekPoint {
    pub week: u32,
    pub mean_auc: f64,
    pub std_auc: f64,
    /// Folds that produced a defined AUC for this week.
    pub folds: usize,
}

/// Per-week AUC summary for one system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeeklyCurve {
    pub system: String,
    pub points: Vec<WeekPoint>,
}

impl WeeklyCurve {
    pub fn point(&self, week: u32) -> Option<&WeekPoint> {
        self.points.iter().find(|p| p.week == week)
    }

    pub fn mean_over(&self, weeks: &[u32]) -> Option<f64> {
        let vals: Vec<f64> = weeks
            .iter()
            .filter_map(|w| self.point(*w).map(|p| p.mean_auc))
            .collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    }
}

/// Folds AUC values per week into a curve; per-week values are the mean
/// and population standard deviation over the defined folds. Undefined
/// folds (single-class evaluation sets) are counted, not imputed.
pub fn weekly_curve(
    system: impl Into<String>,
    per_week: &[(u32, Vec<Result<f64, EvalError>>)],
) -> (WeeklyCurve, usize) {
    let mut undefined = 0;
    let mut points = Vec::with_capacity(per_week.len());
    for (week, folds) in per_week {
        let defined: Vec<f64> = folds
            .iter()
            .filter_map(|r| match r {
                Ok(v) => Some(*v),
                Err(_) => {
                    undefined += 1;
                    None
                }
            })
            .collect();
        if defined.is_empty() {
            continue;
        }
        let mean = defined.iter().sum::<f64>() / defined.len() as f64;
        let variance =
            defined.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / defined.len() as f64;
        points.push(WeekPoint {
            week: *week,
            mean_auc: mean,
            std_auc: variance.sqrt(),
            folds: defined.len(),
        });
    }
    points.sort_by_key(|p| p.week);
    (
        WeeklyCurve {
            system: system.into(),
            points,
        },
        undefined,
    )
}

/// Per-week ARR plus the mean over a week range.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArrReport {
    /// `(week, ARR)`; `None` where oracle and baseline coincide.
    pub per_week: Vec<(u32, Option<f64>)>,
    /// Mean over the weeks with a defined ARR, `None` if there are none.
    pub mean: Option<f64>,
    pub weeks: Vec<u32>,
}

/// Builds the recovery-rate table from the three systems' weekly means.
pub fn arr_report(
    baseline: &WeeklyCurve,
    adapted: &WeeklyCurve,
    oracle: &WeeklyCurve,
    weeks: &[u32],
) -> ArrReport {
    let mut per_week = Vec::with_capacity(weeks.len());
    let mut defined = Vec::new();
    for &week in weeks {
        let value = match (
            baseline.point(week),
            adapted.point(week),
            oracle.point(week),
        ) {
            (Some(b), Some(a), Some(o)) => arr(b.mean_auc, a.mean_auc, o.mean_auc).ok(),
            _ => None,
        };
        if let Some(v) = value {
            defined.push(v);
        }
        per_week.push((week, value));
    }
    let mean = if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    };
    ArrReport {
        per_week,
        mean,
        weeks: weeks.to_vec(),
    }
}


#[cfg(test)]
mod tests {
    use super::oracle::auc_brute_force;
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn perfect_separation_scores_100() {
        assert_eq!(auc(&[0.9, 0.1], &[true, false]).unwrap(), 100.0);
    }

    #[test]
    fn all_ties_score_50() {
        assert_eq!(
            auc(&[0.4, 0.4, 0.4, 0.4], &[true, false, true, false]).unwrap(),
            50.0
        );
    }

    #[test]
    fn tied_pair_example_scores_87_5() {
        // frozen from the all-pairs count: (1 + 1 + 0.5 + 1) / 4
        let scores = [0.9, 0.5, 0.5, 0.1];
        let labels = [true, true, false, false];
        assert_eq!(auc_brute_force(&scores, &labels).unwrap(), 87.5);
        assert!((auc(&scores, &labels).unwrap() - 87.5).abs() < 1e-12);
    }

    #[test]
    fn single_class_is_undefined() {
        assert!(matches!(
            auc(&[0.1, 0.9], &[true, true]),
            Err(EvalError::UndefinedAuc(_))
        ));
    }

    #[test]
    fn rank_based_matches_brute_force_on_random_instances() {
        let mut rng = crate::seeding::rng_for(2024, &[1]);
        for trial in 0..100 {
            let n = rng.gen_range(2..=200);
            // coarse grid forces plenty of exact ties
            let scores: Vec<f64> = (0..n)
                .map(|_| f64::from(rng.gen_range(0..25)) / 24.0)
                .collect();
            let mut labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.4)).collect();
            labels[0] = true;
            if n > 1 {
                labels[1] = false;
            }
            let fast = auc(&scores, &labels).unwrap();
            let slow = auc_brute_force(&scores, &labels).unwrap();
            assert!(
                (fast - slow).abs() < 1e-12,
                "trial {trial}: rank {fast} vs pairs {slow}"
            );
        }
    }

    #[test]
    fn arr_examples() {
        assert_eq!(arr(70.0, 80.0, 80.0).unwrap(), 1.0);
        assert_eq!(arr(70.0, 70.0, 80.0).unwrap(), 0.0);
        assert!((arr(70.0, 77.0, 80.0).unwrap() - 0.7).abs() < 1e-12);
        assert!(matches!(
            arr(70.0, 75.0, 70.0),
            Err(EvalError::UndefinedArr(_))
        ));
    }

    #[test]
    fn weekly_curve_statistics() {
        let (curve, undefined) = weekly_curve(
            "demo",
            &[
                (1, vec![Ok(80.0), Ok(90.0)]),
                (2, vec![Ok(70.0), Err(EvalError::UndefinedAuc("x".into()))]),
            ],
        );
        assert_eq!(undefined, 1);
        let p1 = curve.point(1).unwrap();
        assert_eq!(p1.mean_auc, 85.0);
        assert_eq!(p1.std_auc, 5.0);
        assert_eq!(p1.folds, 2);
        assert_eq!(curve.point(2).unwrap().folds, 1);
    }

    #[test]
    fn constant_predictor_curve_is_flat_50() {
        let folds: Vec<Result<f64, EvalError>> = (0..5)
            .map(|_| auc(&[0.3, 0.3, 0.3], &[true, false, true]))
            .collect();
        let per_week: Vec<(u32, Vec<Result<f64, EvalError>>)> =
            (1..=8).map(|w| (w, folds.clone())).collect();
        let (curve, _) = weekly_curve("constant", &per_week);
        assert_eq!(curve.points.len(), 8);
        assert!(curve.points.iter().all(|p| p.mean_auc == 50.0));
    }

    #[test]
    fn arr_report_means_defined_weeks() {
        let mk = |name: &str, aucs: [f64; 2]| WeeklyCurve {
            system: name.into(),
            points: aucs
                .iter()
                .enumerate()
                .map(|(i, &mean_auc)| WeekPoint {
                    week: i as u32 + 1,
                    mean_auc,
                    std_auc: 0.0,
                    folds: 5,
                })
                .collect(),
        };
        let baseline = mk("b", [70.0, 70.0]);
        let adapted = mk("a", [77.0, 75.0]);
        let oracle = mk("o", [80.0, 80.0]);
        let report = arr_report(&baseline, &adapted, &oracle, &[1, 2]);
        assert!((report.per_week[0].1.unwrap() - 0.7).abs() < 1e-12);
        assert!((report.per_week[1].1.unwrap() - 0.5).abs() < 1e-12);
        assert!((report.mean.unwrap() - 0.6).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn auc_invariant_under_monotone_transform(
            raw in proptest::collection::vec((0u8..40, proptest::bool::ANY), 4..60),
            scale in 0.01f64..10.0,
            shift in -5.0f64..5.0,
        ) {
            let scores: Vec<f64> = raw.iter().map(|(s, _)| f64::from(*s) / 10.0).collect();
            let mut labels: Vec<bool> = raw.iter().map(|(_, y)| *y).collect();
            labels[0] = true;
            let last = labels.len() - 1;
            labels[last] = false;
            // strictly increasing map: x -> exp(scale * x) + shift
            let mapped: Vec<f64> = scores.iter().map(|&s| (scale * s).exp() + shift).collect();
            let a = auc(&scores, &labels).unwrap();
            let b = auc(&mapped, &labels).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn auc_complement_under_label_flip(
            raw in proptest::collection::vec((0u8..40, proptest::bool::ANY), 4..60),
        ) {
            let scores: Vec<f64> = raw.iter().map(|(s, _)| f64::from(*s) / 10.0).collect();
            let mut labels: Vec<bool> = raw.iter().map(|(_, y)| *y).collect();
            labels[0] = true;
            let last = labels.len() - 1;
            labels[last] = false;
            let flipped: Vec<bool> = labels.iter().map(|&y| !y).collect();
            let a = auc(&scores, &labels).unwrap();
            let b = auc(&scores, &flipped).unwrap();
            prop_assert!((a + b - 100.0).abs() < 1e-9);
        }

        #[test]
        fn arr_invariant_under_joint_affine_rescale(
            baseline in 40.0f64..70.0,
            lift in 0.1f64..20.0,
            frac in 0.0f64..1.5,
            scale in 0.1f64..3.0,
            shift in -20.0f64..20.0,
        ) {
            let oracle = baseline + lift;
            let adapted = baseline + frac * lift;
            let plain = arr(baseline, adapted, oracle).unwrap();
            let mapped = arr(
                scale * baseline + shift,
                scale * adapted + shift,
                scale * oracle + shift,
            )
            .unwrap();
            prop_assert!((plain - mapped).abs() < 1e-6);
        }
    }
}
