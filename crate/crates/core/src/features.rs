//! Pearson-seeded greedy forward feature selection.
//!
//! The first feature is the candidate most correlated with the target. Each
//! later round scores every remaining candidate added to the current subset
//! and keeps the best one only if it lowers the error.

use std::io::Write;

use ndarray::ArrayView2;
use rayon::prelude::*;
use thiserror::Error;

use crate::data::Dataset;
use crate::dbn::{train_dbn, DbnError, TrainConfig};

/// Minimum error decrease for an addition to count as an improvement.
pub const IMPROVEMENT_TOLERANCE: f64 = 1e-12;

type BoxError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least two samples, got {0}")]
    TooFewSamples(usize),
    #[error("correlation undefined for a constant vector")]
    UndefinedCorrelation,
    #[error("no candidate features")]
    NoCandidates,
    #[error("{names} names for {columns} candidate columns")]
    NameMismatch { names: usize, columns: usize },
    #[error("evaluator returned invalid error {error} for subset {subset:?}")]
    InvalidError { subset: Vec<usize>, error: f64 },
    #[error("evaluator failed on subset {subset:?}: {source}")]
    Evaluator {
        subset: Vec<usize>,
        #[source]
        source: BoxError,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Sample Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, FeatureError> {
    if x.len() != y.len() {
        return Err(FeatureError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(FeatureError::TooFewSamples(x.len()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(FeatureError::UndefinedCorrelation);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// No remaining candidate lowered the error.
    NoImprovement,
    /// Every candidate was selected.
    Exhausted,
    /// The subset reached the requested size.
    MaxFeatures,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub num_vars: usize,
    pub added_feature: String,
    /// Error as a fraction.
    pub error: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSubset {
    /// Candidate indices in the order they were accepted.
    pub selected: Vec<usize>,
    pub names: Vec<String>,
    /// Error after each accepted addition; strictly decreasing.
    pub error_history: Vec<f64>,
    pub terminated_by: Termination,
    /// Accepted steps, followed by the best rejected addition when the
    /// search stopped for lack of improvement.
    pub trace: Vec<TraceRow>,
}

impl FeatureSubset {
    pub fn final_error(&self) -> f64 {
        *self.error_history.last().expect("at least one accepted feature")
    }

    /// Writes `num_vars,added_feature,error_pct` with errors in percent.
    pub fn write_trace_csv<W: Write>(&self, mut out: W, header_comment: &str) -> Result<(), FeatureError> {
        writeln!(out, "# {header_comment}")?;
        writeln!(out, "num_vars,added_feature,error_pct")?;
        for row in &self.trace {
            writeln!(out, "{},{},{}", row.num_vars, row.added_feature, 100.0 * row.error)?;
        }
        Ok(())
    }
}

/// Index of the candidate with the largest |r| against `target`; ties go to
/// the lowest index and constant columns rank last.
pub fn most_correlated(candidates: ArrayView2<'_, f64>, target: &[f64]) -> Result<usize, FeatureError> {
    if candidates.ncols() == 0 {
        return Err(FeatureError::NoCandidates);
    }
    if candidates.nrows() != target.len() {
        return Err(FeatureError::LengthMismatch(candidates.nrows(), target.len()));
    }
    let mut best: Option<(usize, f64)> = None;
    for (j, column) in candidates.columns().into_iter().enumerate() {
        let r = match pearson(&column.to_vec(), target) {
            Ok(r) => r.abs(),
            Err(FeatureError::UndefinedCorrelation) => continue,
            Err(e) => return Err(e),
        };
        if best.is_none_or(|(_, b)| r > b + IMPROVEMENT_TOLERANCE) {
            best = Some((j, r));
        }
    }
    Ok(best.map_or(0, |(j, _)| j))
}

/// Greedy forward selection over the columns of `candidates`.
///
/// `evaluator` maps a subset of column indices to an error in `[0, 1]` and
/// must be deterministic. Candidates within a round are scored in parallel.
pub fn greedy_select<F, E>(
    candidates: ArrayView2<'_, f64>,
    names: &[String],
    target: &[f64],
    evaluator: F,
    max_features: Option<usize>,
) -> Result<FeatureSubset, FeatureError>
where
    F: Fn(&[usize]) -> Result<f64, E> + Sync,
    E: Into<BoxError>,
{
    if names.len() != candidates.ncols() {
        return Err(FeatureError::NameMismatch {
            names: names.len(),
            columns: candidates.ncols(),
        });
    }
    let n = candidates.ncols();
    let limit = max_features.unwrap_or(n).clamp(1, n.max(1));
    let evaluate = |subset: &[usize]| -> Result<f64, FeatureError> {
        let error = evaluator(subset).map_err(|e| FeatureError::Evaluator {
            subset: subset.to_vec(),
            source: e.into(),
        })?;
        if !(0.0..=1.0).contains(&error) {
            return Err(FeatureError::InvalidError {
                subset: subset.to_vec(),
                error,
            });
        }
        Ok(error)
    };

    let first = most_correlated(candidates, target)?;
    let mut selected = vec![first];
    let mut current = evaluate(&selected)?;
    let mut error_history = vec![current];
    let mut trace = vec![TraceRow {
        num_vars: 1,
        added_feature: names[first].clone(),
        error: current,
        accepted: true,
    }];

    let terminated_by = loop {
        if selected.len() == n {
            break Termination::Exhausted;
        }
        if selected.len() >= limit {
            break Termination::MaxFeatures;
        }
        let remaining: Vec<usize> = (0..n).filter(|j| !selected.contains(j)).collect();
        let scores: Vec<f64> = remaining
            .par_iter()
            .map(|&j| {
                let mut trial = selected.clone();
                trial.push(j);
                evaluate(&trial)
            })
            .collect::<Result<_, _>>()?;

        let (best_pos, best_error) =
            scores
                .iter()
                .enumerate()
                .fold((0, f64::INFINITY), |acc, (i, &e)| if e < acc.1 { (i, e) } else { acc });
        let candidate = remaining[best_pos];
        let accepted = best_error < current - IMPROVEMENT_TOLERANCE;
        trace.push(TraceRow {
            num_vars: selected.len() + 1,
            added_feature: names[candidate].clone(),
            error: best_error,
            accepted,
        });
        if !accepted {
            break Termination::NoImprovement;
        }
        log::debug!("selected {} (error {best_error:.4})", names[candidate]);
        selected.push(candidate);
        current = best_error;
        error_history.push(current);
    };

    Ok(FeatureSubset {
        names: selected.iter().map(|&j| names[j].clone()).collect(),
        selected,
        error_history,
        terminated_by,
        trace,
    })
}

/// Fraction of rows used for fitting; the rest is the validation tail.
pub const EVALUATOR_FIT_FRACTION: f64 = 0.8;

/// Scores a column subset by training a reduced DBN on the first 80% of the
/// rows and measuring misclassification on the remaining 20%.
#[derive(Debug, Clone)]
pub struct DbnEvaluator {
    fit: Dataset,
    validation: Dataset,
    config: TrainConfig,
}

impl DbnEvaluator {
    pub fn new(data: &Dataset, base: &TrainConfig) -> Result<Self, DbnError> {
        let cut = (data.len() as f64 * EVALUATOR_FIT_FRACTION).floor() as usize;
        if cut < 2 || cut == data.len() {
            return Err(DbnError::EmptyTrainingSet);
        }
        Ok(Self {
            fit: data.rows(0..cut),
            validation: data.rows(cut..data.len()),
            config: Self::reduced_config(base),
        })
    }

    /// The base configuration with 10 pretraining and 50 fine-tuning epochs.
    pub fn reduced_config(base: &TrainConfig) -> TrainConfig {
        TrainConfig {
            pretrain_epochs: 10,
            finetune_max_iters: 50,
            ..base.clone()
        }
    }

    pub fn evaluate(&self, subset: &[usize]) -> Result<f64, DbnError> {
        let (model, _) = train_dbn(&self.fit, subset, &self.config)?;
        model.error_rate(&self.validation)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("x{i}")).collect()
    }

    #[test]
    fn pearson_examples() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        // Deviations (-1.5,-0.5,0.5,1.5) and (-1.5,0.5,-0.5,1.5): 4 / 5.
        assert!((pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap() - 0.8).abs() < 1e-15);
        assert!(matches!(
            pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(FeatureError::UndefinedCorrelation)
        ));
        assert!(matches!(pearson(&[1.0], &[1.0]), Err(FeatureError::TooFewSamples(1))));
    }

    const TABLE: [f64; 17] = [
        0.2400, 0.2010, 0.1900, 0.1880, 0.1680, 0.1590, 0.1550, 0.1500, 0.1460, 0.1420, 0.1390, 0.1360, 0.1330, 0.1300,
        0.1280, 0.1250, 0.1250,
    ];

    #[test]
    fn lag_progression_stops_when_error_stalls() {
        // Candidates are 8 power lags then 9 temperature lags; the mock
        // evaluator rewards adding them in order, as in the window study.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rows = 50;
        let target: Vec<f64> = (0..rows).map(|_| rng.random()).collect();
        let cols = Array2::from_shape_fn((rows, 17), |(i, j)| target[i] + (j as f64) * rng.random::<f64>());
        let mut labels: Vec<String> = (0..8).map(|k| format!("P[t-{k}]")).collect();
        labels.extend((0..9).map(|k| format!("T[t-{k}]")));
        let evaluator = |subset: &[usize]| -> Result<f64, std::convert::Infallible> {
            let k = subset.len();
            let is_prefix = subset.iter().all(|&j| j < k);
            Ok(if is_prefix { TABLE[k - 1] } else { 0.5 })
        };
        let result = greedy_select(cols.view(), &labels, &target, evaluator, None).unwrap();
        assert_eq!(result.selected, (0..16).collect::<Vec<_>>());
        assert_eq!(result.error_history, TABLE[..16].to_vec());
        assert_eq!(result.terminated_by, Termination::NoImprovement);
        let last = result.trace.last().unwrap();
        assert_eq!(
            (last.num_vars, last.added_feature.as_str(), last.accepted),
            (17, "T[t-8]", false)
        );

        let mut buf = Vec::new();
        result.write_trace_csv(&mut buf, "seed=0").unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[1], "num_vars,added_feature,error_pct");
        assert_eq!(lines[2], "1,P[t-0],24");
        assert_eq!(lines[3], "2,P[t-1],20.1");
        assert_eq!(lines.len(), 2 + 17);
    }

    #[test]
    fn single_candidate_is_evaluated_once() {
        let calls = AtomicUsize::new(0);
        let cols = Array2::from_shape_vec((3, 1), vec![1.0, 2.0, 4.0]).unwrap();
        let result = greedy_select(
            cols.view(),
            &names(1),
            &[0.0, 1.0, 1.0],
            |_: &[usize]| -> Result<f64, std::convert::Infallible> {
                calls.fetch_add(1, Ordering::SeqCst);
                Ok(0.3)
            },
            None,
        )
        .unwrap();
        assert_eq!(result.selected, vec![0]);
        assert_eq!(result.terminated_by, Termination::Exhausted);
        assert_eq!(calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn evaluator_failure_names_subset() {
        let cols = Array2::from_shape_vec((3, 2), vec![1.0, 0.0, 2.0, 1.0, 3.0, 0.0]).unwrap();
        let err = greedy_select(
            cols.view(),
            &names(2),
            &[1.0, 2.0, 3.0],
            |s: &[usize]| if s.len() > 1 { Err("boom") } else { Ok(0.5) },
            None,
        )
        .unwrap_err();
        assert!(
            matches!(err, FeatureError::Evaluator { ref subset, .. } if subset == &vec![0, 1]),
            "{err}"
        );
    }

    #[test]
    fn max_features_caps_the_subset() {
        let cols = Array2::from_shape_fn((10, 5), |(i, j)| (i * (j + 1)) as f64 + (i * j % 3) as f64);
        let target: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let result = greedy_select(
            cols.view(),
            &names(5),
            &target,
            |s: &[usize]| -> Result<f64, std::convert::Infallible> { Ok(1.0 / (1.0 + s.len() as f64)) },
            Some(3),
        )
        .unwrap();
        assert_eq!(result.selected.len(), 3);
        assert_eq!(result.terminated_by, Termination::MaxFeatures);
    }

    /// Least-squares fit on the first 80% of rows, then the fraction of
    /// validation rows whose thresholded prediction has the wrong class.
    fn ols_misclassification(x: &Array2<f64>, y: &[f64], subset: &[usize]) -> f64 {
        let n = x.nrows();
        let cut = n * 4 / 5;
        let p = subset.len() + 1;
        let design = |i: usize| -> Vec<f64> {
            let mut row = vec![1.0];
            row.extend(subset.iter().map(|&j| x[[i, j]]));
            row
        };
        let mut a = vec![vec![0.0; p + 1]; p];
        for (i, yi) in y.iter().enumerate().take(cut) {
            let d = design(i);
            for (r, row) in a.iter_mut().enumerate() {
                for (c, cell) in row.iter_mut().take(p).enumerate() {
                    *cell += d[r] * d[c];
                }
                row[p] += d[r] * yi;
            }
        }
        for col in 0..p {
            let pivot = (col..p)
                .max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))
                .unwrap();
            a.swap(col, pivot);
            let pivot_row = a[col].clone();
            for (r, row) in a.iter_mut().enumerate() {
                if r != col {
                    let f = row[col] / pivot_row[col];
                    for (cell, pv) in row.iter_mut().zip(&pivot_row).skip(col) {
                        *cell -= f * pv;
                    }
                }
            }
        }
        let beta: Vec<f64> = (0..p).map(|r| a[r][p] / a[r][r]).collect();
        let class = |v: f64| (v > 0.5) as i8 - (v < -0.5) as i8;
        let wrong = (cut..n)
            .filter(|&i| {
                let pred: f64 = design(i).iter().zip(&beta).map(|(d, b)| d * b).sum();
                class(pred) != class(y[i])
            })
            .count();
        wrong as f64 / (n - cut) as f64
    }

    #[test]
    fn relevant_features_found_and_match_exhaustive_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 400;
        let x = Array2::from_shape_fn((n, 10), |_| rng.random_range(-1.0..1.0));
        // Relevant columns sit at 3 and 7 among noise.
        let target: Vec<f64> = (0..n).map(|i| x[[i, 3]] + x[[i, 7]]).collect();
        let eval = |s: &[usize]| -> Result<f64, std::convert::Infallible> { Ok(ols_misclassification(&x, &target, s)) };
        let result = greedy_select(x.view(), &names(10), &target, eval, None).unwrap();
        assert!(
            result.selected.contains(&3) && result.selected.contains(&7),
            "{:?}",
            result.selected
        );
        assert_eq!(result.terminated_by, Termination::NoImprovement);
        assert!(result.error_history.windows(2).all(|w| w[1] < w[0]));

        let mut best = f64::INFINITY;
        for mask in 1u32..(1 << 10) {
            let subset: Vec<usize> = (0..10).filter(|j| mask & (1 << j) != 0).collect();
            best = best.min(ols_misclassification(&x, &target, &subset));
        }
        assert_eq!(result.final_error(), best);
        // No noise column improves on the two relevant ones.
        let relevant = ols_misclassification(&x, &target, &[3, 7]);
        for noise in (0..10).filter(|j| *j != 3 && *j != 7) {
            assert!(ols_misclassification(&x, &target, &[3, 7, noise]) >= relevant);
        }
    }

    proptest! {
        #[test]
        fn selection_invariants(seed in 0u64..500, n_cols in 1usize..7) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cols = Array2::from_shape_fn((12, n_cols), |_| rng.random_range(-1.0..1.0));
            let target: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
            let weights: Vec<f64> = (0..n_cols).map(|_| rng.random_range(0.0..0.2)).collect();
            let eval = |s: &[usize]| -> Result<f64, std::convert::Infallible> {
                let hit: f64 = s.iter().map(|&j| weights[j]).sum();
                Ok((0.9 - hit + 0.03 * s.len() as f64).clamp(0.0, 1.0))
            };
            let a = greedy_select(cols.view(), &names(n_cols), &target, eval, None).unwrap();
            let b = greedy_select(cols.view(), &names(n_cols), &target, eval, None).unwrap();
            prop_assert_eq!(&a, &b);

            let mut seen = a.selected.clone();
            seen.sort_unstable();
            seen.dedup();
            prop_assert_eq!(seen.len(), a.selected.len());
            prop_assert!(a.error_history.windows(2).all(|w| w[1] < w[0] - IMPROVEMENT_TOLERANCE));

            let rs: Vec<f64> = cols
                .columns()
                .into_iter()
                .map(|c| pearson(&c.to_vec(), &target).map(f64::abs).unwrap_or(-1.0))
                .collect();
            let max = rs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(rs[a.selected[0]] >= max - IMPROVEMENT_TOLERANCE);
            prop_assert!(rs[..a.selected[0]].iter().all(|&r| r < max - IMPROVEMENT_TOLERANCE));
        }
    }
}
