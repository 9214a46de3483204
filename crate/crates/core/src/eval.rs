//! Four-way outcome scoring of ramp forecasts and pairwise ROC analysis.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use thiserror::Error;

use crate::data::RampLabel;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{predicted} predictions for {actual} actual labels")]
    LengthMismatch { predicted: usize, actual: usize },
    #[error("label {value} at index {index} is not one of -1, 0, 1")]
    LabelOutOfDomain { index: usize, value: i64 },
    #[error("no samples to score")]
    Empty,
    #[error("outcome counts do not partition the total ({sum} != {total})")]
    NotAPartition { sum: usize, total: usize },
    #[error("class '{0}' does not occur in the actual labels")]
    MissingClass(&'static str),
    #[error("unknown ROC pair '{0}'")]
    UnknownPair(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub fn labels_from_values(values: &[i64]) -> Result<Vec<RampLabel>, EvalError> {
    values
        .iter()
        .enumerate()
        .map(|(index, &value)| {
            i8::try_from(value)
                .ok()
                .and_then(RampLabel::from_value)
                .ok_or(EvalError::LabelOutOfDomain { index, value })
        })
        .collect()
}

/// Correct, missed, false-alarm and reversed predictions. Every sample falls
/// in exactly one of the four.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OutcomeCounts {
    pub total: usize,
    pub correct: usize,
    pub missed: usize,
    pub false_alarm: usize,
    pub reversed: usize,
}

impl OutcomeCounts {
    pub fn check_partition(&self) -> Result<(), EvalError> {
        let sum = self.correct + self.missed + self.false_alarm + self.reversed;
        if sum != self.total {
            return Err(EvalError::NotAPartition { sum, total: self.total });
        }
        Ok(())
    }
}

pub fn count_outcomes(predicted: &[RampLabel], actual: &[RampLabel]) -> Result<OutcomeCounts, EvalError> {
    if predicted.len() != actual.len() {
        return Err(EvalError::LengthMismatch {
            predicted: predicted.len(),
            actual: actual.len(),
        });
    }
    let mut counts = OutcomeCounts {
        total: actual.len(),
        ..Default::default()
    };
    for (&p, &a) in predicted.iter().zip(actual) {
        match (a.is_ramp(), p.is_ramp()) {
            _ if p == a => counts.correct += 1,
            (true, false) => counts.missed += 1,
            (false, true) => counts.false_alarm += 1,
            // Both ramps, opposite signs.
            _ => counts.reversed += 1,
        }
    }
    Ok(counts)
}

/// Outcome fractions of the total; they sum to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    /// P: correct predictions.
    pub correct: f64,
    /// F: ramps predicted as no ramp.
    pub missed: f64,
    /// E1: no ramp predicted as a ramp.
    pub false_alarm: f64,
    /// E2: ramps predicted with the opposite direction.
    pub reversed: f64,
}

pub fn metrics(counts: &OutcomeCounts) -> Result<MetricsReport, EvalError> {
    if counts.total == 0 {
        return Err(EvalError::Empty);
    }
    counts.check_partition()?;
    let n = counts.total as f64;
    Ok(MetricsReport {
        correct: counts.correct as f64 / n,
        missed: counts.missed as f64 / n,
        false_alarm: counts.false_alarm as f64 / n,
        reversed: counts.reversed as f64 / n,
    })
}

impl MetricsReport {
    pub fn sum(&self) -> f64 {
        self.correct + self.missed + self.false_alarm + self.reversed
    }
}

pub const METRICS_HEADER: &str = "model,quarter,miss_pct,correct_pct,false_pct,reversed_pct";

/// One metrics row in percent, in the column order of [`METRICS_HEADER`].
pub fn metrics_csv_row(model: &str, quarter: &str, m: &MetricsReport) -> String {
    format!(
        "{model},{quarter},{},{},{},{}",
        100.0 * m.missed,
        100.0 * m.correct,
        100.0 * m.false_alarm,
        100.0 * m.reversed
    )
}

/// Which two classes an ROC curve separates. The positive class is listed
/// first except for `DownVsUp`, where up is positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RocPair {
    UpVsNone,
    DownVsNone,
    DownVsUp,
}

impl RocPair {
    pub const ALL: [RocPair; 3] = [RocPair::UpVsNone, RocPair::DownVsNone, RocPair::DownVsUp];

    /// `(positive, negative)`.
    pub fn classes(self) -> (RampLabel, RampLabel) {
        match self {
            RocPair::UpVsNone => (RampLabel::Up, RampLabel::Flat),
            RocPair::DownVsNone => (RampLabel::Down, RampLabel::Flat),
            RocPair::DownVsUp => (RampLabel::Up, RampLabel::Down),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RocPair::UpVsNone => "up-vs-none",
            RocPair::DownVsNone => "down-vs-none",
            RocPair::DownVsUp => "down-vs-up",
        }
    }
}

impl fmt::Display for RocPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RocPair {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RocPair::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| EvalError::UnknownPair(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocPoint {
    /// Score threshold; a sample is called positive when its score is at
    /// least this. The first point uses +∞.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub pair: RocPair,
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// ROC points and trapezoidal AUC for binary scores. Equal scores move the
/// curve together, in one diagonal segment.
pub fn binary_roc(scores: &[f64], positive: &[bool]) -> Result<(Vec<RocPoint>, f64), EvalError> {
    if scores.len() != positive.len() {
        return Err(EvalError::LengthMismatch {
            predicted: scores.len(),
            actual: positive.len(),
        });
    }
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::Empty);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if positive[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let point = RocPoint {
            threshold,
            fpr: fp as f64 / n_neg as f64,
            tpr: tp as f64 / n_pos as f64,
        };
        let prev = points.last().expect("starts with origin");
        auc += (point.fpr - prev.fpr) * (point.tpr + prev.tpr) / 2.0;
        points.push(point);
    }
    Ok((points, auc))
}

/// Pairwise ROC from three-class scores in `[down, none, up]` order. Only
/// samples of the pair's two classes are used; each is scored by the
/// positive-class probability renormalised over the pair.
pub fn roc_curve(scores: &[[f64; 3]], actual: &[RampLabel], pair: RocPair) -> Result<RocCurve, EvalError> {
    if scores.len() != actual.len() {
        return Err(EvalError::LengthMismatch {
            predicted: scores.len(),
            actual: actual.len(),
        });
    }
    let (pos, neg) = pair.classes();
    let mut pair_scores = Vec::new();
    let mut is_pos = Vec::new();
    for (s, &a) in scores.iter().zip(actual) {
        if a != pos && a != neg {
            continue;
        }
        let (p, q) = (s[pos.class_index()], s[neg.class_index()]);
        pair_scores.push(if p + q > 0.0 { p / (p + q) } else { 0.5 });
        is_pos.push(a == pos);
    }
    if !is_pos.contains(&true) {
        return Err(EvalError::MissingClass(pos.class_name()));
    }
    if !is_pos.contains(&false) {
        return Err(EvalError::MissingClass(neg.class_name()));
    }
    let (points, auc) = binary_roc(&pair_scores, &is_pos)?;
    Ok(RocCurve { pair, points, auc })
}

impl RocCurve {
    /// `pair,threshold,fpr,tpr` rows followed by a `# ... auc=` summary line.
    pub fn write_csv<W: Write>(&self, mut out: W, header_comment: &str) -> Result<(), EvalError> {
        writeln!(out, "# {header_comment}")?;
        writeln!(out, "pair,threshold,fpr,tpr")?;
        for p in &self.points {
            let threshold = if p.threshold.is_infinite() {
                "inf".to_string()
            } else {
                p.threshold.to_string()
            };
            writeln!(out, "{},{threshold},{},{}", self.pair, p.fpr, p.tpr)?;
        }
        writeln!(out, "# pair={} auc={}", self.pair, self.auc)?;
        Ok(())
    }
}
