//! Open-set metrics: AUROC of a known-ness score, macro-F1 over the known
//! classes plus "unknown", and closed-set accuracy.

use serde::{Deserialize, Serialize};

use crate::datagen::{Label, OpenSetDataset};
use crate::error::{Error, Result};
use crate::model::{predict_classes, ModelBundle};
use crate::numerics::{softmax_rows, Scalar};

/// Per-sample known-ness score; higher means more likely known.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreKind {
    #[default]
    MaxLogit,
    MaxSoftmax,
    Detector,
}

impl ScoreKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::MaxLogit => "max-logit",
            Self::MaxSoftmax => "max-softmax",
            Self::Detector => "detector",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPredictions {
    pub scores: Vec<f64>,
    /// Argmax of the classifier logits.
    pub predicted: Vec<usize>,
    pub truth: Vec<Label>,
    pub kind: ScoreKind,
    /// Largest logit per sample, whatever the score kind.
    pub max_logits: Vec<f64>,
}

fn row_max<T: Scalar>(row: &[T]) -> f64 {
    row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.as_f64()))
}

/// Scores every sample of `data` with `bundle`.
pub fn score_dataset<T: Scalar>(bundle: &ModelBundle<T>, data: &OpenSetDataset<T>, kind: ScoreKind) -> Result<ScoredPredictions> {
    let out = bundle.predict(data.features())?;
    let max_logits: Vec<f64> = (0..out.logits.rows()).map(|i| row_max(out.logits.row(i))).collect();
    let scores = match kind {
        ScoreKind::MaxLogit => max_logits.clone(),
        ScoreKind::MaxSoftmax => {
            let p = softmax_rows(&out.logits);
            (0..p.rows()).map(|i| row_max(p.row(i))).collect()
        }
        ScoreKind::Detector => out.detector.data().iter().map(|v| v.as_f64()).collect(),
    };
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Evaluation(format!("non-finite {} score", kind.name())));
    }
    Ok(ScoredPredictions {
        scores,
        predicted: predict_classes(&out.logits),
        truth: data.labels().to_vec(),
        kind,
        max_logits,
    })
}

/// Probability that a random known sample outscores a random unknown one,
/// ties counting one half; computed from midranks.
pub fn auroc(scores: &[f64], is_known: &[bool]) -> Result<f64> {
    if scores.len() != is_known.len() {
        return Err(Error::validation("auroc", "scores and flags differ in length"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Evaluation("non-finite score".into()));
    }
    let n_known = is_known.iter().filter(|&&k| k).count();
    let n_unknown = scores.len() - n_known;
    if n_known == 0 || n_unknown == 0 {
        return Err(Error::UndefinedMetric {
            metric: "auroc",
            reason: "needs both known and unknown samples".into(),
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1..=j+1 share their mean.
        let mid = (i + j + 2) as f64 / 2.0;
        rank_sum += mid * order[i..=j].iter().filter(|&&r| is_known[r]).count() as f64;
        i = j + 1;
    }
    let (n1, n0) = (n_known as f64, n_unknown as f64);
    Ok((rank_sum - n1 * (n1 + 1.0) / 2.0) / (n1 * n0))
}

/// Macro-F1 over `classes` known classes plus the unknown class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroF1 {
    pub value: f64,
    /// F1 per class; index `classes` is the unknown class.
    pub per_class: Vec<f64>,
    /// Classes absent from both predictions and truth (scored 0).
    pub absent: Vec<usize>,
}

/// Predictions with rejection: `score < tau` means unknown, otherwise the
/// argmax class. The unknown class has index `classes`.
pub fn open_set_predictions(scores: &[f64], predicted: &[usize], classes: usize, tau: f64) -> Vec<usize> {
    scores
        .iter()
        .zip(predicted)
        .map(|(&s, &p)| if s < tau { classes } else { p })
        .collect()
}

fn label_index(label: Label, classes: usize) -> usize {
    match label {
        Label::Known(c) => c,
        Label::Unknown { .. } => classes,
    }
}

pub fn macro_f1(scores: &[f64], predicted: &[usize], truth: &[Label], classes: usize, tau: f64) -> Result<MacroF1> {
    if scores.is_empty() {
        return Err(Error::validation("macro_f1", "empty input"));
    }
    if scores.len() != predicted.len() || scores.len() != truth.len() {
        return Err(Error::validation("macro_f1", "inputs differ in length"));
    }
    let preds = open_set_predictions(scores, predicted, classes, tau);
    let k = classes + 1;
    let mut tp = vec![0usize; k];
    let mut pred_count = vec![0usize; k];
    let mut true_count = vec![0usize; k];
    for (&p, &t) in preds.iter().zip(truth) {
        let t = label_index(t, classes);
        if p >= k || t >= k {
            return Err(Error::validation("macro_f1", "class index out of range"));
        }
        pred_count[p] += 1;
        true_count[t] += 1;
        if p == t {
            tp[p] += 1;
        }
    }
    let mut per_class = Vec::with_capacity(k);
    let mut absent = Vec::new();
    for c in 0..k {
        let denom = pred_count[c] + true_count[c];
        if denom == 0 {
            absent.push(c);
            per_class.push(0.0);
        } else {
            per_class.push(2.0 * tp[c] as f64 / denom as f64);
        }
    }
    Ok(MacroF1 {
        value: per_class.iter().sum::<f64>() / k as f64,
        per_class,
        absent,
    })
}

/// Fraction of known-truth samples whose argmax equals the truth.
pub fn closed_set_accuracy(predicted: &[usize], truth: &[Label]) -> Result<f64> {
    let mut total = 0usize;
    let mut hits = 0usize;
    for (&p, &t) in predicted.iter().zip(truth) {
        if let Label::Known(c) = t {
            total += 1;
            hits += usize::from(p == c);
        }
    }
    if total == 0 {
        return Err(Error::UndefinedMetric {
            metric: "accuracy",
            reason: "no known-truth samples".into(),
        });
    }
    Ok(hits as f64 / total as f64)
}

/// Threshold that keeps the `retention` fraction of `scores` (score ≥ τ).
pub fn calibrate_threshold(scores: &[f64], retention: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::validation("calibration", "no validation scores"));
    }
    if !(retention > 0.0 && retention <= 1.0) {
        return Err(Error::validation("retention", "must lie in (0, 1]"));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    if retention == 1.0 {
        let min = sorted[0];
        return Ok(min - 1e-9 * (1.0 + min.abs()));
    }
    let m = ((1.0 - retention) * sorted.len() as f64).floor() as usize;
    Ok(sorted[m.min(sorted.len() - 1)])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOptions {
    pub score_kind: ScoreKind,
    /// Known-retention rate used to calibrate the rejection threshold on
    /// training scores.
    pub retention: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            score_kind: ScoreKind::MaxLogit,
            retention: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub score_kind: ScoreKind,
    pub tau: f64,
    pub auroc: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
    /// Mean largest logit over truly unknown test samples.
    pub unknown_max_logit: f64,
    pub absent_classes: Vec<usize>,
}

/// Scores `test`, calibrating τ on the known training samples under the
/// same model.
pub fn evaluate<T: Scalar>(
    bundle: &ModelBundle<T>,
    test: &OpenSetDataset<T>,
    train: &OpenSetDataset<T>,
    options: &EvalOptions,
) -> Result<EvalReport> {
    let calib = score_dataset(bundle, train, options.score_kind)?;
    let tau = calibrate_threshold(&calib.scores, options.retention)?;
    let scored = score_dataset(bundle, test, options.score_kind)?;
    let known: Vec<bool> = scored.truth.iter().map(|l| l.is_known()).collect();
    let f1 = macro_f1(&scored.scores, &scored.predicted, &scored.truth, test.known_classes(), tau)?;
    let unknown: Vec<f64> = scored
        .max_logits
        .iter()
        .zip(&known)
        .filter(|(_, &k)| !k)
        .map(|(&v, _)| v)
        .collect();
    Ok(EvalReport {
        score_kind: options.score_kind,
        tau,
        auroc: auroc(&scored.scores, &known)?,
        macro_f1: f1.value,
        accuracy: closed_set_accuracy(&scored.predicted, &scored.truth)?,
        unknown_max_logit: unknown.iter().sum::<f64>() / unknown.len().max(1) as f64,
        absent_classes: f1.absent,
    })
}
