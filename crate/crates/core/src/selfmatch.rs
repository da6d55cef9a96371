//! Test-set partition, sample-level weights and the self-matching losses.
//!
//! The objective couples four terms over one shared extractor pass:
//!
//! * classifier loss: cross-entropy on pseudo-labelled known rows plus
//!   injected labelled training rows,
//! * adversarial matching loss: weighted binary cross-entropy of the matcher,
//!   target 1 on known and injected rows, target 0 on uncertain rows,
//! * detection loss: binary cross-entropy of the detector, target 1 on known
//!   and injected rows, target 0 on pseudo-unknown rows,
//! * margin loss: hinge `max(0, λ + v)` on every logit of pseudo-unknown rows.
//!
//! The matcher minimises its loss while the extractor maximises it; a
//! gradient-reversal node between the features and the matcher lets a
//! single backward pass produce both directions.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BoundModel, ModelBundle};
use crate::numerics::{entropy, softmax_rows, Scalar, Tape, Tensor, Var, PROB_EPS};

/// Which matrix the partition thresholds are compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdDomain {
    #[default]
    Probability,
    Logit,
}

/// Subset a test row was assigned to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Membership {
    /// Known-label set, with its pseudo-label.
    Known(usize),
    Uncertain,
    Unknown,
}

/// Three-way split of a test set for one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition<T> {
    /// Known-label set (T1).
    pub known: Vec<usize>,
    /// Argmax class of each `known` row.
    pub pseudo_labels: Vec<usize>,
    /// Softmax rows of the partitioning classifier, aligned with `known`.
    pub pseudo_dists: Tensor<T>,
    /// Uncertainty set (T2).
    pub uncertain: Vec<usize>,
    /// Unknown-label set (T3).
    pub unknown: Vec<usize>,
    pub membership: Vec<Membership>,
    pub mu: T,
    pub gamma: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PartitionSizes {
    pub known: usize,
    pub uncertain: usize,
    pub unknown: usize,
}

impl<T: Scalar> Partition<T> {
    pub fn sizes(&self) -> PartitionSizes {
        PartitionSizes {
            known: self.known.len(),
            uncertain: self.uncertain.len(),
            unknown: self.unknown.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.membership.len()
    }

    pub fn is_empty(&self) -> bool {
        self.membership.is_empty()
    }
}

fn validate_probability_rows<T: Scalar>(probs: &Tensor<T>) -> Result<()> {
    if probs.cols() < 2 {
        return Err(Error::validation("probabilities", "need at least 2 classes"));
    }
    for i in 0..probs.rows() {
        let row = probs.row(i);
        let total = row.iter().fold(T::zero(), |a, &v| a + v);
        if row.iter().any(|&v| !(v >= T::zero())) || (total - T::one()).abs() > T::of(1e-8) {
            return Err(Error::validation("probabilities", format!("row {i} is not a distribution")));
        }
    }
    Ok(())
}

/// Partitions softmax rows: `max > mu` is known, otherwise `max - min < gamma`
/// is unknown, the rest is uncertain.
pub fn partition_test_set<T: Scalar>(probs: &Tensor<T>, mu: T, gamma: T) -> Result<Partition<T>> {
    for (name, v) in [("mu", mu), ("gamma", gamma)] {
        if !(v > T::zero() && v < T::one()) {
            return Err(Error::validation(name, "must lie in (0, 1)"));
        }
    }
    validate_probability_rows(probs)?;
    Ok(partition_scores(probs, probs, mu, gamma))
}

/// Partitions from raw logits with thresholds applied in `domain`.
pub fn partition_logits<T: Scalar>(logits: &Tensor<T>, mu: T, gamma: T, domain: ThresholdDomain) -> Result<Partition<T>> {
    let probs = softmax_rows(logits);
    match domain {
        ThresholdDomain::Probability => partition_test_set(&probs, mu, gamma),
        ThresholdDomain::Logit => {
            if !(gamma > T::zero()) || !mu.is_finite() {
                return Err(Error::validation("thresholds", "gamma must be positive and mu finite"));
            }
            Ok(partition_scores(logits, &probs, mu, gamma))
        }
    }
}

fn partition_scores<T: Scalar>(scores: &Tensor<T>, probs: &Tensor<T>, mu: T, gamma: T) -> Partition<T> {
    let mut known = Vec::new();
    let mut pseudo_labels = Vec::new();
    let mut uncertain = Vec::new();
    let mut unknown = Vec::new();
    let mut membership = Vec::with_capacity(scores.rows());
    for i in 0..scores.rows() {
        let row = scores.row(i);
        let mut arg = 0;
        let mut max = row[0];
        let mut min = row[0];
        for (j, &v) in row.iter().enumerate().skip(1) {
            if v > max {
                max = v;
                arg = j;
            }
            if v < min {
                min = v;
            }
        }
        if max > mu {
            known.push(i);
            pseudo_labels.push(arg);
            membership.push(Membership::Known(arg));
        } else if max - min < gamma {
            unknown.push(i);
            membership.push(Membership::Unknown);
        } else {
            uncertain.push(i);
            membership.push(Membership::Uncertain);
        }
    }
    Partition {
        pseudo_dists: probs.select_rows(&known),
        known,
        pseudo_labels,
        uncertain,
        unknown,
        membership,
        mu,
        gamma,
    }
}

/// Per-row importance weights of the adversarial matching loss. Both vectors
/// have one entry per row of the input; the loss reads `omega_s` on known and
/// injected rows and `omega_t` on uncertain rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleWeights<T> {
    pub omega_s: Vec<T>,
    pub omega_t: Vec<T>,
}

/// `ω^s = clamp(H(ŷ)/log K − d′)`, `ω^t = clamp(d′ − H(ŷ)/log K)`, both
/// clamped into `[0, 1]`. `swap_signs` exchanges the two formulas.
pub fn compute_weights<T: Scalar>(y_hat: &Tensor<T>, d_prime: &[T], swap_signs: bool) -> Result<SampleWeights<T>> {
    let k = y_hat.cols();
    if k < 2 {
        return Err(Error::validation("classes", "weights need at least 2 classes"));
    }
    if d_prime.len() != y_hat.rows() {
        return Err(Error::Shape {
            op: "compute_weights",
            lhs: y_hat.shape().to_vec(),
            rhs: vec![d_prime.len()],
        });
    }
    let log_k = T::of_usize(k).ln();
    let clamp = |v: T| v.max(T::zero()).min(T::one());
    let mut omega_s = Vec::with_capacity(d_prime.len());
    let mut omega_t = Vec::with_capacity(d_prime.len());
    for (i, &d) in d_prime.iter().enumerate() {
        let h = entropy(y_hat.row(i))? / log_k;
        let (s, t) = if swap_signs { (d - h, h - d) } else { (h - d, d - h) };
        omega_s.push(clamp(s));
        omega_t.push(clamp(t));
    }
    Ok(SampleWeights { omega_s, omega_t })
}

fn zero<'t, T: Scalar>(tape: &'t Tape<T>) -> Var<'t, T> {
    tape.scalar(T::zero())
}

/// Mean cross-entropy of the selected rows against `labels`.
fn mean_cross_entropy<'t, T: Scalar>(logits: Var<'t, T>, rows: &[usize], labels: &[usize]) -> Result<Var<'t, T>> {
    let picked = logits.select_rows(rows)?.log_softmax_rows().gather(labels)?;
    Ok(picked.mean().neg())
}

/// Classifier loss on the known-label set alone.
pub fn loss_classifier_plain<'t, T: Scalar>(logits: Var<'t, T>, known: &[usize], pseudo: &[usize]) -> Result<Var<'t, T>> {
    if known.is_empty() {
        return Ok(zero(logits.tape()));
    }
    mean_cross_entropy(logits, known, pseudo)
}

/// Mean cross-entropy over pseudo-labelled rows plus mean cross-entropy over
/// injected rows. An empty side contributes nothing.
pub fn loss_classifier<'t, T: Scalar>(
    logits: Var<'t, T>,
    known: &[usize],
    pseudo: &[usize],
    injected: &[usize],
    truth: &[usize],
) -> Result<Var<'t, T>> {
    match (known.is_empty(), injected.is_empty()) {
        (true, true) => {
            warn!("classifier loss has no rows; contributing 0");
            Ok(zero(logits.tape()))
        }
        (false, true) => mean_cross_entropy(logits, known, pseudo),
        (true, false) => mean_cross_entropy(logits, injected, truth),
        (false, false) => mean_cross_entropy(logits, known, pseudo)?.add(mean_cross_entropy(logits, injected, truth)?),
    }
}

/// `−E_pos w log p − E_neg w log(1 − p)` over a column of probabilities; a
/// missing weight vector means weight 1.
fn weighted_bce<'t, T: Scalar>(
    scores: Var<'t, T>,
    pos: &[usize],
    pos_weights: Option<&[T]>,
    neg: &[usize],
    neg_weights: Option<&[T]>,
) -> Result<Var<'t, T>> {
    let tape = scores.tape();
    let eps = T::of(PROB_EPS);
    let weighted = |v: Var<'t, T>, w: Option<&[T]>| -> Result<Var<'t, T>> {
        match w {
            Some(w) => v.mul(tape.constant(Tensor::column(w.to_vec()))),
            None => Ok(v),
        }
    };
    let mut total = zero(tape);
    if !pos.is_empty() {
        let p = scores.select_rows(pos)?.clamp(eps, T::one() - eps);
        total = total.sub(weighted(p.log_floor(eps), pos_weights)?.mean())?;
    }
    if !neg.is_empty() {
        let p = scores.select_rows(neg)?.clamp(eps, T::one() - eps);
        let q = p.neg().add_scalar(T::one());
        total = total.sub(weighted(q.log_floor(eps), neg_weights)?.mean())?;
    }
    Ok(total)
}

/// Detector loss: target 1 on `known_rows` (known plus injected), target 0 on
/// pseudo-unknown rows.
pub fn loss_detector<'t, T: Scalar>(d_prime: Var<'t, T>, known_rows: &[usize], unknown_rows: &[usize]) -> Result<Var<'t, T>> {
    weighted_bce(d_prime, known_rows, None, unknown_rows, None)
}

/// Weighted matcher loss. `omega_s` aligns with `source_rows`, `omega_t` with
/// `target_rows`; weights are constants.
pub fn loss_adversarial<'t, T: Scalar>(
    d: Var<'t, T>,
    source_rows: &[usize],
    omega_s: &[T],
    target_rows: &[usize],
    omega_t: &[T],
) -> Result<Var<'t, T>> {
    if omega_s.len() != source_rows.len() || omega_t.len() != target_rows.len() {
        return Err(Error::validation("weights", "must align with their rows"));
    }
    weighted_bce(d, source_rows, Some(omega_s), target_rows, Some(omega_t))
}

/// `(1/N) Σ_i Σ_k max(0, λ + v_ik)` over the selected rows.
pub fn loss_margin<'t, T: Scalar>(logits: Var<'t, T>, rows: &[usize], lambda: T) -> Result<Var<'t, T>> {
    if rows.is_empty() {
        return Ok(zero(logits.tape()));
    }
    let n = T::of_usize(rows.len());
    Ok(logits
        .select_rows(rows)?
        .add_scalar(lambda)
        .relu()
        .sum()
        .scale(T::one() / n))
}

/// Settings that shape the assembled objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveConfig<T> {
    pub lambda: T,
    /// Gradient-reversal coefficient between the features and the matcher.
    pub reversal: T,
    pub enable_margin: bool,
    pub swap_weight_signs: bool,
}

impl<T: Scalar> Default for ObjectiveConfig<T> {
    fn default() -> Self {
        Self {
            lambda: T::of(2.0),
            reversal: T::one(),
            enable_margin: true,
            swap_weight_signs: false,
        }
    }
}

/// Rows of one optimisation step. Indices refer to rows of `inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveBatch<T> {
    pub inputs: Tensor<T>,
    pub known: Vec<usize>,
    pub pseudo_labels: Vec<usize>,
    pub uncertain: Vec<usize>,
    pub unknown: Vec<usize>,
    pub injected: Vec<usize>,
    pub injected_labels: Vec<usize>,
}

impl<T: Scalar> ObjectiveBatch<T> {
    /// Stacks the given test rows (classified by `partition`) on top of the
    /// injected labelled rows.
    pub fn new(
        test_features: &Tensor<T>,
        test_rows: &[usize],
        partition: &Partition<T>,
        injected: Option<(&Tensor<T>, &[usize])>,
    ) -> Result<Self> {
        let mut batch = Self {
            inputs: test_features.select_rows(test_rows),
            known: Vec::new(),
            pseudo_labels: Vec::new(),
            uncertain: Vec::new(),
            unknown: Vec::new(),
            injected: Vec::new(),
            injected_labels: Vec::new(),
        };
        for (pos, &row) in test_rows.iter().enumerate() {
            match partition.membership[row] {
                Membership::Known(c) => {
                    batch.known.push(pos);
                    batch.pseudo_labels.push(c);
                }
                Membership::Uncertain => batch.uncertain.push(pos),
                Membership::Unknown => batch.unknown.push(pos),
            }
        }
        if let Some((x, labels)) = injected {
            if x.rows() != labels.len() || (x.rows() > 0 && x.cols() != test_features.cols()) {
                return Err(Error::Shape {
                    op: "objective_batch",
                    lhs: x.shape().to_vec(),
                    rhs: vec![labels.len(), test_features.cols()],
                });
            }
            let offset = test_rows.len();
            let mut data = batch.inputs.data().to_vec();
            data.extend_from_slice(x.data());
            batch.inputs = Tensor::from_vec(&[offset + x.rows(), test_features.cols()], data)?;
            batch.injected = (offset..offset + x.rows()).collect();
            batch.injected_labels = labels.to_vec();
        }
        Ok(batch)
    }

    /// Known rows followed by injected rows.
    pub fn source_rows(&self) -> Vec<usize> {
        self.known.iter().chain(&self.injected).copied().collect()
    }

    pub fn sizes(&self) -> BatchSizes {
        BatchSizes {
            known: self.known.len(),
            uncertain: self.uncertain.len(),
            unknown: self.unknown.len(),
            injected: self.injected.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BatchSizes {
    pub known: usize,
    pub uncertain: usize,
    pub unknown: usize,
    pub injected: usize,
}

/// Loss values of one step or one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub classifier: f64,
    pub adversarial: f64,
    pub detector: f64,
    pub margin: f64,
    /// Sum of the four terms; the scalar that is differentiated.
    pub total: f64,
}

impl LossBreakdown {
    pub fn first_non_finite(&self) -> Option<&'static str> {
        [
            ("classifier", self.classifier),
            ("adversarial", self.adversarial),
            ("detector", self.detector),
            ("margin", self.margin),
            ("total", self.total),
        ]
        .into_iter()
        .find(|(_, v)| !v.is_finite())
        .map(|(name, _)| name)
    }
}

/// Tape handles of every term, built from one extractor pass.
pub struct ObjectiveTerms<'t, T> {
    pub classifier: Var<'t, T>,
    pub adversarial: Var<'t, T>,
    pub detector: Var<'t, T>,
    pub margin: Var<'t, T>,
    pub total: Var<'t, T>,
    pub weights: SampleWeights<T>,
}

impl<T: Scalar> ObjectiveTerms<'_, T> {
    pub fn breakdown(&self) -> LossBreakdown {
        LossBreakdown {
            classifier: self.classifier.item().as_f64(),
            adversarial: self.adversarial.item().as_f64(),
            detector: self.detector.item().as_f64(),
            margin: self.margin.item().as_f64(),
            total: self.total.item().as_f64(),
        }
    }
}

/// Records the full objective on the model's tape.
///
/// With `fixed_weights` the sample weights are taken as given instead of
/// being computed from this pass; finite-difference checks use this to hold
/// them constant.
pub fn objective_terms<'t, T: Scalar>(
    model: &BoundModel<'t, T>,
    batch: &ObjectiveBatch<T>,
    config: &ObjectiveConfig<T>,
    fixed_weights: Option<&SampleWeights<T>>,
) -> Result<ObjectiveTerms<'t, T>> {
    let tape = model.vars()[0].tape();
    let x = tape.constant(batch.inputs.clone());
    let features = model.features(x)?;
    let logits = model.classify(features)?;
    let detector = model.detect(features)?;
    let matcher = model.match_score(features.reverse_gradient(config.reversal))?;

    let weights = match fixed_weights {
        Some(w) => w.clone(),
        None => {
            let probs = softmax_rows(&logits.value());
            let d_prime = detector.value().data().to_vec();
            compute_weights(&probs, &d_prime, config.swap_weight_signs)?
        }
    };

    let source = batch.source_rows();
    let classifier = loss_classifier(logits, &batch.known, &batch.pseudo_labels, &batch.injected, &batch.injected_labels)?;
    let det = loss_detector(detector, &source, &batch.unknown)?;
    let omega_s: Vec<T> = source.iter().map(|&r| weights.omega_s[r]).collect();
    let omega_t: Vec<T> = batch.uncertain.iter().map(|&r| weights.omega_t[r]).collect();
    let adversarial = loss_adversarial(matcher, &source, &omega_s, &batch.uncertain, &omega_t)?;
    let margin = if config.enable_margin {
        loss_margin(model.classify_detached(features)?, &batch.unknown, config.lambda)?
    } else {
        zero(tape)
    };
    let total = classifier.add(adversarial)?.add(det)?.add(margin)?;
    Ok(ObjectiveTerms {
        classifier,
        adversarial,
        detector: det,
        margin,
        total,
        weights,
    })
}

/// Loss values plus one gradient per parameter tensor, in
/// [`ModelBundle::params`] order.
#[derive(Debug, Clone)]
pub struct Objective<T> {
    pub breakdown: LossBreakdown,
    pub gradients: Vec<Tensor<T>>,
    pub weights: SampleWeights<T>,
}

/// Builds the objective and differentiates it once.
///
/// Resulting gradient groups: classifier gets the classifier loss, matcher
/// descends the matching loss, detector gets the detection loss, and the
/// extractor gets classifier − matching + detection + margin. A frozen
/// extractor receives zeros.
pub fn assemble_objective<T: Scalar>(
    bundle: &ModelBundle<T>,
    batch: &ObjectiveBatch<T>,
    config: &ObjectiveConfig<T>,
) -> Result<Objective<T>> {
    let tape = Tape::new();
    let model = bundle.bind(&tape);
    let terms = objective_terms(&model, batch, config, None)?;
    let breakdown = terms.breakdown();
    if let Some(component) = breakdown.first_non_finite() {
        return Err(Error::NonFinite {
            component,
            epoch: 0,
            batch: 0,
        });
    }
    let grads = tape.backward(terms.total)?;
    let gradients = model.vars().iter().map(|&v| grads.wrt(v)).collect();
    Ok(Objective {
        breakdown,
        gradients,
        weights: terms.weights,
    })
}

/// The module objective without injection or margin: classifier loss on the
/// known-label set, matcher on known vs uncertain, detector on known vs
/// unknown.
pub fn plain_objective_terms<'t, T: Scalar>(
    model: &BoundModel<'t, T>,
    batch: &ObjectiveBatch<T>,
    config: &ObjectiveConfig<T>,
) -> Result<(Var<'t, T>, Var<'t, T>, Var<'t, T>)> {
    let tape = model.vars()[0].tape();
    let features = model.features(tape.constant(batch.inputs.clone()))?;
    let logits = model.classify(features)?;
    let detector = model.detect(features)?;
    let matcher = model.match_score(features.reverse_gradient(config.reversal))?;
    let probs = softmax_rows(&logits.value());
    let d_prime = detector.value().data().to_vec();
    let w = compute_weights(&probs, &d_prime, config.swap_weight_signs)?;
    let omega_s: Vec<T> = batch.known.iter().map(|&r| w.omega_s[r]).collect();
    let omega_t: Vec<T> = batch.uncertain.iter().map(|&r| w.omega_t[r]).collect();
    Ok((
        loss_classifier_plain(logits, &batch.known, &batch.pseudo_labels)?,
        loss_adversarial(matcher, &batch.known, &omega_s, &batch.uncertain, &omega_t)?,
        loss_detector(detector, &batch.known, &batch.unknown)?,
    ))
}
