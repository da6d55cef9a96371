//! The adaptation loop: re-partition, inject labelled rows, assemble the
//! objective and step every trainable group, epoch after epoch.

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::{sample_injection_batch, OpenSetDataset};
use crate::error::{Error, Result};
use crate::eval::EvalReport;
use crate::model::{Group, ModelBundle, StartingPoint};
use crate::numerics::{Scalar, Tensor};
use crate::selfmatch::{
    assemble_objective, partition_logits, LossBreakdown, ObjectiveBatch, ObjectiveConfig, Partition, PartitionSizes,
    ThresholdDomain,
};

/// Momentum buffer of one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Velocity<T>(pub Tensor<T>);

impl<T: Scalar> Velocity<T> {
    pub fn zeros_like(t: &Tensor<T>) -> Self {
        Self(Tensor::zeros(t.shape()))
    }
}

/// `v ← momentum·v + g`, then `θ ← θ − lr·v`.
pub fn sgd_update<T: Scalar>(
    param: &mut Tensor<T>,
    grad: &Tensor<T>,
    lr: T,
    momentum: T,
    velocity: &mut Velocity<T>,
) -> Result<()> {
    if !param.same_shape(grad) || !param.same_shape(&velocity.0) {
        return Err(Error::Shape {
            op: "sgd_update",
            lhs: param.shape().to_vec(),
            rhs: grad.shape().to_vec(),
        });
    }
    for ((p, &g), v) in param.data_mut().iter_mut().zip(grad.data()).zip(velocity.0.data_mut()) {
        *v = momentum * *v + g;
        *p = *p - lr * *v;
    }
    Ok(())
}

/// Shuffled index batches covering `0..n` exactly once; the last batch may
/// be short.
pub fn batch_iterator<R: rand::Rng>(n: usize, batch_size: usize, rng: &mut R) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::validation("batch_size", "must be at least 1"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptConfig {
    pub epoch_max: usize,
    pub batch_size: usize,
    /// Labelled training rows added to every batch.
    pub injection_count: usize,
    pub mu: f64,
    pub gamma: f64,
    /// Margin of the logit hinge on pseudo-unknown rows.
    pub lambda: f64,
    pub lr_extractor: f64,
    /// Learning rate of the classifier, matcher and detector.
    pub lr_heads: f64,
    pub momentum: f64,
    pub frozen_extractor: bool,
    pub enable_injection: bool,
    pub enable_margin: bool,
    pub swap_weight_signs: bool,
    pub threshold_domain: ThresholdDomain,
    pub reversal: f64,
    pub convergence_window: usize,
    pub convergence_tolerance: f64,
    pub seed: u64,
}

/// The image-benchmark settings (Cifar10 thresholds). See
/// [`AdaptConfig::desk`] for the blobs scenario.
impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            epoch_max: 30,
            batch_size: 256,
            injection_count: 16,
            mu: 0.5,
            gamma: 0.03,
            lambda: 2.0,
            lr_extractor: 1e-5,
            lr_heads: 0.01,
            momentum: 0.9,
            frozen_extractor: false,
            enable_injection: true,
            enable_margin: true,
            swap_weight_signs: false,
            threshold_domain: ThresholdDomain::Probability,
            reversal: 1.0,
            convergence_window: 5,
            convergence_tolerance: 1e-4,
            seed: 0,
        }
    }
}

impl AdaptConfig {
    /// Profile for the two-dimensional blobs. A small label-smoothed network
    /// is far less confident than an image backbone, so the thresholds sit
    /// higher, and without momentum the extractor tolerates a larger rate.
    pub fn desk() -> Self {
        Self {
            epoch_max: 60,
            mu: 0.9,
            gamma: 0.5,
            lr_extractor: 0.003,
            momentum: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::validation(format!("adapt.{name}"), "must be positive"))
            }
        };
        if self.batch_size == 0 {
            return Err(Error::validation("adapt.batch_size", "must be positive"));
        }
        if self.enable_injection && self.injection_count == 0 {
            return Err(Error::validation("adapt.injection_count", "must be positive when injection is enabled"));
        }
        if self.convergence_window == 0 {
            return Err(Error::validation("adapt.convergence_window", "must be positive"));
        }
        if self.threshold_domain == ThresholdDomain::Probability {
            for (name, v) in [("mu", self.mu), ("gamma", self.gamma)] {
                if !(v > 0.0 && v < 1.0) {
                    return Err(Error::validation(format!("adapt.{name}"), "must lie in (0, 1)"));
                }
            }
        } else {
            positive("gamma", self.gamma)?;
            if !self.mu.is_finite() {
                return Err(Error::validation("adapt.mu", "must be finite"));
            }
        }
        positive("lr_extractor", self.lr_extractor)?;
        positive("lr_heads", self.lr_heads)?;
        positive("reversal", self.reversal)?;
        positive("convergence_tolerance", self.convergence_tolerance)?;
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::validation("adapt.lambda", "must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::validation("adapt.momentum", "must lie in [0, 1)"));
        }
        Ok(())
    }

    fn objective<T: Scalar>(&self) -> ObjectiveConfig<T> {
        ObjectiveConfig {
            lambda: T::of(self.lambda),
            reversal: T::of(self.reversal),
            enable_margin: self.enable_margin,
            swap_weight_signs: self.swap_weight_signs,
        }
    }
}

/// One group's parameter checksums after an epoch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checksums {
    pub extractor: String,
    pub classifier: String,
    pub matcher: String,
    pub detector: String,
}

impl Checksums {
    pub fn of<T: Scalar>(bundle: &ModelBundle<T>) -> Self {
        Self {
            extractor: bundle.checksum(Group::Extractor),
            classifier: bundle.checksum(Group::Classifier),
            matcher: bundle.checksum(Group::Matcher),
            detector: bundle.checksum(Group::Detector),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based index of the finished epoch.
    pub epoch: usize,
    /// Batch-averaged losses.
    pub losses: LossBreakdown,
    /// Partition computed at the start of the epoch.
    pub partition: PartitionSizes,
    pub batches: usize,
    pub metrics: Option<EvalReport>,
    pub checksums: Checksums,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AdaptTrace {
    pub epochs: Vec<EpochRecord>,
    pub converged: bool,
}

/// Called after every epoch with the record so far and the current bundle.
/// The returned report is stored in the record.
pub type EpochObserver<'a, T> = dyn FnMut(&EpochRecord, &ModelBundle<T>) -> Result<Option<EvalReport>> + 'a;

/// True once the relative change of the total loss across the last
/// `window` epochs drops below `tolerance`.
pub fn has_converged(totals: &[f64], window: usize, tolerance: f64) -> bool {
    if window == 0 || totals.len() <= window {
        return false;
    }
    let last = totals[totals.len() - 1];
    let past = totals[totals.len() - 1 - window];
    (last - past).abs() / past.abs().max(f64::MIN_POSITIVE) < tolerance
}

/// Partition of `features` under the bundle's current classifier.
pub fn partition_with<T: Scalar>(bundle: &ModelBundle<T>, features: &Tensor<T>, config: &AdaptConfig) -> Result<Partition<T>> {
    let logits = bundle.logits(features)?;
    partition_logits(&logits, T::of(config.mu), T::of(config.gamma), config.threshold_domain)
}

/// Runs adaptation without per-epoch evaluation.
pub fn run_ossl<T: Scalar>(
    start: &StartingPoint<T>,
    test: &OpenSetDataset<T>,
    train: &OpenSetDataset<T>,
    config: &AdaptConfig,
) -> Result<(ModelBundle<T>, AdaptTrace)> {
    run_ossl_observed(start, test, train, config, &mut |_, _| Ok(None))
}

/// Adapts `start` on the features of `test`; test labels are never read.
pub fn run_ossl_observed<T: Scalar>(
    start: &StartingPoint<T>,
    test: &OpenSetDataset<T>,
    train: &OpenSetDataset<T>,
    config: &AdaptConfig,
    observer: &mut EpochObserver<'_, T>,
) -> Result<(ModelBundle<T>, AdaptTrace)> {
    config.validate()?;
    if test.is_empty() {
        return Err(Error::validation("test", "is empty"));
    }
    if test.dim() != start.arch.input_dim || train.dim() != start.arch.input_dim {
        return Err(Error::validation(
            "data",
            format!("feature dimension does not match the starting point ({})", start.arch.input_dim),
        ));
    }
    if train.known_classes() != start.arch.classes {
        return Err(Error::validation("train", "class count does not match the starting point"));
    }
    if config.enable_injection && config.injection_count > train.len() {
        return Err(Error::validation("adapt.injection_count", "exceeds the training set size"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut bundle = ModelBundle::from_starting_point(start, &mut rng);
    bundle.frozen_extractor = config.frozen_extractor;
    let groups = bundle.groups();
    let mut velocity: Vec<Velocity<T>> = bundle.params().iter().map(|p| Velocity::zeros_like(p.tensor)).collect();
    let objective = config.objective::<T>();
    let momentum = T::of(config.momentum);
    let lr_extractor = T::of(config.lr_extractor);
    let lr_heads = T::of(config.lr_heads);

    let mut trace = AdaptTrace::default();
    let mut totals = Vec::new();
    for epoch in 1..=config.epoch_max {
        let partition = partition_with(&bundle, test.features(), config)?;
        let batches = batch_iterator(test.len(), config.batch_size, &mut rng)?;
        let mut sum = LossBreakdown::default();
        for (b, rows) in batches.iter().enumerate() {
            let injected = if config.enable_injection {
                Some(sample_injection_batch(train, config.injection_count, &mut rng)?)
            } else {
                None
            };
            let batch = ObjectiveBatch::new(
                test.features(),
                rows,
                &partition,
                injected.as_ref().map(|i| (&i.features, i.labels.as_slice())),
            )?;
            let step = assemble_objective(&bundle, &batch, &objective).map_err(|e| match e {
                Error::NonFinite { component, .. } => Error::NonFinite {
                    component,
                    epoch,
                    batch: b,
                },
                other => other,
            })?;
            let params = bundle.params_mut();
            for ((((_, param), grad), vel), &group) in params.into_iter().zip(&step.gradients).zip(&mut velocity).zip(&groups) {
                let lr = match group {
                    Group::Extractor if config.frozen_extractor => continue,
                    Group::Extractor => lr_extractor,
                    _ => lr_heads,
                };
                sgd_update(param, grad, lr, momentum, vel)?;
            }
            let l = step.breakdown;
            sum.classifier += l.classifier;
            sum.adversarial += l.adversarial;
            sum.detector += l.detector;
            sum.margin += l.margin;
            sum.total += l.total;
        }
        let n = batches.len() as f64;
        let losses = LossBreakdown {
            classifier: sum.classifier / n,
            adversarial: sum.adversarial / n,
            detector: sum.detector / n,
            margin: sum.margin / n,
            total: sum.total / n,
        };
        let mut record = EpochRecord {
            epoch,
            losses,
            partition: partition.sizes(),
            batches: batches.len(),
            metrics: None,
            checksums: Checksums::of(&bundle),
        };
        record.metrics = observer(&record, &bundle)?;
        debug!(
            "adapt epoch {epoch}: total {:.6} |T1|={} |T2|={} |T3|={}",
            losses.total, record.partition.known, record.partition.uncertain, record.partition.unknown
        );
        trace.epochs.push(record);
        totals.push(losses.total);
        if has_converged(&totals, config.convergence_window, config.convergence_tolerance) {
            info!("converged after {epoch} epochs");
            trace.converged = true;
            break;
        }
    }
    Ok((bundle, trace))
}
