//! Feature extractor, classifier, adversarial matcher and detector.

use std::fmt;

use log::debug;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adapt::{sgd_update, Velocity};
use crate::datagen::OpenSetDataset;
use crate::error::{Error, Result};
use crate::numerics::{Scalar, Tape, Tensor, Var};

/// Trainable parts of the model, updated with separate learning rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Extractor,
    Classifier,
    Matcher,
    Detector,
}

impl Group {
    pub const ALL: [Group; 4] = [Group::Extractor, Group::Classifier, Group::Matcher, Group::Detector];

    pub fn name(self) -> &'static str {
        match self {
            Group::Extractor => "extractor",
            Group::Classifier => "classifier",
            Group::Matcher => "matcher",
            Group::Detector => "detector",
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Layer sizes. The extractor is `input → extractor_hidden… → feature_dim`
/// with ReLU after every layer; the matcher and detector are
/// `feature_dim → head_hidden → 1` with a sigmoid output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub extractor_hidden: Vec<usize>,
    pub feature_dim: usize,
    pub classes: usize,
    pub head_hidden: usize,
}

impl Architecture {
    pub fn new(input_dim: usize, classes: usize) -> Self {
        Self {
            input_dim,
            extractor_hidden: vec![64, 64],
            feature_dim: 32,
            classes,
            head_hidden: 32,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.feature_dim == 0 || self.head_hidden == 0 {
            return Err(Error::validation("architecture", "layer sizes must be positive"));
        }
        if self.extractor_hidden.contains(&0) {
            return Err(Error::validation("extractor_hidden", "layer sizes must be positive"));
        }
        if self.classes < 2 {
            return Err(Error::validation("classes", "need at least 2 classes"));
        }
        Ok(())
    }

    pub fn extractor_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_dim];
        sizes.extend(&self.extractor_hidden);
        sizes.push(self.feature_dim);
        sizes
    }
}

/// Dense layer `x · W + b` with `W: [in, out]` and `b: [1, out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> Linear<T> {
    /// Uniform fan-in initialisation in `±1/√fan_in`.
    pub fn init<R: Rng>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let mut draw = |n: usize| -> Vec<T> { (0..n).map(|_| T::of(rng.random_range(-bound..bound))).collect() };
        let weight = Tensor::from_vec(&[fan_in, fan_out], draw(fan_in * fan_out)).expect("shape");
        let bias = Tensor::from_vec(&[1, fan_out], draw(fan_out)).expect("shape");
        Self { weight, bias }
    }

    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[fan_in, fan_out]),
            bias: Tensor::zeros(&[1, fan_out]),
        }
    }
}

/// Stack of dense layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    pub layers: Vec<Linear<T>>,
}

impl<T: Scalar> Mlp<T> {
    pub fn init<R: Rng>(sizes: &[usize], rng: &mut R) -> Self {
        Self {
            layers: sizes.windows(2).map(|w| Linear::init(w[0], w[1], rng)).collect(),
        }
    }
}

/// All four trainable parts.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle<T> {
    pub arch: Architecture,
    pub extractor: Mlp<T>,
    pub classifier: Linear<T>,
    pub matcher: Mlp<T>,
    pub detector: Mlp<T>,
    /// When set the extractor is bound as a constant and never updated.
    pub frozen_extractor: bool,
}

/// Borrowed view of one parameter tensor.
pub struct ParamRef<'a, T> {
    pub name: String,
    pub group: Group,
    pub tensor: &'a Tensor<T>,
}

impl<T: Scalar> ModelBundle<T> {
    pub fn init<R: Rng>(arch: Architecture, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        let extractor = Mlp::init(&arch.extractor_sizes(), rng);
        let classifier = Linear::init(arch.feature_dim, arch.classes, rng);
        let heads = [arch.feature_dim, arch.head_hidden, 1];
        let matcher = Mlp::init(&heads, rng);
        let detector = Mlp::init(&heads, rng);
        Ok(Self {
            arch,
            extractor,
            classifier,
            matcher,
            detector,
            frozen_extractor: false,
        })
    }

    /// Bundle whose extractor and classifier come from a starting point and
    /// whose matcher and detector are freshly initialised.
    pub fn from_starting_point<R: Rng>(start: &StartingPoint<T>, rng: &mut R) -> Self {
        let arch = start.arch.clone();
        let heads = [arch.feature_dim, arch.head_hidden, 1];
        Self {
            extractor: start.extractor.clone(),
            classifier: start.classifier.clone(),
            matcher: Mlp::init(&heads, rng),
            detector: Mlp::init(&heads, rng),
            arch,
            frozen_extractor: false,
        }
    }

    /// Parameters in a fixed order: extractor, classifier, matcher, detector.
    pub fn params(&self) -> Vec<ParamRef<'_, T>> {
        let mut out = Vec::new();
        push_mlp(&mut out, Group::Extractor, &self.extractor);
        push_linear(&mut out, Group::Classifier, "classifier".into(), &self.classifier);
        push_mlp(&mut out, Group::Matcher, &self.matcher);
        push_mlp(&mut out, Group::Detector, &self.detector);
        out
    }

    /// Mutable parameters in the same order as [`ModelBundle::params`].
    pub fn params_mut(&mut self) -> Vec<(Group, &mut Tensor<T>)> {
        let mut out = Vec::new();
        for l in &mut self.extractor.layers {
            out.push((Group::Extractor, &mut l.weight));
            out.push((Group::Extractor, &mut l.bias));
        }
        out.push((Group::Classifier, &mut self.classifier.weight));
        out.push((Group::Classifier, &mut self.classifier.bias));
        for (group, mlp) in [(Group::Matcher, &mut self.matcher), (Group::Detector, &mut self.detector)] {
            for l in &mut mlp.layers {
                out.push((group, &mut l.weight));
                out.push((group, &mut l.bias));
            }
        }
        out
    }

    pub fn param_tensors(&self) -> Vec<Tensor<T>> {
        self.params().into_iter().map(|p| p.tensor.clone()).collect()
    }

    pub fn set_param_tensors(&mut self, values: &[Tensor<T>]) -> Result<()> {
        let mut slots = self.params_mut();
        if slots.len() != values.len() {
            return Err(Error::validation("parameters", format!("expected {} tensors", slots.len())));
        }
        for ((_, slot), v) in slots.iter_mut().zip(values) {
            if !slot.same_shape(v) {
                return Err(Error::Shape {
                    op: "set_param_tensors",
                    lhs: slot.shape().to_vec(),
                    rhs: v.shape().to_vec(),
                });
            }
            **slot = v.clone();
        }
        Ok(())
    }

    pub fn groups(&self) -> Vec<Group> {
        self.params().iter().map(|p| p.group).collect()
    }

    /// SHA-256 over the bit patterns of one group's parameters.
    pub fn checksum(&self, group: Group) -> String {
        let mut h = Sha256::new();
        for p in self.params().into_iter().filter(|p| p.group == group) {
            for v in p.tensor.data() {
                h.update(v.as_f64().to_bits().to_le_bytes());
            }
        }
        h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Records every parameter on `tape`; a frozen extractor is recorded as
    /// constants.
    pub fn bind<'t>(&self, tape: &'t Tape<T>) -> BoundModel<'t, T> {
        let vars = self
            .params()
            .into_iter()
            .map(|p| {
                if p.group == Group::Extractor && self.frozen_extractor {
                    tape.constant(p.tensor.clone())
                } else {
                    tape.param(p.tensor.clone())
                }
            })
            .collect();
        BoundModel::from_vars(&self.arch, vars).expect("bundle matches its own architecture")
    }

    /// Forward pass without gradient tracking.
    pub fn predict(&self, x: &Tensor<T>) -> Result<Outputs<T>> {
        let tape = Tape::new();
        let model = self.bind(&tape);
        let out = model.forward(tape.constant(x.clone()))?;
        Ok(Outputs {
            features: out.features.to_tensor(),
            logits: out.logits.to_tensor(),
            matcher: out.matcher.to_tensor(),
            detector: out.detector.to_tensor(),
        })
    }

    pub fn logits(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.predict(x)?.logits)
    }
}

fn push_linear<'a, T>(out: &mut Vec<ParamRef<'a, T>>, group: Group, prefix: String, l: &'a Linear<T>) {
    out.push(ParamRef {
        name: format!("{prefix}.weight"),
        group,
        tensor: &l.weight,
    });
    out.push(ParamRef {
        name: format!("{prefix}.bias"),
        group,
        tensor: &l.bias,
    });
}

fn push_mlp<'a, T>(out: &mut Vec<ParamRef<'a, T>>, group: Group, mlp: &'a Mlp<T>) {
    for (i, l) in mlp.layers.iter().enumerate() {
        push_linear(out, group, format!("{}.{i}", group.name()), l);
    }
}

/// Value-level outputs of [`ModelBundle::predict`].
#[derive(Debug, Clone)]
pub struct Outputs<T> {
    pub features: Tensor<T>,
    pub logits: Tensor<T>,
    pub matcher: Tensor<T>,
    pub detector: Tensor<T>,
}

/// Tape handles of the four outputs of one shared extractor pass.
#[derive(Clone, Copy)]
pub struct Forward<'t, T> {
    pub features: Var<'t, T>,
    pub logits: Var<'t, T>,
    pub matcher: Var<'t, T>,
    pub detector: Var<'t, T>,
}

#[derive(Clone, Copy)]
struct BoundLinear<'t, T> {
    weight: Var<'t, T>,
    bias: Var<'t, T>,
}

impl<'t, T: Scalar> BoundLinear<'t, T> {
    fn apply(&self, x: Var<'t, T>) -> Result<Var<'t, T>> {
        x.matmul(self.weight)?.add_row(self.bias)
    }

    fn detached(&self) -> Self {
        Self {
            weight: self.weight.detach(),
            bias: self.bias.detach(),
        }
    }
}

/// Model parameters recorded on a tape.
pub struct BoundModel<'t, T> {
    vars: Vec<Var<'t, T>>,
    extractor: Vec<BoundLinear<'t, T>>,
    classifier: BoundLinear<'t, T>,
    matcher: Vec<BoundLinear<'t, T>>,
    detector: Vec<BoundLinear<'t, T>>,
}

impl<'t, T: Scalar> BoundModel<'t, T> {
    /// Rebuilds the structure from variables in [`ModelBundle::params`] order.
    pub fn from_vars(arch: &Architecture, vars: Vec<Var<'t, T>>) -> Result<Self> {
        let n_extractor = arch.extractor_hidden.len() + 1;
        let expected = 2 * (n_extractor + 1 + 2 + 2);
        if vars.len() != expected {
            return Err(Error::validation("parameters", format!("expected {expected} variables, got {}", vars.len())));
        }
        let mut pairs = vars.chunks(2).map(|c| BoundLinear {
            weight: c[0],
            bias: c[1],
        });
        let extractor = pairs.by_ref().take(n_extractor).collect();
        let classifier = pairs.next().expect("classifier");
        let matcher = pairs.by_ref().take(2).collect();
        let detector = pairs.take(2).collect();
        Ok(Self {
            vars,
            extractor,
            classifier,
            matcher,
            detector,
        })
    }

    pub fn vars(&self) -> &[Var<'t, T>] {
        &self.vars
    }

    pub fn features(&self, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let mut h = x;
        for layer in &self.extractor {
            h = layer.apply(h)?.relu();
        }
        Ok(h)
    }

    /// Raw logits of the linear classifier.
    pub fn classify(&self, features: Var<'t, T>) -> Result<Var<'t, T>> {
        self.classifier.apply(features)
    }

    /// Logits through a copy of the classifier that receives no gradient.
    pub fn classify_detached(&self, features: Var<'t, T>) -> Result<Var<'t, T>> {
        self.classifier.detached().apply(features)
    }

    pub fn match_score(&self, features: Var<'t, T>) -> Result<Var<'t, T>> {
        head(&self.matcher, features)
    }

    pub fn detect(&self, features: Var<'t, T>) -> Result<Var<'t, T>> {
        head(&self.detector, features)
    }

    pub fn forward(&self, x: Var<'t, T>) -> Result<Forward<'t, T>> {
        let features = self.features(x)?;
        Ok(Forward {
            features,
            logits: self.classify(features)?,
            matcher: self.match_score(features)?,
            detector: self.detect(features)?,
        })
    }
}

fn head<'t, T: Scalar>(layers: &[BoundLinear<'t, T>], features: Var<'t, T>) -> Result<Var<'t, T>> {
    let mut h = features;
    for (i, layer) in layers.iter().enumerate() {
        h = layer.apply(h)?;
        if i + 1 < layers.len() {
            h = h.relu();
        }
    }
    Ok(h.sigmoid())
}

/// Settings for closed-set training of the starting point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub label_smoothing: f64,
    /// Fraction of the training set held out for validation.
    pub holdout_fraction: f64,
    pub extractor_hidden: Vec<usize>,
    pub feature_dim: usize,
    pub head_hidden: usize,
    pub seed: u64,
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            batch_size: 32,
            lr: 0.05,
            momentum: 0.9,
            label_smoothing: 0.2,
            holdout_fraction: 0.2,
            extractor_hidden: vec![64, 64],
            feature_dim: 32,
            head_hidden: 32,
            seed: 1,
        }
    }
}

impl SourceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::validation("source.batch_size", "must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::validation("source.lr", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::validation("source.momentum", "must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(Error::validation("source.label_smoothing", "must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::validation("source.holdout_fraction", "must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn architecture(&self, input_dim: usize, classes: usize) -> Architecture {
        Architecture {
            input_dim,
            extractor_hidden: self.extractor_hidden.clone(),
            feature_dim: self.feature_dim,
            classes,
            head_hidden: self.head_hidden,
        }
    }
}

/// Trained extractor and classifier that adaptation starts from.
#[derive(Debug, Clone, PartialEq)]
pub struct StartingPoint<T> {
    pub arch: Architecture,
    pub extractor: Mlp<T>,
    pub classifier: Linear<T>,
    pub config: SourceConfig,
    pub train_accuracy: f64,
    pub holdout_accuracy: f64,
    /// Final-epoch mean training loss.
    pub final_loss: f64,
}

impl<T: Scalar> StartingPoint<T> {
    /// Bundle with zero-initialised matcher and detector; suitable for
    /// evaluating the starting point on its own.
    pub fn as_bundle(&self) -> ModelBundle<T> {
        let arch = self.arch.clone();
        let zero_head = || Mlp {
            layers: vec![Linear::zeros(arch.feature_dim, arch.head_hidden), Linear::zeros(arch.head_hidden, 1)],
        };
        ModelBundle {
            extractor: self.extractor.clone(),
            classifier: self.classifier.clone(),
            matcher: zero_head(),
            detector: zero_head(),
            frozen_extractor: false,
            arch,
        }
    }
}

/// Mean label-smoothed cross-entropy of `logits` against `labels`.
pub fn smoothed_cross_entropy<'t, T: Scalar>(logits: Var<'t, T>, labels: &[usize], smoothing: f64) -> Result<Var<'t, T>> {
    let shape = logits.shape();
    let (n, k) = (shape[0], shape[1]);
    if labels.len() != n {
        return Err(Error::Shape {
            op: "smoothed_cross_entropy",
            lhs: shape,
            rhs: vec![labels.len()],
        });
    }
    let off = T::of(smoothing / k as f64);
    let on = T::of(1.0 - smoothing) + off;
    let mut targets = Tensor::full(&[n, k], off);
    for (i, &c) in labels.iter().enumerate() {
        targets.set(i, c, on);
    }
    let targets = logits.tape().constant(targets);
    let n = T::of_usize(n.max(1));
    Ok(logits.log_softmax_rows().mul(targets)?.sum().scale(-T::one() / n))
}

fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Row-wise argmax of a logit matrix.
pub fn predict_classes<T: Scalar>(logits: &Tensor<T>) -> Vec<usize> {
    (0..logits.rows()).map(|i| argmax(logits.row(i))).collect()
}

fn accuracy<T: Scalar>(bundle: &ModelBundle<T>, x: &Tensor<T>, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Ok(f64::NAN);
    }
    let pred = predict_classes(&bundle.logits(x)?);
    let hits = pred.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Closed-set training of extractor and classifier by SGD with momentum on
/// label-smoothed cross-entropy.
pub fn train_starting_point<T: Scalar>(train: &OpenSetDataset<T>, config: &SourceConfig) -> Result<StartingPoint<T>> {
    config.validate()?;
    if train.labels().iter().any(|l| !l.is_known()) {
        return Err(Error::validation("train", "contains unknown samples"));
    }
    if train.is_empty() {
        return Err(Error::validation("train", "is empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let arch = config.architecture(train.dim(), train.known_classes());
    let mut bundle = ModelBundle::init(arch.clone(), &mut rng)?;

    let labels = train.known_labels();
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut rng);
    let holdout_len = (config.holdout_fraction * train.len() as f64).round() as usize;
    let holdout_len = holdout_len.min(train.len() - 1);
    let (holdout, mut fit) = {
        let (h, f) = order.split_at(holdout_len);
        (h.to_vec(), f.to_vec())
    };

    let n_trainable = 2 * (arch.extractor_hidden.len() + 2);
    let mut velocity: Vec<Velocity<T>> = bundle
        .params()
        .iter()
        .take(n_trainable)
        .map(|p| Velocity::zeros_like(p.tensor))
        .collect();
    let lr = T::of(config.lr);
    let momentum = T::of(config.momentum);
    let mut final_loss = f64::NAN;

    for epoch in 0..config.epochs {
        fit.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in fit.chunks(config.batch_size) {
            let x = train.features().select_rows(chunk);
            let y: Vec<usize> = chunk.iter().map(|&r| labels[r]).collect();
            let tape = Tape::new();
            let model = bundle.bind(&tape);
            let feats = model.features(tape.constant(x))?;
            let loss = smoothed_cross_entropy(model.classify(feats)?, &y, config.label_smoothing)?;
            let value = loss.item().as_f64();
            if !value.is_finite() {
                return Err(Error::Diverged { epoch, loss: value });
            }
            let grads = tape.backward(loss)?;
            let grads: Vec<Tensor<T>> = model.vars()[..n_trainable].iter().map(|&v| grads.wrt(v)).collect();
            drop(model);
            for (((_, param), grad), vel) in bundle.params_mut().into_iter().zip(&grads).zip(&mut velocity) {
                sgd_update(param, grad, lr, momentum, vel)?;
            }
            total += value;
            batches += 1;
        }
        final_loss = total / batches.max(1) as f64;
        debug!("source epoch {epoch}: loss {final_loss:.6}");
    }

    let fit_x = train.features().select_rows(&fit);
    let fit_y: Vec<usize> = fit.iter().map(|&r| labels[r]).collect();
    let hold_x = train.features().select_rows(&holdout);
    let hold_y: Vec<usize> = holdout.iter().map(|&r| labels[r]).collect();
    Ok(StartingPoint {
        train_accuracy: accuracy(&bundle, &fit_x, &fit_y)?,
        holdout_accuracy: accuracy(&bundle, &hold_x, &hold_y)?,
        final_loss,
        arch,
        extractor: bundle.extractor,
        classifier: bundle.classifier,
        config: config.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::grad_check_many;

    fn small_arch() -> Architecture {
        Architecture {
            input_dim: 3,
            extractor_hidden: vec![5],
            feature_dim: 4,
            classes: 3,
            head_hidden: 3,
        }
    }

    fn bundle() -> ModelBundle<f64> {
        ModelBundle::init(small_arch(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap()
    }

    fn input(n: usize) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        Tensor::from_vec(&[n, 3], (0..3 * n).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
    }

    #[test]
    fn classifier_is_a_single_linear_layer() {
        let b = bundle();
        assert_eq!(b.classifier.weight.shape(), &[4, 3]);
        let names: Vec<String> = b.params().into_iter().filter(|p| p.group == Group::Classifier).map(|p| p.name).collect();
        assert_eq!(names, vec!["classifier.weight", "classifier.bias"]);
    }

    #[test]
    fn zero_heads_output_one_half() {
        let mut b = bundle();
        for mlp in [&mut b.matcher, &mut b.detector] {
            for l in &mut mlp.layers {
                l.weight = Tensor::zeros(l.weight.shape());
                l.bias = Tensor::zeros(l.bias.shape());
            }
        }
        let out = b.predict(&input(4)).unwrap();
        assert!(out.matcher.data().iter().all(|&v| v == 0.5));
        assert!(out.detector.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn batch_of_one_matches_batch_row() {
        let b = bundle();
        let x = input(6);
        let all = b.predict(&x).unwrap();
        for i in 0..6 {
            let one = b.predict(&x.select_rows(&[i])).unwrap();
            for (full, single) in [(&all.logits, &one.logits), (&all.matcher, &one.matcher), (&all.detector, &one.detector)] {
                for (a, s) in full.row(i).iter().zip(single.row(0)) {
                    assert!((a - s).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn wrong_input_width_is_a_shape_error() {
        let b = bundle();
        assert!(matches!(b.predict(&Tensor::zeros(&[2, 5])), Err(Error::Shape { .. })));
    }

    #[test]
    fn forward_gradients_match_finite_differences() {
        let b = bundle();
        let x = input(5);
        let report = grad_check_many(&b.param_tensors(), 1e-5, 1, |tape, vars| {
            let model = BoundModel::from_vars(&b.arch, vars.to_vec())?;
            let out = model.forward(tape.constant(x.clone()))?;
            let logits = out.logits.log_softmax_rows().sum();
            let heads = out.matcher.add(out.detector.scale(2.0))?.sum();
            logits.add(heads)
        })
        .unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }

    #[test]
    fn frozen_extractor_gets_no_gradient() {
        let mut b = bundle();
        b.frozen_extractor = true;
        let tape = Tape::new();
        let model = b.bind(&tape);
        let out = model.forward(tape.constant(input(3))).unwrap();
        let grads = tape.backward(out.logits.sum()).unwrap();
        let groups = b.groups();
        for (v, g) in model.vars().iter().zip(groups) {
            if g == Group::Extractor {
                assert!(grads.get(*v).is_none());
            }
        }
    }

    #[test]
    fn checksum_tracks_group_changes() {
        let mut b = bundle();
        let before: Vec<String> = Group::ALL.iter().map(|&g| b.checksum(g)).collect();
        b.detector.layers[0].bias.data_mut()[0] += 1.0;
        let after: Vec<String> = Group::ALL.iter().map(|&g| b.checksum(g)).collect();
        assert_eq!(before[..3], after[..3]);
        assert_ne!(before[3], after[3]);
    }

    #[test]
    fn smoothed_ce_of_uniform_logits_is_log_k() {
        let tape = Tape::new();
        let logits = tape.constant(Tensor::<f64>::zeros(&[4, 3]));
        let loss = smoothed_cross_entropy(logits, &[0, 1, 2, 0], 0.1).unwrap();
        assert!((loss.item() - 3f64.ln()).abs() < 1e-12);
    }
}
