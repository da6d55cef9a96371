//! Steps shared by the subcommands: data, starting point, adaptation and
//! evaluation of one configuration.

use ossl_core::adapt::{run_ossl_observed, AdaptTrace, EpochRecord};
use ossl_core::datagen::read_dataset;
use ossl_core::eval::{evaluate, EvalReport};
use ossl_core::model::train_starting_point;
use ossl_core::{Bundle, Dataset, Start};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::CliError;

pub struct Data {
    pub train: Dataset,
    pub test: Dataset,
}

/// Reads the configured files, or generates the configured dataset.
pub fn load_data(config: &ExperimentConfig) -> Result<Data, CliError> {
    match (&config.data.train, &config.data.test) {
        (Some(train), Some(test)) => {
            let read = |p: &std::path::Path| {
                read_dataset::<f64>(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))
            };
            Ok(Data {
                train: read(train)?,
                test: read(test)?,
            })
        }
        _ => {
            let (train, test) = config.dataset.generate::<f64>()?;
            Ok(Data { train, test })
        }
    }
}

pub fn train_start(config: &ExperimentConfig, data: &Data) -> Result<Start, CliError> {
    Ok(train_starting_point(&data.train, &config.source)?)
}

pub fn evaluate_bundle(config: &ExperimentConfig, bundle: &Bundle, data: &Data) -> Result<EvalReport, CliError> {
    Ok(evaluate(bundle, &data.test, &data.train, &config.eval)?)
}

/// One line of the per-epoch metrics log. Epoch 0 is the starting point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub epoch: usize,
    pub auroc: f64,
    pub macro_f1: f64,
    pub acc: f64,
    pub unknown_max_logit: f64,
    pub loss_classifier: Option<f64>,
    pub loss_adversarial: Option<f64>,
    pub loss_detector: Option<f64>,
    pub loss_margin: Option<f64>,
    pub loss_total: Option<f64>,
    pub t1: Option<usize>,
    pub t2: Option<usize>,
    pub t3: Option<usize>,
    pub score_kind: &'static str,
    pub tau: f64,
}

impl MetricsRow {
    pub fn before(report: &EvalReport) -> Self {
        Self::new(0, report, None)
    }

    pub fn after_epoch(record: &EpochRecord, report: &EvalReport) -> Self {
        Self::new(record.epoch, report, Some(record))
    }

    fn new(epoch: usize, m: &EvalReport, record: Option<&EpochRecord>) -> Self {
        Self {
            epoch,
            auroc: m.auroc,
            macro_f1: m.macro_f1,
            acc: m.accuracy,
            unknown_max_logit: m.unknown_max_logit,
            loss_classifier: record.map(|r| r.losses.classifier),
            loss_adversarial: record.map(|r| r.losses.adversarial),
            loss_detector: record.map(|r| r.losses.detector),
            loss_margin: record.map(|r| r.losses.margin),
            loss_total: record.map(|r| r.losses.total),
            t1: record.map(|r| r.partition.known),
            t2: record.map(|r| r.partition.uncertain),
            t3: record.map(|r| r.partition.unknown),
            score_kind: m.score_kind.name(),
            tau: m.tau,
        }
    }
}

pub struct Adapted {
    pub before: EvalReport,
    pub after: EvalReport,
    pub bundle: Bundle,
    pub trace: AdaptTrace,
}

/// Adapts `start` and evaluates before and after. `on_epoch` sees every
/// epoch's record, its evaluation and the bundle.
pub fn adapt_and_evaluate(
    config: &ExperimentConfig,
    start: &Start,
    data: &Data,
    on_epoch: &mut dyn FnMut(&EpochRecord, &EvalReport, &Bundle) -> Result<(), CliError>,
) -> Result<Adapted, CliError> {
    let before = evaluate_bundle(config, &start.as_bundle(), data)?;
    let mut callback_error = None;
    let result = run_ossl_observed(start, &data.test, &data.train, &config.adapt, &mut |record, bundle| {
        let report = evaluate(bundle, &data.test, &data.train, &config.eval)?;
        if let Err(e) = on_epoch(record, &report, bundle) {
            callback_error = Some(e);
            return Err(ossl_core::Error::Evaluation("epoch observer failed".into()));
        }
        Ok(Some(report))
    });
    if let Some(e) = callback_error {
        return Err(e);
    }
    let (bundle, trace) = result?;
    let after = evaluate_bundle(config, &bundle, data)?;
    Ok(Adapted {
        before,
        after,
        bundle,
        trace,
    })
}

/// Adaptation without per-epoch evaluation, for sweeps and ablations.
pub fn adapt_quiet(config: &ExperimentConfig, start: &Start, data: &Data) -> Result<(EvalReport, EvalReport), CliError> {
    let before = evaluate_bundle(config, &start.as_bundle(), data)?;
    let (bundle, _) = ossl_core::adapt::run_ossl(start, &data.test, &data.train, &config.adapt)?;
    Ok((before, evaluate_bundle(config, &bundle, data)?))
}
