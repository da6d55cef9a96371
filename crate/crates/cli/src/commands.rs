//! The subcommands. Each writes one run directory and returns its path.

use std::path::{Path, PathBuf};

use log::{info, warn};
use ossl_core::checkpoint::{load_bundle, load_starting_point, save_bundle, save_starting_point};
use ossl_core::datagen::write_dataset;
use ossl_core::eval::EvalReport;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::{CsvStream, RunDir};
use crate::pipeline::{adapt_and_evaluate, adapt_quiet, evaluate_bundle, load_data, train_start, Data, MetricsRow};

pub const TRAIN_FILE: &str = "train.txt";
pub const TEST_FILE: &str = "test.txt";
pub const START_FILE: &str = "start.ckpt";
pub const ADAPTED_FILE: &str = "adapted.ckpt";
pub const METRICS_CSV: &str = "metrics.csv";
pub const METRICS_JSON: &str = "metrics.json";

fn data_inputs(config: &ExperimentConfig) -> Vec<(&'static str, &Path)> {
    let mut v = Vec::new();
    if let Some(p) = &config.data.train {
        v.push(("train", p.as_path()));
    }
    if let Some(p) = &config.data.test {
        v.push(("test", p.as_path()));
    }
    v
}

pub fn gen_data(config: &ExperimentConfig, out: Option<&Path>) -> Result<PathBuf, CliError> {
    let (train, test) = config.dataset.generate::<f64>()?;
    let mut dir = RunDir::create("gen-data", config, out)?;
    write_dataset(&dir.file(TRAIN_FILE), &train).map_err(|e| CliError::io(TRAIN_FILE, to_io(e)))?;
    dir.adopt(TRAIN_FILE);
    write_dataset(&dir.file(TEST_FILE), &test).map_err(|e| CliError::io(TEST_FILE, to_io(e)))?;
    dir.adopt(TEST_FILE);
    dir.write_json(
        "dataset.json",
        &json!({ "spec": config.dataset, "train_samples": train.len(), "test_samples": test.len(), "test_unknown": test.unknown_count() }),
    )?;
    dir.finish("gen-data", config, &[config.dataset.seed], &[])?;
    println!("wrote {} train and {} test samples to {}", train.len(), test.len(), dir.path().display());
    Ok(dir.path().to_path_buf())
}

fn to_io(e: ossl_core::Error) -> std::io::Error {
    match e {
        ossl_core::Error::Io(io) => io,
        other => std::io::Error::other(other.to_string()),
    }
}

#[derive(Serialize)]
struct SourceSummary {
    train_accuracy: f64,
    holdout_accuracy: f64,
    final_loss: f64,
}

pub fn train_source(config: &ExperimentConfig, out: Option<&Path>) -> Result<PathBuf, CliError> {
    let data = load_data(config)?;
    let mut dir = RunDir::create("train-source", config, out)?;
    let start = match train_start(config, &data) {
        Ok(s) => s,
        Err(e) => {
            dir.write("error.txt", format!("{e}\n").as_bytes())?;
            return Err(e);
        }
    };
    save_starting_point(&dir.file(START_FILE), &start).map_err(|e| CliError::io(START_FILE, to_io(e)))?;
    dir.adopt(START_FILE);
    dir.write_json(
        "source.json",
        &SourceSummary {
            train_accuracy: start.train_accuracy,
            holdout_accuracy: start.holdout_accuracy,
            final_loss: start.final_loss,
        },
    )?;
    dir.finish("train-source", config, &[config.source.seed], &data_inputs(config))?;
    println!(
        "starting point: train accuracy {:.4}, holdout accuracy {:.4}, final loss {:.6}",
        start.train_accuracy, start.holdout_accuracy, start.final_loss
    );
    println!("checkpoint: {}", dir.file(START_FILE).display());
    Ok(dir.path().to_path_buf())
}

fn print_report(label: &str, r: &EvalReport) {
    println!(
        "{label:<7} AUROC {:.4}  macro-F1 {:.4}  ACC {:.4}  ({}, tau {:.4})",
        r.auroc,
        r.macro_f1,
        r.accuracy,
        r.score_kind.name(),
        r.tau
    );
}

pub fn adapt(config: &ExperimentConfig, out: Option<&Path>, start_path: Option<&Path>) -> Result<PathBuf, CliError> {
    let data = load_data(config)?;
    let mut dir = RunDir::create("adapt", config, out)?;
    let mut inputs = data_inputs(config);
    let start = match start_path {
        Some(p) => {
            inputs.push(("start", p));
            load_starting_point::<f64>(p).map_err(|e| CliError::Data(e.to_string()))?
        }
        None => {
            let s = train_start(config, &data)?;
            save_starting_point(&dir.file(START_FILE), &s).map_err(|e| CliError::io(START_FILE, to_io(e)))?;
            dir.adopt(START_FILE);
            s
        }
    };
    let before = evaluate_bundle(config, &start.as_bundle(), &data)?;
    let mut rows = vec![MetricsRow::before(&before)];
    let mut stream = CsvStream::create(&dir.file(METRICS_CSV))?;
    dir.adopt(METRICS_CSV);
    stream.push(&rows[0])?;
    let every = config.checkpoint_every;
    let mut checkpoints = Vec::new();
    let result = adapt_and_evaluate(config, &start, &data, &mut |record, report, bundle| {
        let row = MetricsRow::after_epoch(record, report);
        stream.push(&row)?;
        rows.push(row);
        if every > 0 && record.epoch % every == 0 {
            let name = format!("epoch-{:04}.ckpt", record.epoch);
            save_bundle(&dir.file(&name), bundle).map_err(|e| CliError::io(&name, to_io(e)))?;
            checkpoints.push(name);
        }
        Ok(())
    });
    for c in &checkpoints {
        dir.adopt(c);
    }
    let adapted = match result {
        Ok(a) => a,
        Err(e) => {
            dir.write_json(METRICS_JSON, &rows)?;
            dir.write("error.txt", format!("{e}\n").as_bytes())?;
            return Err(e);
        }
    };
    dir.write_json(METRICS_JSON, &rows)?;
    dir.write_json("trace.json", &adapted.trace)?;
    save_bundle(&dir.file(ADAPTED_FILE), &adapted.bundle).map_err(|e| CliError::io(ADAPTED_FILE, to_io(e)))?;
    dir.adopt(ADAPTED_FILE);
    dir.write_json("summary.json", &json!({ "before": adapted.before, "after": adapted.after, "epochs": adapted.trace.epochs.len(), "converged": adapted.trace.converged }))?;
    dir.finish("adapt", config, &[config.adapt.seed], &inputs)?;
    print_report("before", &adapted.before);
    print_report("after", &adapted.after);
    println!("run directory: {}", dir.path().display());
    Ok(dir.path().to_path_buf())
}

pub fn evaluate(config: &ExperimentConfig, out: Option<&Path>, checkpoint: &Path) -> Result<PathBuf, CliError> {
    let data = load_data(config)?;
    let bundle = match load_bundle::<f64>(checkpoint) {
        Ok(b) => b,
        Err(_) => load_starting_point::<f64>(checkpoint)
            .map_err(|e| CliError::Data(e.to_string()))?
            .as_bundle(),
    };
    let report = evaluate_bundle(config, &bundle, &data)?;
    let mut dir = RunDir::create("evaluate", config, out)?;
    dir.write_json(METRICS_JSON, &report)?;
    dir.write_csv(METRICS_CSV, &[MetricsRow::before(&report)])?;
    let mut inputs = data_inputs(config);
    inputs.push(("checkpoint", checkpoint));
    dir.finish("evaluate", config, &[], &inputs)?;
    print_report("model", &report);
    Ok(dir.path().to_path_buf())
}

/// One metric of one adaptation, compared with the starting point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub seed: u64,
    pub variant: String,
    pub mu: f64,
    pub gamma: f64,
    pub injection: usize,
    pub margin: bool,
    pub frozen_extractor: bool,
    pub metric: &'static str,
    pub before: Option<f64>,
    pub after: Option<f64>,
    pub delta: Option<f64>,
    pub status: String,
}

fn metric_rows(base: &ResultRow, outcome: &Result<(EvalReport, EvalReport), CliError>) -> Vec<ResultRow> {
    let metrics: [(&'static str, fn(&EvalReport) -> f64); 4] = [
        ("auroc", |r| r.auroc),
        ("macro_f1", |r| r.macro_f1),
        ("acc", |r| r.accuracy),
        ("unknown_max_logit", |r| r.unknown_max_logit),
    ];
    metrics
        .iter()
        .map(|(name, get)| {
            let mut row = base.clone();
            row.metric = name;
            match outcome {
                Ok((b, a)) => {
                    row.before = Some(get(b));
                    row.after = Some(get(a));
                    row.delta = Some(get(a) - get(b));
                    row.status = "ok".into();
                }
                Err(e) => row.status = e.to_string(),
            }
            row
        })
        .collect()
}

/// Data and starting point of every seed, built in parallel.
fn per_seed(config: &ExperimentConfig) -> Vec<(u64, Result<(ExperimentConfig, Data, ossl_core::Start), String>)> {
    config
        .seeds
        .par_iter()
        .map(|&seed| {
            let c = config.with_seed(seed);
            let built = load_data(&c)
                .and_then(|d| train_start(&c, &d).map(|s| (c, d, s)))
                .map_err(|e| e.to_string());
            (seed, built)
        })
        .collect()
}

fn write_table(
    dir: &mut RunDir,
    name: &str,
    command: &str,
    config: &ExperimentConfig,
    rows: &[ResultRow],
) -> Result<(), CliError> {
    dir.write_csv(&format!("{name}.csv"), rows)?;
    dir.write_json(&format!("{name}.json"), &rows)?;
    dir.finish(command, config, &config.seeds, &data_inputs(config))?;
    let failed = rows.iter().filter(|r| r.status != "ok").count();
    if failed > 0 {
        warn!("{failed} result rows carry errors");
    }
    println!("{} rows written to {}", rows.len(), dir.file(&format!("{name}.csv")).display());
    Ok(())
}

fn summarize(rows: &[ResultRow], key: impl Fn(&ResultRow) -> String) {
    let mut groups: Vec<(String, Vec<f64>)> = Vec::new();
    for r in rows.iter().filter(|r| r.metric == "auroc") {
        let k = key(r);
        let d = r.delta.unwrap_or(f64::NAN);
        match groups.iter_mut().find(|(g, _)| *g == k) {
            Some((_, v)) => v.push(d),
            None => groups.push((k, vec![d])),
        }
    }
    for (k, v) in groups {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        println!("{k:<40} mean AUROC delta {mean:+.4} over {} seeds", v.len());
    }
}

pub fn sweep(config: &ExperimentConfig, out: Option<&Path>) -> Result<PathBuf, CliError> {
    let mut dir = RunDir::create("sweep", config, out)?;
    let seeds = per_seed(config);
    let mut cells = Vec::new();
    for (seed, built) in &seeds {
        for &mu in &config.sweep.mu {
            for &gamma in &config.sweep.gamma {
                cells.push((*seed, built, mu, gamma));
            }
        }
    }
    info!("sweep: {} cells", cells.len());
    let rows: Vec<ResultRow> = cells
        .par_iter()
        .flat_map_iter(|(seed, built, mu, gamma)| {
            let base = ResultRow {
                seed: *seed,
                variant: format!("mu={mu},gamma={gamma}"),
                mu: *mu,
                gamma: *gamma,
                injection: if config.adapt.enable_injection { config.adapt.injection_count } else { 0 },
                margin: config.adapt.enable_margin,
                frozen_extractor: config.adapt.frozen_extractor,
                metric: "",
                before: None,
                after: None,
                delta: None,
                status: String::new(),
            };
            let outcome = match built {
                Ok((c, data, start)) => {
                    let mut c = c.clone();
                    c.adapt.mu = *mu;
                    c.adapt.gamma = *gamma;
                    c.adapt.validate().map_err(CliError::from).and_then(|_| adapt_quiet(&c, start, data))
                }
                Err(e) => Err(CliError::Other(e.clone())),
            };
            metric_rows(&base, &outcome)
        })
        .collect();
    write_table(&mut dir, "sweep", "sweep", config, &rows)?;
    summarize(&rows, |r| r.variant.clone());
    Ok(dir.path().to_path_buf())
}

/// Variants of the ablation grid, in table order.
pub fn ablation_variants(config: &ExperimentConfig) -> Vec<(usize, bool, bool)> {
    let mut injections = vec![0];
    injections.extend(config.ablate.injection.iter().copied().filter(|&k| k > 0));
    let mut v = Vec::new();
    for &inj in &injections {
        for margin in [true, false] {
            for frozen in [false, true] {
                v.push((inj, margin, frozen));
            }
        }
    }
    v
}

pub fn ablate(config: &ExperimentConfig, out: Option<&Path>) -> Result<PathBuf, CliError> {
    let mut dir = RunDir::create("ablate", config, out)?;
    let seeds = per_seed(config);
    let variants = ablation_variants(config);
    let mut cells = Vec::new();
    for (seed, built) in &seeds {
        cells.push((*seed, built, None));
        for v in &variants {
            cells.push((*seed, built, Some(*v)));
        }
    }
    let rows: Vec<ResultRow> = cells
        .par_iter()
        .flat_map_iter(|(seed, built, variant)| {
            let (injection, margin, frozen) = variant.unwrap_or((0, false, true));
            let base = ResultRow {
                seed: *seed,
                variant: match variant {
                    None => "starting-point".to_string(),
                    Some(_) => format!(
                        "injection={injection},margin={},frozen={}",
                        if margin { "on" } else { "off" },
                        if frozen { "on" } else { "off" }
                    ),
                },
                mu: config.adapt.mu,
                gamma: config.adapt.gamma,
                injection,
                margin,
                frozen_extractor: frozen,
                metric: "",
                before: None,
                after: None,
                delta: None,
                status: String::new(),
            };
            let outcome = match built {
                Ok((c, data, start)) => match variant {
                    None => evaluate_bundle(c, &start.as_bundle(), data).map(|r| (r.clone(), r)),
                    Some(_) => {
                        let mut c = c.clone();
                        c.adapt.enable_injection = injection > 0;
                        if injection > 0 {
                            c.adapt.injection_count = injection;
                        }
                        c.adapt.enable_margin = margin;
                        c.adapt.frozen_extractor = frozen;
                        c.adapt.validate().map_err(CliError::from).and_then(|_| adapt_quiet(&c, start, data))
                    }
                },
                Err(e) => Err(CliError::Other(e.clone())),
            };
            metric_rows(&base, &outcome)
        })
        .collect();
    write_table(&mut dir, "ablate", "ablate", config, &rows)?;
    summarize(&rows, |r| r.variant.clone());
    Ok(dir.path().to_path_buf())
}
