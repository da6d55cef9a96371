//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use ossl_core::adapt::{run_ossl, AdaptConfig};
use ossl_core::datagen::{DatasetSpec, Label};
use ossl_core::eval::{auroc, evaluate, macro_f1, EvalOptions};
use ossl_core::model::{train_starting_point, Architecture, Group, ModelBundle, SourceConfig};
use ossl_core::numerics::{grad_check, Tape};
use ossl_core::selfmatch::{
    loss_adversarial, loss_classifier, loss_detector, loss_margin, objective_terms, partition_test_set,
    plain_objective_terms, Membership, ObjectiveBatch, ObjectiveConfig, Partition, SampleWeights,
};
use ossl_core::{Bundle, Tensor};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FD_STEP: f64 = 1e-5;
const FD_TOL: f64 = 1e-4;
const KINK_MARGIN: f64 = 1e-3;
const DESK_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Random small model plus a random batch in which every row type occurs.
/// Draws that put a ReLU or hinge input within `KINK_MARGIN` of its kink are
/// redrawn: central differences are meaningless across a kink.
fn random_problem(seed: u64) -> (Bundle, ObjectiveBatch<f64>, SampleWeights<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let problem = draw_problem(&mut rng);
        if kink_distance(&problem.0, &problem.1) > KINK_MARGIN {
            return problem;
        }
    }
}

fn draw_problem(rng: &mut ChaCha8Rng) -> (Bundle, ObjectiveBatch<f64>, SampleWeights<f64>) {
    let arch = Architecture {
        input_dim: rng.random_range(2..4),
        extractor_hidden: vec![rng.random_range(4..8)],
        feature_dim: rng.random_range(3..6),
        classes: rng.random_range(2..5),
        head_hidden: rng.random_range(4..9),
    };
    let bundle = ModelBundle::init(arch.clone(), rng).unwrap();
    let n_test = rng.random_range(6..10);
    let n_inj = rng.random_range(1..4);
    let test = random_tensor(rng, &[n_test, arch.input_dim], -2.0, 2.0);
    let injected = random_tensor(rng, &[n_inj, arch.input_dim], -2.0, 2.0);
    let mut kinds: Vec<usize> = (0..n_test).map(|i| i % 3).collect();
    kinds.shuffle(rng);
    let membership = kinds
        .iter()
        .map(|&k| match k {
            0 => Membership::Known(rng.random_range(0..arch.classes)),
            1 => Membership::Uncertain,
            _ => Membership::Unknown,
        })
        .collect();
    let partition = Partition {
        known: Vec::new(),
        pseudo_labels: Vec::new(),
        pseudo_dists: Tensor::zeros(&[0, arch.classes]),
        uncertain: Vec::new(),
        unknown: Vec::new(),
        membership,
        mu: 0.5,
        gamma: 0.1,
    };
    let inj_labels: Vec<usize> = (0..n_inj).map(|_| rng.random_range(0..arch.classes)).collect();
    let rows: Vec<usize> = (0..n_test).collect();
    let batch = ObjectiveBatch::new(&test, &rows, &partition, Some((&injected, &inj_labels))).unwrap();
    let n = n_test + n_inj;
    let weights = SampleWeights {
        omega_s: (0..n).map(|_| rng.random_range(0.0..1.0)).collect(),
        omega_t: (0..n).map(|_| rng.random_range(0.0..1.0)).collect(),
    };
    (bundle, batch, weights)
}

/// Value of each term at the given parameters, with the weights held fixed.
fn term_values(bundle: &Bundle, batch: &ObjectiveBatch<f64>, w: &SampleWeights<f64>) -> [f64; 4] {
    let tape = Tape::new();
    let model = bundle.bind(&tape);
    let t = objective_terms(&model, batch, &ObjectiveConfig::default(), Some(w)).unwrap();
    [t.classifier.item(), t.adversarial.item(), t.detector.item(), t.margin.item()]
}

/// What each parameter group descends: the classifier its loss, the matcher
/// the matching loss, the detector the detection loss, and the extractor
/// classifier − matching + detection + margin.
fn group_target(group: Group, v: [f64; 4]) -> f64 {
    let [c, a, d, m] = v;
    match group {
        Group::Extractor => c - a + d + m,
        Group::Classifier => c,
        Group::Matcher => a,
        Group::Detector => d,
    }
}

fn assembled_fd_error(bundle: &Bundle, batch: &ObjectiveBatch<f64>, w: &SampleWeights<f64>) -> f64 {
    let tape = Tape::new();
    let model = bundle.bind(&tape);
    let terms = objective_terms(&model, batch, &ObjectiveConfig::default(), Some(w)).unwrap();
    let grads = tape.backward(terms.total).unwrap();
    let analytic: Vec<Tensor> = model.vars().iter().map(|&v| grads.wrt(v)).collect();
    let groups = bundle.groups();
    let base = bundle.param_tensors();
    let mut worst = 0.0f64;
    for (p, tensor) in base.iter().enumerate() {
        for j in 0..tensor.len() {
            let probe = |delta: f64| {
                let mut params = base.clone();
                params[p].data_mut()[j] += delta;
                let mut b = bundle.clone();
                b.set_param_tensors(&params).unwrap();
                group_target(groups[p], term_values(&b, batch, w))
            };
            let numeric = (probe(FD_STEP) - probe(-FD_STEP)) / (2.0 * FD_STEP);
            let a = analytic[p].data()[j];
            worst = worst.max((a - numeric).abs() / a.abs().max(1.0));
        }
    }
    worst
}

fn kink_distance(bundle: &Bundle, batch: &ObjectiveBatch<f64>) -> f64 {
    let mut h = batch.inputs.clone();
    let mut closest = f64::INFINITY;
    for l in &bundle.extractor.layers {
        let mut z = h.matmul(&l.weight).unwrap();
        for i in 0..z.rows() {
            for j in 0..z.cols() {
                let v = z.get(i, j) + l.bias.data()[j];
                closest = closest.min(v.abs());
                z.set(i, j, v.max(0.0));
            }
        }
        h = z;
    }
    for head in [&bundle.matcher, &bundle.detector] {
        let z = h.matmul(&head.layers[0].weight).unwrap();
        for i in 0..z.rows() {
            for j in 0..z.cols() {
                closest = closest.min((z.get(i, j) + head.layers[0].bias.data()[j]).abs());
            }
        }
    }
    let logits = bundle.logits(&batch.inputs).unwrap();
    for &r in &batch.unknown {
        for &v in logits.row(r) {
            closest = closest.min((v + 2.0).abs());
        }
    }
    closest
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut worst_seed = 0;
    for seed in 0..100u64 {
        let (bundle, batch, w) = random_problem(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let n = batch.inputs.rows();
        let k = bundle.arch.classes;
        let logits = random_tensor(&mut rng, &[n, k], -1.5, 1.5);
        let probs = random_tensor(&mut rng, &[n, 1], 0.05, 0.95);
        let source = batch.source_rows();
        let omega_s: Vec<f64> = source.iter().map(|&r| w.omega_s[r]).collect();
        let omega_t: Vec<f64> = batch.uncertain.iter().map(|&r| w.omega_t[r]).collect();
        let errors = [
            grad_check(&logits, FD_STEP, |v| {
                loss_classifier(v, &batch.known, &batch.pseudo_labels, &batch.injected, &batch.injected_labels)
            })
            .unwrap(),
            grad_check(&probs, FD_STEP, |v| loss_detector(v, &source, &batch.unknown)).unwrap(),
            grad_check(&probs, FD_STEP, |v| loss_adversarial(v, &source, &omega_s, &batch.uncertain, &omega_t)).unwrap(),
            grad_check(&logits, FD_STEP, |v| loss_margin(v, &batch.unknown, 2.0)).unwrap(),
            assembled_fd_error(&bundle, &batch, &w),
        ];
        for e in errors {
            if e > worst {
                worst = e;
                worst_seed = seed;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst < FD_TOL && secs < 30.0,
        format!("max rel err {worst:.2e} (seed {worst_seed}) over 100 seeds, {secs:.1}s"),
    )
}

fn extractor_grads(bundle: &Bundle, batch: &ObjectiveBatch<f64>, w: &SampleWeights<f64>, reversed: bool) -> Vec<Tensor> {
    let tape = Tape::new();
    let model = bundle.bind(&tape);
    let features = model.features(tape.constant(batch.inputs.clone())).unwrap();
    let input = if reversed { features.reverse_gradient(1.0) } else { features };
    let d = model.match_score(input).unwrap();
    let source = batch.source_rows();
    let omega_s: Vec<f64> = source.iter().map(|&r| w.omega_s[r]).collect();
    let omega_t: Vec<f64> = batch.uncertain.iter().map(|&r| w.omega_t[r]).collect();
    let loss = loss_adversarial(d, &source, &omega_s, &batch.uncertain, &omega_t).unwrap();
    let grads = tape.backward(loss).unwrap();
    let groups = bundle.groups();
    model
        .vars()
        .iter()
        .zip(groups)
        .filter(|(_, g)| *g == Group::Extractor)
        .map(|(&v, _)| grads.wrt(v))
        .collect()
}

/// One descent step on `group` along the gradient that the matching term
/// sends to it (through the reversal for the extractor).
fn step_group(bundle: &Bundle, batch: &ObjectiveBatch<f64>, w: &SampleWeights<f64>, group: Group, lr: f64) -> Bundle {
    let tape = Tape::new();
    let model = bundle.bind(&tape);
    let terms = objective_terms(&model, batch, &ObjectiveConfig::default(), Some(w)).unwrap();
    let grads = tape.backward(terms.adversarial).unwrap();
    let mut params = bundle.param_tensors();
    for ((p, g), &v) in params.iter_mut().zip(bundle.groups()).zip(model.vars()) {
        if g == group {
            let grad = grads.wrt(v);
            for (x, d) in p.data_mut().iter_mut().zip(grad.data()) {
                *x -= lr * d;
            }
        }
    }
    let mut out = bundle.clone();
    out.set_param_tensors(&params).unwrap();
    out
}

fn adversarial_sign_structure() -> Outcome {
    let mut failures = Vec::new();
    for seed in 0..10u64 {
        let (bundle, batch, w) = random_problem(500 + seed);
        let rev = extractor_grads(&bundle, &batch, &w, true);
        let plain = extractor_grads(&bundle, &batch, &w, false);
        let negated = rev.iter().zip(&plain).all(|(r, p)| r.data().iter().zip(p.data()).all(|(a, b)| *a == -*b));
        let before = term_values(&bundle, &batch, &w)[1];
        let after_d = term_values(&step_group(&bundle, &batch, &w, Group::Matcher, 1e-2), &batch, &w)[1];
        let after_f = term_values(&step_group(&bundle, &batch, &w, Group::Extractor, 1e-2), &batch, &w)[1];
        if !(negated && after_d < before && after_f > before) {
            failures.push(format!("seed {seed}: negated {negated}, D step {before:.6}->{after_d:.6}, F step {before:.12}->{after_f:.12}"));
        }
    }
    outcome(failures.is_empty(), if failures.is_empty() { "10/10 seeds".into() } else { failures.join("; ") })
}

fn random_probs(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Tensor {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            // Mix peaked and flat rows so every set is populated.
            let sharp = rng.random_range(0.2..6.0);
            let raw: Vec<f64> = (0..k).map(|_| (sharp * rng.random_range(-1.0f64..1.0)).exp()).collect();
            let s: f64 = raw.iter().sum();
            raw.iter().map(|v| v / s).collect()
        })
        .collect();
    Tensor::from_rows(&rows).unwrap()
}

fn partition_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut problems = Vec::new();
    let grid = [(0.3, 0.01), (0.5, 0.03), (0.5, 0.2), (0.7, 0.05), (0.9, 0.5)];
    let mut populated = [0usize; 3];
    for k in [2, 3, 5, 10] {
        let p = random_probs(&mut rng, 1000, k);
        for &(mu, gamma) in &grid {
            let part = partition_test_set(&p, mu, gamma).unwrap();
            let sizes = part.sizes();
            populated[0] += sizes.known;
            populated[1] += sizes.uncertain;
            populated[2] += sizes.unknown;
            let mut all: Vec<usize> = part.known.iter().chain(&part.uncertain).chain(&part.unknown).copied().collect();
            all.sort_unstable();
            if all != (0..1000).collect::<Vec<_>>() {
                problems.push(format!("K={k} mu={mu} gamma={gamma}: not an exact cover"));
            }
            for i in 0..1000 {
                let row = p.row(i);
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let min = row.iter().cloned().fold(f64::INFINITY, f64::min);
                let expect = if max > mu {
                    Membership::Known(row.iter().position(|&v| v == max).unwrap())
                } else if max - min < gamma {
                    Membership::Unknown
                } else {
                    Membership::Uncertain
                };
                if part.membership[i] != expect {
                    problems.push(format!("K={k} row {i}: oracle disagrees"));
                    break;
                }
            }
            let tighter = partition_test_set(&p, mu + 0.05, gamma).unwrap();
            if !tighter.known.iter().all(|r| part.known.contains(r)) {
                problems.push(format!("K={k}: known set not monotone in mu"));
            }
            let wider = partition_test_set(&p, mu, (gamma + 0.05).min(0.99)).unwrap();
            if !part.unknown.iter().all(|r| wider.unknown.contains(r)) {
                problems.push(format!("K={k}: unknown set not monotone in gamma"));
            }
        }
    }
    let detail = if problems.is_empty() {
        format!("1000 rows x 4 class counts x 5 threshold pairs; sizes {populated:?}")
    } else {
        problems.join("; ")
    };
    outcome(problems.is_empty(), detail)
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    let mut f1_mismatch = 0;
    for _ in 0..100 {
        let n = rng.random_range(2..=500);
        let levels = rng.random_range(2..30);
        let scores: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..levels)) * 0.37).collect();
        let mut known: Vec<bool> = (0..n).map(|_| rng.random_bool(0.6)).collect();
        known[0] = true;
        known[1] = false;
        let (mut num, mut pairs) = (0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                if known[i] && !known[j] {
                    pairs += 1.0;
                    num += if scores[i] > scores[j] { 1.0 } else if scores[i] == scores[j] { 0.5 } else { 0.0 };
                }
            }
        }
        worst = worst.max((auroc(&scores, &known).unwrap() - num / pairs).abs());

        let classes = rng.random_range(2..6);
        let predicted: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
        let truth: Vec<usize> = (0..n).map(|_| rng.random_range(0..=classes)).collect();
        let labels: Vec<Label> =
            truth.iter().map(|&t| if t == classes { Label::Unknown { source: 0 } } else { Label::Known(t) }).collect();
        let tau = 0.37 * f64::from(levels) / 2.0;
        let got = macro_f1(&scores, &predicted, &labels, classes, tau).unwrap().value;
        let k = classes + 1;
        let mut m = vec![vec![0usize; k]; k];
        for i in 0..n {
            let p = if scores[i] < tau { classes } else { predicted[i] };
            m[truth[i]][p] += 1;
        }
        let mut total = 0.0;
        for c in 0..k {
            let col: usize = (0..k).map(|r| m[r][c]).sum();
            let row: usize = m[c].iter().sum();
            if col + row > 0 {
                total += 2.0 * m[c][c] as f64 / (col + row) as f64;
            }
        }
        if got != total / k as f64 {
            f1_mismatch += 1;
        }
    }
    outcome(
        worst <= 1e-12 && f1_mismatch == 0,
        format!("AUROC max |diff| {worst:.1e}, macro-F1 mismatches {f1_mismatch}/100"),
    )
}

fn ablation_identities() -> Outcome {
    let mut failures = 0;
    for seed in 0..20u64 {
        let (bundle, with_inj, _) = random_problem(900 + seed);
        let n_test = with_inj.inputs.rows() - with_inj.injected.len();
        let batch = ObjectiveBatch {
            inputs: with_inj.inputs.select_rows(&(0..n_test).collect::<Vec<_>>()),
            injected: Vec::new(),
            injected_labels: Vec::new(),
            ..with_inj
        };
        let config = ObjectiveConfig { enable_margin: false, ..ObjectiveConfig::default() };

        let tape = Tape::new();
        let model = bundle.bind(&tape);
        let full = objective_terms(&model, &batch, &config, None).unwrap();
        let full_vals = [full.classifier.item(), full.adversarial.item(), full.detector.item(), full.margin.item()];
        let full_grads = tape.backward(full.total).unwrap();
        let full_g: Vec<Tensor> = model.vars().iter().map(|&v| full_grads.wrt(v)).collect();

        let tape = Tape::new();
        let model = bundle.bind(&tape);
        let (c, a, d) = plain_objective_terms(&model, &batch, &config).unwrap();
        let plain_vals = [c.item(), a.item(), d.item(), 0.0];
        let total = c.add(a).unwrap().add(d).unwrap();
        let plain_grads = tape.backward(total).unwrap();
        let plain_g: Vec<Tensor> = model.vars().iter().map(|&v| plain_grads.wrt(v)).collect();

        let same_vals = full_vals.iter().zip(&plain_vals).all(|(x, y)| x.to_bits() == y.to_bits());
        let same_grads = full_g
            .iter()
            .zip(&plain_g)
            .all(|(x, y)| x.data().iter().zip(y.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
        if !(same_vals && same_grads) {
            failures += 1;
        }
    }
    outcome(failures == 0, format!("{}/20 batches bitwise equal in values and gradients", 20 - failures))
}

struct DeskRun {
    auroc_before: f64,
    auroc_after: f64,
    auroc_frozen: f64,
    unknown_logit_before: f64,
    unknown_logit_after: f64,
    seconds: f64,
}

fn desk_runs() -> Vec<DeskRun> {
    DESK_SEEDS
        .iter()
        .map(|&seed| {
            let timer = Instant::now();
            let (train, test) = DatasetSpec { seed, ..DatasetSpec::default() }.generate::<f64>().unwrap();
            let start = train_starting_point(&train, &SourceConfig { seed, ..SourceConfig::default() }).unwrap();
            let config = AdaptConfig { seed, ..AdaptConfig::desk() };
            let opts = EvalOptions::default();
            let before = evaluate(&start.as_bundle(), &test, &train, &opts).unwrap();
            let (adapted, _) = run_ossl(&start, &test, &train, &config).unwrap();
            let after = evaluate(&adapted, &test, &train, &opts).unwrap();
            let seconds = timer.elapsed().as_secs_f64();
            let frozen_cfg = AdaptConfig { frozen_extractor: true, ..config };
            let (frozen, _) = run_ossl(&start, &test, &train, &frozen_cfg).unwrap();
            let frozen = evaluate(&frozen, &test, &train, &opts).unwrap();
            DeskRun {
                auroc_before: before.auroc,
                auroc_after: after.auroc,
                auroc_frozen: frozen.auroc,
                unknown_logit_before: before.unknown_max_logit,
                unknown_logit_after: after.unknown_max_logit,
                seconds,
            }
        })
        .collect()
}

fn desk_benefit(runs: &[DeskRun]) -> Outcome {
    let gains: Vec<f64> = runs.iter().map(|r| r.auroc_after - r.auroc_before).collect();
    let mean = gains.iter().sum::<f64>() / gains.len() as f64;
    let wins = gains.iter().filter(|&&g| g > 0.0).count();
    let slowest = runs.iter().map(|r| r.seconds).fold(0.0, f64::max);
    let per_seed: Vec<String> = runs.iter().map(|r| format!("{:.4}->{:.4}", r.auroc_before, r.auroc_after)).collect();
    outcome(
        mean >= 0.01 && wins >= 4 && slowest < 60.0,
        format!("mean gain {mean:.4}, improved on {wins}/5 [{}], slowest seed {slowest:.1}s", per_seed.join(", ")),
    )
}

fn margin_effect(runs: &[DeskRun]) -> Outcome {
    let lower = runs.iter().filter(|r| r.unknown_logit_after < r.unknown_logit_before).count();
    let per_seed: Vec<String> =
        runs.iter().map(|r| format!("{:.3}->{:.3}", r.unknown_logit_before, r.unknown_logit_after)).collect();
    outcome(lower >= 4, format!("unknown max logit lower on {lower}/5 [{}]", per_seed.join(", ")))
}

fn frozen_parity(runs: &[DeskRun]) -> Outcome {
    let n = runs.len() as f64;
    let full = runs.iter().map(|r| r.auroc_after).sum::<f64>() / n;
    let frozen = runs.iter().map(|r| r.auroc_frozen).sum::<f64>() / n;
    outcome(
        (full - frozen).abs() <= 0.05,
        format!("mean AUROC unfrozen {full:.4}, frozen {frozen:.4}, gap {:.4}", (full - frozen).abs()),
    )
}

fn ossl(dir: &Path, args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_ossl"))
        .current_dir(dir)
        .env_remove("OSSL_OUTPUT_ROOT")
        .args(args)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let desk = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.toml");
    if !ossl(root, &["-c", desk.to_str().unwrap(), "--seed", "2", "adapt", "--out", "first"]) {
        return outcome(false, "first run failed");
    }
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(root.join("first/manifest.json")).unwrap()).unwrap();
    let config = manifest["config"].as_str().unwrap_or("config.toml");
    let config = format!("first/{config}");
    if !ossl(root, &["-c", &config, "adapt", "--out", "second"]) {
        return outcome(false, "re-run failed");
    }
    let logged = ["metrics.csv", "metrics.json", "summary.json", "trace.json"];
    let differing: Vec<&str> = logged
        .iter()
        .copied()
        .filter(|f| fs::read(root.join("first").join(f)).ok() != fs::read(root.join("second").join(f)).ok())
        .collect();
    let outputs = manifest["outputs"].as_object().map_or(0, |o| o.len());
    outcome(
        differing.is_empty() && outputs > 0,
        if differing.is_empty() {
            format!("{} logged files identical, {outputs} outputs hashed in manifest", logged.len())
        } else {
            format!("differs: {}", differing.join(", "))
        },
    )
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |name: &str, o: Outcome| {
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    };
    report("gradient correctness", gradient_correctness());
    report("adversarial sign structure", adversarial_sign_structure());
    report("partition properties", partition_properties());
    report("metric oracles", metric_oracles());
    report("ablation identities", ablation_identities());
    let runs = desk_runs();
    report("desk-scale adaptation benefit", desk_benefit(&runs));
    report("margin-loss effect", margin_effect(&runs));
    report("frozen-extractor parity", frozen_parity(&runs));
    report("determinism from manifest", determinism());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
