//! Implementations of the four subcommands. Each writes its manifest
//! first, then its artifacts; progress and timing go to stderr only, so
//! every file an invocation produces is byte-stable across reruns.

use crate::manifest::{hash_file, write_json, write_manifest, RunManifest};
use crate::{CurvesArgs, GenArgs, TrainArgs, VerifyArgs};
use fairnorm_core::spectral::{
    median, run_bound_suite, run_convergence_suite, run_interlacing_suite, run_projection_suite,
    ConvergenceConfig,
};
use fairnorm_core::{
    compute_stats, generate_synthetic, load_dataset_dir, make_splits, meta_for_spec, train,
    Activation, EpochRecord, Error, EvalMetrics, FairnessMode, NormMode, Result, SyntheticSpec,
    TrainConfig, TrainOutcome,
};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use std::path::Path;
use std::time::Instant;

const TOOL: &str = "fairnorm";
const VERSION: &str = env!("CARGO_PKG_VERSION");

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn parse_split(s: &str) -> Result<(f64, f64, f64)> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(Error::InvalidArgument(format!(
            "--split needs three comma-separated fractions, got '{s}'"
        )));
    }
    let mut v = [0.0f64; 3];
    for (slot, part) in v.iter_mut().zip(parts.iter()) {
        *slot = part.trim().parse().map_err(|_| {
            Error::InvalidArgument(format!("split fraction '{part}' is not a number"))
        })?;
    }
    Ok((v[0], v[1], v[2]))
}

#[derive(Debug, Serialize)]
struct MeanStd {
    mean: f64,
    std: f64,
}

/// Mean and sample standard deviation (n - 1); std is 0.0 for one value.
fn mean_std(values: &[f64]) -> MeanStd {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    MeanStd { mean, std }
}

// -- gen ---------------------------------------------------------------------

pub fn run_gen(args: &GenArgs, threads: usize) -> Result<i32> {
    let mut spec = match args.preset.as_str() {
        "bench800" => SyntheticSpec::bench800(args.seed),
        "tiny" => SyntheticSpec::tiny(args.seed),
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown preset '{other}' (expected bench800 or tiny)"
            )))
        }
    };
    if let Some(n0) = args.n0 {
        spec.n0 = n0;
    }
    if let Some(n1) = args.n1 {
        spec.n1 = n1;
    }
    if let Some(f) = args.features {
        spec.feature_dim = f;
    }
    if let Some(e) = args.intra {
        spec.intra_edge_target = e;
    }
    if let Some(e) = args.inter {
        spec.inter_edge_target = e;
    }
    if let Some(s) = args.shift {
        spec.feature_shift = s;
    }
    if let Some(b) = args.bias {
        spec.label_bias = b;
    }

    let meta = meta_for_spec(&args.preset, &spec);
    let manifest = RunManifest {
        tool: TOOL,
        version: VERSION,
        command: "gen",
        config: json!({ "preset": args.preset, "spec": spec }),
        seeds: vec![args.seed],
        inputs: Vec::new(),
        out_dir: args.out.display().to_string(),
        outputs: vec![
            meta.edge_file.clone(),
            meta.feature_file.clone(),
            "meta.json".into(),
            "stats.json".into(),
        ],
        threads,
    };
    write_manifest(&args.out, &manifest)?;

    let started = Instant::now();
    let graph = generate_synthetic(&spec)?;
    fairnorm_core::write_dataset(&args.out, &graph, &meta)?;
    let stats = compute_stats(&graph);
    eprintln!(
        "gen: {} nodes, {} edges ({} intra / {} inter, homophily {:.3}), \
         positive rates {:.3}/{:.3}, {:.2}s",
        stats.n,
        stats.edges_total,
        stats.edges_intra,
        stats.edges_inter,
        stats.homophily,
        stats.positive_rate[0],
        stats.positive_rate[1],
        started.elapsed().as_secs_f64()
    );
    Ok(0)
}

// -- train -------------------------------------------------------------------

#[derive(Debug, Serialize)]
struct SeedResult {
    seed: u64,
    best_epoch: usize,
    best_val_acc: f64,
    test: EvalMetrics,
}

fn curves_file(seed: u64) -> String {
    format!("curves_seed{seed}.csv")
}

fn result_file(seed: u64) -> String {
    format!("result_seed{seed}.json")
}

fn write_epoch_csv(path: &Path, records: &[EpochRecord]) -> Result<()> {
    let mut text = String::from(EpochRecord::csv_header());
    text.push('\n');
    for r in records {
        text.push_str(&r.csv_row());
        text.push('\n');
    }
    write_text(path, &text)
}

pub fn run_train(args: &TrainArgs, threads: usize) -> Result<i32> {
    if args.seeds.is_empty() {
        return Err(Error::InvalidArgument("--seeds must not be empty".into()));
    }
    let split = parse_split(&args.split)?;
    let template = TrainConfig {
        epochs: args.epochs,
        lr: args.lr,
        weight_decay: args.weight_decay,
        hidden_dim: args.hidden,
        activation: Activation::parse(&args.activation)?,
        norm: NormMode::parse(&args.norm)?,
        fairness: FairnessMode::parse(&args.fairness)?,
        kappa: args.kappa,
        tau: args.tau,
        seed: 0,
    };
    template.validate()?;

    let dataset_files = ["meta.json", "edges.tsv", "features.csv"];
    let mut inputs = Vec::new();
    for name in dataset_files {
        let p = args.dataset.join(name);
        if p.exists() {
            inputs.push(hash_file(&p)?);
        }
    }
    let mut outputs = Vec::new();
    for &s in &args.seeds {
        outputs.push(curves_file(s));
        outputs.push(result_file(s));
    }
    outputs.push("aggregate.json".into());
    let manifest = RunManifest {
        tool: TOOL,
        version: VERSION,
        command: "train",
        config: json!({
            "dataset": args.dataset.display().to_string(),
            "split": [split.0, split.1, split.2],
            "split_seed": args.split_seed,
            "train": template,
        }),
        seeds: args.seeds.clone(),
        inputs,
        out_dir: args.out.display().to_string(),
        outputs,
        threads,
    };
    write_manifest(&args.out, &manifest)?;

    let (mut graph, _meta) = load_dataset_dir(&args.dataset)?;
    make_splits(&mut graph, split, args.split_seed)?;

    let started = Instant::now();
    let runs: Result<Vec<(u64, TrainOutcome)>> = args
        .seeds
        .par_iter()
        .map(|&seed| {
            let cfg = TrainConfig {
                seed,
                ..template.clone()
            };
            let (_, outcome) = train(&graph, &cfg)?;
            Ok((seed, outcome))
        })
        .collect();
    let runs = runs?;

    let mut acc = Vec::new();
    let mut dsp = Vec::new();
    let mut deo = Vec::new();
    for (seed, outcome) in &runs {
        write_epoch_csv(&args.out.join(curves_file(*seed)), &outcome.records)?;
        write_json(
            &args.out.join(result_file(*seed)),
            &SeedResult {
                seed: *seed,
                best_epoch: outcome.best_epoch,
                best_val_acc: outcome.best_val_acc,
                test: outcome.test,
            },
        )?;
        eprintln!(
            "seed {seed}: test acc {:.4}, dsp {:.4}, deo {:.4} (best epoch {})",
            outcome.test.accuracy, outcome.test.delta_sp, outcome.test.delta_eo, outcome.best_epoch
        );
        acc.push(outcome.test.accuracy);
        dsp.push(outcome.test.delta_sp);
        deo.push(outcome.test.delta_eo);
    }
    write_json(
        &args.out.join("aggregate.json"),
        &json!({
            "seeds": args.seeds,
            "test_accuracy": mean_std(&acc),
            "test_delta_sp": mean_std(&dsp),
            "test_delta_eo": mean_std(&deo),
        }),
    )?;
    eprintln!(
        "train: {} runs in {:.2}s",
        runs.len(),
        started.elapsed().as_secs_f64()
    );
    Ok(0)
}

// -- verify ------------------------------------------------------------------

struct SuiteOutcome {
    name: &'static str,
    trials: usize,
    pass: bool,
    csv: String,
    summary: serde_json::Value,
}

fn run_suite(name: &str, trials: Option<usize>, seed: u64) -> Result<SuiteOutcome> {
    let started = Instant::now();
    let outcome = match name {
        "interlacing" => {
            let trials = trials.unwrap_or(1000);
            let (rows, summary) = run_interlacing_suite(trials, seed, (6, 60), 1e-8)?;
            let mut csv = String::from(fairnorm_core::spectral::SpectrumReport::csv_header());
            csv.push('\n');
            for r in &rows {
                csv.push_str(&r.csv_row());
                csv.push('\n');
            }
            SuiteOutcome {
                name: "interlacing",
                trials,
                pass: summary.all_ok,
                csv,
                summary: serde_json::to_value(&summary).expect("summary serializes"),
            }
        }
        "projection" => {
            let trials = trials.unwrap_or(500);
            let (rows, summary) = run_projection_suite(trials, seed, 128, 1e-11);
            let mut csv = String::from(fairnorm_core::spectral::ProjectionReport::csv_header());
            csv.push('\n');
            for r in &rows {
                csv.push_str(&r.csv_row());
                csv.push('\n');
            }
            SuiteOutcome {
                name: "projection",
                trials,
                pass: summary.all_ok,
                csv,
                summary: serde_json::to_value(&summary).expect("summary serializes"),
            }
        }
        "bound" => {
            let trials = trials.unwrap_or(1000);
            let (rows, summary) = run_bound_suite(trials, seed, 16, 64, 1e-9)?;
            let mut csv = String::from(fairnorm_core::spectral::BoundTrialReport::csv_header());
            csv.push('\n');
            for r in &rows {
                csv.push_str(&r.csv_row());
                csv.push('\n');
            }
            SuiteOutcome {
                name: "bound",
                trials,
                pass: summary.all_ok,
                csv,
                summary: serde_json::to_value(&summary).expect("summary serializes"),
            }
        }
        "convergence" => {
            let trials = trials.unwrap_or(200);
            let cfg = ConvergenceConfig::default();
            let (rows, summary) = run_convergence_suite(trials, seed, &cfg)?;
            let mut csv = String::from(fairnorm_core::spectral::ConvergenceTrial::csv_header());
            csv.push('\n');
            for r in &rows {
                csv.push_str(&r.csv_row());
                csv.push('\n');
            }
            let pass = summary.envelope_ok_all
                && summary.monotone_ok_all
                && summary.fraction_no_worse > 0.95
                && summary.median_rate_shifted <= summary.median_rate_vanilla;
            SuiteOutcome {
                name: "convergence",
                trials,
                pass,
                csv,
                summary: serde_json::to_value(&summary).expect("summary serializes"),
            }
        }
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown suite '{other}' (expected interlacing, projection, bound, convergence, or all)"
            )))
        }
    };
    eprintln!(
        "verify {}: {} trials, pass={}, {:.2}s",
        outcome.name,
        outcome.trials,
        outcome.pass,
        started.elapsed().as_secs_f64()
    );
    Ok(outcome)
}

pub fn run_verify(args: &VerifyArgs, threads: usize) -> Result<i32> {
    let all = ["interlacing", "projection", "bound", "convergence"];
    // Validate the name up front so the manifest reflects a real plan.
    let selected: Vec<&str> = if args.suite == "all" {
        all.to_vec()
    } else if all.contains(&args.suite.as_str()) {
        vec![args.suite.as_str()]
    } else {
        return Err(Error::InvalidArgument(format!(
            "unknown suite '{}' (expected interlacing, projection, bound, convergence, or all)",
            args.suite
        )));
    };

    let mut outputs: Vec<String> = selected.iter().map(|s| format!("{s}.csv")).collect();
    outputs.push("verify_summary.json".into());
    let manifest = RunManifest {
        tool: TOOL,
        version: VERSION,
        command: "verify",
        config: json!({
            "suite": args.suite,
            "trials_override": args.trials,
            "parameters": {
                "interlacing": { "default_trials": 1000, "n_range": [6, 60], "rel_tol": 1e-8 },
                "projection": { "default_trials": 500, "n_max": 128, "tol": 1e-11 },
                "bound": { "default_trials": 1000, "max_features": 16, "max_group": 64, "slack": 1e-9 },
                "convergence": { "default_trials": 200, "config": ConvergenceConfig::default() },
            },
        }),
        seeds: vec![args.seed],
        inputs: Vec::new(),
        out_dir: args.out.display().to_string(),
        outputs,
        threads,
    };
    write_manifest(&args.out, &manifest)?;

    let mut suites = serde_json::Map::new();
    let mut all_pass = true;
    for name in &selected {
        let outcome = run_suite(name, args.trials, args.seed)?;
        write_text(&args.out.join(format!("{}.csv", outcome.name)), &outcome.csv)?;
        all_pass &= outcome.pass;
        suites.insert(
            outcome.name.to_string(),
            json!({
                "pass": outcome.pass,
                "trials": outcome.trials,
                "summary": outcome.summary,
            }),
        );
    }
    write_json(
        &args.out.join("verify_summary.json"),
        &json!({
            "seed": args.seed,
            "suites": suites,
            "all_pass": all_pass,
        }),
    )?;
    if all_pass {
        Ok(0)
    } else {
        eprintln!("verify: at least one suite found violations");
        Ok(3)
    }
}

// -- curves ------------------------------------------------------------------

pub fn run_curves(args: &CurvesArgs, threads: usize) -> Result<i32> {
    if args.seeds.is_empty() {
        return Err(Error::InvalidArgument("--seeds must not be empty".into()));
    }
    if !(args.factor.is_finite() && args.factor >= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "--factor must be at least 1, got {}",
            args.factor
        )));
    }
    let split = parse_split(&args.split)?;
    let activation = Activation::parse(&args.activation)?;
    let series: [(&str, NormMode, FairnessMode); 4] = [
        ("none", NormMode::None, FairnessMode::None),
        ("single", NormMode::Single, FairnessMode::None),
        ("group", NormMode::Group, FairnessMode::None),
        ("fairnorm", NormMode::Group, FairnessMode::Fairnorm),
    ];

    let dataset_files = ["meta.json", "edges.tsv", "features.csv"];
    let mut inputs = Vec::new();
    for name in dataset_files {
        let p = args.dataset.join(name);
        if p.exists() {
            inputs.push(hash_file(&p)?);
        }
    }
    let manifest = RunManifest {
        tool: TOOL,
        version: VERSION,
        command: "curves",
        config: json!({
            "dataset": args.dataset.display().to_string(),
            "split": [split.0, split.1, split.2],
            "split_seed": args.split_seed,
            "epochs": args.epochs,
            "lr": args.lr,
            "weight_decay": args.weight_decay,
            "hidden": args.hidden,
            "activation": activation,
            "kappa": args.kappa,
            "tau": args.tau,
            "factor": args.factor,
            "series": series.iter().map(|(n, _, _)| *n).collect::<Vec<_>>(),
        }),
        seeds: args.seeds.clone(),
        inputs,
        out_dir: args.out.display().to_string(),
        outputs: vec!["curves.csv".into(), "curves_summary.json".into()],
        threads,
    };
    write_manifest(&args.out, &manifest)?;

    let (mut graph, _meta) = load_dataset_dir(&args.dataset)?;
    make_splits(&mut graph, split, args.split_seed)?;

    let started = Instant::now();
    let jobs: Vec<(usize, u64)> = series
        .iter()
        .enumerate()
        .flat_map(|(i, _)| args.seeds.iter().map(move |&s| (i, s)))
        .collect();
    let runs: Result<Vec<(usize, u64, TrainOutcome)>> = jobs
        .par_iter()
        .map(|&(i, seed)| {
            let (_, norm, fairness) = series[i];
            let cfg = TrainConfig {
                epochs: args.epochs,
                lr: args.lr,
                weight_decay: args.weight_decay,
                hidden_dim: args.hidden,
                activation,
                norm,
                fairness,
                kappa: if fairness == FairnessMode::Fairnorm {
                    args.kappa
                } else {
                    0.0
                },
                tau: if fairness == FairnessMode::Fairnorm {
                    args.tau
                } else {
                    0.0
                },
                seed,
            };
            let (_, outcome) = train(&graph, &cfg)?;
            Ok((i, seed, outcome))
        })
        .collect();
    let runs = runs?;

    // Long format: one row per (config, seed, epoch).
    let mut csv = String::from(
        "config,seed,epoch,loss_total,loss_c,loss_mu,loss_delta,val_acc,val_dsp,val_deo\n",
    );
    for (i, seed, outcome) in &runs {
        let name = series[*i].0;
        for r in &outcome.records {
            csv.push_str(&format!("{name},{seed},{}\n", r.csv_row()));
        }
    }
    write_text(&args.out.join("curves.csv"), &csv)?;

    let mut summary_series = serde_json::Map::new();
    let mut medians: Vec<Option<f64>> = Vec::new();
    for (i, (name, _, _)) in series.iter().enumerate() {
        let mut per_seed: Vec<Option<usize>> = Vec::new();
        for (j, _, outcome) in &runs {
            if *j == i {
                let e = fairnorm_core::epochs_to_within(&outcome.records, args.factor);
                per_seed.push(if e == usize::MAX { None } else { Some(e) });
            }
        }
        let med = if per_seed.iter().all(|e| e.is_some()) && !per_seed.is_empty() {
            let mut vals: Vec<f64> = per_seed.iter().map(|e| e.unwrap() as f64).collect();
            Some(median(&mut vals))
        } else {
            None
        };
        medians.push(med);
        summary_series.insert(
            name.to_string(),
            json!({ "epochs_to_threshold": per_seed, "median": med }),
        );
    }
    let faster = |a: Option<f64>, b: Option<f64>| match (a, b) {
        (Some(x), Some(y)) => Some(x < y),
        _ => None,
    };
    write_json(
        &args.out.join("curves_summary.json"),
        &json!({
            "factor": args.factor,
            "series": summary_series,
            "single_median_below_none": faster(medians[1], medians[0]),
            "group_median_below_none": faster(medians[2], medians[0]),
        }),
    )?;
    eprintln!(
        "curves: {} runs in {:.2}s",
        runs.len(),
        started.elapsed().as_secs_f64()
    );
    Ok(0)
}
