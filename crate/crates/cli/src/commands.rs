use std::fs;
use std::path::Path;
use std::process::ExitCode;

use rmbrec::dataset::{
    diagnose_behaviors, is_split_dir, load_dataset, perturb as perturb_dataset, read_split, split_leave_one_out,
    write_dataset, write_split, PerturbationMode, PerturbationSpec,
};
use rmbrec::evaluation::{evaluate as evaluate_split, evaluate_pairs, fused_embeddings, robustness_sweep, EvalOptions};
use rmbrec::gradcheck::{run_gradcheck, GradcheckConfig, Variant};
use rmbrec::graph::build_all;
use rmbrec::training::{train as train_model, Checkpoint};
use rmbrec::{DatasetManifest, Error, InteractionDataset, Result, SplitDataset};

use crate::config::RunConfig;
use crate::{Cli, GradcheckArgs};

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Rejects unknown behaviors and the target before any data is read.
fn check_drop(dir: &Path, drop: &[String]) -> Result<()> {
    if drop.is_empty() {
        return Ok(());
    }
    let manifest = read_manifest(dir)?;
    for name in drop {
        if *name == manifest.target {
            return Err(Error::Config(format!("cannot drop the target behavior '{name}'")));
        }
        if !manifest.behaviors.contains(name) {
            return Err(Error::Config(format!("unknown behavior '{name}' in drop_behaviors")));
        }
    }
    Ok(())
}

/// A split directory as written, or a raw dataset split on the fly.
fn load_split(dir: &Path) -> Result<SplitDataset> {
    if is_split_dir(dir) {
        read_split(dir)
    } else {
        Ok(split_leave_one_out(&load_dataset(dir)?))
    }
}

fn load_for(cfg: &RunConfig) -> Result<SplitDataset> {
    let mut split = load_split(cfg.dataset()?)?;
    if !cfg.drop_behaviors.is_empty() {
        split.train = split.train.without_behaviors(&cfg.drop_behaviors)?;
    }
    Ok(split)
}

/// JSON goes to `out/file` with the summary on stdout, or to stdout with the
/// summary on stderr.
fn print_or_write(out: Option<&Path>, file: &str, json: &str, summary: &str) -> Result<()> {
    match out {
        Some(dir) => {
            create_dir(dir)?;
            let path = dir.join(file);
            write_file(&path, json)?;
            println!("{summary}");
            println!("wrote {}", path.display());
        }
        None => {
            println!("{json}");
            eprintln!("{summary}");
        }
    }
    Ok(())
}

pub fn diagnose(cli: &Cli, dataset: &Path, behaviors: Option<&[String]>) -> Result<ExitCode> {
    let ds: InteractionDataset = if is_split_dir(dataset) {
        read_split(dataset)?.train
    } else {
        load_dataset(dataset)?
    };
    let report = diagnose_behaviors(&ds, behaviors)?;
    let bar: Vec<String> = report.bar.iter().map(|(b, v)| format!("{b} {v:.4}")).collect();
    let summary = format!(
        "{} users, {} items; BAR: {}; DT {:.4}{}",
        report.num_users,
        report.num_items,
        bar.join(", "),
        report.dt,
        if report.dt_approximate { " (approximate)" } else { "" }
    );
    print_or_write(cli.out.as_deref(), "diagnostics.json", &report.to_json(), &summary)?;
    Ok(ExitCode::SUCCESS)
}

pub fn split(cli: &Cli, dataset: &Path) -> Result<ExitCode> {
    let out = cli
        .out
        .as_deref()
        .ok_or_else(|| Error::Config("split needs --out".into()))?;
    let split = split_leave_one_out(&load_dataset(dataset)?);
    write_split(&split, out)?;
    println!(
        "train {} target edges, validation {}, test {} -> {}",
        split.train.target_edges().len(),
        split.validation.len(),
        split.test.len(),
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

pub fn perturb(
    cli: &Cli,
    dataset: &Path,
    mode: PerturbationMode,
    ratio: f64,
    behaviors: Option<&[String]>,
) -> Result<ExitCode> {
    let out = cli
        .out
        .as_deref()
        .ok_or_else(|| Error::Config("perturb needs --out".into()))?;
    let seed = cli.seed.unwrap_or(RunConfig::default().seed);
    let split_input = is_split_dir(dataset);
    let mut split = if split_input { Some(read_split(dataset)?) } else { None };
    let ds = match &split {
        Some(s) => s.train.clone(),
        None => load_dataset(dataset)?,
    };
    let spec = match behaviors {
        Some(names) => PerturbationSpec { mode, ratio, behaviors: names.to_vec(), seed },
        None => PerturbationSpec::all_auxiliary(&ds, mode, ratio, seed),
    };
    let perturbed = perturb_dataset(&ds, &spec)?;
    match split.as_mut() {
        Some(s) => {
            s.train = perturbed.clone();
            write_split(s, out)?;
        }
        None => write_dataset(&perturbed, out)?,
    }
    let spec_json = serde_json::to_string_pretty(&spec)?;
    write_file(&out.join("perturbation.json"), &spec_json)?;
    for name in &spec.behaviors {
        println!(
            "{name}: {} -> {} edges",
            ds.edges_named(name)?.len(),
            perturbed.edges_named(name)?.len()
        );
    }
    Ok(ExitCode::SUCCESS)
}

pub fn train(cfg: &RunConfig) -> Result<ExitCode> {
    let dataset = cfg.dataset()?;
    let out = cfg.out()?;
    check_drop(dataset, &cfg.drop_behaviors)?;
    let tc = cfg.train_config(Some(out.join("train_log.csv")))?;
    let split = load_for(cfg)?;
    create_dir(out)?;
    cfg.echo(out)?;

    let outcome = train_model(&split, &tc)?;
    Checkpoint::new(&outcome.state, &split.train).save(out.join("model.json"))?;
    if !split.validation.is_empty() {
        let fused = fused_embeddings(&outcome.state, &build_all(&split.train))?;
        let opts = EvalOptions {
            ks: cfg.ks.clone(),
            exclude_train: cfg.exclude_train,
            record_ranks: false,
        };
        let report = evaluate_pairs(&fused, &split, &split.validation, &opts)?;
        write_file(&out.join("validation.json"), &report.to_json())?;
    }
    println!(
        "trained {} epochs{}, best epoch {}, validation HR@10 {}",
        outcome.epochs_run,
        if outcome.stopped_early { " (early stop)" } else { "" },
        outcome.best_epoch,
        outcome.best_val_hr10.map_or_else(|| "n/a".into(), |v| format!("{v:.4}"))
    );
    println!("outputs in {}", out.display());
    Ok(ExitCode::SUCCESS)
}

pub fn evaluate(
    cli: &Cli,
    dataset: &Path,
    checkpoint: &Path,
    ks: Option<&[usize]>,
    exclude_train: bool,
    record_ranks: bool,
) -> Result<ExitCode> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let mut split = load_split(dataset)?;
    if split.train.behaviors() != ckpt.behaviors.as_slice() {
        split.train = split.train.select_behaviors(&ckpt.behaviors)?;
    }
    ckpt.check_compatible(&split.train)?;
    let opts = EvalOptions {
        ks: ks.map_or_else(|| EvalOptions::default().ks, <[usize]>::to_vec),
        exclude_train,
        record_ranks,
    };
    let report = evaluate_split(&ckpt.to_state()?, &split, &opts)?;
    let metrics: Vec<String> = report
        .ks
        .iter()
        .map(|&k| format!("HR@{k} {:.4} NDCG@{k} {:.4}", report.hr[&k], report.ndcg[&k]))
        .collect();
    let summary = format!("{} test users: {}", report.num_evaluated_users, metrics.join(", "));
    print_or_write(cli.out.as_deref(), "report.json", &report.to_json(), &summary)?;
    Ok(ExitCode::SUCCESS)
}

pub fn sweep(cfg: &RunConfig) -> Result<ExitCode> {
    let dataset = cfg.dataset()?;
    let out = cfg.out()?;
    check_drop(dataset, &cfg.drop_behaviors)?;
    if cfg.ratios.is_empty() || cfg.modes.is_empty() {
        return Err(Error::Config("sweep needs at least one ratio and one mode".into()));
    }
    let tc = cfg.train_config(None)?;
    let split = load_for(cfg)?;
    create_dir(out)?;
    cfg.echo(out)?;

    let table = robustness_sweep(&split, &tc, &cfg.ratios, &cfg.modes, cfg.seed)?;
    let csv = table.to_csv();
    write_file(&out.join("sweep.csv"), &csv)?;
    write_file(&out.join("sweep.json"), &serde_json::to_string_pretty(&table)?)?;
    print!("{csv}");
    Ok(ExitCode::SUCCESS)
}

fn parts(v: &Variant) -> [String; 3] {
    [v.irm_variant.to_string(), v.rrm_denominator.to_string(), v.orm_scope.to_string()]
}

pub fn gradcheck(cli: &Cli, args: &GradcheckArgs) -> Result<ExitCode> {
    let all = Variant::all();
    for f in &args.variant {
        if !all.iter().any(|v| parts(v).contains(f)) {
            return Err(Error::Config(format!("unknown variant part '{f}'")));
        }
    }
    let variants: Vec<Variant> = all
        .into_iter()
        .filter(|v| args.variant.iter().all(|f| parts(v).contains(f)))
        .collect();
    let cfg = GradcheckConfig {
        seed: cli.seed.unwrap_or(0),
        num_users: args.users,
        num_items: args.items,
        num_behaviors: args.behaviors,
        dim: args.dim,
        layers: args.layers,
        step: args.step,
        tolerance: args.tolerance,
        variants,
        corrupt: args.corrupt_path,
    };
    let report = run_gradcheck(&cfg)?;
    for r in &report.results {
        println!(
            "{:<36} {:<5} {:.3e} {}",
            r.variant,
            r.path.to_string(),
            r.max_rel_error,
            if r.passed { "ok" } else { "FAIL" }
        );
    }
    if let Some(dir) = cli.out.as_deref() {
        create_dir(dir)?;
        write_file(&dir.join("gradcheck.json"), &serde_json::to_string_pretty(&report)?)?;
    }
    if report.passed() {
        println!(
            "gradcheck passed: {} checks, max relative error {:.3e} (tolerance {:e})",
            report.results.len(),
            report.max_error(),
            report.tolerance
        );
        Ok(ExitCode::SUCCESS)
    } else {
        let failed: Vec<String> = report.failures().map(|r| format!("{} on {}", r.path, r.variant)).collect();
        eprintln!("gradcheck FAILED ({} of {}): {}", failed.len(), report.results.len(), failed.join(", "));
        Ok(ExitCode::from(3))
    }
}
