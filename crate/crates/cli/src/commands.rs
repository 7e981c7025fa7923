use std::path::{Path, PathBuf};

use gcnssl::experiment::fingerprint;
use gcnssl::model::TransferReport;
use gcnssl::synthetic::{generate, SyntheticConfig};
use gcnssl::train::{evaluate_all, Accuracies};
use gcnssl::{
    atomic_write, encoder_from_snapshot, export_embeddings, finetune, load_dataset, pretrain,
    run_experiment, store_dataset, sweep, validate_against_reference, write_json, Error, Graph,
    Provenance, Real, ReferenceStats, Result, RunReport, WeightSnapshot,
};
use log::info;
use serde::Serialize;

use crate::args::{
    Dtype, ExperimentCmd, ExportCmd, Preset, PretrainCmd, SweepCmd, SynthesizeCmd, TrainCmd,
    ValidateCmd,
};
use crate::settings::Settings;

macro_rules! dispatch {
    ($dtype:expr, $f:ident($($arg:expr),*)) => {
        match $dtype {
            Dtype::F32 => $f::<f32>($($arg),*),
            Dtype::F64 => $f::<f64>($($arg),*),
        }
    };
}

fn load(settings: &Settings) -> Result<Graph> {
    let dir = settings.data_dir()?;
    let g = load_dataset(&dir)?;
    info!(
        "loaded {} from {}: {} nodes, {} edges, {} features, {} classes",
        g.name(),
        dir.display(),
        g.num_nodes(),
        g.num_edges(),
        g.num_features(),
        g.num_classes()
    );
    Ok(g)
}

fn required<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    path.as_deref()
        .ok_or_else(|| Error::Usage(format!("{flag} is required")))
}

#[derive(Serialize)]
struct PretrainLog<'a> {
    dataset: &'a str,
    fingerprint: &'a str,
    initial_loss: f64,
    best_loss: f64,
    best_epoch: usize,
    epochs_run: usize,
    sampled_loss: bool,
    history: &'a [f64],
}

pub fn pretrain_cmd(cmd: &PretrainCmd) -> Result<()> {
    let s = Settings::resolve(&cmd.data, Some(&cmd.model), Some(&cmd.pretrain), None, None)?;
    let out = required(&cmd.out, "--out")?;
    let g = load(&s)?;
    let cfg = s.pretrain_config();
    let fp = fingerprint(g.name(), &cfg);
    info!("pretrain fingerprint {fp}");
    let outcome = dispatch!(s.dtype, pretrain(&g, &cfg, s.seed))?;
    outcome.snapshot.save(out)?;
    info!(
        "pretext loss {:.6} -> {:.6} (best epoch {}, {} epochs), snapshot written to {}",
        outcome.initial_loss,
        outcome.best_loss,
        outcome.best_epoch,
        outcome.epochs_run,
        out.display()
    );
    if let Some(log) = &cmd.log {
        write_json(
            log,
            &PretrainLog {
                dataset: g.name(),
                fingerprint: &fp,
                initial_loss: outcome.initial_loss,
                best_loss: outcome.best_loss,
                best_epoch: outcome.best_epoch,
                epochs_run: outcome.epochs_run,
                sampled_loss: outcome.sampled_loss,
                history: &outcome.history,
            },
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct TrainMetrics {
    dataset: String,
    fingerprint: String,
    dtype: String,
    seed: u64,
    init: Option<Provenance>,
    transfer: Option<TransferReport>,
    best_epoch: usize,
    best_val_loss: f64,
    epochs_run: usize,
    accuracies: Accuracies,
}

fn train_typed<T: Real>(
    g: &Graph,
    s: &Settings,
    init: Option<&WeightSnapshot>,
    out: &Path,
) -> Result<Accuracies> {
    let cfg = s.finetune_config();
    let fp = fingerprint(g.name(), &(&cfg, init.map(|w| w.provenance)));
    info!("train fingerprint {fp}");
    let outcome = finetune::<T>(g, init, &cfg, s.seed)?;
    let accuracies = evaluate_all(&outcome.model, g)?;
    std::fs::create_dir_all(out)?;
    WeightSnapshot::of_model(&outcome.model, Provenance::Finetuned, s.seed).save(&out.join("model.json"))?;
    write_json(
        &out.join("metrics.json"),
        &TrainMetrics {
            dataset: g.name().to_string(),
            fingerprint: fp,
            dtype: T::DTYPE.to_string(),
            seed: s.seed,
            init: init.map(|w| w.provenance),
            transfer: outcome.transfer,
            best_epoch: outcome.best_epoch,
            best_val_loss: outcome.best_val_loss,
            epochs_run: outcome.epochs_run,
            accuracies,
        },
    )?;
    Ok(accuracies)
}

pub fn train_cmd(cmd: &TrainCmd) -> Result<()> {
    let s = Settings::resolve(&cmd.data, Some(&cmd.model), None, Some(&cmd.finetune), None)?;
    let out = required(&cmd.out, "--out")?;
    let init = cmd.init.as_deref().map(WeightSnapshot::load).transpose()?;
    let g = load(&s)?;
    let acc = dispatch!(s.dtype, train_typed(&g, &s, init.as_ref(), out))?;
    println!(
        "train {:.4}  val {:.4}  test {:.4}",
        acc.train, acc.val, acc.test
    );
    Ok(())
}

fn summary(r: &RunReport) -> String {
    let mut line = format!(
        "{} {}: {:.2} ± {:.2} % over {} runs",
        r.dataset,
        r.label,
        100.0 * r.mean,
        100.0 * r.std,
        r.runs.len()
    );
    if let Some(c) = &r.comparison {
        line.push_str(&format!(
            ", vs baseline {:.2} %: t = {:.3}, p = {:.4}",
            100.0 * c.baseline_mean,
            c.t,
            c.p_value
        ));
    }
    if let Some(e) = &r.comparison_error {
        line.push_str(&format!(", no comparison: {e}"));
    }
    line
}

pub fn experiment_cmd(cmd: &ExperimentCmd) -> Result<()> {
    let s = Settings::resolve(
        &cmd.data,
        Some(&cmd.model),
        Some(&cmd.pretrain),
        Some(&cmd.finetune),
        Some(&cmd.run),
    )?;
    let baseline: Option<RunReport> = match &cmd.baseline {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound => Error::NotFound(path.clone()),
                _ => Error::Io(e),
            })?;
            Some(serde_json::from_str(&text).map_err(|e| {
                Error::Validation(format!("{} is not an experiment report: {e}", path.display()))
            })?)
        }
        None => None,
    };
    let g = load(&s)?;
    let cfg = s.experiment_config();
    cfg.validate()?;
    info!("experiment {} fingerprint {}", cfg.label(), fingerprint(g.name(), &cfg));
    let report = dispatch!(s.dtype, run_experiment(&g, &cfg, baseline.as_ref(), s.jobs))?;
    if let Some(out) = &cmd.out {
        write_json(out, &report)?;
    }
    println!("{}", summary(&report));
    Ok(())
}

pub fn sweep_cmd(cmd: &SweepCmd) -> Result<()> {
    let s = Settings::resolve(
        &cmd.data,
        Some(&cmd.model),
        Some(&cmd.pretrain),
        Some(&cmd.finetune),
        Some(&cmd.run),
    )?;
    let cfg = s.sweep_config(cmd.percentages.clone(), cmd.strategies.clone());
    cfg.experiment.validate()?;
    let g = load(&s)?;
    info!(
        "sweep of {} cells, fingerprint {}",
        cfg.num_cells(),
        fingerprint(g.name(), &cfg)
    );
    let report = dispatch!(s.dtype, sweep(&g, &cfg, s.jobs))?;
    let table = report.render_table();
    if let Some(out) = &cmd.out {
        write_json(out, &report)?;
        let table_path = cmd.table.clone().unwrap_or_else(|| out.with_extension("txt"));
        atomic_write(&table_path, table.as_bytes())?;
    } else if let Some(path) = &cmd.table {
        atomic_write(path, table.as_bytes())?;
    }
    print!("{table}");
    Ok(())
}

fn export_typed<T: Real>(g: &Graph, snapshot: &WeightSnapshot, out: &Path) -> Result<usize> {
    let model = encoder_from_snapshot::<T>(snapshot, g.num_features())?;
    export_embeddings(&model, g, out)
}

pub fn export_cmd(cmd: &ExportCmd) -> Result<()> {
    let s = Settings::resolve(&cmd.data, None, None, None, None)?;
    let snapshot = WeightSnapshot::load(required(&cmd.snapshot, "--snapshot")?)?;
    let out = required(&cmd.out, "--out")?;
    let g = load(&s)?;
    let rows = dispatch!(s.dtype, export_typed(&g, &snapshot, out))?;
    info!("wrote {rows} embeddings to {}", out.display());
    Ok(())
}

pub fn validate_cmd(cmd: &ValidateCmd) -> Result<()> {
    let s = Settings::resolve(&cmd.data, None, None, None, None)?;
    let g = load(&s)?;
    let name = cmd.reference.as_deref().unwrap_or(g.name());
    let reference = ReferenceStats::citation(name).ok_or_else(|| {
        Error::Usage(format!(
            "no reference statistics for `{name}`; use --reference cora, citeseer or pubmed"
        ))
    })?;
    let report = validate_against_reference(&g, &reference);
    print!("{}", report.render());
    if report.all_match() {
        Ok(())
    } else {
        let fields: Vec<&str> = report.mismatches().map(|c| c.field.as_str()).collect();
        Err(Error::Validation(format!("mismatched {}", fields.join(", "))))
    }
}

pub fn synthesize_cmd(cmd: &SynthesizeCmd) -> Result<()> {
    let cfg = match cmd.preset {
        Preset::Small => SyntheticConfig::small(),
        Preset::CoraSized => SyntheticConfig::cora_sized(),
    };
    let g = generate(&cfg, cmd.seed)?;
    store_dataset(&g, &cmd.out)?;
    info!(
        "wrote {} ({} nodes, {} edges) to {}",
        g.name(),
        g.num_nodes(),
        g.num_edges(),
        cmd.out.display()
    );
    Ok(())
}
