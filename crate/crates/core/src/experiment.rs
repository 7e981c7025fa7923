//! Repeated runs over seeds, paired comparison with a baseline and the
//! strategy × percentage sweep.

use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use log::info;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::numeric::{fnv1a64, Real};
use crate::ssl::{SslConfig, Strategy};
use crate::stats::{paired_t_test, summarize};
use crate::train::{evaluate_all, finetune, pretrain, FinetuneConfig, PretrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub runs: usize,
    pub base_seed: u64,
    /// `None` runs the classifier without pretraining.
    pub pretrain: Option<PretrainConfig>,
    pub finetune: FinetuneConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            runs: 10,
            base_seed: 0,
            pretrain: None,
            finetune: FinetuneConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.runs < 2 {
            return Err(Error::Config(format!(
                "an experiment needs at least 2 runs, got {}",
                self.runs
            )));
        }
        if let Some(p) = &self.pretrain {
            p.validate()?;
        }
        self.finetune.validate()
    }

    pub fn seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.runs as u64).map(move |i| self.base_seed.wrapping_add(i))
    }

    /// Short name of the condition: `baseline` or e.g. `RRL&RCF 40%`.
    pub fn label(&self) -> String {
        match &self.pretrain {
            None => "baseline".into(),
            Some(p) => ssl_label(&p.ssl),
        }
    }
}

fn ssl_label(ssl: &SslConfig) -> String {
    let pct = |p: f64| format!("{}%", (p * 100.0).round());
    match ssl.strategy {
        Strategy::RemoveLinks => format!("RRL {}", pct(ssl.remove_fraction)),
        Strategy::CoverFeatures => format!("RCF {}", pct(ssl.cover_fraction)),
        Strategy::Both if ssl.remove_fraction == ssl.cover_fraction => {
            format!("RRL&RCF {}", pct(ssl.remove_fraction))
        }
        Strategy::Both => format!(
            "RRL {} & RCF {}",
            pct(ssl.remove_fraction),
            pct(ssl.cover_fraction)
        ),
    }
}

/// Hex FNV-1a of the canonical JSON of the dataset name and configuration.
pub fn fingerprint<S: Serialize>(dataset: &str, cfg: &S) -> String {
    let canonical = serde_json::to_string(&(dataset, cfg)).unwrap_or_default();
    format!("{:016x}", fnv1a64(canonical.as_bytes()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub test_accuracy: f64,
    pub val_accuracy: f64,
    pub train_accuracy: f64,
    pub finetune_epochs: usize,
    pub best_val_epoch: usize,
    pub pretrain_best_loss: Option<f64>,
    pub pretrain_epochs: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub baseline_fingerprint: String,
    pub baseline_mean: f64,
    pub mean_difference: f64,
    pub t: f64,
    pub df: usize,
    pub p_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub dataset: String,
    pub label: String,
    pub fingerprint: String,
    pub dtype: String,
    pub config: ExperimentConfig,
    pub runs: Vec<RunRecord>,
    /// Test accuracies in seed order.
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub comparison: Option<Comparison>,
    /// Why no comparison could be computed against a supplied baseline.
    pub comparison_error: Option<String>,
}

impl RunReport {
    pub fn seeds(&self) -> Vec<u64> {
        self.runs.iter().map(|r| r.seed).collect()
    }

    /// Paired test of this report against `baseline`, runs matched by seed
    /// index.
    pub fn compare_with(&mut self, baseline: &RunReport) -> Result<()> {
        if baseline.dataset != self.dataset {
            return Err(Error::Validation(format!(
                "baseline was run on `{}`, this experiment on `{}`",
                baseline.dataset, self.dataset
            )));
        }
        if baseline.seeds() != self.seeds() {
            return Err(Error::Validation(
                "baseline and experiment were run with different seeds".into(),
            ));
        }
        match paired_t_test(&self.accuracies, &baseline.accuracies) {
            Ok(t) => {
                self.comparison = Some(Comparison {
                    baseline_fingerprint: baseline.fingerprint.clone(),
                    baseline_mean: baseline.mean,
                    mean_difference: t.mean_difference,
                    t: t.t,
                    df: t.df,
                    p_value: t.p_value,
                });
                self.comparison_error = None;
            }
            Err(Error::Degenerate(msg)) => {
                self.comparison = None;
                self.comparison_error = Some(msg);
            }
            Err(e) => return Err(e),
        }
        Ok(())
    }
}

/// One seed: optional pretraining, fine-tuning and evaluation.
pub fn run_once<T: Real>(g: &Graph, cfg: &ExperimentConfig, seed: u64) -> Result<RunRecord> {
    let pre = cfg
        .pretrain
        .as_ref()
        .map(|p| pretrain::<T>(g, p, seed))
        .transpose()?;
    let ft = finetune::<T>(g, pre.as_ref().map(|p| &p.snapshot), &cfg.finetune, seed)?;
    let acc = evaluate_all(&ft.model, g)?;
    Ok(RunRecord {
        seed,
        test_accuracy: acc.test,
        val_accuracy: acc.val,
        train_accuracy: acc.train,
        finetune_epochs: ft.epochs_run,
        best_val_epoch: ft.best_epoch,
        pretrain_best_loss: pre.as_ref().map(|p| p.best_loss),
        pretrain_epochs: pre.as_ref().map(|p| p.epochs_run),
    })
}

/// Runs `f` for every index on up to `jobs` threads, results in index order.
fn parallel_map<R: Send>(
    len: usize,
    jobs: usize,
    f: impl Fn(usize) -> Result<R> + Sync,
) -> Result<Vec<R>> {
    let jobs = jobs.clamp(1, len.max(1));
    if jobs == 1 {
        return (0..len).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<R>>>> = Mutex::new((0..len).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= len {
                    break;
                }
                let r = f(i);
                slots.lock().expect("result slots poisoned")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("result slots poisoned")
        .into_iter()
        .map(|r| r.unwrap_or_else(|| Err(Error::Internal("a run produced no result".into()))))
        .collect()
}

/// `cfg.runs` independent runs with seeds `base_seed + i`, on up to `jobs`
/// threads. With a baseline, adds the paired t-test.
pub fn run_experiment<T: Real>(
    g: &Graph,
    cfg: &ExperimentConfig,
    baseline: Option<&RunReport>,
    jobs: usize,
) -> Result<RunReport> {
    cfg.validate()?;
    let seeds: Vec<u64> = cfg.seeds().collect();
    let label = cfg.label();
    let runs = parallel_map(seeds.len(), jobs, |i| {
        let r = run_once::<T>(g, cfg, seeds[i])?;
        info!("{} {label} seed {}: test accuracy {:.4}", g.name(), r.seed, r.test_accuracy);
        Ok(r)
    })?;
    let mut report = assemble(g.name(), cfg, runs, T::DTYPE);
    if let Some(b) = baseline {
        report.compare_with(b)?;
    }
    Ok(report)
}

fn assemble(dataset: &str, cfg: &ExperimentConfig, runs: Vec<RunRecord>, dtype: &str) -> RunReport {
    let accuracies: Vec<f64> = runs.iter().map(|r| r.test_accuracy).collect();
    let s = summarize(&accuracies);
    RunReport {
        dataset: dataset.to_string(),
        label: cfg.label(),
        fingerprint: fingerprint(dataset, cfg),
        dtype: dtype.to_string(),
        config: cfg.clone(),
        runs,
        accuracies,
        mean: s.mean,
        std: s.std,
        comparison: None,
        comparison_error: None,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub percentages: Vec<f64>,
    pub strategies: Vec<Strategy>,
    /// Template for every cell; its `pretrain.ssl` is overwritten per cell
    /// and `None` means the default pretraining settings.
    pub experiment: ExperimentConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            percentages: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
            strategies: Strategy::ALL.to_vec(),
            experiment: ExperimentConfig::default(),
        }
    }
}

impl SweepConfig {
    pub fn cell_config(&self, strategy: Strategy, p: f64) -> ExperimentConfig {
        let mut pre = self.experiment.pretrain.unwrap_or_default();
        pre.ssl = SslConfig {
            strategy,
            remove_fraction: p,
            cover_fraction: p,
            cover_mode: pre.ssl.cover_mode,
        };
        ExperimentConfig {
            pretrain: Some(pre),
            ..self.experiment.clone()
        }
    }

    pub fn baseline_config(&self) -> ExperimentConfig {
        ExperimentConfig {
            pretrain: None,
            ..self.experiment.clone()
        }
    }

    pub fn num_cells(&self) -> usize {
        1 + self.percentages.len() * self.strategies.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub strategy: Strategy,
    pub percentage: f64,
    pub report: RunReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub dataset: String,
    pub baseline: RunReport,
    pub cells: Vec<SweepCell>,
}

impl SweepReport {
    pub fn cell(&self, strategy: Strategy, percentage: f64) -> Option<&SweepCell> {
        self.cells
            .iter()
            .find(|c| c.strategy == strategy && (c.percentage - percentage).abs() < 1e-9)
    }

    /// Accuracy and p-value per cell, grouped by percentage.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let rule = "-".repeat(44);
        let _ = writeln!(out, "{} ({} runs per cell)", self.dataset, self.baseline.runs.len());
        let _ = writeln!(out, "{rule}");
        let _ = writeln!(out, "{:<6} {:<10} {:>10} {:>7} {:>8}", "", "", "ACC[%]", "std", "P-Value");
        let _ = writeln!(out, "{rule}");
        let _ = writeln!(
            out,
            "{:<17} {:>10.2} {:>7.2} {:>8}",
            "Without SSL",
            100.0 * self.baseline.mean,
            100.0 * self.baseline.std,
            "---"
        );
        let mut last = None;
        for c in &self.cells {
            let pct = if last != Some(c.percentage) {
                let _ = writeln!(out, "{rule}");
                format!("{}%", (c.percentage * 100.0).round())
            } else {
                String::new()
            };
            last = Some(c.percentage);
            let p = match &c.report.comparison {
                Some(cmp) => format!("{:.1E}", cmp.p_value),
                None => "n/a".into(),
            };
            let _ = writeln!(
                out,
                "{:<6} {:<10} {:>10.2} {:>7.2} {:>8}",
                pct,
                c.strategy.label(),
                100.0 * c.report.mean,
                100.0 * c.report.std,
                p
            );
        }
        let _ = writeln!(out, "{rule}");
        out
    }
}

/// Baseline plus one experiment per (percentage, strategy), each compared
/// with the baseline.
pub fn sweep<T: Real>(g: &Graph, cfg: &SweepConfig, jobs: usize) -> Result<SweepReport> {
    if cfg.percentages.is_empty() || cfg.strategies.is_empty() {
        return Err(Error::Config("a sweep needs at least one percentage and one strategy".into()));
    }
    let baseline = run_experiment::<T>(g, &cfg.baseline_config(), None, jobs)?;
    let mut cells = Vec::new();
    for &p in &cfg.percentages {
        for &strategy in &cfg.strategies {
            let report = run_experiment::<T>(g, &cfg.cell_config(strategy, p), Some(&baseline), jobs)?;
            info!(
                "{} {}: mean {:.4} (baseline {:.4})",
                g.name(),
                report.label,
                report.mean,
                baseline.mean
            );
            cells.push(SweepCell {
                strategy,
                percentage: p,
                report,
            });
        }
    }
    Ok(SweepReport {
        dataset: g.name().to_string(),
        baseline,
        cells,
    })
}
