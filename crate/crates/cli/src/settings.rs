use std::path::{Path, PathBuf};

use gcnssl::{
    CoverMode, DecodeDepth, Error, ExperimentConfig, FinetuneConfig, LinkLossMode, ModelConfig,
    PretrainConfig, Result, SslConfig, Strategy, SweepConfig,
};
use serde::Deserialize;

use crate::args::{
    CoverModeArg, DataArgs, DepthArg, Dtype, FinetuneArgs, LinkLossArg, ModelArgs, PretrainArgs,
    RunArgs, StrategyArg,
};

/// Contents of a `--config` file. Keys are the long flag names.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FileConfig {
    pub data: Option<String>,
    pub data_root: Option<PathBuf>,
    pub seed: Option<u64>,
    pub dtype: Option<Dtype>,
    pub hidden: Option<usize>,
    pub dropout: Option<f64>,
    pub lr: Option<f64>,
    pub weight_decay: Option<f64>,
    pub decay_all: Option<bool>,
    pub bias: Option<bool>,
    pub strategy: Option<StrategyArg>,
    pub remove: Option<f64>,
    pub cover: Option<f64>,
    pub cover_mode: Option<CoverModeArg>,
    pub pretrain_epochs: Option<usize>,
    pub pretrain_patience: Option<usize>,
    pub fixed_epochs: Option<bool>,
    pub decode_depth: Option<DepthArg>,
    pub link_loss: Option<LinkLossArg>,
    pub neg_per_pos: Option<usize>,
    pub resample: Option<bool>,
    pub epochs: Option<usize>,
    pub patience: Option<usize>,
    pub runs: Option<usize>,
    pub jobs: Option<usize>,
    pub percentages: Option<Vec<f64>>,
    pub strategies: Option<Vec<StrategyArg>>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Flags merged over the config file over the library defaults.
#[derive(Debug)]
pub struct Settings {
    pub data: Option<String>,
    pub data_root: Option<PathBuf>,
    pub seed: u64,
    pub dtype: Dtype,
    pub model: ModelConfig,
    pub lr: Option<f64>,
    pub weight_decay: Option<f64>,
    pub decay_all: bool,
    pub pretrain: PretrainArgs,
    pub finetune: FinetuneArgs,
    pub runs: Option<usize>,
    pub jobs: usize,
    pub percentages: Option<Vec<f64>>,
    pub strategies: Option<Vec<StrategyArg>>,
}

impl Settings {
    pub fn resolve(
        data: &DataArgs,
        model: Option<&ModelArgs>,
        pretrain: Option<&PretrainArgs>,
        finetune: Option<&FinetuneArgs>,
        run: Option<&RunArgs>,
    ) -> Result<Self> {
        let file = FileConfig::load(data.config.as_deref())?;
        let model = model.cloned().unwrap_or_default();
        let p = pretrain.cloned().unwrap_or_default();
        let f = finetune.cloned().unwrap_or_default();
        let r = run.cloned().unwrap_or_default();
        let defaults = ModelConfig::default();
        let jobs = r.jobs.or(file.jobs).unwrap_or(1);
        if jobs == 0 {
            return Err(Error::Config("--jobs must be at least 1".into()));
        }
        Ok(Self {
            data: data.data.clone().or(file.data),
            data_root: data.data_root.clone().or(file.data_root),
            seed: data.seed.or(file.seed).unwrap_or(0),
            dtype: data.dtype.or(file.dtype).unwrap_or(Dtype::F32),
            model: ModelConfig {
                hidden: model.hidden.or(file.hidden).unwrap_or(defaults.hidden),
                dropout: model.dropout.or(file.dropout).unwrap_or(defaults.dropout),
                bias: model.bias || file.bias.unwrap_or(defaults.bias),
            },
            lr: model.lr.or(file.lr),
            weight_decay: model.weight_decay.or(file.weight_decay),
            decay_all: model.decay_all || file.decay_all.unwrap_or(false),
            pretrain: PretrainArgs {
                strategy: p.strategy.or(file.strategy),
                remove: p.remove.or(file.remove),
                cover: p.cover.or(file.cover),
                cover_mode: p.cover_mode.or(file.cover_mode),
                pretrain_epochs: p.pretrain_epochs.or(file.pretrain_epochs),
                pretrain_patience: p.pretrain_patience.or(file.pretrain_patience),
                fixed_epochs: p.fixed_epochs || file.fixed_epochs.unwrap_or(false),
                decode_depth: p.decode_depth.or(file.decode_depth),
                link_loss: p.link_loss.or(file.link_loss),
                neg_per_pos: p.neg_per_pos.or(file.neg_per_pos),
                resample: p.resample || file.resample.unwrap_or(false),
            },
            finetune: FinetuneArgs {
                epochs: f.epochs.or(file.epochs),
                patience: f.patience.or(file.patience),
            },
            runs: r.runs.or(file.runs),
            jobs,
            percentages: file.percentages,
            strategies: file.strategies,
        })
    }

    /// Dataset directory: `--data` as a path if it exists, else a name under the data root.
    pub fn data_dir(&self) -> Result<PathBuf> {
        let Some(data) = &self.data else {
            return Err(Error::Usage("--data is required".into()));
        };
        let direct = PathBuf::from(data);
        if direct.is_dir() {
            return Ok(direct);
        }
        match &self.data_root {
            Some(root) if root.join(data).is_dir() => Ok(root.join(data)),
            Some(root) => Err(Error::NotFound(root.join(data))),
            None => Err(Error::NotFound(direct)),
        }
    }

    pub fn pretrain_config(&self) -> PretrainConfig {
        let d = PretrainConfig::default();
        let p = &self.pretrain;
        let strategy = p.strategy.map(strategy).unwrap_or(d.ssl.strategy);
        let mut ssl = SslConfig::new(
            strategy,
            p.remove.unwrap_or(d.ssl.remove_fraction),
            p.cover.unwrap_or(d.ssl.cover_fraction),
        );
        ssl.cover_mode = match p.cover_mode {
            Some(CoverModeArg::Nonzero) => CoverMode::Nonzero,
            Some(CoverModeArg::AllEntries) => CoverMode::AllEntries,
            None => d.ssl.cover_mode,
        };
        let max_epochs = p.pretrain_epochs.unwrap_or(d.max_epochs);
        let patience = if p.fixed_epochs {
            None
        } else {
            Some(p.pretrain_patience.unwrap_or(d.patience.unwrap_or(max_epochs)).min(max_epochs))
        };
        let mut adam = d.adam;
        if let Some(lr) = self.lr {
            adam.lr = lr;
        }
        PretrainConfig {
            ssl,
            max_epochs,
            patience,
            adam,
            model: self.model,
            weight_decay: self.weight_decay.unwrap_or(d.weight_decay),
            decay_all: self.decay_all,
            decode_depth: match p.decode_depth {
                Some(DepthArg::First) => DecodeDepth::First,
                Some(DepthArg::Second) => DecodeDepth::Second,
                None => d.decode_depth,
            },
            link_loss: match p.link_loss {
                Some(LinkLossArg::Auto) => LinkLossMode::Auto,
                Some(LinkLossArg::Full) => LinkLossMode::Full,
                Some(LinkLossArg::Sampled) => LinkLossMode::Sampled,
                None => d.link_loss,
            },
            neg_per_pos: p.neg_per_pos.unwrap_or(d.neg_per_pos),
            resample_each_epoch: p.resample,
            ..d
        }
    }

    pub fn finetune_config(&self) -> FinetuneConfig {
        let d = FinetuneConfig::default();
        let max_epochs = self.finetune.epochs.unwrap_or(d.max_epochs);
        let mut adam = d.adam;
        if let Some(lr) = self.lr {
            adam.lr = lr;
        }
        FinetuneConfig {
            max_epochs,
            patience: Some(self.finetune.patience.unwrap_or(d.patience.unwrap_or(max_epochs)).min(max_epochs)),
            adam,
            model: self.model,
            weight_decay: self.weight_decay.unwrap_or(d.weight_decay),
            decay_all: self.decay_all,
        }
    }

    /// Pretraining is part of the experiment when a strategy is given.
    pub fn experiment_config(&self) -> ExperimentConfig {
        ExperimentConfig {
            runs: self.runs.unwrap_or(ExperimentConfig::default().runs),
            base_seed: self.seed,
            pretrain: self.pretrain.strategy.map(|_| self.pretrain_config()),
            finetune: self.finetune_config(),
        }
    }

    pub fn sweep_config(&self, percentages: Option<Vec<f64>>, strategies: Option<Vec<StrategyArg>>) -> SweepConfig {
        let d = SweepConfig::default();
        let experiment = ExperimentConfig {
            pretrain: Some(self.pretrain_config()),
            ..self.experiment_config()
        };
        SweepConfig {
            percentages: percentages.or_else(|| self.percentages.clone()).unwrap_or(d.percentages),
            strategies: strategies
                .or_else(|| self.strategies.clone())
                .map(|s| s.into_iter().map(strategy).collect())
                .unwrap_or(d.strategies),
            experiment,
        }
    }
}

pub fn strategy(s: StrategyArg) -> Strategy {
    match s {
        StrategyArg::Rrl => Strategy::RemoveLinks,
        StrategyArg::Rcf => Strategy::CoverFeatures,
        StrategyArg::Both => Strategy::Both,
    }
}
