use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use xprojct_core::augment::AugmentParams;
use xprojct_core::phantom::{DatasetManifest, Split};
use xprojct_core::pipeline::PreprocessConfig;
use xprojct_core::LabelVocabulary;
use xprojct_nn::checkpoint::{load_checkpoint, save_checkpoint};
use xprojct_nn::train::{train_with, Resume, TrainConfig, TrainingLog};
use xprojct_nn::{Model, Network};

use crate::data::{prepare_split, read_json, write_json, PreparedSource, Representation};
use crate::error::{CliError, Result};

/// A training run as read from `--config`. Relative paths are resolved
/// against the directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub representation: Representation,
    /// Preset name; defaults to the representation's preset.
    #[serde(default)]
    pub model: Option<String>,
    pub manifest: PathBuf,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub preprocess: PreprocessConfig,
    #[serde(default)]
    pub train: TrainConfig,
    /// Projection-path augmentation during training; `null` disables it.
    #[serde(default)]
    pub augment: Option<AugmentParams>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.manifest = base.join(&cfg.manifest);
        cfg.output_dir = base.join(&cfg.output_dir);
        Ok(cfg)
    }

    pub fn model_name(&self) -> &str {
        self.model.as_deref().unwrap_or(self.representation.default_model())
    }

    pub fn validate(&self) -> Result<()> {
        self.preprocess.validate()?;
        self.train.validate()?;
        if let Some(a) = &self.augment {
            a.validate()?;
        }
        Ok(())
    }
}

/// What a checkpoint needs to turn a volume into a prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub representation: Representation,
    pub preprocess: PreprocessConfig,
    pub vocabulary: LabelVocabulary,
    pub epoch: usize,
}

pub fn save_model(model: &Network, meta: &ModelMeta, path: &Path) -> Result<()> {
    let value = serde_json::to_value(meta).map_err(|e| CliError::json(path, e))?;
    Ok(save_checkpoint(model, value, path)?)
}

pub fn load_model(path: &Path) -> Result<(Network, ModelMeta)> {
    let (model, header) = load_checkpoint::<f32>(path)?;
    let meta: ModelMeta = serde_json::from_value(header.metadata)
        .map_err(|e| CliError::Config(format!("{}: checkpoint metadata: {e}", path.display())))?;
    Ok((model, meta))
}

/// Contents of `training_log.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    /// The configuration as given, with paths as written in the file.
    pub config: serde_json::Value,
    pub model: String,
    pub parameter_count: usize,
    pub train_samples: usize,
    pub val_samples: usize,
    pub log: TrainingLog,
}

pub const BEST_CHECKPOINT: &str = "model.ckpt";
pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const RUN_LOG: &str = "training_log.json";

/// Trains per `config_path`, writing the best and last checkpoints and the
/// run log into the output directory. With `resume`, continues the run
/// recorded there.
pub fn cmd_train(config_path: &Path, seed: Option<u64>, resume: bool) -> Result<RunLog> {
    let echo: serde_json::Value = read_json(config_path)?;
    let mut cfg = RunConfig::load(config_path)?;
    let mut echo = echo;
    if let Some(s) = seed {
        cfg.train.seed = s;
        echo["train"]["seed"] = s.into();
    }
    cfg.validate()?;
    let vocab = LabelVocabulary::default();
    let spec = cfg
        .representation
        .model_spec(cfg.model_name(), &cfg.preprocess, vocab.len())?;
    let manifest = DatasetManifest::load(&cfg.manifest)?;
    let root = cfg.manifest.parent().unwrap_or(Path::new("")).to_path_buf();
    let load = |split| prepare_split(&manifest, &root, &vocab, split, cfg.representation, &cfg.preprocess);
    let (train_split, val_split) = (load(Split::Train)?, load(Split::Val)?);
    let (n_train, n_val) = (train_split.ids.len(), val_split.ids.len());
    let train_set = PreparedSource::new(train_split, cfg.augment.clone(), cfg.train.seed);
    let val_set = PreparedSource::new(val_split, None, cfg.train.seed);

    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| CliError::io(&cfg.output_dir, e))?;
    let out = |name: &str| cfg.output_dir.join(name);
    let (start, prior) = if resume {
        let (last, _) = load_model(&out(LAST_CHECKPOINT))?;
        let (best, _) = load_model(&out(BEST_CHECKPOINT))?;
        let previous: RunLog = read_json(&out(RUN_LOG))?;
        if last.spec() != &spec {
            return Err(CliError::Config("checkpoint does not match the configured model".into()));
        }
        (last, Some(Resume { best, log: previous.log }))
    } else {
        (Model::init(spec, cfg.train.seed)?, None)
    };
    let outcome = train_with(start, &train_set, &val_set, &cfg.train, prior)?;
    let meta = |epoch| ModelMeta {
        representation: cfg.representation,
        preprocess: cfg.preprocess.clone(),
        vocabulary: vocab.clone(),
        epoch,
    };
    save_model(&outcome.best, &meta(outcome.log.best_epoch), &out(BEST_CHECKPOINT))?;
    save_model(&outcome.last, &meta(outcome.log.stop_epoch), &out(LAST_CHECKPOINT))?;
    let run_log = RunLog {
        config: echo,
        model: cfg.model_name().to_string(),
        parameter_count: outcome.best.parameter_count(),
        train_samples: n_train,
        val_samples: n_val,
        log: outcome.log,
    };
    write_json(&run_log, &out(RUN_LOG))?;
    log::info!(
        "{}: best epoch {} (val loss {:.5}), stopped after {} ({:?})",
        run_log.model,
        run_log.log.best_epoch,
        run_log.log.best_val_loss,
        run_log.log.stop_epoch,
        run_log.log.stop_reason
    );
    Ok(run_log)
}
