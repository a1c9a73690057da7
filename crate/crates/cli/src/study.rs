//! End-to-end phantom study: generate a dataset, train the three
//! representations and compare them on the held-out split.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use xprojct_core::augment::AugmentParams;
use xprojct_core::labels::DECISION_THRESHOLD;
use xprojct_core::phantom::{generate_dataset, DatasetManifest, PhantomSpec, Split};
use xprojct_core::pipeline::PreprocessConfig;
use xprojct_core::volume::ResampleConfig;
use xprojct_core::LabelVocabulary;
use xprojct_nn::train::{predict_all, train, TrainConfig, TrainingLog};
use xprojct_nn::Network;
use xprojct_stats::{metrics_summary, paired_model_comparison, summary_table, ComparisonTable, MetricsReport};

use crate::data::{prepare_split, PreparedSource, Representation};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyConfig {
    pub n_full: usize,
    pub n_patches: usize,
    pub seed: u64,
    pub phantom: PhantomSpec,
    pub preprocess: PreprocessConfig,
    pub train: TrainConfig,
    pub augment: Option<AugmentParams>,
    /// Also train the 2.5D and 3D presets on cubes.
    pub volumetric: bool,
    /// Epoch caps for the 2.5D and 3D models, whose epochs cost far more.
    pub budget_2p5d: Option<usize>,
    pub budget_3d: Option<usize>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            n_full: 1200,
            n_patches: 1200,
            seed: 7,
            phantom: PhantomSpec::default(),
            preprocess: PreprocessConfig {
                resample: ResampleConfig::with_spacing(2.0),
                image_size: (64, 64),
                cube_size: 64,
                ..Default::default()
            },
            train: TrainConfig {
                max_epochs: 50,
                batch_size: 4,
                ..Default::default()
            },
            augment: None,
            volumetric: true,
            budget_2p5d: None,
            budget_3d: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyModel {
    pub name: String,
    pub representation: Representation,
    pub parameter_count: usize,
    pub train_seconds: f64,
    pub log: TrainingLog,
    pub metrics: MetricsReport,
    #[serde(skip)]
    pub test_probs: Vec<Vec<f64>>,
    #[serde(skip)]
    pub model: Option<Network>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub config: StudyConfig,
    pub manifest_seed: u64,
    pub splits: SplitSizes,
    pub models: Vec<StudyModel>,
    pub comparisons: Vec<ComparisonTable>,
}

fn run_model(
    manifest: &DatasetManifest,
    vocab: &LabelVocabulary,
    rep: Representation,
    cfg: &StudyConfig,
    train_cfg: &TrainConfig,
) -> Result<StudyModel> {
    let root = Path::new("");
    let load = |split| prepare_split(manifest, root, vocab, split, rep, &cfg.preprocess);
    let augment = match rep {
        Representation::Projection => cfg.augment.clone(),
        _ => None,
    };
    let train_set = PreparedSource::new(load(Split::Train)?, augment, train_cfg.seed);
    let val_set = PreparedSource::new(load(Split::Val)?, None, train_cfg.seed);
    let test_set = PreparedSource::new(load(Split::Test)?, None, train_cfg.seed);
    let name = rep.default_model();
    let spec = rep.model_spec(name, &cfg.preprocess, vocab.len())?;
    let model = Network::init(spec, train_cfg.seed)?;
    let start = Instant::now();
    let (model, log) = train(model, &train_set, &val_set, train_cfg)?;
    let train_seconds = start.elapsed().as_secs_f64();
    let probs = predict_all(&model, &test_set)?;
    let truths: Vec<Vec<f64>> = test_set
        .targets()
        .iter()
        .map(|t| t.iter().map(|&v| f64::from(v)).collect())
        .collect();
    let metrics = metrics_summary(&probs, &truths, DECISION_THRESHOLD, vocab.names())?;
    log::info!("{name}: macro F1 {} after {} epochs, {train_seconds:.0} s", metrics.summary.f1, log.stop_epoch);
    Ok(StudyModel {
        name: name.to_string(),
        representation: rep,
        parameter_count: model.parameter_count(),
        train_seconds,
        log,
        metrics,
        test_probs: probs,
        model: Some(model),
    })
}

pub fn run_study(cfg: &StudyConfig) -> Result<StudyReport> {
    let vocab = LabelVocabulary::default();
    let manifest = generate_dataset(&cfg.phantom, &vocab, cfg.n_full, cfg.n_patches, cfg.seed)?;
    let count = |s| manifest.split(s).count();
    let splits = SplitSizes {
        train: count(Split::Train),
        val: count(Split::Val),
        test: count(Split::Test),
    };
    let mut models = vec![run_model(&manifest, &vocab, Representation::Projection, cfg, &cfg.train)?];
    if cfg.volumetric {
        for (rep, budget) in [
            (Representation::Shrunk, cfg.budget_2p5d),
            (Representation::Volumetric, cfg.budget_3d),
        ] {
            let vol_cfg = TrainConfig {
                epoch_budget: budget,
                ..cfg.train.clone()
            };
            models.push(run_model(&manifest, &vocab, rep, cfg, &vol_cfg)?);
        }
    }
    let truths: Vec<Vec<f64>> = manifest
        .split(Split::Test)
        .map(|e| vocab.encode(&e.label).map(|t| t.iter().map(|&v| f64::from(v)).collect()))
        .collect::<xprojct_core::Result<_>>()?;
    let mut comparisons = Vec::new();
    for i in 0..models.len() {
        for j in i + 1..models.len() {
            let (a, b) = (&models[i], &models[j]);
            comparisons.push(paired_model_comparison(
                (&a.name, &b.name),
                &a.test_probs,
                &b.test_probs,
                &truths,
                DECISION_THRESHOLD,
                vocab.names(),
            )?);
        }
    }
    Ok(StudyReport {
        config: cfg.clone(),
        manifest_seed: manifest.seed,
        splits,
        models,
        comparisons,
    })
}

impl StudyReport {
    pub fn model(&self, name: &str) -> Option<&StudyModel> {
        self.models.iter().find(|m| m.name == name)
    }

    pub fn to_text(&self) -> String {
        let rows: Vec<(String, &MetricsReport)> = self
            .models
            .iter()
            .map(|m| {
                (
                    format!("{} ({} params, {} epochs)", m.name, m.parameter_count, m.log.stop_epoch),
                    &m.metrics,
                )
            })
            .collect();
        let mut s = format!(
            "phantom study: train {} / val {} / test {}\n\n",
            self.splits.train, self.splits.val, self.splits.test
        );
        s += &summary_table(&rows);
        for c in &self.comparisons {
            s.push('\n');
            s += &c.to_text();
        }
        s
    }
}
