use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use xprojct_core::labels::{write_document, PredictionDocument, SeriesError};
use xprojct_core::nifti::read_nifti;
use xprojct_core::SeriesPrediction;
use xprojct_nn::Network;

use crate::data::prepare;
use crate::error::{CliError, Result};
use crate::train::{load_model, ModelMeta};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// One series per case, processed alone.
    Single,
    /// Every series of a case, processed in parallel.
    Multi,
}

/// Series files of a case directory (`*.nii`, `*.nii.gz`), sorted by
/// series id (the file name without extension).
pub fn list_series(case_dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let rd = std::fs::read_dir(case_dir).map_err(|e| CliError::io(case_dir, e))?;
    let mut out = Vec::new();
    for entry in rd {
        let path = entry.map_err(|e| CliError::io(case_dir, e))?.path();
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let stem = name.strip_suffix(".nii.gz").or_else(|| name.strip_suffix(".nii"));
        if let (Some(stem), true) = (stem, path.is_file()) {
            out.push((stem.to_string(), path));
        }
    }
    out.sort();
    Ok(out)
}

pub fn case_id(case_dir: &Path) -> String {
    case_dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "case".into())
}

/// A loaded model with the preprocessing it was trained with.
pub struct Predictor {
    pub model: Network,
    pub meta: ModelMeta,
}

impl Predictor {
    pub fn load(checkpoint: &Path) -> Result<Predictor> {
        let (model, meta) = load_model(checkpoint)?;
        if model.classes() != meta.vocabulary.len() {
            return Err(CliError::Config("checkpoint vocabulary does not match the model".into()));
        }
        Ok(Predictor { model, meta })
    }

    /// Load, preprocess, infer and serialize one series. The elapsed time
    /// covers all four.
    pub fn predict_series(&self, case_id: &str, series_id: &str, path: &Path) -> Result<SeriesPrediction> {
        let start = Instant::now();
        let (vol, _) = read_nifti(path).map_err(|source| CliError::Stage { stage: "load", source })?;
        let input = prepare(&vol, self.meta.representation, &self.meta.preprocess)?.into_input();
        let probs: Vec<f64> = self
            .model
            .forward_sample(&input)?
            .iter()
            .map(|&p| f64::from(p))
            .collect();
        let mut pred = SeriesPrediction::from_probabilities(case_id, series_id, probs, 0.0);
        let doc = PredictionDocument::from_predictions(case_id, std::slice::from_ref(&pred), &self.meta.vocabulary)?;
        let _ = serde_json::to_vec(&doc.series[0]).map_err(|e| CliError::json(path, e))?;
        pred.elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
        Ok(pred)
    }
}

#[derive(Debug, Clone)]
pub struct PredictOutcome {
    pub document: PredictionDocument,
    pub failed: usize,
    /// Wall-clock time of the whole case, from the first load to the
    /// written file.
    pub wall_ms: f64,
}

/// Predicts every series of a case and writes the prediction document
/// atomically to `out`. Failed series are recorded in the document's
/// error list.
pub fn predict_case(
    predictor: &Predictor,
    case_dir: &Path,
    scenario: Scenario,
    jobs: Option<usize>,
    out: &Path,
) -> Result<PredictOutcome> {
    let start = Instant::now();
    let series = list_series(case_dir)?;
    if series.is_empty() {
        return Err(CliError::Config(format!("{} holds no NIfTI series", case_dir.display())));
    }
    if scenario == Scenario::Single && series.len() != 1 {
        return Err(CliError::Config(format!(
            "single-series scenario, but {} holds {} series",
            case_dir.display(),
            series.len()
        )));
    }
    let case = case_id(case_dir);
    let run = |(sid, path): &(String, PathBuf)| predictor.predict_series(&case, sid, path);
    let results: Vec<Result<SeriesPrediction>> = match scenario {
        Scenario::Single => series.iter().map(run).collect(),
        Scenario::Multi => {
            let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
            let threads = jobs.unwrap_or(cores).clamp(1, series.len());
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
            pool.install(|| series.par_iter().map(run).collect())
        }
    };
    let mut ok = Vec::new();
    let mut errors = Vec::new();
    for ((sid, _), r) in series.iter().zip(results) {
        match r {
            Ok(p) => ok.push(p),
            Err(e) => {
                log::error!("{case}/{sid}: {e}");
                errors.push(SeriesError {
                    series_id: sid.clone(),
                    error: e.to_string(),
                });
            }
        }
    }
    let mut document = PredictionDocument::from_predictions(&case, &ok, &predictor.meta.vocabulary)?;
    document.errors = errors;
    write_document(&document, &predictor.meta.vocabulary, out)?;
    Ok(PredictOutcome {
        failed: document.errors.len(),
        document,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}
