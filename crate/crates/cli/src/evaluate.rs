use std::path::Path;

use xprojct_core::labels::DECISION_THRESHOLD;
use xprojct_core::phantom::{DatasetManifest, Split};
use xprojct_nn::train::predict_all;
use xprojct_stats::{metrics_summary, paired_model_comparison, ComparisonTable, MetricsReport};

use crate::data::{prepare_split, PreparedSource};
use crate::error::Result;
use crate::predict::Predictor;

/// Probabilities and targets of a model over one manifest split.
pub fn score_split(predictor: &Predictor, manifest_path: &Path, split: Split) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let root = manifest_path.parent().unwrap_or(Path::new(""));
    let meta = &predictor.meta;
    let prepared = prepare_split(&manifest, root, &meta.vocabulary, split, meta.representation, &meta.preprocess)?;
    let source = PreparedSource::new(prepared, None, 0);
    let probs = predict_all(&predictor.model, &source)?;
    let truths = source
        .targets()
        .iter()
        .map(|t| t.iter().map(|&v| f64::from(v)).collect())
        .collect();
    Ok((probs, truths))
}

pub fn cmd_evaluate(checkpoint: &Path, manifest: &Path, split: Split) -> Result<MetricsReport> {
    let predictor = Predictor::load(checkpoint)?;
    let (probs, truths) = score_split(&predictor, manifest, split)?;
    Ok(metrics_summary(
        &probs,
        &truths,
        DECISION_THRESHOLD,
        predictor.meta.vocabulary.names(),
    )?)
}

pub fn cmd_compare(a: &Path, b: &Path, manifest: &Path, split: Split) -> Result<ComparisonTable> {
    let (pa, pb) = (Predictor::load(a)?, Predictor::load(b)?);
    let (probs_a, truths) = score_split(&pa, manifest, split)?;
    let (probs_b, _) = score_split(&pb, manifest, split)?;
    let name = |p: &Path| p.display().to_string();
    Ok(paired_model_comparison(
        (&name(a), &name(b)),
        &probs_a,
        &probs_b,
        &truths,
        DECISION_THRESHOLD,
        pa.meta.vocabulary.names(),
    )?)
}
