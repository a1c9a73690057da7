//! Region vocabulary, ground-truth label sidecars and the per-case
//! prediction document.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CoreError, Result};
use crate::io_util::write_atomic;

pub const REGION_COUNT: usize = 14;

/// Probability at or above which a region is reported as present.
pub const DECISION_THRESHOLD: f64 = 0.5;

/// The ordered set of body-region names a model predicts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelVocabulary {
    names: Vec<String>,
}

impl LabelVocabulary {
    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.len() != REGION_COUNT {
            return Err(CoreError::Config(format!(
                "vocabulary must list {REGION_COUNT} regions, got {}",
                names.len()
            )));
        }
        let mut seen = HashSet::new();
        for n in &names {
            if n.is_empty() || !seen.insert(n.as_str()) {
                return Err(CoreError::Config(format!("duplicate or empty region name {n:?}")));
            }
        }
        Ok(LabelVocabulary { names })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| CoreError::Vocabulary(name.to_string()))
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    /// Multi-hot target vector for a label.
    pub fn encode(&self, label: &LabelFile) -> Result<Vec<f32>> {
        let mut v = vec![0.0; self.len()];
        for r in &label.regions {
            v[self.index_of(r)?] = 1.0;
        }
        Ok(v)
    }
}

impl Default for LabelVocabulary {
    /// Six regions named in the source study plus eight skeletal stand-ins,
    /// ordered head to foot.
    fn default() -> Self {
        let names = [
            "skull",
            "cervical_spine",
            "shoulder",
            "thorax",
            "humerus",
            "lumbar_spine",
            "forearm",
            "pelvis",
            "hand",
            "femur",
            "patella",
            "shin",
            "tarsal",
            "foot",
        ];
        LabelVocabulary {
            names: names.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl TryFrom<Vec<String>> for LabelVocabulary {
    type Error = CoreError;

    fn try_from(names: Vec<String>) -> Result<Self> {
        LabelVocabulary::new(names)
    }
}

impl From<LabelVocabulary> for Vec<String> {
    fn from(v: LabelVocabulary) -> Self {
        v.names
    }
}

/// Ground-truth sidecar: `{"case_id": ..., "regions": [...]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelFile {
    pub case_id: String,
    pub regions: Vec<String>,
}

impl LabelFile {
    pub fn validate(&self, vocab: &LabelVocabulary) -> Result<()> {
        let mut seen = HashSet::new();
        for r in &self.regions {
            vocab.index_of(r)?;
            if !seen.insert(r) {
                return Err(CoreError::Parse(format!(
                    "region {r:?} listed twice in label for {}",
                    self.case_id
                )));
            }
        }
        Ok(())
    }

    /// Regions in vocabulary order.
    pub fn from_flags(case_id: impl Into<String>, vocab: &LabelVocabulary, flags: &[bool]) -> LabelFile {
        LabelFile {
            case_id: case_id.into(),
            regions: flags
                .iter()
                .enumerate()
                .filter(|(_, &f)| f)
                .map(|(i, _)| vocab.name(i).to_string())
                .collect(),
        }
    }
}

pub fn parse_labels(text: &str, vocab: &LabelVocabulary) -> Result<LabelFile> {
    let label: LabelFile = serde_json::from_str(text)?;
    label.validate(vocab)?;
    Ok(label)
}

pub fn read_labels(path: impl AsRef<Path>, vocab: &LabelVocabulary) -> Result<LabelFile> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
    parse_labels(&text, vocab)
}

pub fn write_labels(label: &LabelFile, vocab: &LabelVocabulary, path: impl AsRef<Path>) -> Result<()> {
    label.validate(vocab)?;
    let text = serde_json::to_vec_pretty(label)?;
    write_atomic(path.as_ref(), &text)
}

/// One model prediction for one image series.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesPrediction {
    pub case_id: String,
    pub series_id: String,
    /// Per-region probability in vocabulary order.
    pub probabilities: Vec<f64>,
    pub predicted: Vec<bool>,
    pub elapsed_ms: f64,
}

impl SeriesPrediction {
    pub fn from_probabilities(
        case_id: impl Into<String>,
        series_id: impl Into<String>,
        probabilities: Vec<f64>,
        elapsed_ms: f64,
    ) -> SeriesPrediction {
        let predicted = probabilities.iter().map(|&p| p >= DECISION_THRESHOLD).collect();
        SeriesPrediction {
            case_id: case_id.into(),
            series_id: series_id.into(),
            probabilities,
            predicted,
            elapsed_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRecord {
    pub series_id: String,
    pub probabilities: BTreeMap<String, f64>,
    pub predicted: Vec<String>,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesError {
    pub series_id: String,
    pub error: String,
}

/// Wire form of a case's predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionDocument {
    pub case_id: String,
    pub series: Vec<SeriesRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<SeriesError>,
}

impl PredictionDocument {
    pub fn from_predictions(
        case_id: &str,
        records: &[SeriesPrediction],
        vocab: &LabelVocabulary,
    ) -> Result<PredictionDocument> {
        let mut series = Vec::with_capacity(records.len());
        for r in records {
            if r.case_id != case_id {
                return Err(CoreError::Precondition(format!(
                    "series {} belongs to case {}, not {case_id}",
                    r.series_id, r.case_id
                )));
            }
            if r.probabilities.len() != vocab.len() || r.predicted.len() != vocab.len() {
                return Err(CoreError::Precondition(format!(
                    "series {} has {} probabilities for a {}-region vocabulary",
                    r.series_id,
                    r.probabilities.len(),
                    vocab.len()
                )));
            }
            series.push(SeriesRecord {
                series_id: r.series_id.clone(),
                probabilities: vocab
                    .names()
                    .iter()
                    .cloned()
                    .zip(r.probabilities.iter().copied())
                    .collect(),
                predicted: vocab
                    .names()
                    .iter()
                    .zip(&r.predicted)
                    .filter(|(_, &p)| p)
                    .map(|(n, _)| n.clone())
                    .collect(),
                elapsed_ms: r.elapsed_ms,
            });
        }
        Ok(PredictionDocument {
            case_id: case_id.to_string(),
            series,
            errors: Vec::new(),
        })
    }

    pub fn to_predictions(&self, vocab: &LabelVocabulary) -> Result<Vec<SeriesPrediction>> {
        self.series
            .iter()
            .map(|s| {
                let mut probabilities = Vec::with_capacity(vocab.len());
                for name in vocab.names() {
                    probabilities.push(*s.probabilities.get(name).ok_or_else(|| {
                        CoreError::Parse(format!("series {} lacks probability for {name}", s.series_id))
                    })?);
                }
                let mut predicted = vec![false; vocab.len()];
                for name in &s.predicted {
                    predicted[vocab.index_of(name)?] = true;
                }
                Ok(SeriesPrediction {
                    case_id: self.case_id.clone(),
                    series_id: s.series_id.clone(),
                    probabilities,
                    predicted,
                    elapsed_ms: s.elapsed_ms,
                })
            })
            .collect()
    }
}

/// Writes one case's predictions atomically.
pub fn write_predictions(
    records: &[SeriesPrediction],
    vocab: &LabelVocabulary,
    path: impl AsRef<Path>,
) -> Result<()> {
    let case_id = records
        .first()
        .map(|r| r.case_id.clone())
        .ok_or_else(|| CoreError::Precondition("no predictions to write".into()))?;
    let doc = PredictionDocument::from_predictions(&case_id, records, vocab)?;
    write_document(&doc, vocab, path)
}

pub fn write_document(doc: &PredictionDocument, vocab: &LabelVocabulary, path: impl AsRef<Path>) -> Result<()> {
    let value = serde_json::to_value(doc)?;
    validate_prediction_json(&value, vocab)?;
    write_atomic(path.as_ref(), &serde_json::to_vec_pretty(&value)?)
}

pub fn read_predictions(path: impl AsRef<Path>, vocab: &LabelVocabulary) -> Result<PredictionDocument> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
    let value: Value = serde_json::from_str(&text)?;
    validate_prediction_json(&value, vocab)?;
    Ok(serde_json::from_value(value)?)
}

/// Structural check of a prediction document against the published schema
/// (`docs/prediction.schema.json`) plus the vocabulary and threshold rules.
pub fn validate_prediction_json(value: &Value, vocab: &LabelVocabulary) -> Result<()> {
    let fail = |msg: String| Err(CoreError::Parse(format!("prediction document: {msg}")));
    let Some(obj) = value.as_object() else {
        return fail("top level must be an object".into());
    };
    for key in obj.keys() {
        if !matches!(key.as_str(), "case_id" | "series" | "errors") {
            return fail(format!("unexpected field {key:?}"));
        }
    }
    if !obj.get("case_id").is_some_and(Value::is_string) {
        return fail("case_id must be a string".into());
    }
    let Some(series) = obj.get("series").and_then(Value::as_array) else {
        return fail("series must be an array".into());
    };
    for (i, s) in series.iter().enumerate() {
        let Some(s) = s.as_object() else {
            return fail(format!("series[{i}] must be an object"));
        };
        for key in s.keys() {
            if !matches!(key.as_str(), "series_id" | "probabilities" | "predicted" | "elapsed_ms") {
                return fail(format!("series[{i}] has unexpected field {key:?}"));
            }
        }
        if !s.get("series_id").is_some_and(Value::is_string) {
            return fail(format!("series[{i}].series_id must be a string"));
        }
        match s.get("elapsed_ms").and_then(Value::as_f64) {
            Some(t) if t >= 0.0 && t.is_finite() => {}
            _ => return fail(format!("series[{i}].elapsed_ms must be a non-negative number")),
        }
        let Some(probs) = s.get("probabilities").and_then(Value::as_object) else {
            return fail(format!("series[{i}].probabilities must be an object"));
        };
        if probs.len() != vocab.len() {
            return fail(format!(
                "series[{i}] has {} probabilities, vocabulary has {}",
                probs.len(),
                vocab.len()
            ));
        }
        let mut expected = HashSet::new();
        for (name, p) in probs {
            vocab.index_of(name)?;
            match p.as_f64() {
                Some(p) if (0.0..=1.0).contains(&p) => {
                    if p >= DECISION_THRESHOLD {
                        expected.insert(name.as_str());
                    }
                }
                _ => return fail(format!("series[{i}].probabilities[{name:?}] must lie in [0, 1]")),
            }
        }
        let Some(predicted) = s.get("predicted").and_then(Value::as_array) else {
            return fail(format!("series[{i}].predicted must be an array"));
        };
        let mut got = HashSet::new();
        for p in predicted {
            let Some(name) = p.as_str() else {
                return fail(format!("series[{i}].predicted entries must be strings"));
            };
            vocab.index_of(name)?;
            if !got.insert(name) {
                return fail(format!("series[{i}].predicted lists {name:?} twice"));
            }
        }
        if got != expected {
            return fail(format!(
                "series[{i}].predicted disagrees with probabilities at threshold {DECISION_THRESHOLD}"
            ));
        }
    }
    if let Some(errors) = obj.get("errors") {
        let Some(errors) = errors.as_array() else {
            return fail("errors must be an array".into());
        };
        for (i, e) in errors.iter().enumerate() {
            let ok = e.get("series_id").is_some_and(Value::is_string) && e.get("error").is_some_and(Value::is_string);
            if !ok {
                return fail(format!("errors[{i}] needs string series_id and error"));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_vocabulary_has_fourteen_unique_regions() {
        let v = LabelVocabulary::default();
        assert_eq!(v.len(), 14);
        for name in ["pelvis", "shoulder", "patella", "shin", "foot", "tarsal"] {
            v.index_of(name).unwrap();
        }
        assert!(LabelVocabulary::new(vec!["a".into(); 14]).is_err());
        assert!(LabelVocabulary::new(vec!["a".into()]).is_err());
    }

    #[test]
    fn minimal_label_document() {
        let v = LabelVocabulary::default();
        let l = parse_labels(r#"{"case_id":"c1","regions":["pelvis"]}"#, &v).unwrap();
        assert_eq!(l.case_id, "c1");
        assert_eq!(l.regions, vec!["pelvis"]);
    }

    #[test]
    fn unknown_region_and_malformed_json() {
        let v = LabelVocabulary::default();
        let e = parse_labels(r#"{"case_id":"c1","regions":["nonexistent"]}"#, &v).unwrap_err();
        assert!(matches!(e, CoreError::Vocabulary(_)));
        assert!(matches!(parse_labels("{\"case_id\":", &v), Err(CoreError::Json(_))));
        assert!(parse_labels(r#"{"case_id":"c1","regions":["foot","foot"]}"#, &v).is_err());
    }

    #[test]
    fn label_file_round_trip_keeps_order() {
        let dir = tempfile::tempdir().unwrap();
        let v = LabelVocabulary::default();
        let l = LabelFile {
            case_id: "x".into(),
            regions: vec!["foot".into(), "skull".into(), "shin".into()],
        };
        let p = dir.path().join("x.json");
        write_labels(&l, &v, &p).unwrap();
        assert_eq!(read_labels(&p, &v).unwrap(), l);
    }

    fn three_series() -> Vec<SeriesPrediction> {
        (0..3)
            .map(|s| {
                let probs = (0..14).map(|i| ((i * 7 + s * 3) % 10) as f64 / 9.0).collect();
                SeriesPrediction::from_probabilities("case7", format!("s{s}"), probs, 12.5 * s as f64)
            })
            .collect()
    }

    #[test]
    fn prediction_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let v = LabelVocabulary::default();
        let recs = three_series();
        let p = dir.path().join("pred.json");
        write_predictions(&recs, &v, &p).unwrap();
        let doc = read_predictions(&p, &v).unwrap();
        assert_eq!(doc.to_predictions(&v).unwrap(), recs);
    }

    #[test]
    fn schema_violations_are_caught() {
        let v = LabelVocabulary::default();
        let doc = PredictionDocument::from_predictions("case7", &three_series(), &v).unwrap();
        let good = serde_json::to_value(&doc).unwrap();
        validate_prediction_json(&good, &v).unwrap();

        let mut bad = good.clone();
        bad["series"][0]["predicted"] = serde_json::json!([]);
        assert!(validate_prediction_json(&bad, &v).is_err());

        let mut bad = good.clone();
        bad["series"][1]["elapsed_ms"] = serde_json::json!(-1.0);
        assert!(validate_prediction_json(&bad, &v).is_err());

        let mut bad = good.clone();
        bad["series"][2]["probabilities"]["skull"] = serde_json::json!(1.5);
        assert!(validate_prediction_json(&bad, &v).is_err());

        let mut bad = good.clone();
        bad["extra"] = serde_json::json!(1);
        assert!(validate_prediction_json(&bad, &v).is_err());

        let mut ok = good;
        ok["errors"] = serde_json::json!([{"series_id": "s9", "error": "unreadable"}]);
        validate_prediction_json(&ok, &v).unwrap();
    }
}
