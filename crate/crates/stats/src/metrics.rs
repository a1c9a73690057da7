use serde::{Deserialize, Serialize};

use crate::error::{Result, StatsError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }

    /// 0 when nothing was predicted positive.
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    /// 0 when the class has no positives.
    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> MeanStd {
        let n = values.len().max(1) as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        MeanStd { mean, std: var.sqrt() }
    }
}

impl std::fmt::Display for MeanStd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.3} ± {:.3}", self.mean, self.std)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub confusion: Confusion,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when precision was 0/0 and reported as 0.
    pub precision_undefined: bool,
    /// Set when recall was 0/0 and reported as 0.
    pub recall_undefined: bool,
}

impl ClassMetrics {
    pub fn from_confusion(class: impl Into<String>, c: Confusion) -> Self {
        ClassMetrics {
            class: class.into(),
            confusion: c,
            accuracy: c.accuracy(),
            precision: c.precision(),
            recall: c.recall(),
            f1: c.f1(),
            precision_undefined: c.tp + c.fp == 0,
            recall_undefined: c.tp + c.fn_ == 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroSummary {
    pub accuracy: MeanStd,
    pub precision: MeanStd,
    pub recall: MeanStd,
    pub f1: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub threshold: f64,
    pub samples: usize,
    pub classes: Vec<ClassMetrics>,
    /// Mean and population std across classes.
    pub summary: MacroSummary,
}

fn check_matrix(probs: &[Vec<f64>], truths: &[Vec<f64>]) -> Result<usize> {
    if probs.is_empty() {
        return Err(StatsError::Empty);
    }
    if probs.len() != truths.len() {
        return Err(StatsError::Shape(format!(
            "{} prediction rows, {} truth rows",
            probs.len(),
            truths.len()
        )));
    }
    let k = probs[0].len();
    if k == 0 {
        return Err(StatsError::Empty);
    }
    if probs.iter().chain(truths).any(|r| r.len() != k) {
        return Err(StatsError::Shape(format!("every row must have {k} classes")));
    }
    if probs.iter().chain(truths).flatten().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    Ok(k)
}

/// Binary confusion counts per class; a prediction is positive when
/// `p >= threshold`, a truth when `t >= 0.5`.
pub fn confusion_per_class(probs: &[Vec<f64>], truths: &[Vec<f64>], threshold: f64) -> Result<Vec<Confusion>> {
    let k = check_matrix(probs, truths)?;
    let mut out = vec![Confusion::default(); k];
    for (p, t) in probs.iter().zip(truths) {
        for (c, conf) in out.iter_mut().enumerate() {
            match (p[c] >= threshold, t[c] >= 0.5) {
                (true, true) => conf.tp += 1,
                (true, false) => conf.fp += 1,
                (false, false) => conf.tn += 1,
                (false, true) => conf.fn_ += 1,
            }
        }
    }
    Ok(out)
}

/// Per-class metrics and their macro summary. `class_names` may be empty,
/// in which case classes are named by index.
pub fn metrics_summary(
    probs: &[Vec<f64>],
    truths: &[Vec<f64>],
    threshold: f64,
    class_names: &[String],
) -> Result<MetricsReport> {
    let conf = confusion_per_class(probs, truths, threshold)?;
    if !class_names.is_empty() && class_names.len() != conf.len() {
        return Err(StatsError::Shape(format!(
            "{} class names for {} classes",
            class_names.len(),
            conf.len()
        )));
    }
    let classes: Vec<ClassMetrics> = conf
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let name = class_names.get(i).cloned().unwrap_or_else(|| i.to_string());
            ClassMetrics::from_confusion(name, *c)
        })
        .collect();
    let col = |f: fn(&ClassMetrics) -> f64| MeanStd::of(&classes.iter().map(f).collect::<Vec<_>>());
    let summary = MacroSummary {
        accuracy: col(|m| m.accuracy),
        precision: col(|m| m.precision),
        recall: col(|m| m.recall),
        f1: col(|m| m.f1),
    };
    Ok(MetricsReport {
        threshold,
        samples: probs.len(),
        classes,
        summary,
    })
}

impl MetricsReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Aligned per-class table followed by the macro row. Values computed
    /// from a 0/0 ratio carry a `*`.
    pub fn to_text(&self) -> String {
        let width = self.classes.iter().map(|c| c.class.len()).max().unwrap_or(0).max(5);
        let mut s = format!(
            "{:<width$}  {:>13}  {:>13}  {:>13}  {:>13}\n",
            "class", "accuracy", "precision", "recall", "f1"
        );
        for c in &self.classes {
            let mark = |v: f64, undefined: bool| format!("{v:.3}{}", if undefined { "*" } else { " " });
            s += &format!(
                "{:<width$}  {:>13}  {:>13}  {:>13}  {:>13}\n",
                c.class,
                mark(c.accuracy, false),
                mark(c.precision, c.precision_undefined),
                mark(c.recall, c.recall_undefined),
                mark(c.f1, false),
            );
        }
        let m = &self.summary;
        s += &format!(
            "{:<width$}  {:>13}  {:>13}  {:>13}  {:>13}\n",
            "macro",
            m.accuracy.to_string(),
            m.precision.to_string(),
            m.recall.to_string(),
            m.f1.to_string()
        );
        if self.classes.iter().any(|c| c.precision_undefined || c.recall_undefined) {
            s += "* 0/0 reported as 0\n";
        }
        s
    }
}

/// One summary row per model, as in a results table.
pub fn summary_table(rows: &[(String, &MetricsReport)]) -> String {
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(5);
    let mut s = format!(
        "{:<width$}  {:>13}  {:>13}  {:>13}  {:>13}\n",
        "model", "accuracy", "precision", "recall", "f1"
    );
    for (name, r) in rows {
        let m = &r.summary;
        s += &format!(
            "{:<width$}  {:>13}  {:>13}  {:>13}  {:>13}\n",
            name,
            m.accuracy.to_string(),
            m.precision.to_string(),
            m.recall.to_string(),
            m.f1.to_string()
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_format() {
        let m = MeanStd { mean: 0.98, std: 0.016 };
        assert_eq!(m.to_string(), "0.980 ± 0.016");
    }

    #[test]
    fn population_std() {
        let m = MeanStd::of(&[1.0, 3.0]);
        assert_eq!(m.mean, 2.0);
        assert_eq!(m.std, 1.0);
    }

    #[test]
    fn zero_over_zero_is_flagged() {
        let m = ClassMetrics::from_confusion("x", Confusion { tp: 0, fp: 0, tn: 5, fn_: 0 });
        assert_eq!((m.precision, m.recall, m.f1, m.accuracy), (0.0, 0.0, 0.0, 1.0));
        assert!(m.precision_undefined && m.recall_undefined);
    }
}
