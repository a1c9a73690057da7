use serde::{Deserialize, Serialize};

use crate::error::{Result, StatsError};
use crate::hypothesis::{mcnemar, McNemarResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum ClassOutcome {
    Tested(McNemarResult),
    /// Both models agree on correctness for every sample.
    NoDiscordance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassComparison {
    pub class: String,
    /// Samples where A is correct and B is wrong.
    pub b: u64,
    /// Samples where A is wrong and B is correct.
    pub c: u64,
    pub result: ClassOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub model_a: String,
    pub model_b: String,
    pub threshold: f64,
    pub alpha: f64,
    pub classes: Vec<ClassComparison>,
}

/// Discordant correctness counts `(b, c)` per class after thresholding.
pub fn discordant_counts(
    preds_a: &[Vec<f64>],
    preds_b: &[Vec<f64>],
    truths: &[Vec<f64>],
    threshold: f64,
) -> Result<Vec<(u64, u64)>> {
    if preds_a.is_empty() {
        return Err(StatsError::Empty);
    }
    if preds_a.len() != truths.len() || preds_b.len() != truths.len() {
        return Err(StatsError::Shape("both models must be scored on the same samples".into()));
    }
    let k = truths[0].len();
    if preds_a.iter().chain(preds_b).chain(truths).any(|r| r.len() != k) {
        return Err(StatsError::Shape(format!("every row must have {k} classes")));
    }
    let mut out = vec![(0u64, 0u64); k];
    for ((a, b), t) in preds_a.iter().zip(preds_b).zip(truths) {
        for (cls, cnt) in out.iter_mut().enumerate() {
            let truth = t[cls] >= 0.5;
            let ok_a = (a[cls] >= threshold) == truth;
            let ok_b = (b[cls] >= threshold) == truth;
            match (ok_a, ok_b) {
                (true, false) => cnt.0 += 1,
                (false, true) => cnt.1 += 1,
                _ => {}
            }
        }
    }
    Ok(out)
}

/// Per-class McNemar tests between two models scored on one test set.
pub fn paired_model_comparison(
    names: (&str, &str),
    preds_a: &[Vec<f64>],
    preds_b: &[Vec<f64>],
    truths: &[Vec<f64>],
    threshold: f64,
    class_names: &[String],
) -> Result<ComparisonTable> {
    let counts = discordant_counts(preds_a, preds_b, truths, threshold)?;
    if !class_names.is_empty() && class_names.len() != counts.len() {
        return Err(StatsError::Shape(format!(
            "{} class names for {} classes",
            class_names.len(),
            counts.len()
        )));
    }
    let classes = counts
        .into_iter()
        .enumerate()
        .map(|(i, (b, c))| {
            let result = match mcnemar(b, c) {
                Ok(r) => ClassOutcome::Tested(r),
                Err(StatsError::Undefined(_)) => ClassOutcome::NoDiscordance,
                Err(e) => return Err(e),
            };
            Ok(ClassComparison {
                class: class_names.get(i).cloned().unwrap_or_else(|| i.to_string()),
                b,
                c,
                result,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ComparisonTable {
        model_a: names.0.to_string(),
        model_b: names.1.to_string(),
        threshold,
        alpha: 0.05,
        classes,
    })
}

impl ComparisonTable {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per class: discordant counts, p-value and which model is
    /// significantly better at `alpha`.
    pub fn to_text(&self) -> String {
        let width = self.classes.iter().map(|c| c.class.len()).max().unwrap_or(0).max(5);
        let mut s = format!(
            "{} vs {} (b: only {} correct, c: only {} correct)\n",
            self.model_a, self.model_b, self.model_a, self.model_b
        );
        s += &format!("{:<width$}  {:>5}  {:>5}  {:>10}  {:<7}  {}\n", "class", "b", "c", "p", "method", "verdict");
        for row in &self.classes {
            let (p, method, verdict) = match &row.result {
                ClassOutcome::NoDiscordance => ("-".to_string(), "-", "no discordance".to_string()),
                ClassOutcome::Tested(r) => {
                    let method = match r.method {
                        crate::hypothesis::McNemarMethod::Exact => "exact",
                        crate::hypothesis::McNemarMethod::ChiSquareCorrected => "chi2",
                    };
                    let verdict = if r.p_value >= self.alpha {
                        "n.s.".to_string()
                    } else if row.b > row.c {
                        format!("{} better", self.model_a)
                    } else {
                        format!("{} better", self.model_b)
                    };
                    (format!("{:.4}", r.p_value), method, verdict)
                }
            };
            s += &format!(
                "{:<width$}  {:>5}  {:>5}  {:>10}  {:<7}  {}\n",
                row.class, row.b, row.c, p, method, verdict
            );
        }
        s
    }
}
