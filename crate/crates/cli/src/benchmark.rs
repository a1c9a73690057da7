use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use xprojct_core::labels::read_predictions;
use xprojct_stats::{shapiro_wilk, wilcoxon_signed_rank, MeanStd, ShapiroResult, WilcoxonResult};

use crate::error::{CliError, Result};
use crate::predict::{case_id, predict_case, Predictor, Scenario};

pub const DEFAULT_REPEATS: usize = 5;
/// Paired timing tests need at least this many cases.
pub const MIN_PAIRED_CASES: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseTiming {
    pub case_id: String,
    pub times_ms: Vec<f64>,
    pub mean_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelTiming {
    pub checkpoint: PathBuf,
    pub cases: Vec<CaseTiming>,
    /// Mean and population std of the per-case means.
    pub aggregate: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedTiming {
    pub shapiro_a: ShapiroResult,
    pub shapiro_b: ShapiroResult,
    pub wilcoxon: Option<WilcoxonResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub scenario: Scenario,
    pub repeats: usize,
    pub models: Vec<ModelTiming>,
    /// Present with two models and enough cases.
    pub paired: Option<PairedTiming>,
    /// Prediction documents re-read and checked against the schema.
    pub validated_documents: usize,
}

fn time_model(
    checkpoint: &Path,
    cases: &[PathBuf],
    scenario: Scenario,
    repeats: usize,
    jobs: Option<usize>,
    out_dir: &Path,
) -> Result<(ModelTiming, usize)> {
    let predictor = Predictor::load(checkpoint)?;
    let mut timings = Vec::with_capacity(cases.len());
    let mut validated = 0;
    for case in cases {
        let id = case_id(case);
        let out = out_dir.join(format!("{id}.json"));
        let mut times = Vec::with_capacity(repeats);
        for _ in 0..repeats {
            let outcome = predict_case(&predictor, case, scenario, jobs, &out)?;
            if outcome.failed > 0 {
                return Err(CliError::Partial {
                    failed: outcome.failed,
                    total: outcome.failed + outcome.document.series.len(),
                });
            }
            times.push(outcome.wall_ms);
            read_predictions(&out, &predictor.meta.vocabulary)?;
            validated += 1;
        }
        let mean_ms = times.iter().sum::<f64>() / times.len() as f64;
        timings.push(CaseTiming {
            case_id: id,
            times_ms: times,
            mean_ms,
        });
    }
    let means: Vec<f64> = timings.iter().map(|c| c.mean_ms).collect();
    Ok((
        ModelTiming {
            checkpoint: checkpoint.to_path_buf(),
            cases: timings,
            aggregate: MeanStd::of(&means),
        },
        validated,
    ))
}

/// Times end-to-end prediction of every case `repeats` times per model.
/// With two models and enough cases, the per-case means are tested for
/// normality and compared with the signed-rank test.
pub fn cmd_benchmark(
    checkpoints: &[PathBuf],
    cases: &[PathBuf],
    scenario: Scenario,
    repeats: usize,
    jobs: Option<usize>,
    out_dir: &Path,
) -> Result<BenchmarkReport> {
    if cases.is_empty() || repeats == 0 {
        return Err(CliError::Config("benchmark needs at least one case and one repeat".into()));
    }
    if checkpoints.is_empty() || checkpoints.len() > 2 {
        return Err(CliError::Config("benchmark takes one or two checkpoints".into()));
    }
    let mut models = Vec::new();
    let mut validated = 0;
    for (i, ckpt) in checkpoints.iter().enumerate() {
        let dir = out_dir.join(format!("model{}", i + 1));
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        let (timing, n) = time_model(ckpt, cases, scenario, repeats, jobs, &dir)?;
        models.push(timing);
        validated += n;
    }
    let paired = match models.as_slice() {
        [a, b] if cases.len() >= MIN_PAIRED_CASES => {
            let ta: Vec<f64> = a.cases.iter().map(|c| c.mean_ms).collect();
            let tb: Vec<f64> = b.cases.iter().map(|c| c.mean_ms).collect();
            Some(PairedTiming {
                shapiro_a: shapiro_wilk(&ta)?,
                shapiro_b: shapiro_wilk(&tb)?,
                wilcoxon: wilcoxon_signed_rank(&ta, &tb).ok(),
            })
        }
        _ => None,
    };
    Ok(BenchmarkReport {
        scenario,
        repeats,
        models,
        paired,
        validated_documents: validated,
    })
}

impl BenchmarkReport {
    pub fn to_text(&self) -> String {
        let mut s = format!("scenario {:?}, {} repeats per case\n", self.scenario, self.repeats);
        for m in &self.models {
            s += &format!(
                "{}: {} ms over {} cases\n",
                m.checkpoint.display(),
                m.aggregate,
                m.cases.len()
            );
        }
        if let Some(p) = &self.paired {
            s += &format!(
                "Shapiro-Wilk: W={:.3} p={:.4} / W={:.3} p={:.4}\n",
                p.shapiro_a.w, p.shapiro_a.p_value, p.shapiro_b.w, p.shapiro_b.p_value
            );
            match &p.wilcoxon {
                Some(w) => s += &format!("Wilcoxon signed-rank: z={:.3} p={:.4} ({:?})\n", w.z, w.p_value, w.method),
                None => s += "Wilcoxon signed-rank: undefined (identical timings)\n",
            }
        }
        s
    }
}
