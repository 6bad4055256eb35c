//! Cross-validation, model comparison, HU-distribution checks and
//! complex-nodule buckets.

mod complex;
mod compare;
mod hu;

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataio::{resize_bilinear, split_folds, to_net_input, FoldSplit, NetInput, NoduleSample};
use crate::error::{invalid, Error, Result};
use crate::losses::LossConfig;
use crate::maskops::Mask;
use crate::metrics::{mean, std_dev, MetricsRecord, DEFAULT_NSD_TOLERANCE};
use crate::model::{net_forward, NetConfig, NetState, Tensor};
use crate::trainer::{fit, FitSpec, TrainConfig, TrainSet};

pub use complex::{complex_validation, in_bucket, BucketReport, DEFAULT_THRESHOLDS};
pub use compare::{compare_models, Comparison};
pub use hu::{hu_distribution_check, HuReport, HuSource, RegionStats, HU_KDE_POINTS};

/// Binarization threshold for every predicted probability map.
pub const PRED_THRESHOLD: f64 = 0.5;

/// Network outputs resized to a sample's native resolution and binarized.
#[derive(Clone, Debug, PartialEq)]
pub struct NativePrediction {
    pub segmentation: Mask,
    /// `∪(X) ≥ 0.5`, when the network has uncertainty-aware branches.
    pub union: Option<Mask>,
    /// `∩(X) ≥ 0.5`, when the network has uncertainty-aware branches.
    pub intersection: Option<Mask>,
}

fn to_native(map: &Tensor, height: usize, width: usize) -> Mask {
    Mask::from_grid(&resize_bilinear(&map.to_grid(0), height, width), PRED_THRESHOLD)
}

pub fn predict_input(state: &NetState, input: &NetInput, native: (usize, usize)) -> Result<NativePrediction> {
    let out = net_forward(state, &input.image)?;
    let (h, w) = native;
    Ok(NativePrediction {
        segmentation: to_native(&out.x_s, h, w),
        union: out.uam.as_ref().map(|u| to_native(&u.union_pred, h, w)),
        intersection: out.uam.as_ref().map(|u| to_native(&u.inter_pred, h, w)),
    })
}

pub fn predict(state: &NetState, sample: &NoduleSample) -> Result<NativePrediction> {
    let input = to_net_input(sample, state.config().input_size)?;
    predict_input(state, &input, sample.hu_patch.shape())
}

fn annotation(sample: &NoduleSample, index: usize) -> Result<&Mask> {
    sample.annotations.masks().get(index).ok_or_else(|| {
        invalid!(
            "sample '{}' has {} annotations, index {index} requested",
            sample.sample_id,
            sample.annotations.len()
        )
    })
}

/// Metrics of `X_S` against annotation `annotation_index` at native resolution.
pub fn score_inputs(
    state: &NetState,
    inputs: &[NetInput],
    samples: &[&NoduleSample],
    annotation_index: usize,
    nsd_tolerance: f64,
) -> Result<Vec<MetricsRecord>> {
    inputs
        .iter()
        .zip(samples)
        .map(|(input, sample)| {
            let gt = annotation(sample, annotation_index)?;
            let pred = predict_input(state, input, gt.shape())?;
            MetricsRecord::compute(&sample.sample_id, &pred.segmentation, gt, nsd_tolerance)
        })
        .collect()
}

/// Which annotation predictions are scored against, and the NSD tolerance in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub annotation: usize,
    pub nsd_tolerance: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            annotation: 0,
            nsd_tolerance: DEFAULT_NSD_TOLERANCE,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.nsd_tolerance >= 0.0 && self.nsd_tolerance.is_finite()) {
            return Err(Error::Config(format!(
                "eval.nsd_tolerance must be a non-negative number, got {}",
                self.nsd_tolerance
            )));
        }
        Ok(())
    }
}

/// Scores the held-out `fold` of `split`.
pub fn evaluate(
    state: &NetState,
    samples: &[NoduleSample],
    split: &FoldSplit,
    fold: usize,
    eval: &EvalConfig,
) -> Result<Vec<MetricsRecord>> {
    if fold >= split.k {
        return Err(invalid!("fold {fold} out of range (valid 0–{})", split.k - 1));
    }
    let members: Vec<&NoduleSample> = samples
        .iter()
        .filter(|s| split.fold_of(&s.sample_id) == Some(fold))
        .collect();
    if members.is_empty() {
        return Err(invalid!("fold {fold} has no samples"));
    }
    score_samples(state, &members, eval)
}

pub fn score_samples(state: &NetState, samples: &[&NoduleSample], eval: &EvalConfig) -> Result<Vec<MetricsRecord>> {
    let size = state.config().input_size;
    let inputs = samples
        .iter()
        .map(|s| to_net_input(s, size))
        .collect::<Result<Vec<_>>>()?;
    score_inputs(state, &inputs, samples, eval.annotation, eval.nsd_tolerance)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    fn of(values: &[f64]) -> Self {
        Self {
            mean: mean(values),
            std: std_dev(values),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// Fold index, or `None` for the pooled row.
    pub fold: Option<usize>,
    pub n: usize,
    pub dsc: MeanStd,
    pub iou: MeanStd,
    pub nsd: MeanStd,
}

impl Summary {
    fn of(fold: Option<usize>, rows: &[&MetricsRecord]) -> Self {
        let col = |f: fn(&MetricsRecord) -> f64| rows.iter().map(|r| f(r)).collect::<Vec<_>>();
        Self {
            fold,
            n: rows.len(),
            dsc: MeanStd::of(&col(|r| r.dsc)),
            iou: MeanStd::of(&col(|r| r.iou)),
            nsd: MeanStd::of(&col(|r| r.nsd)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub fold: usize,
    #[serde(flatten)]
    pub metrics: MetricsRecord,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    /// Echo of the configuration that produced the report.
    pub config: serde_json::Value,
    pub per_fold: Vec<Summary>,
    /// Pooled over every per-sample row.
    pub overall: Summary,
    pub per_sample: Vec<FoldRecord>,
}

impl RunReport {
    /// Builds fold summaries from per-sample rows, ordered by fold then id.
    pub fn from_rows(seed: u64, config: serde_json::Value, mut rows: Vec<FoldRecord>) -> Result<Self> {
        if rows.is_empty() {
            return Err(invalid!("report without samples"));
        }
        rows.sort_by(|a, b| (a.fold, &a.metrics.sample_id).cmp(&(b.fold, &b.metrics.sample_id)));
        let mut folds: Vec<usize> = rows.iter().map(|r| r.fold).collect();
        folds.dedup();
        let per_fold = folds
            .iter()
            .map(|&f| {
                let sel: Vec<&MetricsRecord> = rows.iter().filter(|r| r.fold == f).map(|r| &r.metrics).collect();
                Summary::of(Some(f), &sel)
            })
            .collect();
        let all: Vec<&MetricsRecord> = rows.iter().map(|r| &r.metrics).collect();
        Ok(Self {
            seed,
            config,
            per_fold,
            overall: Summary::of(None, &all),
            per_sample: rows,
        })
    }

    pub fn records(&self) -> Vec<&MetricsRecord> {
        self.per_sample.iter().map(|r| &r.metrics).collect()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Data(format!("malformed report: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, json: &Path, text: Option<&Path>) -> Result<()> {
        for p in std::iter::once(json).chain(text) {
            if let Some(dir) = p.parent() {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
        }
        std::fs::write(json, self.to_json()).map_err(|e| Error::io(json, e))?;
        if let Some(t) = text {
            std::fs::write(t, self.to_text()).map_err(|e| Error::io(t, e))?;
        }
        Ok(())
    }

    /// Aligned table: one row per fold plus the pooled average.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<8} {:>5}  {:>17}  {:>17}  {:>17}",
            "fold", "n", "DSC", "IoU", "NSD"
        );
        let cell = |m: MeanStd| format!("{:.4} ± {:.4}", m.mean, m.std);
        for s in self.per_fold.iter().chain(std::iter::once(&self.overall)) {
            let label = match s.fold {
                Some(f) => format!("Fold{}", f + 1),
                None => "Average".to_string(),
            };
            let _ = writeln!(
                out,
                "{label:<8} {:>5}  {:>17}  {:>17}  {:>17}",
                s.n,
                cell(s.dsc),
                cell(s.iou),
                cell(s.nsd)
            );
        }
        out
    }
}

/// Everything a cross-validation run needs besides the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossvalSpec {
    pub k: usize,
    pub seed: u64,
    pub net: NetConfig,
    pub train: TrainConfig,
    pub loss: LossConfig,
    pub eval: EvalConfig,
}

pub struct CrossvalOutcome {
    pub report: RunReport,
    pub split: FoldSplit,
    /// Final model of each fold, indexed by held-out fold.
    pub fold_models: Vec<NetState>,
}

/// Trains `k` models, each with one fold held out, and scores each final
/// model on its held-out fold. With a run directory, fold `i` writes
/// `checkpoints/fold{i}/` and `logs/fold{i}/` beneath it.
pub fn crossval(samples: &[NoduleSample], spec: &CrossvalSpec, out_dir: Option<&Path>) -> Result<CrossvalOutcome> {
    if spec.k < 2 {
        return Err(invalid!("cross-validation needs k >= 2, got {}", spec.k));
    }
    let ids: Vec<&str> = samples.iter().map(|s| s.sample_id.as_str()).collect();
    let split = split_folds(&ids, spec.k, spec.seed)?;
    let mut rows = Vec::with_capacity(samples.len());
    let mut fold_models = Vec::with_capacity(spec.k);
    for fold in 0..spec.k {
        let tag = format!("fold{fold}");
        let train = TrainConfig {
            seed: spec.train.seed.wrapping_add(fold as u64),
            ..spec.train.clone()
        };
        let fit_spec = FitSpec {
            net: &spec.net,
            train: &train,
            loss: &spec.loss,
            eval: &spec.eval,
            out_dir,
            tag: &tag,
        };
        let outcome = fit(samples, TrainSet::HoldOut { split: &split, fold }, &fit_spec)?;
        for m in evaluate(&outcome.final_state, samples, &split, fold, &spec.eval)? {
            rows.push(FoldRecord { fold, metrics: m });
        }
        fold_models.push(outcome.final_state);
    }
    let config = serde_json::to_value(spec).map_err(|e| Error::Data(e.to_string()))?;
    Ok(CrossvalOutcome {
        report: RunReport::from_rows(spec.seed, config, rows)?,
        split,
        fold_models,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, dsc: f64) -> MetricsRecord {
        MetricsRecord {
            sample_id: id.into(),
            dsc,
            iou: dsc / (2.0 - dsc),
            nsd: dsc,
        }
    }

    #[test]
    fn report_means_recompute_from_rows() {
        let rows = vec![
            FoldRecord { fold: 1, metrics: rec("b", 0.5) },
            FoldRecord { fold: 0, metrics: rec("a", 0.9) },
            FoldRecord { fold: 0, metrics: rec("c", 0.7) },
            FoldRecord { fold: 1, metrics: rec("d", 0.3) },
        ];
        let r = RunReport::from_rows(1, serde_json::Value::Null, rows).unwrap();
        assert_eq!(r.per_fold.len(), 2);
        assert!((r.per_fold[0].dsc.mean - 0.8).abs() < 1e-12);
        assert!((r.per_fold[1].dsc.mean - 0.4).abs() < 1e-12);
        assert!((r.overall.dsc.mean - 0.6).abs() < 1e-12);
        assert_eq!(r.per_sample[0].metrics.sample_id, "a");
        let back = RunReport::from_json(&r.to_json()).unwrap();
        assert_eq!(back, r);
        let text = r.to_text();
        assert!(text.contains("Fold1") && text.contains("Fold2") && text.contains("Average"));
    }

    #[test]
    fn empty_report_rejected() {
        assert!(RunReport::from_rows(0, serde_json::Value::Null, vec![]).is_err());
    }
}
