//! Segmentation scoring: IoU, one-to-one instance matching and AP at an IoU
//! threshold, and the dataset-level error used as evolutionary fitness.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{Annotation, Dataset};
use crate::endpoints::FinalOutput;
use crate::error::{Error, Result};
use crate::image::{ensure_same_dims, LabelMap};
use crate::model::PipelineModel;

/// `|a ∩ b| / |a ∪ b|`; 1 when both are empty.
pub fn iou(a: &[bool], b: &[bool]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Input(format!(
            "mask sizes differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let (mut inter, mut union) = (0u64, 0u64);
    for (&x, &y) in a.iter().zip(b) {
        inter += (x && y) as u64;
        union += (x || y) as u64;
    }
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MatchResult {
    /// `(pred label, gt label, IoU)`, in the order they were matched.
    pub pairs: Vec<(u32, u32, f64)>,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl MatchResult {
    /// `TP / (TP + FP + FN)`; 1 when all three are zero.
    pub fn average_precision(&self) -> f64 {
        let denom = self.tp + self.fp + self.fn_;
        if denom == 0 {
            1.0
        } else {
            self.tp as f64 / denom as f64
        }
    }
}

/// All overlapping `(pred, gt, IoU)` triples, from one pass over the pixels.
pub fn overlap_ious(pred: &LabelMap, gt: &LabelMap) -> Vec<(u32, u32, f64)> {
    let pa = pred.areas();
    let ga = gt.areas();
    let mut co: HashMap<(u32, u32), u64> = HashMap::new();
    for (&p, &g) in pred.as_slice().iter().zip(gt.as_slice()) {
        if p > 0 && g > 0 {
            *co.entry((p, g)).or_insert(0) += 1;
        }
    }
    co.into_iter()
        .map(|((p, g), inter)| {
            let union = pa[p as usize] as u64 + ga[g as usize] as u64 - inter;
            (p, g, inter as f64 / union as f64)
        })
        .collect()
}

/// Greedy one-to-one matching in descending IoU (ties: smaller gt label,
/// then smaller pred label), keeping pairs whose IoU exceeds `t`.
pub fn match_instances(pred: &LabelMap, gt: &LabelMap, t: f64) -> Result<MatchResult> {
    ensure_same_dims(pred.dims(), gt.dims())?;
    let mut cands: Vec<(u32, u32, f64)> = overlap_ious(pred, gt)
        .into_iter()
        .filter(|&(_, _, v)| v > t)
        .collect();
    cands.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.1.cmp(&b.1)).then(a.0.cmp(&b.0)));
    let mut pred_used = vec![false; pred.count() + 1];
    let mut gt_used = vec![false; gt.count() + 1];
    let mut pairs = Vec::new();
    for (p, g, v) in cands {
        if pred_used[p as usize] || gt_used[g as usize] {
            continue;
        }
        pred_used[p as usize] = true;
        gt_used[g as usize] = true;
        pairs.push((p, g, v));
    }
    let tp = pairs.len();
    Ok(MatchResult {
        pairs,
        tp,
        fp: pred.count() - tp,
        fn_: gt.count() - tp,
    })
}

pub fn average_precision(pred: &LabelMap, gt: &LabelMap, t: f64) -> Result<f64> {
    Ok(match_instances(pred, gt, t)?.average_precision())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// AP at `iou_threshold`, on instance label maps.
    Ap,
    /// IoU of the foreground masks.
    Iou,
}

fn default_iou_threshold() -> f64 {
    0.5
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitnessSpec {
    pub metric: Metric,
    #[serde(default = "default_iou_threshold")]
    pub iou_threshold: f64,
}

impl Default for FitnessSpec {
    fn default() -> Self {
        Self::ap(0.5)
    }
}

impl FitnessSpec {
    pub fn ap(t: f64) -> Self {
        Self {
            metric: Metric::Ap,
            iou_threshold: t,
        }
    }

    pub fn iou() -> Self {
        Self {
            metric: Metric::Iou,
            iou_threshold: default_iou_threshold(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.metric == Metric::Ap && !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "AP threshold {} outside (0, 1]",
                self.iou_threshold
            )));
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        match self.metric {
            Metric::Ap => format!("AP{:.0}", self.iou_threshold * 100.0),
            Metric::Iou => "IoU".into(),
        }
    }

    /// Metric value in `[0, 1]`, higher is better.
    pub fn score(&self, pred: &FinalOutput, gt: &Annotation) -> Result<f64> {
        ensure_same_dims(pred.dims(), gt.dims())?;
        match self.metric {
            Metric::Ap => average_precision(&pred.to_labels(), &gt.to_labels(), self.iou_threshold),
            Metric::Iou => iou(&pred.foreground(), &gt.foreground()),
        }
    }

    /// `1 - score`.
    pub fn error(&self, pred: &FinalOutput, gt: &Annotation) -> Result<f64> {
        Ok(1.0 - self.score(pred, gt)?)
    }
}

/// Per-entry errors of `model` over `dataset`, in entry order.
pub fn entry_errors(model: &PipelineModel, dataset: &Dataset, spec: &FitnessSpec) -> Result<Vec<f64>> {
    dataset
        .entries()
        .iter()
        .map(|e| spec.error(&model.run(e.input()?)?, &e.annotation))
        .collect()
}

/// Mean error over the dataset, accumulated in entry order.
pub fn fitness(model: &PipelineModel, dataset: &Dataset, spec: &FitnessSpec) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::Input("fitness over an empty dataset".into()));
    }
    let errs = entry_errors(model, dataset, spec)?;
    Ok(mean_in_order(&errs))
}

pub(crate) fn mean_in_order(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}
