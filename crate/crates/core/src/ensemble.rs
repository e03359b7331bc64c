//! Ensemble heatmaps from several models, threshold sweeps and upscaling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cgp::InputVector;
use crate::endpoints::FinalOutput;
use crate::error::{Error, Result};
use crate::image::Heatmap;
use crate::imgops::{preprocess, RawInput};
use crate::metrics::iou;
use crate::model::PipelineModel;

/// Min-max normalization to `[0, 1]`; a constant input maps to zeros.
pub fn normalize(values: &[f32]) -> Vec<f32> {
    let (lo, hi) = values
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if values.is_empty() || lo >= hi {
        return vec![0.0; values.len()];
    }
    let span = (hi - lo) as f64;
    values
        .iter()
        .map(|&v| ((v - lo) as f64 / span) as f32)
        .collect()
}

/// Pixelwise mean of the normalized predictions, accumulated in order.
pub fn heatmap_from_predictions(predictions: &[FinalOutput]) -> Result<Heatmap> {
    let first = predictions
        .first()
        .ok_or_else(|| Error::Input("ensemble needs at least one prediction".into()))?;
    let (w, h) = first.dims();
    let mut acc = vec![0f64; w * h];
    for p in predictions {
        if p.dims() != (w, h) {
            return Err(Error::Input(format!(
                "prediction is {}x{}, expected {w}x{h}",
                p.dims().0,
                p.dims().1
            )));
        }
        for (a, v) in acc.iter_mut().zip(normalize(&p.values())) {
            *a += v as f64;
        }
    }
    let n = predictions.len() as f64;
    Ok(Heatmap {
        width: w,
        height: h,
        data: acc.into_iter().map(|v| (v / n) as f32).collect(),
    })
}

/// Runs every model on `input` and averages the normalized predictions.
pub fn build_heatmap(models: &[PipelineModel], input: &InputVector) -> Result<Heatmap> {
    if models.is_empty() {
        return Err(Error::Input("ensemble needs at least one model".into()));
    }
    let preds: Vec<FinalOutput> = models
        .par_iter()
        .map(|m| m.run(input))
        .collect::<Result<_>>()?;
    heatmap_from_predictions(&preds)
}

/// Like [`build_heatmap`] but preprocesses the raw image with each model's
/// own preprocessing.
pub fn build_heatmap_raw(models: &[PipelineModel], raw: &RawInput) -> Result<Heatmap> {
    if models.is_empty() {
        return Err(Error::Input("ensemble needs at least one model".into()));
    }
    let preds: Vec<FinalOutput> = models
        .par_iter()
        .map(|m| m.run(&InputVector::Planar(preprocess(raw, &m.preprocessing)?)))
        .collect::<Result<_>>()?;
    heatmap_from_predictions(&preds)
}

pub const SWEEP_STEPS: usize = 100;

/// Grid threshold `i / 100`.
pub fn grid_threshold(i: usize) -> f64 {
    i as f64 / SWEEP_STEPS as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub best_threshold: f64,
    pub best_iou: f64,
    /// `(t, mean IoU)` for `t = 0.00, 0.01, ..., 1.00`.
    pub curve: Vec<(f64, f64)>,
}

/// Mean IoU of `heatmap >= t` against the ground truth for every grid
/// threshold; the smallest maximizing `t` wins.
pub fn sweep_threshold(pairs: &[(Heatmap, Vec<bool>)]) -> Result<Sweep> {
    if pairs.is_empty() {
        return Err(Error::Input("threshold sweep needs at least one heatmap".into()));
    }
    let mut curve = Vec::with_capacity(SWEEP_STEPS + 1);
    for i in 0..=SWEEP_STEPS {
        let t = grid_threshold(i);
        let mut sum = 0.0;
        for (hm, gt) in pairs {
            sum += iou(&hm.binarize(t), gt)?;
        }
        curve.push((t, sum / pairs.len() as f64));
    }
    let (best_threshold, best_iou) = curve
        .iter()
        .copied()
        .fold((f64::NAN, f64::NEG_INFINITY), |best, (t, v)| {
            if v > best.1 {
                (t, v)
            } else {
                best
            }
        });
    Ok(Sweep {
        best_threshold,
        best_iou,
        curve,
    })
}

/// Bilinear resize with corner pixels mapped onto corner pixels.
pub fn resize_bilinear(src: &Heatmap, width: usize, height: usize) -> Heatmap {
    let coord = |i: usize, n_out: usize, n_in: usize| -> f64 {
        if n_out <= 1 || n_in <= 1 {
            0.0
        } else {
            i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64
        }
    };
    let mut data = Vec::with_capacity(width * height);
    for y in 0..height {
        let fy = coord(y, height, src.height);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(src.height - 1);
        let wy = fy - y0 as f64;
        for x in 0..width {
            let fx = coord(x, width, src.width);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(src.width - 1);
            let wx = fx - x0 as f64;
            let top = src.get(x0, y0) as f64 * (1.0 - wx) + src.get(x1, y0) as f64 * wx;
            let bot = src.get(x0, y1) as f64 * (1.0 - wx) + src.get(x1, y1) as f64 * wx;
            data.push((top * (1.0 - wy) + bot * wy) as f32);
        }
    }
    Heatmap {
        width,
        height,
        data,
    }
}

/// How a low-resolution ensemble is carried to a larger image.
pub enum Upscale<'a> {
    /// Resize an existing heatmap.
    Resize(&'a Heatmap),
    /// Re-run the models on the high-resolution input.
    Rerun(&'a [PipelineModel]),
}

pub fn upscale(strategy: Upscale<'_>, target: &RawInput) -> Result<Heatmap> {
    match strategy {
        Upscale::Resize(h) => {
            if h.width == 0 || h.height == 0 {
                return Err(Error::Input("cannot resize an empty heatmap".into()));
            }
            let (w, ht) = target.dims();
            Ok(resize_bilinear(h, w, ht))
        }
        Upscale::Rerun(models) => build_heatmap_raw(models, target),
    }
}

/// Heatmap scaled to 16-bit integers, `round(v * 65535)`.
pub fn heatmap_to_u16(h: &Heatmap) -> Vec<u16> {
    h.data
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) as f64 * 65535.0).round() as u16)
        .collect()
}
