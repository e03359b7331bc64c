//! Single-thread throughput measurement of a model.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cgp::InputVector;
use crate::error::{Error, Result};
use crate::model::PipelineModel;
use crate::synth::{disc_images, DiscConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub width: usize,
    pub height: usize,
    pub iterations: usize,
    pub active_nodes: usize,
    /// Median seconds per image.
    pub median_seconds: f64,
    pub images_per_second: f64,
}

/// Synthetic input with the model's channel count: one disc image repeated
/// across channels.
pub fn bench_input(model: &PipelineModel, width: usize, height: usize, seed: u64) -> Result<InputVector> {
    let r_max = (width.min(height).saturating_sub(1) / 2).clamp(1, 14);
    let cfg = DiscConfig {
        width,
        height,
        radius_min: r_max.min(6),
        radius_max: r_max,
        min_discs: 1,
        max_discs: 15,
        ..DiscConfig::default()
    };
    let img = disc_images(&cfg, 1, seed)?.remove(0).image;
    Ok(InputVector::Planar(vec![img; model.iota()]))
}

/// Times `iterations` runs of the model on the calling thread and reports
/// the median.
pub fn bench_model(model: &PipelineModel, width: usize, height: usize, iterations: usize) -> Result<BenchReport> {
    if iterations == 0 {
        return Err(Error::Config("bench needs at least one iteration".into()));
    }
    let input = bench_input(model, width, height, 0)?;
    model.run(&input)?;
    let mut times = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let t0 = Instant::now();
        let out = model.run(&input)?;
        times.push(t0.elapsed().as_secs_f64());
        std::hint::black_box(out);
    }
    times.sort_by(f64::total_cmp);
    let n = times.len();
    let median = if n % 2 == 1 {
        times[n / 2]
    } else {
        (times[n / 2 - 1] + times[n / 2]) / 2.0
    };
    Ok(BenchReport {
        width,
        height,
        iterations,
        active_nodes: model.graph().active_count(),
        median_seconds: median,
        images_per_second: if median > 0.0 { 1.0 / median } else { f64::INFINITY },
    })
}
