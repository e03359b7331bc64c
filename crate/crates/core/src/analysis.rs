//! Post-segmentation analyses: instance pairing across label maps,
//! per-instance intensity features, area filtering and conjugate detection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ensure_same_dims, Image2D, LabelMap};
use crate::imgops::otsu_level;

pub const DEFAULT_PAIRING_THRESHOLD: f64 = 0.05;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Pairing {
    /// `(a label, b label, IoU)`.
    pub pairs: Vec<(u32, u32, f64)>,
    pub a_only: Vec<u32>,
    pub b_only: Vec<u32>,
}

/// One-to-one pairing of `a` instances with `b` instances by descending
/// IoU; pairs need IoU above `t`. Ties prefer the smaller `b` label, then
/// the smaller `a` label.
pub fn pair_instances(a: &LabelMap, b: &LabelMap, t: f64) -> Result<Pairing> {
    ensure_same_dims(a.dims(), b.dims())?;
    let (na, nb) = (a.count(), b.count());
    let mut inter = vec![0u64; (na + 1) * (nb + 1)];
    for (&la, &lb) in a.as_slice().iter().zip(b.as_slice()) {
        inter[la as usize * (nb + 1) + lb as usize] += 1;
    }
    let area_a = a.areas();
    let area_b = b.areas();
    let mut cands = Vec::new();
    for la in 1..=na {
        for lb in 1..=nb {
            let i = inter[la * (nb + 1) + lb];
            if i == 0 {
                continue;
            }
            let v = i as f64 / (area_a[la] as u64 + area_b[lb] as u64 - i) as f64;
            if v > t {
                cands.push((la as u32, lb as u32, v));
            }
        }
    }
    cands.sort_by(|x, y| y.2.total_cmp(&x.2).then(x.1.cmp(&y.1)).then(x.0.cmp(&y.0)));
    let mut used_a = vec![false; na + 1];
    let mut used_b = vec![false; nb + 1];
    let mut pairs = Vec::new();
    for (la, lb, v) in cands {
        if used_a[la as usize] || used_b[lb as usize] {
            continue;
        }
        used_a[la as usize] = true;
        used_b[lb as usize] = true;
        pairs.push((la, lb, v));
    }
    Ok(Pairing {
        pairs,
        a_only: (1..=na as u32).filter(|&l| !used_a[l as usize]).collect(),
        b_only: (1..=nb as u32).filter(|&l| !used_b[l as usize]).collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    /// Instance pixels above the channel's threshold.
    pub positive: u64,
    /// Sum of the channel over the whole instance.
    pub sum: u64,
    /// `sum / area`.
    pub mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntensityFeatureVector {
    pub area: u64,
    /// Indexed by positivity pattern: bit `c` is set when channel `c` is
    /// above its threshold.
    pub combination_counts: Vec<u64>,
    pub channels: Vec<ChannelStats>,
}

impl IntensityFeatureVector {
    /// Flat vector: the `2^C` pattern counters, then `(positive, sum, mean)`
    /// per channel.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.combination_counts.iter().map(|&c| c as f64).collect();
        for c in &self.channels {
            v.extend([c.positive as f64, c.sum as f64, c.mean]);
        }
        v
    }

    pub fn len(&self) -> usize {
        self.combination_counts.len() + 3 * self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Flat feature length for `c` channels.
pub fn feature_length(c: usize) -> usize {
    (1usize << c) + 3 * c
}

/// Per-channel Otsu levels.
pub fn otsu_thresholds(channels: &[Image2D]) -> Vec<u8> {
    channels.iter().map(otsu_level).collect()
}

pub fn intensity_features(
    instance: &[bool],
    channels: &[Image2D],
    thresholds: &[u8],
) -> Result<IntensityFeatureVector> {
    let c = channels.len();
    if c == 0 {
        return Err(Error::Input("intensity features need at least one channel".into()));
    }
    if c > 16 {
        return Err(Error::Input(format!("{c} channels is too many for pattern counters")));
    }
    if thresholds.len() != c {
        return Err(Error::Input(format!(
            "{} thresholds for {c} channels",
            thresholds.len()
        )));
    }
    for ch in channels {
        if ch.len() != instance.len() {
            return Err(Error::Input("channel and instance mask sizes differ".into()));
        }
    }
    let mut combos = vec![0u64; 1 << c];
    let mut positive = vec![0u64; c];
    let mut sum = vec![0u64; c];
    let mut area = 0u64;
    for (i, _) in instance.iter().enumerate().filter(|(_, &m)| m) {
        area += 1;
        let mut pattern = 0usize;
        for (k, ch) in channels.iter().enumerate() {
            let v = ch.as_slice()[i];
            sum[k] += v as u64;
            if v > thresholds[k] {
                positive[k] += 1;
                pattern |= 1 << k;
            }
        }
        combos[pattern] += 1;
    }
    Ok(IntensityFeatureVector {
        area,
        combination_counts: combos,
        channels: (0..c)
            .map(|k| ChannelStats {
                positive: positive[k],
                sum: sum[k],
                mean: if area == 0 { 0.0 } else { sum[k] as f64 / area as f64 },
            })
            .collect(),
    })
}

/// Features for every instance of `labels`, in label order. Thresholds
/// default to per-channel Otsu levels.
pub fn features_for_labels(
    labels: &LabelMap,
    channels: &[Image2D],
    thresholds: Option<&[u8]>,
) -> Result<Vec<(u32, IntensityFeatureVector)>> {
    for ch in channels {
        ensure_same_dims(ch.dims(), labels.dims())?;
    }
    let owned;
    let thresholds = match thresholds {
        Some(t) => t,
        None => {
            owned = otsu_thresholds(channels);
            &owned
        }
    };
    (1..=labels.count() as u32)
        .map(|l| Ok((l, intensity_features(&labels.instance_mask(l), channels, thresholds)?)))
        .collect()
}

/// Keeps instances with `min < area < max`, relabeled contiguously.
pub fn area_filter(labels: &LabelMap, min: usize, max: usize) -> Result<LabelMap> {
    if min >= max {
        return Err(Error::Config(format!("area bounds ({min}, {max}) are empty")));
    }
    let areas = labels.areas();
    Ok(labels.retain(|l| {
        let a = areas[l as usize];
        a > min && a < max
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConjugateParams {
    pub max_centroid_distance: f64,
    /// Odd square kernel side.
    pub kernel: usize,
    pub iterations: usize,
}

impl Default for ConjugateParams {
    fn default() -> Self {
        Self {
            max_centroid_distance: 70.0,
            kernel: 3,
            iterations: 1,
        }
    }
}

/// `(ctl label, target label)` pairs whose centroids are closer than the
/// distance gate and whose masks touch once the target is dilated.
pub fn detect_conjugates(ctl: &LabelMap, targets: &LabelMap, params: &ConjugateParams) -> Result<Vec<(u32, u32)>> {
    ensure_same_dims(ctl.dims(), targets.dims())?;
    if params.kernel % 2 == 0 {
        return Err(Error::Config(format!("dilation kernel {} must be odd", params.kernel)));
    }
    let (w, h) = ctl.dims();
    // a k x k square dilation iterated n times reaches Chebyshev radius n*(k/2)
    let reach = (params.kernel / 2 * params.iterations) as isize;
    let cc = ctl.centroids();
    let tc = targets.centroids();
    let mut out = Vec::new();
    for (t_idx, &(tx, ty)) in tc.iter().enumerate() {
        let ti = t_idx + 1;
        let cands: Vec<usize> = cc
            .iter()
            .enumerate()
            .filter(|(_, &(cx, cy))| ((cx - tx).powi(2) + (cy - ty).powi(2)).sqrt() < params.max_centroid_distance)
            .map(|(i, _)| i + 1)
            .collect();
        if cands.is_empty() {
            continue;
        }
        let mut hit = vec![false; cc.len() + 1];
        for (i, &l) in targets.as_slice().iter().enumerate() {
            if l as usize != ti {
                continue;
            }
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for dy in -reach..=reach {
                for dx in -reach..=reach {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let c = ctl.as_slice()[ny as usize * w + nx as usize];
                    if c > 0 {
                        hit[c as usize] = true;
                    }
                }
            }
        }
        for c in cands {
            if hit[c] {
                out.push((c as u32, ti as u32));
            }
        }
    }
    out.sort_unstable();
    Ok(out)
}
