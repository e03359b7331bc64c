use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use crate::image::{ensure_same_dims, Image2D, LabelMap};
use crate::raster::{self, NEIGHBOURS8};
use crate::Result;

#[derive(Clone, Copy, Debug)]
struct Entry {
    priority: f32,
    seq: u64,
    index: usize,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority
            .total_cmp(&other.priority)
            .then(self.seq.cmp(&other.seq))
    }
}

/// Priority flood from labeled seeds over `priority` (lowest first),
/// restricted to `allowed`. A pixel takes the label of the first flood that
/// reaches it; ties in priority resolve in insertion order.
pub fn flood(
    seeds: &[u32],
    priority: &[f32],
    allowed: &[bool],
    width: usize,
    height: usize,
) -> Vec<u32> {
    let mut labels = seeds.to_vec();
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    for (i, &l) in seeds.iter().enumerate() {
        if l > 0 {
            heap.push(Reverse(Entry {
                priority: priority[i],
                seq,
                index: i,
            }));
            seq += 1;
        }
    }
    while let Some(Reverse(Entry { index, .. })) = heap.pop() {
        let label = labels[index];
        let (x, y) = ((index % width) as isize, (index / width) as isize);
        for (dx, dy) in NEIGHBOURS8 {
            let (nx, ny) = (x + dx, y + dy);
            if nx < 0 || ny < 0 || nx >= width as isize || ny >= height as isize {
                continue;
            }
            let n = ny as usize * width + nx as usize;
            if allowed[n] && labels[n] == 0 {
                labels[n] = label;
                heap.push(Reverse(Entry {
                    priority: priority[n],
                    seq,
                    index: n,
                }));
                seq += 1;
            }
        }
    }
    labels
}

fn foreground(img: &Image2D, threshold: u8) -> Vec<bool> {
    img.as_slice().iter().map(|&v| v > threshold).collect()
}

/// Seeds are the connected components of `markers > 0` inside the mask;
/// they flood the negated, smoothed distance transform of the mask.
pub fn marker_controlled_watershed(
    mask: &Image2D,
    markers: &Image2D,
    sigma: f64,
    threshold: u8,
) -> Result<LabelMap> {
    ensure_same_dims(mask.dims(), markers.dims())?;
    let (w, h) = mask.dims();
    let fg = foreground(mask, threshold);
    let seed_fg: Vec<bool> = fg
        .iter()
        .zip(markers.as_slice())
        .map(|(&f, &m)| f && m > 0)
        .collect();
    let (seeds, n) = raster::label_components(&seed_fg, w, h);
    if n == 0 {
        return Ok(LabelMap::empty(w, h));
    }
    let dt = raster::distance_transform(&fg, w, h);
    let smooth = raster::gaussian_smooth_f32(&dt, w, h, sigma);
    let priority: Vec<f32> = smooth.into_iter().map(|v| -v).collect();
    LabelMap::from_raw(w, h, flood(&seeds, &priority, &fg, w, h))
}

fn max_filter_f32(src: &[f32], width: usize, height: usize, radius: usize) -> Vec<f32> {
    let mut tmp = vec![0f32; width * height];
    for y in 0..height {
        let row = &src[y * width..(y + 1) * width];
        for x in 0..width {
            let lo = x.saturating_sub(radius);
            let hi = (x + radius).min(width - 1);
            tmp[y * width + x] = row[lo..=hi].iter().copied().fold(f32::MIN, f32::max);
        }
    }
    let mut out = vec![f32::MIN; width * height];
    for y in 0..height {
        let lo = y.saturating_sub(radius);
        let hi = (y + radius).min(height - 1);
        for sy in lo..=hi {
            for x in 0..width {
                let v = tmp[sy * width + x];
                if v > out[y * width + x] {
                    out[y * width + x] = v;
                }
            }
        }
    }
    out
}

/// Local maxima of the distance map that are at least `min_distance` apart.
/// Connected plateaus of equal maxima form one peak. Returns per-pixel peak
/// labels (0 = none).
pub fn find_peaks(dt: &[f32], fg: &[bool], width: usize, height: usize, min_distance: usize) -> Vec<u32> {
    let maxed = max_filter_f32(dt, width, height, min_distance.max(1));
    let candidate: Vec<bool> = (0..dt.len())
        .map(|i| fg[i] && dt[i] >= 1.0 && dt[i] == maxed[i])
        .collect();
    let (groups, n) = raster::label_components(&candidate, width, height);
    // representative per plateau: highest value, then first in raster order
    let mut rep: Vec<Option<(f32, usize)>> = vec![None; n as usize + 1];
    for (i, &g) in groups.iter().enumerate() {
        if g == 0 {
            continue;
        }
        let slot = &mut rep[g as usize];
        match slot {
            Some((v, _)) if *v >= dt[i] => {}
            _ => *slot = Some((dt[i], i)),
        }
    }
    let mut order: Vec<(u32, f32, usize)> = rep
        .iter()
        .enumerate()
        .filter_map(|(g, r)| r.map(|(v, i)| (g as u32, v, i)))
        .collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.2.cmp(&b.2)));
    let mut accepted: Vec<(usize, usize)> = Vec::new();
    let mut keep = vec![false; n as usize + 1];
    let min_d2 = (min_distance * min_distance) as f64;
    for (g, _, i) in order {
        let (x, y) = (i % width, i / width);
        let clear = accepted.iter().all(|&(ax, ay)| {
            let dx = ax as f64 - x as f64;
            let dy = ay as f64 - y as f64;
            dx * dx + dy * dy >= min_d2
        });
        if clear {
            accepted.push((x, y));
            keep[g as usize] = true;
        }
    }
    groups
        .into_iter()
        .map(|g| if keep[g as usize] { g } else { 0 })
        .collect()
}

/// Central-difference gradient magnitude.
fn gradient_magnitude(src: &[f32], width: usize, height: usize) -> Vec<f32> {
    let at = |x: usize, y: usize| src[y * width + x];
    let mut out = vec![0f32; width * height];
    for y in 0..height {
        for x in 0..width {
            let gx = if width == 1 {
                0.0
            } else if x == 0 {
                at(1, y) - at(0, y)
            } else if x + 1 == width {
                at(x, y) - at(x - 1, y)
            } else {
                (at(x + 1, y) - at(x - 1, y)) * 0.5
            };
            let gy = if height == 1 {
                0.0
            } else if y == 0 {
                at(x, 1) - at(x, 0)
            } else if y + 1 == height {
                at(x, y) - at(x, y - 1)
            } else {
                (at(x, y + 1) - at(x, y - 1)) * 0.5
            };
            out[y * width + x] = (gx * gx + gy * gy).sqrt();
        }
    }
    out
}

/// Peaks of the mask's distance transform seed a flood over the smoothed
/// gradient magnitude of that distance transform.
pub fn local_max_watershed(
    mask: &Image2D,
    sigma: f64,
    min_peak_distance: usize,
    threshold: u8,
) -> LabelMap {
    let (w, h) = mask.dims();
    let fg = foreground(mask, threshold);
    if !fg.iter().any(|&f| f) {
        return LabelMap::empty(w, h);
    }
    let dt = raster::distance_transform(&fg, w, h);
    let peaks = find_peaks(&dt, &fg, w, h, min_peak_distance);
    let grad = gradient_magnitude(&dt, w, h);
    let topo = raster::gaussian_smooth_f32(&grad, w, h, sigma);
    LabelMap::from_raw(w, h, flood(&peaks, &topo, &fg, w, h)).expect("length preserved")
}
