use crate::image::{Image2D, LabelMap};

/// A detected circle: centre, radius and the fraction of its perimeter
/// supported by edge pixels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Circle {
    pub x: usize,
    pub y: usize,
    pub radius: usize,
    pub score: f64,
}

/// Distinct integer offsets on the circle of radius `r`.
pub fn circle_offsets(r: usize) -> Vec<(isize, isize)> {
    let steps = ((2.0 * std::f64::consts::PI * r as f64) * 4.0).ceil().max(8.0) as usize;
    let mut pts: Vec<(isize, isize)> = (0..steps)
        .map(|i| {
            let t = 2.0 * std::f64::consts::PI * i as f64 / steps as f64;
            (
                (r as f64 * t.cos()).round() as isize,
                (r as f64 * t.sin()).round() as isize,
            )
        })
        .collect();
    pts.sort_unstable();
    pts.dedup();
    pts
}

/// Inner boundary of `z > threshold`: foreground pixels with a 4-neighbour
/// in the background. The image border does not count as background.
pub fn edge_pixels(z: &Image2D, threshold: u8) -> Vec<(usize, usize)> {
    let (w, h) = z.dims();
    let fg = |x: usize, y: usize| z.get(x, y) > threshold;
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !fg(x, y) {
                continue;
            }
            let edge = (x > 0 && !fg(x - 1, y))
                || (x + 1 < w && !fg(x + 1, y))
                || (y > 0 && !fg(x, y - 1))
                || (y + 1 < h && !fg(x, y + 1));
            if edge {
                out.push((x, y));
            }
        }
    }
    out
}

/// Circle Hough transform over the edge pixels of `z`.
pub fn detect_circles(
    z: &Image2D,
    radius_min: usize,
    radius_max: usize,
    accumulator_threshold: f64,
    edge_threshold: u8,
    min_center_distance: f64,
) -> Vec<Circle> {
    let (w, h) = z.dims();
    let edges = edge_pixels(z, edge_threshold);
    if edges.is_empty() || radius_max < radius_min {
        return Vec::new();
    }
    let mut candidates = Vec::new();
    let mut acc = vec![0u32; w * h];
    for r in radius_min.max(1)..=radius_max {
        let offsets = circle_offsets(r);
        acc.iter_mut().for_each(|v| *v = 0);
        for &(ex, ey) in &edges {
            for &(dx, dy) in &offsets {
                let cx = ex as isize - dx;
                let cy = ey as isize - dy;
                if cx >= 0 && cy >= 0 && (cx as usize) < w && (cy as usize) < h {
                    acc[cy as usize * w + cx as usize] += 1;
                }
            }
        }
        let total = offsets.len() as f64;
        for (i, &v) in acc.iter().enumerate() {
            let score = v as f64 / total;
            if score >= accumulator_threshold {
                candidates.push(Circle {
                    x: i % w,
                    y: i / w,
                    radius: r,
                    score,
                });
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.radius.cmp(&b.radius))
            .then(a.y.cmp(&b.y))
            .then(a.x.cmp(&b.x))
    });
    let min_d2 = min_center_distance * min_center_distance;
    let mut accepted: Vec<Circle> = Vec::new();
    for c in candidates {
        let clear = accepted.iter().all(|a| {
            let dx = a.x as f64 - c.x as f64;
            let dy = a.y as f64 - c.y as f64;
            dx * dx + dy * dy >= min_d2
        });
        if clear {
            accepted.push(c);
        }
    }
    accepted
}

/// Filled discs for the accepted circles; earlier (stronger) circles keep
/// contested pixels.
pub fn rasterize(circles: &[Circle], width: usize, height: usize) -> LabelMap {
    let mut raw = vec![0u32; width * height];
    for (k, c) in circles.iter().enumerate() {
        let r = c.radius as isize;
        let r2 = r * r;
        for dy in -r..=r {
            for dx in -r..=r {
                if dx * dx + dy * dy > r2 {
                    continue;
                }
                let (x, y) = (c.x as isize + dx, c.y as isize + dy);
                if x < 0 || y < 0 || x >= width as isize || y >= height as isize {
                    continue;
                }
                let i = y as usize * width + x as usize;
                if raw[i] == 0 {
                    raw[i] = k as u32 + 1;
                }
            }
        }
    }
    LabelMap::from_raw(width, height, raw).expect("length preserved")
}
