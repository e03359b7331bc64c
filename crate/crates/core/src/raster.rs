//! Low-level raster algorithms shared by the primitives and the endpoints:
//! border handling, separable filters, the exact Euclidean distance
//! transform, and connected-component labeling.

use crate::image::Image2D;

/// Mirror index without repeating the edge pixel (`dcb|abcd|cba`).
#[inline]
pub fn reflect101(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m >= n as isize {
        (period - m) as usize
    } else {
        m as usize
    }
}

/// Gaussian sigma used for a `k`-tap kernel when none is given explicitly.
pub fn sigma_for_kernel(k: usize) -> f64 {
    0.3 * ((k as f64 - 1.0) * 0.5 - 1.0) + 0.8
}

pub fn gaussian_kernel(k: usize, sigma: f64) -> Vec<f32> {
    let r = (k / 2) as isize;
    let mut w: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w.into_iter().map(|v| v as f32).collect()
}

/// Separable correlation over an `f32` plane with reflected borders.
pub fn separable_f32(
    src: &[f32],
    width: usize,
    height: usize,
    kx: &[f32],
    ky: &[f32],
) -> Vec<f32> {
    let rx = kx.len() / 2;
    let ry = (ky.len() / 2) as isize;
    let mut tmp = vec![0f32; width * height];
    let mut padded = vec![0f32; width + 2 * rx];
    for y in 0..height {
        let row = &src[y * width..(y + 1) * width];
        padded[rx..rx + width].copy_from_slice(row);
        for p in (0..rx).chain(rx + width..width + 2 * rx) {
            padded[p] = row[reflect101(p as isize - rx as isize, width)];
        }
        let trow = &mut tmp[y * width..(y + 1) * width];
        for (j, &w) in kx.iter().enumerate() {
            for (t, a) in trow.iter_mut().zip(&padded[j..j + width]) {
                *t += w * a;
            }
        }
    }
    let mut out = vec![0f32; width * height];
    for y in 0..height {
        for (j, &w) in ky.iter().enumerate() {
            let sy = reflect101(y as isize + j as isize - ry, height);
            let srow = &tmp[sy * width..(sy + 1) * width];
            let orow = &mut out[y * width..(y + 1) * width];
            for (o, s) in orow.iter_mut().zip(srow) {
                *o += w * s;
            }
        }
    }
    out
}

pub fn to_f32(img: &Image2D) -> Vec<f32> {
    img.as_slice().iter().map(|&v| v as f32).collect()
}

pub fn from_f32_saturating(width: usize, height: usize, v: &[f32]) -> Image2D {
    // half up; the clamp keeps the cast in range
    let data = v.iter().map(|&x| (x.clamp(0.0, 255.0) + 0.5) as u8).collect();
    Image2D::from_vec(width, height, data).expect("length preserved")
}

pub fn gaussian_blur_u8(img: &Image2D, k: usize) -> Image2D {
    if k <= 1 {
        return img.clone();
    }
    let kern = gaussian_kernel(k, sigma_for_kernel(k));
    let out = separable_f32(&to_f32(img), img.width(), img.height(), &kern, &kern);
    from_f32_saturating(img.width(), img.height(), &out)
}

/// Gaussian smoothing of a real-valued plane; kernel truncated at 4 sigma.
pub fn gaussian_smooth_f32(src: &[f32], width: usize, height: usize, sigma: f64) -> Vec<f32> {
    if sigma <= 0.0 {
        return src.to_vec();
    }
    let r = (4.0 * sigma).ceil() as usize;
    let kern = gaussian_kernel(2 * r + 1, sigma);
    separable_f32(src, width, height, &kern, &kern)
}

pub fn box_blur_u8(img: &Image2D, k: usize) -> Image2D {
    if k <= 1 {
        return img.clone();
    }
    let w = 1.0 / k as f32;
    let kern = vec![w; k];
    let out = separable_f32(&to_f32(img), img.width(), img.height(), &kern, &kern);
    from_f32_saturating(img.width(), img.height(), &out)
}

/// 3x3 correlation with reflected borders, integer output.
pub fn correlate3(img: &Image2D, kernel: &[[i32; 3]; 3]) -> Vec<i32> {
    let (w, h) = img.dims();
    let src = img.as_slice();
    let mut out = vec![0i32; w * h];
    for y in 0..h {
        let rows = [
            reflect101(y as isize - 1, h),
            y,
            reflect101(y as isize + 1, h),
        ];
        for x in 0..w {
            let cols = [
                reflect101(x as isize - 1, w),
                x,
                reflect101(x as isize + 1, w),
            ];
            let mut acc = 0i32;
            for (ky, &ry) in rows.iter().enumerate() {
                for (kx, &cx) in cols.iter().enumerate() {
                    acc += kernel[ky][kx] * src[ry * w + cx] as i32;
                }
            }
            out[y * w + x] = acc;
        }
    }
    out
}

pub const SOBEL_X: [[i32; 3]; 3] = [[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]];
pub const SOBEL_Y: [[i32; 3]; 3] = [[-1, -2, -1], [0, 0, 0], [1, 2, 1]];

#[derive(Clone, Copy)]
enum Extremum {
    Min,
    Max,
}

/// Square `k`x`k` min or max filter. Only in-image pixels participate, so
/// erosion and dilation stay adjoint at the borders.
fn rank_filter(img: &Image2D, k: usize, which: Extremum) -> Image2D {
    if k <= 1 {
        return img.clone();
    }
    let (w, h) = img.dims();
    let r = k / 2;
    let pick = |a: u8, b: u8| match which {
        Extremum::Min => a.min(b),
        Extremum::Max => a.max(b),
    };
    let init = match which {
        Extremum::Min => u8::MAX,
        Extremum::Max => u8::MIN,
    };
    let src = img.as_slice();
    let mut tmp = vec![0u8; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let lo = x.saturating_sub(r);
            let hi = (x + r).min(w - 1);
            tmp[y * w + x] = row[lo..=hi].iter().fold(init, |a, &b| pick(a, b));
        }
    }
    let mut out = vec![init; w * h];
    for y in 0..h {
        let lo = y.saturating_sub(r);
        let hi = (y + r).min(h - 1);
        for sy in lo..=hi {
            for x in 0..w {
                out[y * w + x] = pick(out[y * w + x], tmp[sy * w + x]);
            }
        }
    }
    Image2D::from_vec(w, h, out).expect("length preserved")
}

pub fn erode(img: &Image2D, k: usize) -> Image2D {
    rank_filter(img, k, Extremum::Min)
}

pub fn dilate(img: &Image2D, k: usize) -> Image2D {
    rank_filter(img, k, Extremum::Max)
}

/// Median over a `k`x`k` window with reflected borders, using a sliding
/// histogram along each row.
pub fn median_blur(img: &Image2D, k: usize) -> Image2D {
    if k <= 1 {
        return img.clone();
    }
    let (w, h) = img.dims();
    let r = (k / 2) as isize;
    let src = img.as_slice();
    let half = (k * k) / 2;
    let mut out = vec![0u8; w * h];
    let col_index: Vec<usize> = (-r..w as isize + r).map(|x| reflect101(x, w)).collect();
    let row_index: Vec<usize> = (-r..h as isize + r).map(|y| reflect101(y, h)).collect();
    for y in 0..h {
        let rows = &row_index[y..y + k];
        let mut hist = [0u32; 256];
        for &cx in &col_index[0..k] {
            for &ry in rows {
                hist[src[ry * w + cx] as usize] += 1;
            }
        }
        for x in 0..w {
            if x > 0 {
                let out_c = col_index[x - 1];
                let in_c = col_index[x + k - 1];
                for &ry in rows {
                    hist[src[ry * w + out_c] as usize] -= 1;
                    hist[src[ry * w + in_c] as usize] += 1;
                }
            }
            let mut acc = 0usize;
            let mut m = 0u8;
            for (v, &c) in hist.iter().enumerate() {
                acc += c as usize;
                if acc > half {
                    m = v as u8;
                    break;
                }
            }
            out[y * w + x] = m;
        }
    }
    Image2D::from_vec(w, h, out).expect("length preserved")
}

const DT_INF: f64 = 1e20;

fn edt_1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let intersect = |q: usize, p: usize| {
        ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64))
    };
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let mut s = intersect(q, v[k]);
        while s <= z[k] {
            k -= 1;
            s = intersect(q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, dq_out) in d.iter_mut().enumerate().take(n) {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let dq = q as f64 - p as f64;
        *dq_out = dq * dq + f[p];
    }
}

/// Exact Euclidean distance from every foreground pixel to the nearest
/// background pixel (background pixels get 0). Pixels outside the image do
/// not count as background; a mask without any background yields a very
/// large finite distance everywhere.
pub fn distance_transform(fg: &[bool], width: usize, height: usize) -> Vec<f32> {
    // vertical pass: squared distance to the nearest background pixel in the
    // same column, by a forward and a backward scan
    let mut grid = vec![DT_INF; width * height];
    let mut last = vec![usize::MAX; width];
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            if !fg[i] {
                last[x] = y;
                grid[i] = 0.0;
            } else if last[x] != usize::MAX {
                let d = (y - last[x]) as f64;
                grid[i] = d * d;
            }
        }
    }
    last.fill(usize::MAX);
    for y in (0..height).rev() {
        for x in 0..width {
            let i = y * width + x;
            if !fg[i] {
                last[x] = y;
            } else if last[x] != usize::MAX {
                let d = (last[x] - y) as f64;
                grid[i] = grid[i].min(d * d);
            }
        }
    }
    let mut f = vec![0f64; width];
    let mut d = vec![0f64; width];
    let mut v = vec![0usize; width];
    let mut z = vec![0f64; width + 1];
    // horizontal pass per foreground run: anything beyond the background
    // pixel bounding a run is farther than that pixel itself
    for row in grid.chunks_exact_mut(width) {
        let mut x = 0;
        while x < width {
            if row[x] == 0.0 {
                x += 1;
                continue;
            }
            let start = x;
            while x < width && row[x] != 0.0 {
                x += 1;
            }
            let (lo, hi) = (start.saturating_sub(1), (x + 1).min(width));
            let n = hi - lo;
            f[..n].copy_from_slice(&row[lo..hi]);
            edt_1d(&f[..n], &mut d[..n], &mut v, &mut z);
            row[lo..hi].copy_from_slice(&d[..n]);
        }
    }
    grid.into_iter()
        .map(|sq| sq.min(DT_INF).sqrt() as f32)
        .collect()
}

pub struct UnionFind {
    parent: Vec<u32>,
    rank: Vec<u8>,
}

impl UnionFind {
    pub fn new() -> Self {
        Self {
            parent: Vec::new(),
            rank: Vec::new(),
        }
    }

    pub fn make_set(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        self.rank.push(0);
        id
    }

    pub fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = p;
        }
        x
    }

    pub fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra as usize].cmp(&self.rank[rb as usize]) {
            std::cmp::Ordering::Less => self.parent[ra as usize] = rb,
            std::cmp::Ordering::Greater => self.parent[rb as usize] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb as usize] = ra;
                self.rank[ra as usize] += 1;
            }
        }
    }
}

impl Default for UnionFind {
    fn default() -> Self {
        Self::new()
    }
}

/// Two-pass 8-connected labeling. Returns per-pixel labels (0 = background)
/// numbered by raster order of each component's first pixel, plus the
/// component count.
pub fn label_components(fg: &[bool], width: usize, height: usize) -> (Vec<u32>, u32) {
    let mut provisional = vec![u32::MAX; width * height];
    let mut uf = UnionFind::new();
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            if !fg[i] {
                continue;
            }
            let mut current = u32::MAX;
            let mut neighbours = [u32::MAX; 4];
            if x > 0 {
                neighbours[0] = provisional[i - 1];
            }
            if y > 0 {
                let up = i - width;
                neighbours[1] = provisional[up];
                if x > 0 {
                    neighbours[2] = provisional[up - 1];
                }
                if x + 1 < width {
                    neighbours[3] = provisional[up + 1];
                }
            }
            for &n in &neighbours {
                if n == u32::MAX {
                    continue;
                }
                if current == u32::MAX {
                    current = n;
                } else if n != current {
                    uf.union(current, n);
                }
            }
            if current == u32::MAX {
                current = uf.make_set();
            }
            provisional[i] = current;
        }
    }
    let mut final_id = vec![0u32; uf.parent.len()];
    let mut next = 0u32;
    let mut out = vec![0u32; width * height];
    for i in 0..width * height {
        let p = provisional[i];
        if p == u32::MAX {
            continue;
        }
        let root = uf.find(p) as usize;
        if final_id[root] == 0 {
            next += 1;
            final_id[root] = next;
        }
        out[i] = final_id[root];
    }
    (out, next)
}

/// Offsets of the 8-neighbourhood.
pub const NEIGHBOURS8: [(isize, isize); 8] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (-1, 0),
    (1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_edt(fg: &[bool], w: usize, h: usize) -> Vec<f32> {
        let bg: Vec<(usize, usize)> = (0..w * h)
            .filter(|&i| !fg[i])
            .map(|i| (i % w, i / w))
            .collect();
        (0..w * h)
            .map(|i| {
                if !fg[i] {
                    return 0.0;
                }
                let (x, y) = (i % w, i / w);
                bg.iter()
                    .map(|&(bx, by)| {
                        let dx = bx as f64 - x as f64;
                        let dy = by as f64 - y as f64;
                        (dx * dx + dy * dy).sqrt()
                    })
                    .fold(f64::INFINITY, f64::min) as f32
            })
            .collect()
    }

    #[test]
    fn reflect_indices() {
        assert_eq!(reflect101(-1, 5), 1);
        assert_eq!(reflect101(-2, 5), 2);
        assert_eq!(reflect101(5, 5), 3);
        assert_eq!(reflect101(6, 5), 2);
        assert_eq!(reflect101(-7, 1), 0);
        assert_eq!(reflect101(9, 2), 1);
    }

    #[test]
    fn edt_matches_brute_force() {
        let (w, h) = (13, 9);
        let mut state = 12345u64;
        let fg: Vec<bool> = (0..w * h)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (state >> 33) % 5 != 0
            })
            .collect();
        let fast = distance_transform(&fg, w, h);
        let slow = brute_edt(&fg, w, h);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-4, "{a} vs {b}");
        }
    }

    #[test]
    fn diagonal_pixels_share_a_component() {
        let fg = vec![true, false, false, true];
        let (labels, n) = label_components(&fg, 2, 2);
        assert_eq!(n, 1);
        assert_eq!(labels, vec![1, 0, 0, 1]);
    }

    #[test]
    fn u_shape_merges_in_second_pass() {
        #[rustfmt::skip]
        let fg = [
            1, 0, 1,
            1, 0, 1,
            1, 1, 1,
        ].map(|v| v == 1);
        let (labels, n) = label_components(&fg, 3, 3);
        assert_eq!(n, 1);
        assert!(labels.iter().zip(&fg).all(|(&l, &f)| (l == 1) == f));
    }

    #[test]
    fn median_of_constant_is_constant() {
        let img = Image2D::filled(7, 5, 42);
        assert_eq!(median_blur(&img, 5), img);
        let one = Image2D::filled(1, 1, 9);
        assert_eq!(median_blur(&one, 15), one);
    }
}
