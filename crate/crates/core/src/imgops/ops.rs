//! Primitive implementations. Every function takes its inputs and mapped
//! arguments and returns a new image of the same size. Arithmetic
//! saturates; nothing wraps.

use crate::image::Image2D;
use crate::raster::{self, correlate3, SOBEL_X, SOBEL_Y};

pub(crate) type Args<'a> = &'a [u32];

fn a0<'a>(inputs: &[&'a Image2D]) -> &'a Image2D {
    inputs[0]
}

fn zip(inputs: &[&Image2D], f: impl Fn(u8, u8) -> u8) -> Image2D {
    inputs[0]
        .zip_map(inputs[1], f)
        .expect("executor checks dimensions")
}

pub fn max(i: &[&Image2D], _: Args) -> Image2D {
    zip(i, |a, b| a.max(b))
}

pub fn min(i: &[&Image2D], _: Args) -> Image2D {
    zip(i, |a, b| a.min(b))
}

pub fn mean(i: &[&Image2D], _: Args) -> Image2D {
    zip(i, |a, b| ((a as u16 + b as u16) / 2) as u8)
}

pub fn add(i: &[&Image2D], _: Args) -> Image2D {
    zip(i, u8::saturating_add)
}

pub fn sub(i: &[&Image2D], _: Args) -> Image2D {
    zip(i, u8::saturating_sub)
}

pub fn abs_diff(i: &[&Image2D], _: Args) -> Image2D {
    zip(i, |a, b| a.abs_diff(b))
}

/// `a * b / 255`, rounded.
pub fn multiply(i: &[&Image2D], _: Args) -> Image2D {
    zip(i, |a, b| ((a as u32 * b as u32 + 127) / 255) as u8)
}

pub fn not(i: &[&Image2D], _: Args) -> Image2D {
    a0(i).map(|v| !v)
}

pub fn and(i: &[&Image2D], _: Args) -> Image2D {
    zip(i, |a, b| a & b)
}

pub fn or(i: &[&Image2D], _: Args) -> Image2D {
    zip(i, |a, b| a | b)
}

pub fn xor(i: &[&Image2D], _: Args) -> Image2D {
    zip(i, |a, b| a ^ b)
}

pub fn shift_left(i: &[&Image2D], args: Args) -> Image2D {
    let s = args[0];
    a0(i).map(|v| ((v as u32) << s).min(255) as u8)
}

pub fn shift_right(i: &[&Image2D], args: Args) -> Image2D {
    let s = args[0];
    a0(i).map(|v| v >> s)
}

pub fn square(i: &[&Image2D], _: Args) -> Image2D {
    a0(i).map(|v| (v as u32 * v as u32).min(255) as u8)
}

/// `v^2 / 255`, rounded; keeps the full range.
pub fn pow2_scaled(i: &[&Image2D], _: Args) -> Image2D {
    a0(i).map(|v| ((v as u32 * v as u32 + 127) / 255) as u8)
}

/// `sqrt(v / 255) * 255`, rounded.
pub fn sqrt(i: &[&Image2D], _: Args) -> Image2D {
    a0(i).map(|v| ((v as f64 * 255.0).sqrt().round()) as u8)
}

pub fn gaussian_blur(i: &[&Image2D], args: Args) -> Image2D {
    raster::gaussian_blur_u8(a0(i), args[0] as usize)
}

pub fn median_blur(i: &[&Image2D], args: Args) -> Image2D {
    raster::median_blur(a0(i), args[0] as usize)
}

pub fn box_blur(i: &[&Image2D], args: Args) -> Image2D {
    raster::box_blur_u8(a0(i), args[0] as usize)
}

fn abs_saturate(w: usize, h: usize, v: impl Iterator<Item = i32>) -> Image2D {
    let data = v.map(|x| x.unsigned_abs().min(255) as u8).collect();
    Image2D::from_vec(w, h, data).expect("length preserved")
}

fn magnitude(w: usize, h: usize, gx: &[i32], gy: &[i32], scale: f64) -> Image2D {
    let data = gx
        .iter()
        .zip(gy)
        .map(|(&x, &y)| {
            let m = ((x as f64).powi(2) + (y as f64).powi(2)).sqrt() * scale;
            m.round().min(255.0) as u8
        })
        .collect();
    Image2D::from_vec(w, h, data).expect("length preserved")
}

pub fn laplacian(i: &[&Image2D], _: Args) -> Image2D {
    let img = a0(i);
    let k = [[0, 1, 0], [1, -4, 1], [0, 1, 0]];
    let (w, h) = img.dims();
    abs_saturate(w, h, correlate3(img, &k).into_iter())
}

pub fn sobel(i: &[&Image2D], _: Args) -> Image2D {
    let img = a0(i);
    let (w, h) = img.dims();
    magnitude(w, h, &correlate3(img, &SOBEL_X), &correlate3(img, &SOBEL_Y), 1.0)
}

pub fn sobel_x(i: &[&Image2D], _: Args) -> Image2D {
    let img = a0(i);
    let (w, h) = img.dims();
    abs_saturate(w, h, correlate3(img, &SOBEL_X).into_iter())
}

pub fn sobel_y(i: &[&Image2D], _: Args) -> Image2D {
    let img = a0(i);
    let (w, h) = img.dims();
    abs_saturate(w, h, correlate3(img, &SOBEL_Y).into_iter())
}

pub fn scharr(i: &[&Image2D], _: Args) -> Image2D {
    let img = a0(i);
    let (w, h) = img.dims();
    let kx = [[-3, 0, 3], [-10, 0, 10], [-3, 0, 3]];
    let ky = [[-3, -10, -3], [0, 0, 0], [3, 10, 3]];
    // scaled so a full 0..255 step saturates like sobel does
    magnitude(w, h, &correlate3(img, &kx), &correlate3(img, &ky), 0.25)
}

pub fn kirsch(i: &[&Image2D], _: Args) -> Image2D {
    let img = a0(i);
    let (w, h) = img.dims();
    // ring positions clockwise from top-left
    const RING: [(usize, usize); 8] = [
        (0, 0),
        (0, 1),
        (0, 2),
        (1, 2),
        (2, 2),
        (2, 1),
        (2, 0),
        (1, 0),
    ];
    let mut best = vec![i32::MIN; w * h];
    for rot in 0..8 {
        let mut k = [[-3i32; 3]; 3];
        k[1][1] = 0;
        for j in 0..3 {
            let (r, c) = RING[(rot + j) % 8];
            k[r][c] = 5;
        }
        let resp = correlate3(img, &k);
        for (b, r) in best.iter_mut().zip(resp) {
            *b = (*b).max(r);
        }
    }
    let data = best
        .into_iter()
        .map(|v| (v.max(0) / 15).min(255) as u8)
        .collect();
    Image2D::from_vec(w, h, data).expect("length preserved")
}

/// Canny edges: sobel gradients, non-maximum suppression along the
/// quantized gradient direction, hysteresis between the two thresholds.
pub fn canny(i: &[&Image2D], args: Args) -> Image2D {
    let img = a0(i);
    let (w, h) = img.dims();
    let lo = args[0].min(args[1]) as f32;
    let hi = args[0].max(args[1]) as f32;
    let gx = correlate3(img, &SOBEL_X);
    let gy = correlate3(img, &SOBEL_Y);
    let mag: Vec<f32> = gx
        .iter()
        .zip(&gy)
        .map(|(&x, &y)| ((x * x + y * y) as f32).sqrt())
        .collect();
    let at = |x: isize, y: isize| -> f32 {
        if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
            0.0
        } else {
            mag[y as usize * w + x as usize]
        }
    };
    let mut strength = vec![0u8; w * h]; // 0 none, 1 weak, 2 strong
    for y in 0..h {
        for x in 0..w {
            let idx = y * w + x;
            let m = mag[idx];
            if m < lo || m == 0.0 {
                continue;
            }
            let angle = (gy[idx] as f32).atan2(gx[idx] as f32).to_degrees();
            let a = if angle < 0.0 { angle + 180.0 } else { angle };
            let (dx, dy) = if !(22.5..157.5).contains(&a) {
                (1, 0)
            } else if a < 67.5 {
                (1, 1)
            } else if a < 112.5 {
                (0, 1)
            } else {
                (-1, 1)
            };
            let (xi, yi) = (x as isize, y as isize);
            if m >= at(xi + dx, yi + dy) && m > at(xi - dx, yi - dy) {
                strength[idx] = if m >= hi { 2 } else { 1 };
            }
        }
    }
    let mut out = vec![0u8; w * h];
    let mut stack: Vec<usize> = (0..w * h).filter(|&p| strength[p] == 2).collect();
    for &p in &stack {
        out[p] = 255;
    }
    while let Some(p) = stack.pop() {
        let (x, y) = ((p % w) as isize, (p / w) as isize);
        for (dx, dy) in raster::NEIGHBOURS8 {
            let (nx, ny) = (x + dx, y + dy);
            if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                continue;
            }
            let q = ny as usize * w + nx as usize;
            if strength[q] == 1 && out[q] == 0 {
                out[q] = 255;
                stack.push(q);
            }
        }
    }
    Image2D::from_vec(w, h, out).expect("length preserved")
}

pub fn erode(i: &[&Image2D], args: Args) -> Image2D {
    raster::erode(a0(i), args[0] as usize)
}

pub fn dilate(i: &[&Image2D], args: Args) -> Image2D {
    raster::dilate(a0(i), args[0] as usize)
}

pub fn open(i: &[&Image2D], args: Args) -> Image2D {
    let k = args[0] as usize;
    raster::dilate(&raster::erode(a0(i), k), k)
}

pub fn close(i: &[&Image2D], args: Args) -> Image2D {
    let k = args[0] as usize;
    raster::erode(&raster::dilate(a0(i), k), k)
}

pub fn morph_gradient(i: &[&Image2D], args: Args) -> Image2D {
    let k = args[0] as usize;
    let img = a0(i);
    raster::dilate(img, k)
        .zip_map(&raster::erode(img, k), u8::saturating_sub)
        .expect("same dims")
}

pub fn top_hat(i: &[&Image2D], args: Args) -> Image2D {
    let img = a0(i);
    img.zip_map(&open(i, args), u8::saturating_sub)
        .expect("same dims")
}

pub fn black_hat(i: &[&Image2D], args: Args) -> Image2D {
    let img = a0(i);
    close(i, args)
        .zip_map(img, u8::saturating_sub)
        .expect("same dims")
}

/// Binary fill: foreground plus every background region not 4-connected to
/// the image border becomes 255.
pub fn fill_holes(i: &[&Image2D], _: Args) -> Image2D {
    let img = a0(i);
    let (w, h) = img.dims();
    let fg = img.foreground();
    let mut outside = vec![false; w * h];
    let mut stack = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if (x == 0 || y == 0 || x + 1 == w || y + 1 == h) && !fg[y * w + x] {
                outside[y * w + x] = true;
                stack.push((x, y));
            }
        }
    }
    while let Some((x, y)) = stack.pop() {
        let mut visit = |nx: usize, ny: usize| {
            let q = ny * w + nx;
            if !fg[q] && !outside[q] {
                outside[q] = true;
                stack.push((nx, ny));
            }
        };
        if x > 0 {
            visit(x - 1, y);
        }
        if x + 1 < w {
            visit(x + 1, y);
        }
        if y > 0 {
            visit(x, y - 1);
        }
        if y + 1 < h {
            visit(x, y + 1);
        }
    }
    let data = outside.iter().map(|&o| if o { 0 } else { 255 }).collect();
    Image2D::from_vec(w, h, data).expect("length preserved")
}

/// Zeroes 8-connected foreground components with fewer pixels than the
/// argument; surviving pixels keep their values.
pub fn remove_small_objects(i: &[&Image2D], args: Args) -> Image2D {
    let img = a0(i);
    let (w, h) = img.dims();
    let (labels, n) = raster::label_components(&img.foreground(), w, h);
    let mut area = vec![0u32; n as usize + 1];
    for &l in &labels {
        area[l as usize] += 1;
    }
    let min_area = args[0];
    let data = img
        .as_slice()
        .iter()
        .zip(&labels)
        .map(|(&v, &l)| if l > 0 && area[l as usize] < min_area { 0 } else { v })
        .collect();
    Image2D::from_vec(w, h, data).expect("length preserved")
}

pub fn threshold(i: &[&Image2D], args: Args) -> Image2D {
    let t = args[0] as u8;
    a0(i).map(|v| if v > t { 255 } else { 0 })
}

pub fn threshold_to_zero(i: &[&Image2D], args: Args) -> Image2D {
    let t = args[0] as u8;
    a0(i).map(|v| if v > t { v } else { 0 })
}

/// Threshold maximizing between-class variance of the histogram.
pub fn otsu_level(img: &Image2D) -> u8 {
    let mut hist = [0u64; 256];
    for &v in img.as_slice() {
        hist[v as usize] += 1;
    }
    let total = img.len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(v, &c)| v as f64 * c as f64).sum();
    let (mut w0, mut sum0) = (0f64, 0f64);
    let (mut best, mut best_var) = (0u8, -1f64);
    for t in 0..256 {
        w0 += hist[t] as f64;
        sum0 += t as f64 * hist[t] as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (sum_all - sum0) / w1;
        let var = w0 * w1 * (m0 - m1) * (m0 - m1);
        if var > best_var {
            best_var = var;
            best = t as u8;
        }
    }
    best
}

pub fn otsu_threshold(i: &[&Image2D], _: Args) -> Image2D {
    let t = otsu_level(a0(i));
    a0(i).map(|v| if v > t { 255 } else { 0 })
}

/// Local-mean threshold: 255 where the pixel exceeds the `k`x`k` box mean
/// minus an offset of `(c - 128) / 8` grey levels.
pub fn adaptive_threshold(i: &[&Image2D], args: Args) -> Image2D {
    let img = a0(i);
    let k = (args[0] as usize).max(3);
    let offset = (args[1] as f32 - 128.0) / 8.0;
    let kern = vec![1.0 / k as f32; k];
    let local = raster::separable_f32(&raster::to_f32(img), img.width(), img.height(), &kern, &kern);
    let data = img
        .as_slice()
        .iter()
        .zip(&local)
        .map(|(&v, &m)| if v as f32 > m - offset { 255 } else { 0 })
        .collect();
    Image2D::from_vec(img.width(), img.height(), data).expect("length preserved")
}

pub fn min_max_normalize(i: &[&Image2D], _: Args) -> Image2D {
    let img = a0(i);
    let lo = img.as_slice().iter().copied().min().unwrap_or(0);
    let hi = img.as_slice().iter().copied().max().unwrap_or(0);
    if lo == hi {
        return Image2D::new(img.width(), img.height());
    }
    let span = (hi - lo) as u32;
    img.map(|v| (((v - lo) as u32 * 255 + span / 2) / span) as u8)
}

/// Distance of each foreground pixel to the background, rescaled so the
/// largest distance maps to 255.
pub fn distance_transform(i: &[&Image2D], _: Args) -> Image2D {
    let img = a0(i);
    let (w, h) = img.dims();
    let dt = raster::distance_transform(&img.foreground(), w, h);
    let peak = dt.iter().copied().fold(0f32, f32::max);
    if peak <= 0.0 {
        return Image2D::new(w, h);
    }
    let data = dt
        .iter()
        .map(|&d| ((d / peak) * 255.0 + 0.5).clamp(0.0, 255.0) as u8)
        .collect();
    Image2D::from_vec(w, h, data).expect("length preserved")
}

/// 8-neighbour local binary pattern; bit set where the neighbour is at
/// least the centre.
pub fn local_binary_pattern(i: &[&Image2D], _: Args) -> Image2D {
    let img = a0(i);
    let (w, h) = img.dims();
    const ORDER: [(isize, isize); 8] = [
        (-1, -1),
        (0, -1),
        (1, -1),
        (1, 0),
        (1, 1),
        (0, 1),
        (-1, 1),
        (-1, 0),
    ];
    Image2D::from_fn(w, h, |x, y| {
        let c = img.get(x, y);
        let mut code = 0u8;
        for (bit, (dx, dy)) in ORDER.iter().enumerate() {
            let nx = raster::reflect101(x as isize + dx, w);
            let ny = raster::reflect101(y as isize + dy, h);
            if img.get(nx, ny) >= c {
                code |= 1 << bit;
            }
        }
        code
    })
}
