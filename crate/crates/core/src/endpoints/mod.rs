//! Non-evolvable terminal transforms turning the graph's heuristics into a
//! mask or an instance label map.

pub mod hough;
pub mod watershed;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image2D, LabelMap};
use crate::raster;

pub use hough::Circle;
pub use watershed::{local_max_watershed, marker_controlled_watershed};

fn default_threshold_sigma() -> u8 {
    1
}

fn default_smoothing() -> f64 {
    2.0
}

fn default_peak_distance() -> usize {
    5
}

fn default_radius_min() -> usize {
    5
}

fn default_radius_max() -> usize {
    30
}

fn default_accumulator() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EndpointSpec {
    /// 255 where the heuristic exceeds `sigma`, else 0.
    ThresholdBinary {
        #[serde(default = "default_threshold_sigma")]
        sigma: u8,
    },
    /// The heuristic where it exceeds `sigma`, else 0.
    ThresholdToZero {
        #[serde(default = "default_threshold_sigma")]
        sigma: u8,
    },
    /// 8-connected components of the non-zero pixels.
    ConnectedComponents,
    /// Two heuristics: mask then markers. `sigma` is the Gaussian scale
    /// applied to the mask's distance transform; the mask is `> threshold`.
    MarkerControlledWatershed {
        #[serde(default = "default_smoothing")]
        sigma: f64,
        #[serde(default)]
        threshold: u8,
    },
    /// Peaks of the mask's distance transform flood its smoothed gradient.
    LocalMaxWatershed {
        #[serde(default = "default_smoothing")]
        sigma: f64,
        #[serde(default = "default_peak_distance")]
        min_peak_distance: usize,
        #[serde(default)]
        threshold: u8,
    },
    /// Circles detected on the edges of `heuristic > threshold`, rasterized
    /// as filled discs. `accumulator_threshold` is the minimum fraction of
    /// the perimeter that must be supported by edges.
    HoughCircle {
        #[serde(default = "default_radius_min")]
        radius_min: usize,
        #[serde(default = "default_radius_max")]
        radius_max: usize,
        #[serde(default = "default_accumulator")]
        accumulator_threshold: f64,
        #[serde(default)]
        threshold: u8,
        /// Defaults to `radius_min` when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        min_center_distance: Option<f64>,
    },
}

impl Default for EndpointSpec {
    fn default() -> Self {
        EndpointSpec::ThresholdBinary { sigma: 1 }
    }
}

/// Result of running an endpoint.
#[derive(Clone, Debug, PartialEq)]
pub enum FinalOutput {
    Mask(Image2D),
    Labels(LabelMap),
}

impl FinalOutput {
    pub fn dims(&self) -> (usize, usize) {
        match self {
            FinalOutput::Mask(m) => m.dims(),
            FinalOutput::Labels(l) => l.dims(),
        }
    }

    /// Instance view; masks are split into connected components.
    pub fn to_labels(&self) -> LabelMap {
        match self {
            FinalOutput::Mask(m) => connected_components(m),
            FinalOutput::Labels(l) => l.clone(),
        }
    }

    /// Foreground indicator.
    pub fn foreground(&self) -> Vec<bool> {
        match self {
            FinalOutput::Mask(m) => m.foreground(),
            FinalOutput::Labels(l) => l.as_slice().iter().map(|&v| v > 0).collect(),
        }
    }

    /// Real-valued view used for ensembling: mask intensities, or 0/1 for
    /// label maps.
    pub fn values(&self) -> Vec<f32> {
        match self {
            FinalOutput::Mask(m) => m.as_slice().iter().map(|&v| v as f32).collect(),
            FinalOutput::Labels(l) => l
                .as_slice()
                .iter()
                .map(|&v| if v > 0 { 1.0 } else { 0.0 })
                .collect(),
        }
    }
}

impl EndpointSpec {
    /// Number of heuristics the endpoint consumes.
    pub fn required_outputs(&self) -> usize {
        match self {
            EndpointSpec::MarkerControlledWatershed { .. } => 2,
            _ => 1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EndpointSpec::ThresholdBinary { .. } => "threshold_binary",
            EndpointSpec::ThresholdToZero { .. } => "threshold_to_zero",
            EndpointSpec::ConnectedComponents => "connected_components",
            EndpointSpec::MarkerControlledWatershed { .. } => "marker_controlled_watershed",
            EndpointSpec::LocalMaxWatershed { .. } => "local_max_watershed",
            EndpointSpec::HoughCircle { .. } => "hough_circle",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            EndpointSpec::HoughCircle {
                radius_min,
                radius_max,
                ..
            } if radius_min > radius_max || *radius_max == 0 => Err(Error::Config(format!(
                "hough radius range [{radius_min}, {radius_max}] is empty"
            ))),
            EndpointSpec::MarkerControlledWatershed { sigma, .. }
            | EndpointSpec::LocalMaxWatershed { sigma, .. }
                if !sigma.is_finite() || *sigma < 0.0 =>
            {
                Err(Error::Config(format!("invalid smoothing sigma {sigma}")))
            }
            _ => Ok(()),
        }
    }

    pub fn apply(&self, heuristics: &[Image2D]) -> Result<FinalOutput> {
        if heuristics.len() < self.required_outputs() {
            return Err(Error::Input(format!(
                "{} needs {} heuristics, got {}",
                self.name(),
                self.required_outputs(),
                heuristics.len()
            )));
        }
        let z = &heuristics[0];
        Ok(match *self {
            EndpointSpec::ThresholdBinary { sigma } => {
                FinalOutput::Mask(threshold_endpoint(z, ThresholdMode::Binary, sigma))
            }
            EndpointSpec::ThresholdToZero { sigma } => {
                FinalOutput::Mask(threshold_endpoint(z, ThresholdMode::ToZero, sigma))
            }
            EndpointSpec::ConnectedComponents => FinalOutput::Labels(connected_components(z)),
            EndpointSpec::MarkerControlledWatershed { sigma, threshold } => FinalOutput::Labels(
                marker_controlled_watershed(z, &heuristics[1], sigma, threshold)?,
            ),
            EndpointSpec::LocalMaxWatershed {
                sigma,
                min_peak_distance,
                threshold,
            } => FinalOutput::Labels(local_max_watershed(z, sigma, min_peak_distance, threshold)),
            EndpointSpec::HoughCircle {
                radius_min,
                radius_max,
                accumulator_threshold,
                threshold,
                min_center_distance,
            } => FinalOutput::Labels(hough_circle_endpoint(
                z,
                radius_min,
                radius_max,
                accumulator_threshold,
                threshold,
                min_center_distance.unwrap_or(radius_min as f64),
            )),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ThresholdMode {
    Binary,
    ToZero,
}

pub fn threshold_endpoint(z: &Image2D, mode: ThresholdMode, sigma: u8) -> Image2D {
    match mode {
        ThresholdMode::Binary => z.map(|v| if v > sigma { 255 } else { 0 }),
        ThresholdMode::ToZero => z.map(|v| if v > sigma { v } else { 0 }),
    }
}

/// 8-connected components of the non-zero pixels, labeled in raster order.
pub fn connected_components(mask: &Image2D) -> LabelMap {
    let (w, h) = mask.dims();
    let (labels, _) = raster::label_components(&mask.foreground(), w, h);
    LabelMap::from_raw(w, h, labels).expect("length preserved")
}

pub fn hough_circle_endpoint(
    z: &Image2D,
    radius_min: usize,
    radius_max: usize,
    accumulator_threshold: f64,
    edge_threshold: u8,
    min_center_distance: f64,
) -> LabelMap {
    let circles = hough::detect_circles(
        z,
        radius_min,
        radius_max,
        accumulator_threshold,
        edge_threshold,
        min_center_distance,
    );
    hough::rasterize(&circles, z.width(), z.height())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disc(img: &mut Image2D, cx: f64, cy: f64, r: f64, v: u8) {
        let (w, h) = img.dims();
        for y in 0..h {
            for x in 0..w {
                let dx = x as f64 - cx;
                let dy = y as f64 - cy;
                if dx * dx + dy * dy <= r * r {
                    img.set(x, y, v);
                }
            }
        }
    }

    fn support_within_mask(labels: &LabelMap, mask: &Image2D) -> bool {
        labels
            .as_slice()
            .iter()
            .zip(mask.as_slice())
            .all(|(&l, &m)| l == 0 || m > 0)
    }

    #[test]
    fn threshold_modes() {
        let z = Image2D::from_vec(3, 1, vec![200, 1, 0]).unwrap();
        assert_eq!(
            threshold_endpoint(&z, ThresholdMode::ToZero, 1).as_slice(),
            &[200, 0, 0]
        );
        assert_eq!(
            threshold_endpoint(&z, ThresholdMode::Binary, 1).as_slice(),
            &[255, 0, 0]
        );
        let zero = Image2D::new(4, 4);
        for m in [ThresholdMode::Binary, ThresholdMode::ToZero] {
            assert_eq!(threshold_endpoint(&zero, m, 1), zero);
        }
    }

    #[test]
    fn components_examples() {
        let mut m = Image2D::new(10, 10);
        m.set(1, 1, 255);
        m.set(8, 8, 255);
        assert_eq!(connected_components(&m).count(), 2);
        assert_eq!(connected_components(&Image2D::new(5, 5)).count(), 0);
        let diag = Image2D::from_vec(2, 2, vec![9, 0, 0, 9]).unwrap();
        assert_eq!(connected_components(&diag).count(), 1);
    }

    #[test]
    fn mcw_empty_markers() {
        let mut mask = Image2D::new(20, 20);
        disc(&mut mask, 10.0, 10.0, 6.0, 255);
        let lm = marker_controlled_watershed(&mask, &Image2D::new(20, 20), 2.0, 0).unwrap();
        assert_eq!(lm.count(), 0);
    }

    #[test]
    fn mcw_single_marker_fills_blob() {
        let mut mask = Image2D::new(30, 30);
        disc(&mut mask, 15.0, 15.0, 8.0, 255);
        let mut markers = Image2D::new(30, 30);
        markers.set(15, 15, 255);
        let lm = marker_controlled_watershed(&mask, &markers, 2.0, 0).unwrap();
        assert_eq!(lm.count(), 1);
        assert_eq!(lm.to_mask(), mask);
    }

    /// Two 9x9 squares joined by a 1-pixel-high corridor of length 5.
    fn dumbbell() -> Image2D {
        Image2D::from_fn(25, 11, |x, y| {
            let left = (1..=9).contains(&x) && (1..=9).contains(&y);
            let right = (15..=23).contains(&x) && (1..=9).contains(&y);
            let neck = (10..=14).contains(&x) && y == 5;
            if left || right || neck {
                255
            } else {
                0
            }
        })
    }

    #[test]
    fn mcw_dumbbell_splits_at_neck() {
        let mask = dumbbell();
        let mut markers = Image2D::new(25, 11);
        markers.set(5, 5, 255);
        markers.set(19, 5, 255);
        let lm = marker_controlled_watershed(&mask, &markers, 2.0, 0).unwrap();
        assert_eq!(lm.count(), 2);
        assert_eq!(lm.to_mask(), mask);
        // lobes belong wholly to their own seed
        for y in 1..=9 {
            for x in 1..=9 {
                assert_eq!(lm.get(x, y), lm.get(5, 5));
            }
            for x in 15..=23 {
                assert_eq!(lm.get(x, y), lm.get(19, 5));
            }
        }
        assert_ne!(lm.get(5, 5), lm.get(19, 5));
        // the boundary falls inside the corridor
        let switches = (10..=14)
            .filter(|&x| lm.get(x, 5) != lm.get(x - 1, 5))
            .count();
        assert_eq!(switches, 1);
    }

    #[test]
    fn mcw_label_count_equals_seed_components() {
        let mut mask = Image2D::new(40, 20);
        disc(&mut mask, 10.0, 10.0, 8.0, 255);
        disc(&mut mask, 30.0, 10.0, 8.0, 255);
        let mut markers = Image2D::new(40, 20);
        for (x, y) in [(8, 10), (9, 10), (12, 12), (30, 10)] {
            markers.set(x, y, 1);
        }
        let lm = marker_controlled_watershed(&mask, &markers, 2.0, 0).unwrap();
        assert_eq!(lm.count(), 3);
        assert!(support_within_mask(&lm, &mask));
    }

    #[test]
    fn local_max_examples() {
        assert_eq!(local_max_watershed(&Image2D::new(16, 16), 2.0, 5, 0).count(), 0);

        let mut one = Image2D::new(40, 40);
        disc(&mut one, 20.0, 20.0, 12.0, 255);
        let lm = local_max_watershed(&one, 2.0, 5, 0);
        assert_eq!(lm.count(), 1);
        assert_eq!(lm.to_mask(), one);

        let mut two = Image2D::new(70, 40);
        disc(&mut two, 22.0, 20.0, 14.0, 255);
        disc(&mut two, 46.0, 20.0, 14.0, 255);
        let lm = local_max_watershed(&two, 2.0, 5, 0);
        assert_eq!(lm.count(), 2);
        assert!(support_within_mask(&lm, &two));
        assert_eq!(lm.to_mask(), two);
        assert_ne!(lm.get(15, 20), lm.get(53, 20));
    }

    #[test]
    fn all_foreground_is_one_instance() {
        let full = Image2D::filled(12, 9, 255);
        assert_eq!(local_max_watershed(&full, 2.0, 5, 0).count(), 1);
    }

    /// Best (centre, radius) by brute force: for every candidate centre and
    /// radius, count how many perimeter offsets land on edge pixels.
    fn brute_force_best(z: &Image2D, rmin: usize, rmax: usize) -> (usize, usize, usize) {
        let (w, h) = z.dims();
        let edges: std::collections::HashSet<(usize, usize)> =
            hough::edge_pixels(z, 0).into_iter().collect();
        let mut best = (0.0, 0, 0, 0);
        for r in rmin..=rmax {
            let offs = hough::circle_offsets(r);
            for cy in 0..h {
                for cx in 0..w {
                    let hits = offs
                        .iter()
                        .filter(|&&(dx, dy)| {
                            let x = cx as isize + dx;
                            let y = cy as isize + dy;
                            x >= 0 && y >= 0 && edges.contains(&(x as usize, y as usize))
                        })
                        .count();
                    let s = hits as f64 / offs.len() as f64;
                    if s > best.0 {
                        best = (s, cx, cy, r);
                    }
                }
            }
        }
        (best.1, best.2, best.3)
    }

    #[test]
    fn hough_blank_and_single_circle() {
        assert_eq!(
            hough_circle_endpoint(&Image2D::new(32, 32), 4, 10, 0.5, 0, 4.0).count(),
            0
        );
        let mut img = Image2D::new(48, 48);
        disc(&mut img, 22.0, 25.0, 9.0, 255);
        let (bx, by, _) = brute_force_best(&img, 6, 12);
        assert!((bx as f64 - 22.0).abs() <= 1.0 && (by as f64 - 25.0).abs() <= 1.0);
        let circles = hough::detect_circles(&img, 6, 12, 0.5, 0, 6.0);
        assert_eq!(circles.len(), 1, "{circles:?}");
        let c = circles[0];
        assert!((c.x as f64 - 22.0).abs() <= 1.0, "{c:?}");
        assert!((c.y as f64 - 25.0).abs() <= 1.0, "{c:?}");
        assert_eq!((c.x, c.y), (bx, by));
        assert_eq!(hough_circle_endpoint(&img, 6, 12, 0.5, 0, 6.0).count(), 1);
    }

    #[test]
    fn hough_two_circles() {
        let mut img = Image2D::new(80, 40);
        disc(&mut img, 18.0, 20.0, 8.0, 255);
        disc(&mut img, 58.0, 19.0, 10.0, 255);
        let lm = hough_circle_endpoint(&img, 6, 12, 0.5, 0, 6.0);
        assert_eq!(lm.count(), 2);
        let mut cents = lm.centroids();
        cents.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert!((cents[0].0 - 18.0).abs() <= 1.0 && (cents[0].1 - 20.0).abs() <= 1.0);
        assert!((cents[1].0 - 58.0).abs() <= 1.0 && (cents[1].1 - 19.0).abs() <= 1.0);
    }

    #[test]
    fn endpoint_spec_json_defaults() {
        let spec: EndpointSpec = serde_json::from_str(r#"{"kind":"local_max_watershed"}"#).unwrap();
        assert_eq!(
            spec,
            EndpointSpec::LocalMaxWatershed {
                sigma: 2.0,
                min_peak_distance: 5,
                threshold: 0
            }
        );
        let mcw: EndpointSpec =
            serde_json::from_str(r#"{"kind":"marker_controlled_watershed"}"#).unwrap();
        assert_eq!(mcw.required_outputs(), 2);
        let bad = EndpointSpec::HoughCircle {
            radius_min: 9,
            radius_max: 3,
            accumulator_threshold: 0.5,
            threshold: 0,
            min_center_distance: None,
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn endpoint_requires_enough_heuristics() {
        let spec = EndpointSpec::MarkerControlledWatershed {
            sigma: 2.0,
            threshold: 0,
        };
        assert!(spec.apply(&[Image2D::new(2, 2)]).is_err());
    }
}
