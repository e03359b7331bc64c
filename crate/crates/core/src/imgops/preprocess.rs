//! Non-evolvable preprocessing: turns a raw raster into the model's input
//! channels before any graph runs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image2D, RgbImage};

/// Raw raster as loaded from disk.
#[derive(Clone, Debug, PartialEq)]
pub enum RawInput {
    Gray(Image2D),
    Rgb(RgbImage),
    Channels(Vec<Image2D>),
}

impl RawInput {
    pub fn dims(&self) -> (usize, usize) {
        match self {
            RawInput::Gray(g) => g.dims(),
            RawInput::Rgb(c) => (c.width, c.height),
            RawInput::Channels(ch) => ch.first().map(|c| c.dims()).unwrap_or((0, 0)),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PreprocessingSpec {
    /// `[r, g, b]`.
    #[default]
    RgbSplit,
    /// `[h, s, v]`, each scaled to 0..=255.
    Hsv,
    /// Hematoxylin, eosin and DAB optical densities via color deconvolution.
    Hed,
    /// Single channel; RGB input is converted to luma.
    Grayscale,
    /// Picks channels by index from `[r, g, b]`, a gray image, or a channel set.
    ChannelSelect { channels: Vec<usize> },
}

impl PreprocessingSpec {
    /// Number of channels this mode produces.
    pub fn iota(&self) -> usize {
        match self {
            PreprocessingSpec::RgbSplit | PreprocessingSpec::Hsv | PreprocessingSpec::Hed => 3,
            PreprocessingSpec::Grayscale => 1,
            PreprocessingSpec::ChannelSelect { channels } => channels.len(),
        }
    }

    pub fn name(&self) -> String {
        match self {
            PreprocessingSpec::RgbSplit => "rgb_split".into(),
            PreprocessingSpec::Hsv => "hsv".into(),
            PreprocessingSpec::Hed => "hed".into(),
            PreprocessingSpec::Grayscale => "grayscale".into(),
            PreprocessingSpec::ChannelSelect { channels } => format!(
                "channel_select[{}]",
                channels
                    .iter()
                    .map(|c| c.to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            ),
        }
    }
}

fn require_rgb<'a>(raw: &'a RawInput, mode: &str) -> Result<&'a RgbImage> {
    match raw {
        RawInput::Rgb(c) => Ok(c),
        _ => Err(Error::Input(format!("{mode} preprocessing needs an RGB image"))),
    }
}

fn planes<const N: usize>(img: &RgbImage, f: impl Fn([u8; 3]) -> [u8; N]) -> Vec<Image2D> {
    let mut out: Vec<Vec<u8>> = (0..N).map(|_| Vec::with_capacity(img.data.len())).collect();
    for &px in &img.data {
        let v = f(px);
        for (plane, &c) in out.iter_mut().zip(&v) {
            plane.push(c);
        }
    }
    out.into_iter()
        .map(|d| Image2D::from_vec(img.width, img.height, d).expect("length preserved"))
        .collect()
}

pub fn rgb_to_hsv(px: [u8; 3]) -> [u8; 3] {
    let [r, g, b] = px.map(|c| c as f64);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let s = if max == 0.0 { 0.0 } else { 255.0 * delta / max };
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    [
        (h * 255.0 / 360.0).round().clamp(0.0, 255.0) as u8,
        s.round() as u8,
        max as u8,
    ]
}

/// Ruifrok-Johnston stain matrix (rows: hematoxylin, eosin, DAB in RGB
/// optical density).
pub const RGB_FROM_HED: [[f64; 3]; 3] = [[0.65, 0.70, 0.29], [0.07, 0.99, 0.11], [0.27, 0.57, 0.78]];

/// Inverse of [`RGB_FROM_HED`].
pub const HED_FROM_RGB: [[f64; 3]; 3] = [
    [1.8779827368521356, -1.0076786862855642, -0.5561158181996246],
    [-0.06590806222356334, 1.1347303724996625, -0.13552179862837116],
    [-0.6019073634392891, -0.4804141884970579, 1.5735880719641926],
];

const OD_FLOOR: f64 = 1e-6;

/// Stain densities for one pixel, clipped at zero.
pub fn rgb_to_hed_density(px: [u8; 3]) -> [f64; 3] {
    let log_adjust = OD_FLOOR.ln();
    let od = px.map(|c| (c as f64 / 255.0).max(OD_FLOOR).ln() / log_adjust);
    let mut out = [0f64; 3];
    for (j, o) in out.iter_mut().enumerate() {
        *o = (0..3).map(|i| od[i] * HED_FROM_RGB[i][j]).sum::<f64>().max(0.0);
    }
    out
}

/// Largest density each stain can reach over the unit optical-density cube.
fn hed_ceiling() -> [f64; 3] {
    let mut c = [0f64; 3];
    for (j, v) in c.iter_mut().enumerate() {
        *v = (0..3).map(|i| HED_FROM_RGB[i][j].max(0.0)).sum();
    }
    c
}

pub fn rgb_to_hed(px: [u8; 3]) -> [u8; 3] {
    let d = rgb_to_hed_density(px);
    let ceil = hed_ceiling();
    [0, 1, 2].map(|j| (255.0 * d[j].min(ceil[j]) / ceil[j]).round() as u8)
}

fn luma(px: [u8; 3]) -> u8 {
    let [r, g, b] = px.map(|c| c as f64);
    (0.299 * r + 0.587 * g + 0.114 * b).round().clamp(0.0, 255.0) as u8
}

/// Produces the model input channels for one raw raster.
pub fn preprocess(raw: &RawInput, spec: &PreprocessingSpec) -> Result<Vec<Image2D>> {
    match spec {
        PreprocessingSpec::RgbSplit => Ok(planes(require_rgb(raw, "rgb_split")?, |p| p)),
        PreprocessingSpec::Hsv => Ok(planes(require_rgb(raw, "hsv")?, rgb_to_hsv)),
        PreprocessingSpec::Hed => Ok(planes(require_rgb(raw, "hed")?, rgb_to_hed)),
        PreprocessingSpec::Grayscale => match raw {
            RawInput::Gray(g) => Ok(vec![g.clone()]),
            RawInput::Rgb(c) => Ok(planes(c, |p| [luma(p)])),
            RawInput::Channels(ch) if ch.len() == 1 => Ok(ch.clone()),
            RawInput::Channels(ch) => Err(Error::Input(format!(
                "grayscale preprocessing got {} channels",
                ch.len()
            ))),
        },
        PreprocessingSpec::ChannelSelect { channels } => {
            let available: Vec<Image2D> = match raw {
                RawInput::Gray(g) => vec![g.clone()],
                RawInput::Rgb(c) => planes(c, |p| p),
                RawInput::Channels(ch) => ch.clone(),
            };
            channels
                .iter()
                .map(|&c| {
                    available.get(c).cloned().ok_or_else(|| {
                        Error::Input(format!(
                            "channel {c} requested but input has {}",
                            available.len()
                        ))
                    })
                })
                .collect()
        }
    }
}
