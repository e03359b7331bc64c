//! Seeded synthetic datasets of bright discs on a noisy background.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cgp::InputVector;
use crate::dataset::{self, Annotation, Dataset, Entry, EntryInputs, Manifest, ManifestEntry, Role};
use crate::error::{Error, Result};
use crate::image::{Image2D, LabelMap};
use crate::imgops::PreprocessingSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiscConfig {
    pub width: usize,
    pub height: usize,
    pub min_discs: usize,
    pub max_discs: usize,
    pub radius_min: usize,
    pub radius_max: usize,
    pub noise_sigma: f64,
    pub background: u8,
    pub foreground: u8,
    /// Extra clearance between disc rims, so discs never touch.
    pub gap: usize,
}

impl Default for DiscConfig {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
            min_discs: 5,
            max_discs: 15,
            radius_min: 6,
            radius_max: 14,
            noise_sigma: 20.0,
            background: 0,
            foreground: 255,
            gap: 2,
        }
    }
}

impl DiscConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_discs > self.max_discs || self.radius_min > self.radius_max || self.radius_min == 0 {
            return Err(Error::Config("empty disc count or radius range".into()));
        }
        if 2 * self.radius_max + 1 > self.width.min(self.height) {
            return Err(Error::Config("largest disc does not fit the image".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config(format!("invalid noise sigma {}", self.noise_sigma)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Disc {
    pub x: usize,
    pub y: usize,
    pub radius: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscImage {
    pub image: Image2D,
    pub labels: LabelMap,
    pub discs: Vec<Disc>,
}

const PLACEMENT_ATTEMPTS: usize = 10_000;

/// Places discs by rejection sampling, then adds clipped Gaussian noise.
/// When the requested count cannot be placed the image keeps fewer discs.
pub fn disc_image(cfg: &DiscConfig, rng: &mut impl Rng) -> Result<DiscImage> {
    cfg.validate()?;
    let (w, h) = (cfg.width, cfg.height);
    let target = rng.random_range(cfg.min_discs..=cfg.max_discs);
    let mut discs: Vec<Disc> = Vec::with_capacity(target);
    for _ in 0..PLACEMENT_ATTEMPTS {
        if discs.len() == target {
            break;
        }
        let r = rng.random_range(cfg.radius_min..=cfg.radius_max);
        let x = rng.random_range(r..=w - 1 - r);
        let y = rng.random_range(r..=h - 1 - r);
        let clear = discs.iter().all(|d| {
            let dx = d.x as f64 - x as f64;
            let dy = d.y as f64 - y as f64;
            (dx * dx + dy * dy).sqrt() >= (d.radius + r + cfg.gap) as f64
        });
        if clear {
            discs.push(Disc { x, y, radius: r });
        }
    }
    let mut raw = vec![0u32; w * h];
    for (k, d) in discs.iter().enumerate() {
        let r = d.radius as isize;
        for dy in -r..=r {
            for dx in -r..=r {
                if dx * dx + dy * dy <= r * r {
                    let (px, py) = ((d.x as isize + dx) as usize, (d.y as isize + dy) as usize);
                    raw[py * w + px] = k as u32 + 1;
                }
            }
        }
    }
    let noise = Normal::new(0.0, cfg.noise_sigma).map_err(|e| Error::Config(e.to_string()))?;
    let data = raw
        .iter()
        .map(|&l| {
            let base = if l > 0 { cfg.foreground } else { cfg.background } as f64;
            (base + noise.sample(rng)).round().clamp(0.0, 255.0) as u8
        })
        .collect();
    Ok(DiscImage {
        image: Image2D::from_vec(w, h, data)?,
        labels: LabelMap::from_raw(w, h, raw)?,
        discs,
    })
}

/// `n` images from one seeded stream.
pub fn disc_images(cfg: &DiscConfig, n: usize, seed: u64) -> Result<Vec<DiscImage>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| disc_image(cfg, &mut rng)).collect()
}

/// In-memory single-channel dataset with instance annotations.
pub fn disc_dataset(cfg: &DiscConfig, n: usize, seed: u64, role: Role) -> Result<Dataset> {
    let entries = disc_images(cfg, n, seed)?
        .into_iter()
        .enumerate()
        .map(|(i, d)| {
            Entry::from_input(
                format!("disc_{i:03}"),
                InputVector::Planar(vec![d.image]),
                Annotation::Labels(d.labels),
            )
        })
        .collect::<Result<_>>()?;
    Ok(Dataset::new(entries, role))
}

/// Writes `n` images, 16-bit label PNGs and a manifest into `dir`; returns
/// the manifest path.
pub fn write_disc_dataset(dir: &Path, cfg: &DiscConfig, n: usize, seed: u64, role: Role) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(n);
    for (i, d) in disc_images(cfg, n, seed)?.into_iter().enumerate() {
        let img = PathBuf::from(format!("disc_{i:03}.png"));
        let gt = PathBuf::from(format!("disc_{i:03}_labels.png"));
        dataset::write_gray_png(&dir.join(&img), &d.image)?;
        dataset::write_labels_png(&dir.join(&gt), &d.labels)?;
        entries.push(ManifestEntry {
            inputs: EntryInputs::Channels { channels: vec![img] },
            annotation: gt,
        });
    }
    let manifest = Manifest {
        entries,
        preprocessing: PreprocessingSpec::Grayscale,
        role,
        annotation_kind: None,
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
