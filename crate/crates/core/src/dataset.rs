//! Datasets: manifest parsing, raster I/O and lazily preprocessed entries.

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use ::image::{DynamicImage, ImageBuffer, Luma};
use serde::{Deserialize, Serialize};

use crate::cgp::InputVector;
use crate::endpoints::connected_components;
use crate::error::{Error, Result};
use crate::image::{Image2D, LabelMap, RgbImage};
use crate::imgops::{preprocess, PreprocessingSpec, RawInput};

/// Ground truth for one entry.
#[derive(Clone, Debug, PartialEq)]
pub enum Annotation {
    /// Instance labels, 0 = background.
    Labels(LabelMap),
    /// Semantic mask, non-zero = foreground.
    Mask(Image2D),
}

impl Annotation {
    pub fn dims(&self) -> (usize, usize) {
        match self {
            Annotation::Labels(l) => l.dims(),
            Annotation::Mask(m) => m.dims(),
        }
    }

    pub fn to_labels(&self) -> LabelMap {
        match self {
            Annotation::Labels(l) => l.clone(),
            Annotation::Mask(m) => connected_components(m),
        }
    }

    pub fn foreground(&self) -> Vec<bool> {
        match self {
            Annotation::Labels(l) => l.as_slice().iter().map(|&v| v > 0).collect(),
            Annotation::Mask(m) => m.foreground(),
        }
    }
}

#[derive(Clone, Debug)]
enum RawSource {
    Single(RawInput),
    Stack(Vec<RawInput>),
}

/// One `(input, annotation)` pair. Preprocessing runs on first access to
/// [`Entry::input`] and is cached.
#[derive(Debug)]
pub struct Entry {
    pub name: String,
    raw: Option<RawSource>,
    preprocessing: PreprocessingSpec,
    prepared: OnceLock<InputVector>,
    pub annotation: Annotation,
}

impl Clone for Entry {
    fn clone(&self) -> Self {
        let prepared = OnceLock::new();
        if let Some(v) = self.prepared.get() {
            let _ = prepared.set(v.clone());
        }
        Self {
            name: self.name.clone(),
            raw: self.raw.clone(),
            preprocessing: self.preprocessing.clone(),
            prepared,
            annotation: self.annotation.clone(),
        }
    }
}

impl Entry {
    /// Entry from channels that are already in model-input form.
    pub fn from_input(name: impl Into<String>, input: InputVector, annotation: Annotation) -> Result<Self> {
        input.check()?;
        if input.dims() != annotation.dims() {
            return Err(Error::Input("input and annotation dimensions differ".into()));
        }
        let prepared = OnceLock::new();
        let _ = prepared.set(input);
        Ok(Self {
            name: name.into(),
            raw: None,
            preprocessing: PreprocessingSpec::Grayscale,
            prepared,
            annotation,
        })
    }

    /// Entry from a raw raster to be preprocessed with `spec` on demand.
    pub fn from_raw(
        name: impl Into<String>,
        raw: RawInput,
        spec: PreprocessingSpec,
        annotation: Annotation,
    ) -> Result<Self> {
        if raw.dims() != annotation.dims() {
            return Err(Error::Input("input and annotation dimensions differ".into()));
        }
        Ok(Self {
            name: name.into(),
            raw: Some(RawSource::Single(raw)),
            preprocessing: spec,
            prepared: OnceLock::new(),
            annotation,
        })
    }

    pub fn from_raw_stack(
        name: impl Into<String>,
        sections: Vec<RawInput>,
        spec: PreprocessingSpec,
        annotation: Annotation,
    ) -> Result<Self> {
        if sections.is_empty() {
            return Err(Error::Input("z-stack has no sections".into()));
        }
        if sections.iter().any(|s| s.dims() != annotation.dims()) {
            return Err(Error::Input("section and annotation dimensions differ".into()));
        }
        Ok(Self {
            name: name.into(),
            raw: Some(RawSource::Stack(sections)),
            preprocessing: spec,
            prepared: OnceLock::new(),
            annotation,
        })
    }

    pub fn input(&self) -> Result<&InputVector> {
        if let Some(v) = self.prepared.get() {
            return Ok(v);
        }
        let raw = self
            .raw
            .as_ref()
            .ok_or_else(|| Error::Input("entry has neither raw nor prepared input".into()))?;
        let v = match raw {
            RawSource::Single(r) => InputVector::Planar(preprocess(r, &self.preprocessing)?),
            RawSource::Stack(s) => InputVector::Stack(
                s.iter()
                    .map(|r| preprocess(r, &self.preprocessing))
                    .collect::<Result<_>>()?,
            ),
        };
        v.check()?;
        Ok(self.prepared.get_or_init(|| v))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    #[default]
    Train,
    Test,
}

#[derive(Clone, Debug, Default)]
pub struct Dataset {
    entries: Vec<Entry>,
    pub role: Role,
}

impl Dataset {
    pub fn new(entries: Vec<Entry>, role: Role) -> Self {
        Self { entries, role }
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Forces preprocessing of every entry, reporting the first failure.
    pub fn prepare(&self) -> Result<()> {
        for (i, e) in self.entries.iter().enumerate() {
            e.input().map_err(|err| Error::DatasetEntry {
                entry: i,
                reason: err.to_string(),
            })?;
        }
        Ok(())
    }

    /// Channel count shared by all entries.
    pub fn iota(&self) -> Result<usize> {
        self.prepare()?;
        let mut iota = None;
        for (i, e) in self.entries.iter().enumerate() {
            let c = e.input()?.channel_count();
            match iota {
                None => iota = Some(c),
                Some(prev) if prev != c => {
                    return Err(Error::DatasetEntry {
                        entry: i,
                        reason: format!("has {c} channels, earlier entries have {prev}"),
                    })
                }
                _ => {}
            }
        }
        iota.ok_or_else(|| Error::Input("dataset is empty".into()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationKind {
    Labels,
    Mask,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EntryInputs {
    Channels { channels: Vec<PathBuf> },
    Stack { stack: Vec<Vec<PathBuf>> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    #[serde(flatten)]
    pub inputs: EntryInputs,
    pub annotation: PathBuf,
}

/// Dataset manifest. Paths are relative to the manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    #[serde(default)]
    pub preprocessing: PreprocessingSpec,
    #[serde(default)]
    pub role: Role,
    /// Inferred from bit depth when absent: 16-bit PNGs are label maps,
    /// 8-bit images are masks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation_kind: Option<AnnotationKind>,
}

fn open_image(path: &Path) -> Result<DynamicImage> {
    ::image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads a raster as model input: 8-bit gray, or RGB (alpha dropped).
pub fn read_raw(path: &Path) -> Result<RawInput> {
    let img = open_image(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok(match img {
        DynamicImage::ImageLuma8(g) => RawInput::Gray(Image2D::from_vec(w, h, g.into_raw())?),
        DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA8(_) | DynamicImage::ImageLumaA16(_) => {
            RawInput::Gray(Image2D::from_vec(w, h, img.to_luma8().into_raw())?)
        }
        other => {
            let rgb = other.to_rgb8();
            let data = rgb.pixels().map(|p| p.0).collect();
            RawInput::Rgb(RgbImage {
                width: w,
                height: h,
                data,
            })
        }
    })
}

pub fn read_gray(path: &Path) -> Result<Image2D> {
    let img = open_image(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    Image2D::from_vec(w, h, img.to_luma8().into_raw())
}

pub fn read_annotation(path: &Path, kind: Option<AnnotationKind>) -> Result<Annotation> {
    let img = open_image(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let sixteen = matches!(img, DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA16(_));
    let kind = kind.unwrap_or(if sixteen {
        AnnotationKind::Labels
    } else {
        AnnotationKind::Mask
    });
    Ok(match kind {
        AnnotationKind::Labels => {
            let raw: Vec<u32> = if sixteen {
                img.to_luma16().into_raw().into_iter().map(u32::from).collect()
            } else {
                img.to_luma8().into_raw().into_iter().map(u32::from).collect()
            };
            Annotation::Labels(LabelMap::from_raw(w, h, raw)?)
        }
        AnnotationKind::Mask => Annotation::Mask(Image2D::from_vec(w, h, img.to_luma8().into_raw())?),
    })
}

fn load_inputs(base: &Path, paths: &[PathBuf]) -> Result<RawInput> {
    match paths {
        [] => Err(Error::Input("entry lists no channel files".into())),
        [single] => read_raw(&base.join(single)),
        many => Ok(RawInput::Channels(
            many.iter()
                .map(|p| read_gray(&base.join(p)))
                .collect::<Result<_>>()?,
        )),
    }
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Loads every entry of a manifest, in manifest order.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let manifest = read_manifest(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    load_from_manifest(&manifest, base)
}

pub fn load_from_manifest(manifest: &Manifest, base: &Path) -> Result<Dataset> {
    let mut entries = Vec::with_capacity(manifest.entries.len());
    for (i, me) in manifest.entries.iter().enumerate() {
        let wrap = |e: Error| Error::DatasetEntry {
            entry: i,
            reason: e.to_string(),
        };
        let annotation = read_annotation(&base.join(&me.annotation), manifest.annotation_kind).map_err(wrap)?;
        let first = match &me.inputs {
            EntryInputs::Channels { channels } => channels.first(),
            EntryInputs::Stack { stack } => stack.first().and_then(|z| z.first()),
        };
        let name = first.unwrap_or(&me.annotation).display().to_string();
        let entry = match &me.inputs {
            EntryInputs::Channels { channels } => {
                let raw = load_inputs(base, channels).map_err(wrap)?;
                Entry::from_raw(name, raw, manifest.preprocessing.clone(), annotation)
            }
            EntryInputs::Stack { stack } => {
                let sections = stack
                    .iter()
                    .map(|z| load_inputs(base, z))
                    .collect::<Result<Vec<_>>>()
                    .map_err(wrap)?;
                Entry::from_raw_stack(name, sections, manifest.preprocessing.clone(), annotation)
            }
        }
        .map_err(wrap)?;
        entries.push(entry);
    }
    Ok(Dataset::new(entries, manifest.role))
}

pub fn write_gray_png(path: &Path, img: &Image2D) -> Result<()> {
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> =
        ImageBuffer::from_raw(img.width() as u32, img.height() as u32, img.as_slice().to_vec())
            .expect("buffer length matches");
    buf.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// 16-bit label PNG; fails if there are more than 65535 instances.
pub fn write_labels_png(path: &Path, labels: &LabelMap) -> Result<()> {
    if labels.count() > u16::MAX as usize {
        return Err(Error::Input(format!(
            "{} instances do not fit a 16-bit label image",
            labels.count()
        )));
    }
    let data: Vec<u16> = labels.as_slice().iter().map(|&v| v as u16).collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(labels.width() as u32, labels.height() as u32, data)
            .expect("buffer length matches");
    buf.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_u16_png(path: &Path, width: usize, height: usize, data: Vec<u16>) -> Result<()> {
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(width as u32, height as u32, data).expect("buffer length matches");
    buf.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_rgb_png(path: &Path, img: &RgbImage) -> Result<()> {
    let flat: Vec<u8> = img.data.iter().flatten().copied().collect();
    let buf: ImageBuffer<::image::Rgb<u8>, Vec<u8>> =
        ImageBuffer::from_raw(img.width as u32, img.height as u32, flat).expect("buffer length matches");
    buf.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lazy_preprocessing_runs_once() {
        let raw = RawInput::Rgb(RgbImage::from_fn(2, 2, |x, y| [x as u8, y as u8, 7]));
        let e = Entry::from_raw(
            "a",
            raw,
            PreprocessingSpec::RgbSplit,
            Annotation::Mask(Image2D::new(2, 2)),
        )
        .unwrap();
        let a = e.input().unwrap() as *const _;
        let b = e.input().unwrap() as *const _;
        assert_eq!(a, b);
        assert_eq!(e.input().unwrap().channel_count(), 3);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let raw = RawInput::Gray(Image2D::new(3, 2));
        assert!(Entry::from_raw(
            "a",
            raw,
            PreprocessingSpec::Grayscale,
            Annotation::Mask(Image2D::new(2, 2))
        )
        .is_err());
    }

    #[test]
    fn manifest_schema_accepts_both_entry_shapes() {
        let m: Manifest = serde_json::from_str(
            r#"{
                "entries": [
                    {"channels": ["a.png"], "annotation": "a_gt.png"},
                    {"stack": [["z0.png"], ["z1.png"]], "annotation": "b_gt.png"}
                ],
                "preprocessing": {"mode": "hsv"},
                "role": "test"
            }"#,
        )
        .unwrap();
        assert_eq!(m.entries.len(), 2);
        assert!(matches!(m.entries[1].inputs, EntryInputs::Stack { .. }));
        assert_eq!(m.preprocessing, PreprocessingSpec::Hsv);
        assert_eq!(m.role, Role::Test);
    }
}
