//! The function library: deterministic 8-bit image primitives addressed by
//! 1-based id, their parameter-to-argument mapping, and the non-evolvable
//! preprocessing transforms that produce a model's input channels.

mod ops;
pub mod preprocess;

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::image::{ensure_same_dims, Image2D};

pub use ops::otsu_level;
pub use preprocess::{preprocess, PreprocessingSpec, RawInput};

/// How a raw parameter gene in `[0, 255]` becomes a concrete argument.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    /// Odd square kernel side: `2 * (raw / 32) + 1`, i.e. 1..=15.
    Kernel,
    /// Passed through unchanged.
    Threshold,
    /// Bit shift amount `1 + raw / 64`, i.e. 1..=4.
    Shift,
}

impl ParamKind {
    pub fn map(self, raw: u8) -> u32 {
        match self {
            ParamKind::Kernel => 2 * (raw as u32 / 32) + 1,
            ParamKind::Threshold => raw as u32,
            ParamKind::Shift => 1 + raw as u32 / 64,
        }
    }
}

pub type Transform = fn(&[&Image2D], &[u32]) -> Image2D;

#[derive(Clone)]
pub struct FunctionSpec {
    pub id: u32,
    pub name: &'static str,
    pub arity: usize,
    pub params: &'static [ParamKind],
    pub transform: Transform,
}

impl fmt::Debug for FunctionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FunctionSpec")
            .field("id", &self.id)
            .field("name", &self.name)
            .field("arity", &self.arity)
            .field("params", &self.params)
            .finish()
    }
}

impl FunctionSpec {
    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Concrete argument for parameter `slot` given its raw gene.
    pub fn map_param(&self, slot: usize, raw: u8) -> u32 {
        self.params[slot].map(raw)
    }

    pub fn map_params(&self, raw: &[u8]) -> Vec<u32> {
        self.params
            .iter()
            .zip(raw)
            .map(|(kind, &r)| kind.map(r))
            .collect()
    }

    /// Applies the primitive. Extra inputs or parameters beyond the
    /// function's arity and parameter count are ignored.
    pub fn apply(&self, inputs: &[&Image2D], raw_params: &[u8]) -> Result<Image2D> {
        if inputs.len() < self.arity {
            return Err(Error::Input(format!(
                "{} needs {} inputs, got {}",
                self.name,
                self.arity,
                inputs.len()
            )));
        }
        if raw_params.len() < self.param_count() {
            return Err(Error::Input(format!(
                "{} needs {} parameters, got {}",
                self.name,
                self.param_count(),
                raw_params.len()
            )));
        }
        let used = &inputs[..self.arity];
        for w in used.windows(2) {
            ensure_same_dims(w[0].dims(), w[1].dims())?;
        }
        let args = self.map_params(&raw_params[..self.param_count()]);
        Ok((self.transform)(used, &args))
    }
}

/// Serializable description of one library entry.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionManifest {
    pub id: u32,
    pub name: String,
    pub arity: usize,
    pub params: Vec<ParamKind>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LibraryManifest {
    pub library_id: String,
    pub mapping_version: u32,
    pub alpha: usize,
    pub rho: usize,
    pub functions: Vec<FunctionManifest>,
    pub hash: String,
}

/// Version of the raw-gene-to-argument mapping; part of the library hash.
pub const PARAM_MAPPING_VERSION: u32 = 1;

#[derive(Clone, Debug)]
pub struct FunctionLibrary {
    id: String,
    functions: Vec<FunctionSpec>,
    alpha: usize,
    rho: usize,
    hash: String,
}

impl FunctionLibrary {
    /// Builds a library; ids are reassigned to `1..=len` in list order.
    /// `alpha` and `rho` are the maxima over the entries (at least 1 and 0).
    pub fn new(id: impl Into<String>, mut functions: Vec<FunctionSpec>) -> Result<Self> {
        if functions.is_empty() {
            return Err(Error::Config("function library is empty".into()));
        }
        for (i, f) in functions.iter_mut().enumerate() {
            f.id = i as u32 + 1;
        }
        let alpha = functions.iter().map(|f| f.arity).max().unwrap_or(1).max(1);
        let rho = functions.iter().map(|f| f.param_count()).max().unwrap_or(0);
        let mut lib = Self {
            id: id.into(),
            functions,
            alpha,
            rho,
            hash: String::new(),
        };
        lib.hash = lib.compute_hash();
        Ok(lib)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    /// Library size, φ.
    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn alpha(&self) -> usize {
        self.alpha
    }

    pub fn rho(&self) -> usize {
        self.rho
    }

    /// Function by 1-based id.
    pub fn get(&self, id: u32) -> Option<&FunctionSpec> {
        if id == 0 {
            return None;
        }
        self.functions.get(id as usize - 1)
    }

    pub fn by_name(&self, name: &str) -> Option<&FunctionSpec> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn functions(&self) -> &[FunctionSpec] {
        &self.functions
    }

    fn entries(&self) -> Vec<FunctionManifest> {
        self.functions
            .iter()
            .map(|f| FunctionManifest {
                id: f.id,
                name: f.name.to_string(),
                arity: f.arity,
                params: f.params.to_vec(),
            })
            .collect()
    }

    fn compute_hash(&self) -> String {
        let body = serde_json::json!({
            "library_id": self.id,
            "mapping_version": PARAM_MAPPING_VERSION,
            "alpha": self.alpha,
            "rho": self.rho,
            "functions": self.entries(),
        });
        let digest = Sha256::digest(body.to_string().as_bytes());
        hex::encode(digest)
    }

    pub fn manifest(&self) -> LibraryManifest {
        LibraryManifest {
            library_id: self.id.clone(),
            mapping_version: PARAM_MAPPING_VERSION,
            alpha: self.alpha,
            rho: self.rho,
            functions: self.entries(),
            hash: self.hash.clone(),
        }
    }

    /// Fails unless `hash` names this exact roster and mapping.
    pub fn verify_hash(&self, hash: &str) -> Result<()> {
        if hash != self.hash {
            return Err(Error::LibraryMismatch {
                expected: hash.to_string(),
                actual: self.hash.clone(),
            });
        }
        Ok(())
    }

    /// The standard 42-function roster.
    pub fn default_library() -> Self {
        Self::new(DEFAULT_LIBRARY_ID, default_roster()).expect("non-empty roster")
    }

    /// Resolves a library by id. Only the default roster ships built in.
    pub fn by_id(id: &str) -> Result<Self> {
        match id {
            DEFAULT_LIBRARY_ID => Ok(Self::default_library()),
            other => Err(Error::Config(format!("unknown function library '{other}'"))),
        }
    }
}

pub const DEFAULT_LIBRARY_ID: &str = "default-42";

use ParamKind::{Kernel as K, Shift as S, Threshold as T};

macro_rules! f {
    ($name:literal, $arity:literal, $params:expr, $func:path) => {
        FunctionSpec {
            id: 0,
            name: $name,
            arity: $arity,
            params: $params,
            transform: $func,
        }
    };
}

fn default_roster() -> Vec<FunctionSpec> {
    vec![
        f!("max", 2, &[], ops::max),
        f!("min", 2, &[], ops::min),
        f!("mean", 2, &[], ops::mean),
        f!("add", 2, &[], ops::add),
        f!("sub", 2, &[], ops::sub),
        f!("abs_diff", 2, &[], ops::abs_diff),
        f!("multiply", 2, &[], ops::multiply),
        f!("not", 1, &[], ops::not),
        f!("and", 2, &[], ops::and),
        f!("or", 2, &[], ops::or),
        f!("xor", 2, &[], ops::xor),
        f!("shift_left", 1, &[S], ops::shift_left),
        f!("shift_right", 1, &[S], ops::shift_right),
        f!("square", 1, &[], ops::square),
        f!("pow2_scaled", 1, &[], ops::pow2_scaled),
        f!("sqrt", 1, &[], ops::sqrt),
        f!("gaussian_blur", 1, &[K], ops::gaussian_blur),
        f!("median_blur", 1, &[K], ops::median_blur),
        f!("box_blur", 1, &[K], ops::box_blur),
        f!("laplacian", 1, &[], ops::laplacian),
        f!("sobel", 1, &[], ops::sobel),
        f!("sobel_x", 1, &[], ops::sobel_x),
        f!("sobel_y", 1, &[], ops::sobel_y),
        f!("scharr", 1, &[], ops::scharr),
        f!("kirsch", 1, &[], ops::kirsch),
        f!("canny", 1, &[T, T], ops::canny),
        f!("erode", 1, &[K], ops::erode),
        f!("dilate", 1, &[K], ops::dilate),
        f!("open", 1, &[K], ops::open),
        f!("close", 1, &[K], ops::close),
        f!("morph_gradient", 1, &[K], ops::morph_gradient),
        f!("top_hat", 1, &[K], ops::top_hat),
        f!("black_hat", 1, &[K], ops::black_hat),
        f!("fill_holes", 1, &[], ops::fill_holes),
        f!("remove_small_objects", 1, &[T], ops::remove_small_objects),
        f!("threshold", 1, &[T], ops::threshold),
        f!("threshold_to_zero", 1, &[T], ops::threshold_to_zero),
        f!("otsu_threshold", 1, &[], ops::otsu_threshold),
        f!("adaptive_threshold", 1, &[K, T], ops::adaptive_threshold),
        f!("min_max_normalize", 1, &[], ops::min_max_normalize),
        f!("distance_transform", 1, &[], ops::distance_transform),
        f!("local_binary_pattern", 1, &[], ops::local_binary_pattern),
    ]
}
