//! Deployable pipeline: genotype, library identity, preprocessing,
//! aggregation and endpoint, with versioned JSON persistence.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cgp::{aggregate, decode, execute, ActiveGraph, Genotype, GenotypeRecord, InputVector};
use crate::endpoints::{EndpointSpec, FinalOutput};
use crate::error::{Error, Result};
use crate::image::Image2D;
use crate::imgops::{preprocess, FunctionLibrary, PreprocessingSpec, RawInput};
use crate::metrics::FitnessSpec;

pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Mean,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub generations: usize,
    pub train_error: f64,
    /// Run configuration that produced the model, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

#[derive(Clone, Debug)]
pub struct PipelineModel {
    genotype: Genotype,
    library: Arc<FunctionLibrary>,
    graph: ActiveGraph,
    pub preprocessing: PreprocessingSpec,
    pub aggregation: Aggregation,
    pub endpoint: EndpointSpec,
    pub fitness: FitnessSpec,
    pub provenance: Provenance,
}

impl PartialEq for PipelineModel {
    fn eq(&self, other: &Self) -> bool {
        self.genotype == other.genotype
            && self.library.hash() == other.library.hash()
            && self.preprocessing == other.preprocessing
            && self.aggregation == other.aggregation
            && self.endpoint == other.endpoint
            && self.fitness == other.fitness
            && self.provenance == other.provenance
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ModelFile {
    schema_version: u32,
    genotype: GenotypeRecord,
    preprocessing: PreprocessingSpec,
    aggregation: Aggregation,
    endpoint: EndpointSpec,
    fitness: FitnessSpec,
    provenance: Provenance,
}

impl PipelineModel {
    pub fn new(
        genotype: Genotype,
        library: Arc<FunctionLibrary>,
        preprocessing: PreprocessingSpec,
        endpoint: EndpointSpec,
        fitness: FitnessSpec,
    ) -> Result<Self> {
        endpoint.validate()?;
        if genotype.outputs() < endpoint.required_outputs() {
            return Err(Error::Config(format!(
                "endpoint {} needs {} outputs, genotype has {}",
                endpoint.name(),
                endpoint.required_outputs(),
                genotype.outputs()
            )));
        }
        let graph = decode(&genotype, &library)?;
        Ok(Self {
            genotype,
            library,
            graph,
            preprocessing,
            aggregation: Aggregation::Mean,
            endpoint,
            fitness,
            provenance: Provenance::default(),
        })
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn genotype(&self) -> &Genotype {
        &self.genotype
    }

    pub fn library(&self) -> &Arc<FunctionLibrary> {
        &self.library
    }

    pub fn graph(&self) -> &ActiveGraph {
        &self.graph
    }

    pub fn iota(&self) -> usize {
        self.genotype.iota()
    }

    /// Intermediate outputs before the endpoint, after aggregation.
    pub fn heuristics(&self, input: &InputVector) -> Result<Vec<Image2D>> {
        input.check()?;
        if input.channel_count() != self.iota() {
            return Err(Error::Input(format!(
                "model expects {} channels, input has {}",
                self.iota(),
                input.channel_count()
            )));
        }
        let sections = input
            .sections()
            .iter()
            .map(|s| execute(&self.graph, s, &self.library))
            .collect::<Result<Vec<_>>>()?;
        match self.aggregation {
            Aggregation::Mean => aggregate(&sections),
        }
    }

    pub fn run(&self, input: &InputVector) -> Result<FinalOutput> {
        self.endpoint.apply(&self.heuristics(input)?)
    }

    pub fn run_raw(&self, raw: &RawInput) -> Result<FinalOutput> {
        self.run(&InputVector::Planar(preprocess(raw, &self.preprocessing)?))
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            schema_version: MODEL_SCHEMA_VERSION,
            genotype: self.genotype.to_record(&self.library),
            preprocessing: self.preprocessing.clone(),
            aggregation: self.aggregation,
            endpoint: self.endpoint.clone(),
            fitness: self.fitness,
            provenance: self.provenance.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    /// Parses a model, resolving its library by id.
    pub fn from_json(text: &str) -> Result<Self> {
        let file = parse_file(text)?;
        let library = Arc::new(FunctionLibrary::by_id(&file.genotype.library_id)?);
        Self::from_file(file, library)
    }

    /// Parses a model against an explicit library; the stored hash must match.
    pub fn from_json_with_library(text: &str, library: Arc<FunctionLibrary>) -> Result<Self> {
        Self::from_file(parse_file(text)?, library)
    }

    fn from_file(file: ModelFile, library: Arc<FunctionLibrary>) -> Result<Self> {
        let genotype = file.genotype.into_genotype(&library)?;
        let mut m = Self::new(genotype, library, file.preprocessing, file.endpoint, file.fitness)?;
        m.aggregation = file.aggregation;
        m.provenance = file.provenance;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

fn parse_file(text: &str) -> Result<ModelFile> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let found = value
        .get("schema_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::Config("model file has no schema_version".into()))?;
    if found != MODEL_SCHEMA_VERSION as u64 {
        return Err(Error::SchemaVersion {
            found: found as u32,
            expected: MODEL_SCHEMA_VERSION,
        });
    }
    Ok(serde_json::from_value(value)?)
}

/// Runs `model` on `input`.
pub fn run_model(model: &PipelineModel, input: &InputVector) -> Result<FinalOutput> {
    model.run(input)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_model() -> PipelineModel {
        let lib = Arc::new(FunctionLibrary::default_library());
        let mut g = Genotype::zeroed(1, 2, 1, 2, 2).unwrap();
        for r in 0..2 {
            g.set(r, 0, 1);
            g.set(r, 1, 1);
            g.set(r, 2, 1);
        }
        g.set_output_address(0, 1);
        PipelineModel::new(
            g,
            lib,
            PreprocessingSpec::Grayscale,
            EndpointSpec::ThresholdBinary { sigma: 1 },
            FitnessSpec::iou(),
        )
        .unwrap()
    }

    #[test]
    fn identity_on_zero_image_is_empty() {
        let m = identity_model();
        let out = m
            .run(&InputVector::Planar(vec![Image2D::new(4, 3)]))
            .unwrap();
        assert_eq!(out, FinalOutput::Mask(Image2D::new(4, 3)));
    }

    #[test]
    fn json_round_trip() {
        let m = identity_model();
        let back = PipelineModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn schema_version_gate() {
        let text = identity_model()
            .to_json()
            .unwrap()
            .replace("\"schema_version\": 1", "\"schema_version\": 9");
        assert!(matches!(
            PipelineModel::from_json(&text),
            Err(Error::SchemaVersion { found: 9, .. })
        ));
    }

    #[test]
    fn channel_count_checked() {
        let m = identity_model();
        let two = InputVector::Planar(vec![Image2D::new(2, 2), Image2D::new(2, 2)]);
        assert!(m.run(&two).is_err());
    }
}
