//! Multi-run training: configuration, independent seeded runs and the
//! train/test error summary.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{load_from_manifest, read_manifest, Dataset};
use crate::endpoints::EndpointSpec;
use crate::error::{Error, Result};
use crate::evolution::{evolve, EvolutionConfig, EvolutionTrace, Problem};
use crate::imgops::{FunctionLibrary, PreprocessingSpec, DEFAULT_LIBRARY_ID};
use crate::metrics;
use crate::model::PipelineModel;

fn default_library() -> String {
    DEFAULT_LIBRARY_ID.to_string()
}

fn default_runs() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub evolution: EvolutionConfig,
    /// Overrides the training manifest's preprocessing when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preprocessing: Option<PreprocessingSpec>,
    #[serde(default)]
    pub endpoint: EndpointSpec,
    #[serde(default = "default_library")]
    pub library: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default = "default_runs")]
    pub runs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            evolution: EvolutionConfig::default(),
            preprocessing: None,
            endpoint: EndpointSpec::default(),
            library: default_library(),
            train: None,
            test: None,
            out: None,
            runs: 1,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.evolution.validate()?;
        self.endpoint.validate()?;
        FunctionLibrary::by_id(&self.library)?;
        if self.runs == 0 {
            return Err(Error::Config("runs must be >= 1".into()));
        }
        Ok(())
    }

    /// Seed of run `i`: base seed plus run index.
    pub fn run_seed(&self, i: usize) -> u64 {
        self.evolution.seed.wrapping_add(i as u64)
    }
}

/// Loads a manifest, applying a preprocessing override.
pub fn load_dataset_with(path: &Path, preprocessing: Option<&PreprocessingSpec>) -> Result<Dataset> {
    let mut manifest = read_manifest(path)?;
    if let Some(p) = preprocessing {
        manifest.preprocessing = p.clone();
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let ds = load_from_manifest(&manifest, base)?;
    ds.prepare()?;
    Ok(ds)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run: usize,
    pub seed: u64,
    pub generations: usize,
    pub active_nodes: usize,
    pub train_error: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_error: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
    /// Sample standard deviation; 0 for a single value.
    pub sd: f64,
}

impl Stats {
    pub fn of(v: &[f64]) -> Option<Self> {
        if v.is_empty() {
            return None;
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let sd = if v.len() > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Self {
            min: v.iter().copied().fold(f64::INFINITY, f64::min),
            mean,
            max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            sd,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub metric: String,
    pub runs: Vec<RunResult>,
    pub train: Stats,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<Stats>,
}

impl Summary {
    pub fn from_runs(metric: String, runs: Vec<RunResult>) -> Result<Self> {
        let train: Vec<f64> = runs.iter().map(|r| r.train_error).collect();
        let test: Vec<f64> = runs.iter().filter_map(|r| r.test_error).collect();
        Ok(Self {
            metric,
            train: Stats::of(&train).ok_or_else(|| Error::Input("no runs to summarize".into()))?,
            test: Stats::of(&test),
            runs,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("run,seed,generations,active_nodes,train_error,test_error\n");
        for r in &self.runs {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.run,
                r.seed,
                r.generations,
                r.active_nodes,
                r.train_error,
                r.test_error.map(|v| v.to_string()).unwrap_or_default()
            ));
        }
        s
    }
}

pub struct TrainedRun {
    pub model: PipelineModel,
    pub trace: EvolutionTrace,
    pub result: RunResult,
}

/// Runs `config.runs` independent evolutions on the current rayon pool.
pub fn train_runs(
    config: &RunConfig,
    train: &Dataset,
    test: Option<&Dataset>,
    preprocessing: PreprocessingSpec,
) -> Result<Vec<TrainedRun>> {
    config.validate()?;
    let library = Arc::new(FunctionLibrary::by_id(&config.library)?);
    let problem = Problem {
        dataset: train,
        library,
        preprocessing,
        endpoint: config.endpoint.clone(),
    };
    (0..config.runs)
        .into_par_iter()
        .map(|i| {
            let mut ec = config.evolution.clone();
            ec.seed = config.run_seed(i);
            let (mut model, trace) = evolve(&problem, &ec)?;
            let mut recorded = config.clone();
            recorded.evolution.seed = ec.seed;
            recorded.runs = 1;
            model.provenance.config = Some(serde_json::to_value(&recorded)?);
            let test_error = test
                .map(|t| metrics::fitness(&model, t, &ec.fitness))
                .transpose()?;
            let result = RunResult {
                run: i,
                seed: ec.seed,
                generations: model.provenance.generations,
                active_nodes: model.graph().active_count(),
                train_error: model.provenance.train_error,
                test_error,
            };
            Ok(TrainedRun {
                model,
                trace,
                result,
            })
        })
        .collect()
}

/// Writes `model_NNN.json` and `trace_NNN.csv` per run plus
/// `summary.json` and `summary.csv`.
pub fn write_runs(dir: &Path, runs: &[TrainedRun], summary: &Summary) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for r in runs {
        let i = r.result.run;
        r.model.save(&dir.join(format!("model_{i:03}.json")))?;
        let trace = dir.join(format!("trace_{i:03}.csv"));
        std::fs::write(&trace, r.trace.to_csv()).map_err(|e| Error::io(&trace, e))?;
    }
    let sj = dir.join("summary.json");
    std::fs::write(&sj, serde_json::to_string_pretty(summary)?).map_err(|e| Error::io(&sj, e))?;
    let sc = dir.join("summary.csv");
    std::fs::write(&sc, summary.to_csv()).map_err(|e| Error::io(&sc, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats() {
        let s = Stats::of(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((s.min, s.mean, s.max, s.sd), (1.0, 2.0, 3.0, 1.0));
        assert_eq!(Stats::of(&[0.5]).unwrap().sd, 0.0);
        assert!(Stats::of(&[]).is_none());
    }

    #[test]
    fn config_defaults_from_empty_json() {
        let c: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c.evolution.eta, 30);
        assert_eq!(c.evolution.lambda, 5);
        assert_eq!(c.evolution.iterations, 20_000);
        assert_eq!(c.evolution.mu, 0.15);
        assert_eq!(c.evolution.nu, 0.2);
        assert_eq!(c.runs, 1);
        assert_eq!(c.run_seed(3), 3);
        c.validate().unwrap();
    }
}
