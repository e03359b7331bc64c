//! The 1+λ evolution strategy with accumulate mutation and frugality
//! tie-breaking.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::index;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cgp::{decode, ActiveGraph, Genotype};
use crate::dataset::Dataset;
use crate::endpoints::EndpointSpec;
use crate::error::{Error, Result};
use crate::imgops::{FunctionLibrary, PreprocessingSpec};
use crate::metrics::{self, FitnessSpec};
use crate::model::{PipelineModel, Provenance};

/// Mutation rounds allowed before a child is declared stalled.
pub const MAX_MUTATION_ROUNDS: usize = 1000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrugalityMode {
    /// Active functional node count.
    #[default]
    NodeCount,
    /// Median wall time of the graph over the training entries. Not
    /// reproducible across machines or runs.
    MeasuredTime,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvolutionConfig {
    pub eta: usize,
    pub lambda: usize,
    pub mu: f64,
    pub nu: f64,
    #[serde(alias = "k")]
    pub iterations: usize,
    pub seed: u64,
    pub frugality: FrugalityMode,
    pub fitness: FitnessSpec,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            eta: 30,
            lambda: 5,
            mu: 0.15,
            nu: 0.2,
            iterations: 20_000,
            seed: 0,
            frugality: FrugalityMode::NodeCount,
            fitness: FitnessSpec::default(),
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.eta == 0 {
            return Err(Error::Config("eta must be >= 1".into()));
        }
        if self.lambda == 0 {
            return Err(Error::Config("lambda must be >= 1".into()));
        }
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be >= 1".into()));
        }
        for (name, v) in [("mu", self.mu), ("nu", self.nu)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name}={v} outside [0, 1]")));
            }
        }
        self.fitness.validate()
    }

    /// Functional cells resampled per mutation round: `round(mu * eta * n)`,
    /// half up.
    pub fn cells_per_round(&self, cols: usize) -> usize {
        (self.mu * (self.eta * cols) as f64 + 0.5).floor() as usize
    }
}

/// Uniform random genotype; every gene lies in its legal range.
pub fn random_genotype(
    iota: usize,
    outputs: usize,
    eta: usize,
    library: &FunctionLibrary,
    rng: &mut impl Rng,
) -> Result<Genotype> {
    let mut g = Genotype::zeroed(iota, eta, outputs, library.alpha(), library.rho())?;
    let phi = library.len();
    for row in 0..eta {
        for col in 0..g.cols() {
            let (lo, hi) = g.gene_range(row, col, phi);
            g.set(row, col, rng.random_range(lo..=hi));
        }
    }
    let (lo, hi) = g.output_range();
    for k in 0..outputs {
        g.set_output_address(k, rng.random_range(lo..=hi));
    }
    Ok(g)
}

/// Uniform draw from `[lo, hi]` excluding `current`, unless the range has a
/// single value.
fn redraw(lo: u32, hi: u32, current: u32, rng: &mut impl Rng) -> u32 {
    if lo == hi {
        return lo;
    }
    if !(lo..=hi).contains(&current) {
        return rng.random_range(lo..=hi);
    }
    let v = rng.random_range(lo..hi);
    if v >= current {
        v + 1
    } else {
        v
    }
}

/// Cells touched by one mutation round.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RoundReport {
    /// Distinct `(row, col)` functional cells that were resampled.
    pub cells: Vec<(usize, usize)>,
    /// Output rows whose address was resampled.
    pub outputs: Vec<usize>,
}

/// One mutation round in place: `count` distinct functional cells are
/// resampled to a new legal value, then each output address is resampled
/// with probability `nu`.
pub fn mutation_round(
    g: &mut Genotype,
    count: usize,
    nu: f64,
    phi: usize,
    rng: &mut impl Rng,
) -> RoundReport {
    let cols = g.cols();
    let total = g.eta() * cols;
    let mut report = RoundReport::default();
    for flat in index::sample(rng, total, count.min(total)).into_iter() {
        let (row, col) = (flat / cols, flat % cols);
        let (lo, hi) = g.gene_range(row, col, phi);
        let v = redraw(lo, hi, g.get(row, col), rng);
        g.set(row, col, v);
        report.cells.push((row, col));
    }
    let (lo, hi) = g.output_range();
    for k in 0..g.outputs() {
        if rng.random_bool(nu) {
            let v = redraw(lo, hi, g.output_address(k), rng);
            g.set_output_address(k, v);
            report.outputs.push(k);
        }
    }
    report
}

/// Accumulate mutation: rounds are applied until the child's active graph
/// differs from `parent_graph`.
pub fn mutate(
    parent: &Genotype,
    parent_graph: &ActiveGraph,
    config: &EvolutionConfig,
    library: &FunctionLibrary,
    rng: &mut impl Rng,
) -> Result<(Genotype, ActiveGraph)> {
    let count = config.cells_per_round(parent.cols());
    let mut child = parent.clone();
    for _ in 0..MAX_MUTATION_ROUNDS {
        mutation_round(&mut child, count, config.nu, library.len(), rng);
        let graph = decode(&child, library)?;
        if &graph != parent_graph {
            return Ok((child, graph));
        }
    }
    Err(Error::MutationStalled {
        rounds: MAX_MUTATION_ROUNDS,
    })
}

/// Fitness of one candidate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Score {
    pub error: f64,
    /// Active node count or median seconds, per [`FrugalityMode`].
    pub frugality: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Selection {
    Parent,
    Child(usize),
}

/// Lowest error wins, then lowest frugality; on a full tie a child beats
/// the parent and the lowest-index child wins among children.
pub fn select(parent: Score, children: &[Score]) -> Selection {
    let key = |s: &Score, rank: usize| (s.error, s.frugality, rank);
    let cmp = |a: &(f64, f64, usize), b: &(f64, f64, usize)| -> Ordering {
        a.0.total_cmp(&b.0)
            .then(a.1.total_cmp(&b.1))
            .then(a.2.cmp(&b.2))
    };
    // children rank 0..λ, parent ranks after all of them
    let mut best = (Selection::Parent, key(&parent, usize::MAX));
    for (i, c) in children.iter().enumerate() {
        let k = key(c, i);
        if cmp(&k, &best.1) == Ordering::Less {
            best = (Selection::Child(i), k);
        }
    }
    best.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub generation: usize,
    pub error: f64,
    pub active_nodes: usize,
    pub replaced: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvolutionTrace {
    pub records: Vec<TraceRecord>,
    pub best: Genotype,
}

impl EvolutionTrace {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("generation,error,active_nodes,replaced\n");
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                r.generation, r.error, r.active_nodes, r.replaced as u8
            );
        }
        s
    }

    pub fn final_error(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.error)
    }
}

/// Everything fixed for one evolutionary run.
pub struct Problem<'a> {
    pub dataset: &'a Dataset,
    pub library: Arc<FunctionLibrary>,
    pub preprocessing: PreprocessingSpec,
    pub endpoint: EndpointSpec,
}

struct Candidate {
    genotype: Genotype,
    graph: ActiveGraph,
    score: Score,
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

impl Problem<'_> {
    fn model(&self, genotype: Genotype, fitness: FitnessSpec) -> Result<PipelineModel> {
        PipelineModel::new(
            genotype,
            self.library.clone(),
            self.preprocessing.clone(),
            self.endpoint.clone(),
            fitness,
        )
    }

    fn score(&self, genotype: Genotype, graph: ActiveGraph, config: &EvolutionConfig) -> Result<Candidate> {
        let model = self.model(genotype, config.fitness)?;
        let (error, frugality) = match config.frugality {
            FrugalityMode::NodeCount => (
                metrics::fitness(&model, self.dataset, &config.fitness)?,
                graph.active_count() as f64,
            ),
            FrugalityMode::MeasuredTime => {
                let mut errs = Vec::with_capacity(self.dataset.len());
                let mut times = Vec::with_capacity(self.dataset.len());
                for e in self.dataset.entries() {
                    let input = e.input()?;
                    let t0 = Instant::now();
                    let z = model.heuristics(input)?;
                    times.push(t0.elapsed().as_secs_f64());
                    let out = model.endpoint.apply(&z)?;
                    errs.push(config.fitness.error(&out, &e.annotation)?);
                }
                if errs.is_empty() {
                    return Err(Error::Input("fitness over an empty dataset".into()));
                }
                (metrics::mean_in_order(&errs), median(times))
            }
        };
        Ok(Candidate {
            genotype: model.genotype().clone(),
            graph,
            score: Score { error, frugality },
        })
    }
}

/// Runs the 1+λ strategy on the current rayon pool. Child `i` of a
/// generation mutates with its own stream `i` of a generator seeded from
/// the run's master stream, so results do not depend on the pool size.
pub fn evolve(problem: &Problem<'_>, config: &EvolutionConfig) -> Result<(PipelineModel, EvolutionTrace)> {
    config.validate()?;
    problem.endpoint.validate()?;
    if problem.dataset.is_empty() {
        return Err(Error::Input("training dataset is empty".into()));
    }
    let iota = problem.dataset.iota()?;
    let outputs = problem.endpoint.required_outputs();
    let library = problem.library.as_ref();
    let mut master = ChaCha8Rng::seed_from_u64(config.seed);

    let initial: Vec<Genotype> = (0..=config.lambda)
        .map(|_| random_genotype(iota, outputs, config.eta, library, &mut master))
        .collect::<Result<_>>()?;
    let scored: Vec<Candidate> = initial
        .into_par_iter()
        .map(|g| {
            let graph = decode(&g, library)?;
            problem.score(g, graph, config)
        })
        .collect::<Result<_>>()?;
    let scores: Vec<Score> = scored.iter().map(|c| c.score).collect();
    let first = match select(scores[0], &scores[1..]) {
        Selection::Parent => 0,
        Selection::Child(i) => i + 1,
    };
    let mut parent = scored.into_iter().nth(first).expect("index in range");
    let mut records = vec![TraceRecord {
        generation: 0,
        error: parent.score.error,
        active_nodes: parent.graph.active_count(),
        replaced: false,
    }];

    let mut generations = 0;
    while generations < config.iterations && parent.score.error > 0.0 {
        generations += 1;
        let base = master.next_u64();
        let children: Vec<Candidate> = (0..config.lambda)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(base);
                rng.set_stream(i as u64);
                let (g, graph) = mutate(&parent.genotype, &parent.graph, config, library, &mut rng)?;
                problem.score(g, graph, config)
            })
            .collect::<Result<_>>()?;
        let scores: Vec<Score> = children.iter().map(|c| c.score).collect();
        let replaced = match select(parent.score, &scores) {
            Selection::Parent => false,
            Selection::Child(i) => {
                parent = children.into_iter().nth(i).expect("index in range");
                true
            }
        };
        records.push(TraceRecord {
            generation: generations,
            error: parent.score.error,
            active_nodes: parent.graph.active_count(),
            replaced,
        });
    }

    let model = problem
        .model(parent.genotype.clone(), config.fitness)?
        .with_provenance(Provenance {
            seed: config.seed,
            generations,
            train_error: parent.score.error,
            config: None,
        });
    Ok((
        model,
        EvolutionTrace {
            records,
            best: parent.genotype,
        },
    ))
}

/// [`evolve`] on a dedicated pool of `workers` threads.
pub fn evolve_with_workers(
    problem: &Problem<'_>,
    config: &EvolutionConfig,
    workers: usize,
) -> Result<(PipelineModel, EvolutionTrace)> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| evolve(problem, config))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lib() -> FunctionLibrary {
        FunctionLibrary::default_library()
    }

    #[test]
    fn defaults() {
        let c = EvolutionConfig::default();
        assert_eq!((c.eta, c.lambda, c.iterations), (30, 5, 20_000));
        assert_eq!((c.mu, c.nu), (0.15, 0.2));
        assert_eq!(c.frugality, FrugalityMode::NodeCount);
    }

    #[test]
    fn hundred_genes_ten_percent() {
        // eta=20 rows of 5 columns
        let c = EvolutionConfig {
            eta: 20,
            mu: 0.1,
            ..Default::default()
        };
        assert_eq!(c.cells_per_round(5), 10);
        let library = lib();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut g = random_genotype(3, 1, 20, &library, &mut rng).unwrap();
        for _ in 0..50 {
            let before = g.clone();
            let r = mutation_round(&mut g, 10, 0.0, library.len(), &mut rng);
            let changed = (0..20)
                .flat_map(|row| (0..5).map(move |col| (row, col)))
                .filter(|&(row, col)| before.get(row, col) != g.get(row, col))
                .count();
            assert_eq!(r.cells.len(), 10);
            assert_eq!(changed, 10);
        }
    }

    #[test]
    fn stalls_without_mutation() {
        let library = lib();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = random_genotype(2, 1, 5, &library, &mut rng).unwrap();
        let graph = decode(&g, &library).unwrap();
        let c = EvolutionConfig {
            eta: 5,
            mu: 0.0,
            nu: 0.0,
            ..Default::default()
        };
        assert!(matches!(
            mutate(&g, &graph, &c, &library, &mut rng),
            Err(Error::MutationStalled { rounds: 1000 })
        ));
    }

    #[test]
    fn child_graph_always_differs() {
        let library = lib();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let c = EvolutionConfig {
            eta: 10,
            ..Default::default()
        };
        let mut g = random_genotype(3, 2, 10, &library, &mut rng).unwrap();
        let mut graph = decode(&g, &library).unwrap();
        for _ in 0..200 {
            let (child, cg) = mutate(&g, &graph, &c, &library, &mut rng).unwrap();
            assert_ne!(cg, graph);
            child.validate(&library).unwrap();
            g = child;
            graph = cg;
        }
    }

    #[test]
    fn selection_rules() {
        let s = |error, frugality| Score { error, frugality };
        assert_eq!(select(s(0.3, 5.0), &[s(0.2, 9.0)]), Selection::Child(0));
        assert_eq!(select(s(0.3, 5.0), &[s(0.3, 3.0)]), Selection::Child(0));
        assert_eq!(select(s(0.3, 5.0), &[s(0.3, 6.0)]), Selection::Parent);
        assert_eq!(
            select(s(0.3, 5.0), &[s(0.3, 5.0), s(0.3, 5.0)]),
            Selection::Child(0)
        );
        assert_eq!(
            select(s(0.3, 5.0), &[s(0.4, 1.0), s(0.1, 7.0), s(0.1, 7.0)]),
            Selection::Child(1)
        );
    }

    #[test]
    fn random_genotype_is_deterministic() {
        let library = lib();
        let a = random_genotype(3, 2, 30, &library, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = random_genotype(3, 2, 30, &library, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
        a.validate(&library).unwrap();
    }
}
