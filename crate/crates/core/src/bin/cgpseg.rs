use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use cgpseg::analysis::{self, ConjugateParams};
use cgpseg::bench::bench_model;
use cgpseg::cgp::InputVector;
use cgpseg::dataset::{self, read_annotation, read_raw, write_gray_png, write_labels_png, Role};
use cgpseg::endpoints::FinalOutput;
use cgpseg::ensemble::{self, Upscale};
use cgpseg::export;
use cgpseg::imgops::{preprocess, FunctionLibrary};
use cgpseg::metrics::Metric;
use cgpseg::model::PipelineModel;
use cgpseg::run::{self, RunConfig, Summary};
use cgpseg::synth::{self, DiscConfig};
use cgpseg::{Error, Result};

#[derive(Parser)]
#[command(name = "cgpseg", version, about = "Evolve, run and inspect CGP segmentation pipelines")]
struct Cli {
    /// Worker threads for concurrent evaluation.
    #[arg(long, global = true, env = "CGPSEG_WORKERS")]
    workers: Option<usize>,
    /// Print machine-readable JSON on stdout.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve one or more models.
    Train(TrainArgs),
    /// Run a model on an image or on every entry of a dataset.
    Predict(PredictArgs),
    /// Score a model on a dataset.
    Eval(EvalArgs),
    /// Average several models into a heatmap.
    Ensemble(EnsembleArgs),
    /// Post-segmentation analyses.
    Analyze {
        #[command(subcommand)]
        command: AnalyzeCommand,
    },
    /// Write the pipeline description and a Python script.
    Export(ExportArgs),
    /// Single-thread throughput of a model.
    Bench(BenchArgs),
    /// Generate a synthetic disc dataset.
    Synth(SynthArgs),
    /// Print the function library manifest.
    Library,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training manifest.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Test manifest, scored after each run.
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Input image(s); several files are z-sections of one stack.
    #[arg(long, num_args = 1.., conflicts_with = "dataset")]
    input: Vec<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Output file for a single input, or directory for a dataset.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Ap,
    Iou,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    /// Defaults to the model's training metric.
    #[arg(long, value_enum)]
    metric: Option<MetricArg>,
    #[arg(long)]
    threshold: Option<f64>,
    /// Per-image CSV output.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Strategy {
    Resize,
    Rerun,
}

#[derive(Args)]
struct EnsembleArgs {
    /// Directory of model JSON files.
    #[arg(long)]
    models: PathBuf,
    #[arg(long)]
    input: Option<PathBuf>,
    /// Heatmap output, 16-bit PNG.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Manifest with ground truth for the threshold sweep.
    #[arg(long)]
    sweep: Option<PathBuf>,
    /// Sweep curve CSV.
    #[arg(long)]
    curve: Option<PathBuf>,
    /// High-resolution image to carry the heatmap to.
    #[arg(long)]
    upscale: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "resize")]
    strategy: Strategy,
    #[arg(long)]
    upscale_out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum AnalyzeCommand {
    /// Pair instances of two label maps.
    Pair {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value_t = analysis::DEFAULT_PAIRING_THRESHOLD)]
        threshold: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Intensity feature vector per instance.
    Features {
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, num_args = 1..)]
        channels: Vec<PathBuf>,
        /// One threshold per channel; per-channel Otsu when omitted.
        #[arg(long, num_args = 1..)]
        thresholds: Option<Vec<u8>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Keep instances with min < area < max.
    Filter {
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        min: usize,
        #[arg(long)]
        max: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Find touching cell pairs.
    Conjugates {
        #[arg(long)]
        ctl: PathBuf,
        #[arg(long)]
        targets: PathBuf,
        #[arg(long, default_value_t = 70.0)]
        max_distance: f64,
        #[arg(long, default_value_t = 3)]
        kernel: usize,
        #[arg(long, default_value_t = 1)]
        iterations: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    model: PathBuf,
    /// Pipeline description; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    python: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 512)]
    width: usize,
    #[arg(long, default_value_t = 512)]
    height: usize,
    #[arg(long, default_value_t = 100)]
    iterations: usize,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 128)]
    size: usize,
    #[arg(long)]
    test: bool,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// 16-bit PNGs are label maps; 8-bit ones are masks split into components.
fn load_labels(path: &Path) -> Result<cgpseg::image::LabelMap> {
    Ok(read_annotation(path, None)?.to_labels())
}

fn write_output(path: &Path, out: &FinalOutput) -> Result<()> {
    match out {
        FinalOutput::Mask(m) => write_gray_png(path, m),
        FinalOutput::Labels(l) => write_labels_png(path, l),
    }
}

fn emit(json_mode: bool, value: serde_json::Value, human: impl FnOnce() -> String) {
    if json_mode {
        println!("{}", serde_json::to_string_pretty(&value).expect("json value"));
    } else {
        print!("{}", human());
    }
}

fn train(a: TrainArgs, json_mode: bool) -> Result<()> {
    let mut config = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(d) = a.dataset {
        config.train = Some(d);
    }
    if let Some(t) = a.test {
        config.test = Some(t);
    }
    if let Some(s) = a.seed {
        config.evolution.seed = s;
    }
    if let Some(r) = a.runs {
        config.runs = r;
    }
    if let Some(k) = a.iterations {
        config.evolution.iterations = k;
    }
    if let Some(o) = a.out {
        config.out = Some(o);
    }
    config.validate()?;
    let train_path = config
        .train
        .clone()
        .ok_or_else(|| Error::Config("no training manifest (--dataset)".into()))?;
    let out = config
        .out
        .clone()
        .ok_or_else(|| Error::Config("no output directory (--out)".into()))?;
    let train_manifest = dataset::read_manifest(&train_path)?;
    let preprocessing = config
        .preprocessing
        .clone()
        .unwrap_or(train_manifest.preprocessing);
    let train = run::load_dataset_with(&train_path, Some(&preprocessing))?;
    if train.is_empty() {
        return Err(Error::Input("training dataset is empty".into()));
    }
    let test = config
        .test
        .as_ref()
        .map(|p| run::load_dataset_with(p, Some(&preprocessing)))
        .transpose()?;
    let runs = run::train_runs(&config, &train, test.as_ref(), preprocessing)?;
    let summary = Summary::from_runs(
        config.evolution.fitness.label(),
        runs.iter().map(|r| r.result.clone()).collect(),
    )?;
    run::write_runs(&out, &runs, &summary)?;
    emit(json_mode, serde_json::to_value(&summary)?, || {
        let mut s = format!("{} runs, {} error\n", summary.runs.len(), summary.metric);
        let t = summary.train;
        s += &format!("train  min {:.4} mean {:.4} max {:.4} sd {:.4}\n", t.min, t.mean, t.max, t.sd);
        if let Some(t) = summary.test {
            s += &format!("test   min {:.4} mean {:.4} max {:.4} sd {:.4}\n", t.min, t.mean, t.max, t.sd);
        }
        s
    });
    Ok(())
}

fn predict(a: PredictArgs, json_mode: bool) -> Result<()> {
    let model = PipelineModel::load(&a.model)?;
    if let Some(ds) = a.dataset {
        let data = run::load_dataset_with(&ds, Some(&model.preprocessing))?;
        std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
        let mut written = Vec::new();
        for (i, e) in data.entries().iter().enumerate() {
            let out = model.run(e.input()?)?;
            let path = a.out.join(format!("pred_{i:04}.png"));
            write_output(&path, &out)?;
            written.push(path.display().to_string());
        }
        emit(json_mode, json!({ "written": written }), || {
            format!("{} predictions in {}\n", written.len(), a.out.display())
        });
        return Ok(());
    }
    if a.input.is_empty() {
        return Err(Error::Config("predict needs --input or --dataset".into()));
    }
    let sections = a
        .input
        .iter()
        .map(|p| preprocess(&read_raw(p)?, &model.preprocessing))
        .collect::<Result<Vec<_>>>()?;
    let input = if sections.len() == 1 {
        InputVector::Planar(sections.into_iter().next().expect("one section"))
    } else {
        InputVector::Stack(sections)
    };
    let out = model.run(&input)?;
    write_output(&a.out, &out)?;
    let instances = out.to_labels().count();
    emit(
        json_mode,
        json!({ "output": a.out.display().to_string(), "instances": instances }),
        || format!("wrote {} ({instances} instances)\n", a.out.display()),
    );
    Ok(())
}

fn eval(a: EvalArgs, json_mode: bool) -> Result<()> {
    let model = PipelineModel::load(&a.model)?;
    let mut spec = model.fitness;
    match a.metric {
        Some(MetricArg::Ap) => spec.metric = Metric::Ap,
        Some(MetricArg::Iou) => spec.metric = Metric::Iou,
        None => {}
    }
    if let Some(t) = a.threshold {
        spec.iou_threshold = t;
    }
    spec.validate()?;
    let data = run::load_dataset_with(&a.dataset, Some(&model.preprocessing))?;
    let errors = cgpseg::metrics::entry_errors(&model, &data, &spec)?;
    if errors.is_empty() {
        return Err(Error::Input("evaluation dataset is empty".into()));
    }
    let scores: Vec<f64> = errors.iter().map(|e| 1.0 - e).collect();
    let error = cgpseg::metrics::fitness(&model, &data, &spec)?;
    let mean_score = 1.0 - error;
    if let Some(csv) = &a.csv {
        let mut s = format!("entry,name,{}\n", spec.label());
        for (i, (e, v)) in data.entries().iter().zip(&scores).enumerate() {
            s += &format!("{i},{},{v}\n", e.name);
        }
        write_text(csv, &s)?;
    }
    let names: Vec<&str> = data.entries().iter().map(|e| e.name.as_str()).collect();
    emit(
        json_mode,
        json!({ "metric": spec.label(), "scores": scores, "names": names, "mean": mean_score, "error": error }),
        || {
            let mut s = String::new();
            for (n, v) in names.iter().zip(&scores) {
                s += &format!("{n}\t{v:.4}\n");
            }
            s + &format!("mean {}\t{mean_score:.4}\n", spec.label())
        },
    );
    Ok(())
}

fn load_models(dir: &Path) -> Result<Vec<PipelineModel>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|x| x == "json")
                && p.file_name().is_some_and(|n| n.to_string_lossy().starts_with("model"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Input(format!("no model_*.json files in {}", dir.display())));
    }
    paths.iter().map(|p| PipelineModel::load(p)).collect()
}

fn ensemble_cmd(a: EnsembleArgs, json_mode: bool) -> Result<()> {
    let models = load_models(&a.models)?;
    let mut report = serde_json::Map::new();
    report.insert("models".into(), json!(models.len()));
    let mut heatmap = None;
    if let Some(input) = &a.input {
        let raw = read_raw(input)?;
        let h = ensemble::build_heatmap_raw(&models, &raw)?;
        if let Some(out) = &a.out {
            dataset::write_u16_png(out, h.width, h.height, ensemble::heatmap_to_u16(&h))?;
            report.insert("heatmap".into(), json!(out.display().to_string()));
        }
        heatmap = Some(h);
    }
    if let Some(sweep) = &a.sweep {
        let data = run::load_dataset_with(sweep, Some(&models[0].preprocessing))?;
        let mut pairs = Vec::with_capacity(data.len());
        for e in data.entries() {
            let h = ensemble::build_heatmap(&models, e.input()?)?;
            pairs.push((h, e.annotation.foreground()));
        }
        let s = ensemble::sweep_threshold(&pairs)?;
        if let Some(curve) = &a.curve {
            let mut text = String::from("t,mean_iou\n");
            for (t, v) in &s.curve {
                text += &format!("{t:.2},{v}\n");
            }
            write_text(curve, &text)?;
        }
        report.insert("best_threshold".into(), json!(s.best_threshold));
        report.insert("best_iou".into(), json!(s.best_iou));
    }
    if let Some(target) = &a.upscale {
        let raw = read_raw(target)?;
        let up = match a.strategy {
            Strategy::Resize => {
                let h = heatmap
                    .as_ref()
                    .ok_or_else(|| Error::Config("resize upscaling needs --input".into()))?;
                ensemble::upscale(Upscale::Resize(h), &raw)?
            }
            Strategy::Rerun => ensemble::upscale(Upscale::Rerun(&models), &raw)?,
        };
        let out = a
            .upscale_out
            .as_ref()
            .ok_or_else(|| Error::Config("--upscale needs --upscale-out".into()))?;
        dataset::write_u16_png(out, up.width, up.height, ensemble::heatmap_to_u16(&up))?;
        report.insert("upscaled".into(), json!(out.display().to_string()));
    }
    let value = serde_json::Value::Object(report);
    emit(json_mode, value.clone(), || {
        let mut s = String::new();
        if let serde_json::Value::Object(m) = &value {
            for (k, v) in m {
                s += &format!("{k}: {v}\n");
            }
        }
        s
    });
    Ok(())
}

fn analyze(c: AnalyzeCommand, json_mode: bool) -> Result<()> {
    match c {
        AnalyzeCommand::Pair { a, b, threshold, out } => {
            let p = analysis::pair_instances(&load_labels(&a)?, &load_labels(&b)?, threshold)?;
            let mut csv = String::from("a_label,b_label,iou\n");
            for (la, lb, v) in &p.pairs {
                csv += &format!("{la},{lb},{v}\n");
            }
            for la in &p.a_only {
                csv += &format!("{la},,\n");
            }
            for lb in &p.b_only {
                csv += &format!(",{lb},\n");
            }
            if let Some(out) = out {
                write_text(&out, &csv)?;
            }
            emit(json_mode, serde_json::to_value(&p)?, || csv);
        }
        AnalyzeCommand::Features {
            labels,
            channels,
            thresholds,
            out,
        } => {
            let lm = load_labels(&labels)?;
            let chans = channels
                .iter()
                .map(|p| dataset::read_gray(p))
                .collect::<Result<Vec<_>>>()?;
            let feats = analysis::features_for_labels(&lm, &chans, thresholds.as_deref())?;
            let c = chans.len();
            let mut header = vec!["label".to_string(), "area".to_string()];
            header.extend((0..1usize << c).map(|p| format!("pattern_{p:0c$b}")));
            for k in 0..c {
                header.extend([format!("c{k}_positive"), format!("c{k}_sum"), format!("c{k}_mean")]);
            }
            let mut csv = header.join(",") + "\n";
            for (l, f) in &feats {
                let vals: Vec<String> = f.to_vec().iter().map(|v| v.to_string()).collect();
                csv += &format!("{l},{},{}\n", f.area, vals.join(","));
            }
            if let Some(out) = out {
                write_text(&out, &csv)?;
            }
            emit(json_mode, serde_json::to_value(&feats)?, || csv);
        }
        AnalyzeCommand::Filter { labels, min, max, out } => {
            let lm = load_labels(&labels)?;
            let kept = analysis::area_filter(&lm, min, max)?;
            write_labels_png(&out, &kept)?;
            emit(
                json_mode,
                json!({ "before": lm.count(), "after": kept.count() }),
                || format!("{} of {} instances kept\n", kept.count(), lm.count()),
            );
        }
        AnalyzeCommand::Conjugates {
            ctl,
            targets,
            max_distance,
            kernel,
            iterations,
            out,
        } => {
            let params = ConjugateParams {
                max_centroid_distance: max_distance,
                kernel,
                iterations,
            };
            let pairs = analysis::detect_conjugates(&load_labels(&ctl)?, &load_labels(&targets)?, &params)?;
            let mut csv = String::from("ctl_label,target_label\n");
            for (c, t) in &pairs {
                csv += &format!("{c},{t}\n");
            }
            if let Some(out) = out {
                write_text(&out, &csv)?;
            }
            emit(json_mode, json!(pairs), || csv);
        }
    }
    Ok(())
}

fn export_cmd(a: ExportArgs, json_mode: bool) -> Result<()> {
    let model = PipelineModel::load(&a.model)?;
    let dsl = export::to_dsl(&model);
    if let Some(py) = &a.python {
        write_text(py, &export::to_python(&model))?;
    }
    match &a.out {
        Some(out) => {
            write_text(out, &dsl)?;
            emit(
                json_mode,
                json!({ "pipeline": out.display().to_string(), "nodes": model.graph().active_count() }),
                || format!("wrote {}\n", out.display()),
            );
        }
        None => emit(json_mode, json!({ "pipeline": dsl }), || dsl.clone()),
    }
    Ok(())
}

fn bench(a: BenchArgs, json_mode: bool) -> Result<()> {
    let model = PipelineModel::load(&a.model)?;
    let r = bench_model(&model, a.width, a.height, a.iterations)?;
    emit(json_mode, serde_json::to_value(&r)?, || {
        format!(
            "{}x{} {} active nodes: {:.1} images/s (median {:.3} ms)\n",
            r.width,
            r.height,
            r.active_nodes,
            r.images_per_second,
            r.median_seconds * 1e3
        )
    });
    Ok(())
}

fn synth_cmd(a: SynthArgs, json_mode: bool) -> Result<()> {
    let cfg = DiscConfig {
        width: a.size,
        height: a.size,
        ..DiscConfig::default()
    };
    let role = if a.test { Role::Test } else { Role::Train };
    let path = synth::write_disc_dataset(&a.out, &cfg, a.count, a.seed, role)?;
    emit(json_mode, json!({ "manifest": path.display().to_string() }), || {
        format!("wrote {}\n", path.display())
    });
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    let json_mode = cli.json;
    match cli.command {
        Command::Train(a) => train(a, json_mode),
        Command::Predict(a) => predict(a, json_mode),
        Command::Eval(a) => eval(a, json_mode),
        Command::Ensemble(a) => ensemble_cmd(a, json_mode),
        Command::Analyze { command } => analyze(command, json_mode),
        Command::Export(a) => export_cmd(a, json_mode),
        Command::Bench(a) => bench(a, json_mode),
        Command::Synth(a) => synth_cmd(a, json_mode),
        Command::Library => {
            let m = FunctionLibrary::default_library().manifest();
            emit(true, serde_json::to_value(&m)?, String::new);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let json_mode = cli.json;
    if let Some(w) = cli.workers {
        if w == 0 {
            eprintln!("error: --workers must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(w).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::FAILURE;
        }
    }
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if json_mode {
                println!("{}", json!({ "error": e.to_string() }));
            }
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
