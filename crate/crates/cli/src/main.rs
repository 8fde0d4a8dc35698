//! `cfx`: train classifiers, generate and plot counterfactuals, run
//! benchmarks and list the method catalog.
//!
//! Exit codes: 0 on success (an invalid counterfactual is still a
//! success), 2 for usage, input and configuration errors, 1 for internal
//! failures.

mod config;
mod svg;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use cfx_core::catalog::{list_methods, render_table, Category};
use cfx_core::classifier::{load_model, save_model};
use cfx_core::data::{load_dataset, znormalize, DatasetFormat};
use cfx_core::distance::changed_segments;
use cfx_core::evaluation::{
    evaluate_one, run_benchmark, summary_table, write_csv, AutoencoderSpec, BenchmarkConfig, BenchmarkDataset,
    ClassifierSpec, EvalConfig,
};
use cfx_core::generator::latent::train_autoencoder;
use cfx_core::generator::{GenerationContext, GeneratorSpec};
use cfx_core::{CfxError, Dataset, LabeledInstance, TimeSeries};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use config::{set_classifier, RunConfig};

#[derive(Parser)]
#[command(name = "cfx", version, about = "Counterfactual explanations for time series classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SeedArg {
    /// Seed for every random choice; falls back to CFX_SEED, then 0.
    #[arg(long, env = "CFX_SEED")]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a classifier and write its parameter file.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        format: FormatArg,
        #[arg(long, value_enum)]
        model: ModelArg,
        #[arg(long)]
        out: PathBuf,
        /// Run configuration; only its [classifier] section is used.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Generate a counterfactual for one instance and write it as JSON.
    Generate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
        /// Zero-based instance index in --data.
        #[arg(long)]
        index: usize,
        /// `auto` (the runner-up class), a class name or a class index.
        #[arg(long, default_value = "auto")]
        target: String,
        #[arg(long)]
        method: String,
        #[arg(long)]
        out: PathBuf,
        /// Run configuration; the matching [generator.<id>] section and
        /// [evaluation] are used.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also write an SVG overlay here.
        #[arg(long)]
        svg: Option<PathBuf>,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Run every configured generator on every configured dataset.
    Benchmark {
        #[arg(long)]
        config: PathBuf,
        /// Directory receiving report.json and report.csv.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Render a counterfactual record written by `generate` as SVG.
    Plot {
        #[arg(long)]
        record: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// List the method catalog.
    Methods {
        /// One of: optimization, instance, evolutionary, segment, latent,
        /// hybrid.
        #[arg(long)]
        category: Option<String>,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    #[value(name = "ucr_tsv")]
    UcrTsv,
    Ts,
}

impl From<FormatArg> for DatasetFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::UcrTsv => DatasetFormat::UcrTsv,
            FormatArg::Ts => DatasetFormat::Ts,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Knn,
    Mlp,
}

/// Error carrying its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<CfxError> for Failure {
    fn from(e: CfxError) -> Self {
        let code = match e {
            CfxError::Train { .. } | CfxError::Json(_) | CfxError::Csv(_) | CfxError::MetricUnavailable(_) => 1,
            _ => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Train {
            data,
            format,
            model,
            out,
            config,
            seed,
        } => cmd_train(&data, format.into(), model, &out, config.as_deref(), seed.seed),
        Command::Generate {
            model,
            data,
            format,
            index,
            target,
            method,
            out,
            config,
            svg,
            seed,
        } => cmd_generate(GenerateArgs {
            model: &model,
            data: &data,
            format: format.map(Into::into),
            index,
            target: &target,
            method: &method,
            out: &out,
            config: config.as_deref(),
            svg: svg.as_deref(),
            seed: seed.seed.unwrap_or(0),
        }),
        Command::Benchmark { config, out, jobs, seed } => cmd_benchmark(&config, &out, jobs, seed.seed),
        Command::Plot { record, out } => cmd_plot(&record, &out),
        Command::Methods { category, json } => cmd_methods(category.as_deref(), json),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| usage(format!("cannot write {}: {e}", path.display())))
}

fn read_data(path: &Path, format: DatasetFormat) -> CliResult<Dataset> {
    load_dataset(path, format).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn cmd_train(
    data: &Path,
    format: DatasetFormat,
    model: ModelArg,
    out: &Path,
    config: Option<&Path>,
    seed: Option<u64>,
) -> CliResult<()> {
    let dataset = read_data(data, format)?;
    let mut spec = match config {
        Some(path) => RunConfig::load(path)?.classifier,
        None => ClassifierSpec::default(),
    };
    let kind = match model {
        ModelArg::Knn => "knn",
        ModelArg::Mlp => "mlp",
    };
    let matches_kind = matches!(
        (&spec, model),
        (ClassifierSpec::Knn { .. }, ModelArg::Knn) | (ClassifierSpec::Mlp(_), ModelArg::Mlp)
    );
    if !matches_kind {
        set_classifier(&mut spec, "kind", kind)?;
    }
    if let (Some(seed), ClassifierSpec::Mlp(m)) = (seed, &mut spec) {
        m.seed = seed;
    }
    let trained = spec.train(&dataset)?;
    let classifier = trained.as_classifier().expect("classifiers only");
    let accuracy = cfx_core::classifier::accuracy(classifier, &dataset)?;
    save_model(&trained, out).map_err(|e| usage(format!("cannot write {}: {e}", out.display())))?;
    println!("model={} classes={} instances={}", trained.kind(), dataset.num_classes(), dataset.len());
    println!("accuracy={accuracy}");
    Ok(())
}

struct GenerateArgs<'a> {
    model: &'a Path,
    data: &'a Path,
    format: Option<DatasetFormat>,
    index: usize,
    target: &'a str,
    method: &'a str,
    out: &'a Path,
    config: Option<&'a Path>,
    svg: Option<&'a Path>,
    seed: u64,
}

fn resolve_target(target: &str, dataset: &Dataset, ranking: &[usize]) -> CliResult<usize> {
    if target == "auto" {
        return Ok(ranking[1]);
    }
    if let Some(c) = dataset.class_index(target) {
        return Ok(c);
    }
    match target.parse::<usize>() {
        Ok(c) if c < dataset.num_classes() => Ok(c),
        _ => Err(usage(format!(
            "unknown target {target:?}; classes are {}",
            dataset.class_names().join(", ")
        ))),
    }
}

fn cmd_generate(args: GenerateArgs<'_>) -> CliResult<()> {
    let run = match args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let spec: GeneratorSpec = match run.generator(args.method) {
        Some(spec) => spec.clone(),
        None => args.method.parse()?,
    };
    let format = args.format.unwrap_or_else(|| DatasetFormat::from_path(args.data));
    let dataset = read_data(args.data, format)?;
    if args.index >= dataset.len() {
        return Err(usage(format!(
            "index {} out of range for {} instances",
            args.index,
            dataset.len()
        )));
    }
    let saved = load_model(args.model).map_err(|e| usage(format!("{}: {e}", args.model.display())))?;
    let model = saved
        .as_classifier()
        .ok_or_else(|| usage(format!("{} is not a classifier", args.model.display())))?;
    if model.num_classes() != dataset.num_classes() {
        return Err(usage(format!(
            "model has {} classes but the data has {}",
            model.num_classes(),
            dataset.num_classes()
        )));
    }
    let x = &dataset.instance(args.index).series;
    let ranking = model.predict_proba(x)?.ranking();
    let target = resolve_target(args.target, &dataset, &ranking)?;

    let autoencoder = if spec.needs_autoencoder() {
        Some(train_ae(&dataset, &run.autoencoder)?)
    } else {
        None
    };
    let ctx = GenerationContext {
        model,
        dataset: &dataset,
        autoencoder: autoencoder.as_ref(),
    };
    let start = Instant::now();
    let set = spec.generate_set(&ctx, x, target, args.seed)?;
    let elapsed = start.elapsed().as_secs_f64() * 1000.0;
    let result = set.primary();
    let mut metrics = evaluate_one(model, &dataset, x, result, &run.evaluation)?;
    metrics.generation_time_ms = elapsed;
    let mask = changed_segments(x, &result.counterfactual, run.evaluation.tolerance)?;

    let record = json!({
        "generator": spec.id(),
        "seed": args.seed,
        "index": args.index,
        "true_label": dataset.instance(args.index).label,
        "predicted": ranking[0],
        "target": target,
        "target_name": dataset.class_names()[target],
        "achieved": result.achieved,
        "valid": metrics.validity,
        "generator_valid": result.valid,
        "set_size": set.members.len(),
        "original": x,
        "counterfactual": result.counterfactual,
        "segments": mask.segments,
        "metrics": metrics,
        "metadata": result.metadata,
    });
    write_file(args.out, &to_pretty(&record)?)?;
    if let Some(path) = args.svg {
        write_file(path, &svg::render_svg(x, &result.counterfactual, &mask)?)?;
    }
    println!(
        "generator={} target={} valid={} l2={:.6} segments={}",
        spec.id(),
        target,
        metrics.validity,
        metrics.l2,
        metrics.segment_count
    );
    Ok(())
}

fn train_ae(dataset: &Dataset, spec: &AutoencoderSpec) -> CliResult<cfx_core::generator::Autoencoder> {
    let (c, t) = dataset.shape();
    let dim = spec.latent_dim.unwrap_or((c * t).min(16));
    Ok(train_autoencoder(dataset, dim, &spec.spec)?)
}

fn to_pretty(value: &impl serde::Serialize) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(CfxError::from)?;
    s.push('\n');
    Ok(s)
}

fn cmd_benchmark(config_path: &Path, out: &Path, jobs: usize, seed: Option<u64>) -> CliResult<()> {
    let run = RunConfig::load(config_path)?;
    if run.datasets.is_empty() {
        return Err(usage("the configuration lists no [dataset]"));
    }
    if run.generators.is_empty() {
        return Err(usage("the configuration lists no [generator.<id>] section"));
    }
    if jobs == 0 {
        return Err(usage("--jobs must be at least 1"));
    }
    let mut datasets = Vec::new();
    for entry in &run.datasets {
        let mut train = read_data(&entry.train, entry.format_of(&entry.train))?;
        let test_path = entry.test.as_ref().unwrap_or(&entry.train);
        let test = read_data(test_path, entry.format_of(test_path))?;
        if entry.normalize {
            train = znormalize(&train)?;
        }
        let test = align_to(&train, &test)?;
        datasets.push(BenchmarkDataset {
            name: entry.display_name(),
            train,
            test,
        });
    }
    fs::create_dir_all(out).map_err(|e| usage(format!("cannot create {}: {e}", out.display())))?;
    let config = BenchmarkConfig {
        datasets,
        classifier: run.classifier.clone(),
        generators: run.generators.clone(),
        instances: run.instances,
        seed: seed.unwrap_or(run.seed),
        evaluation: run.evaluation.clone(),
        autoencoder: run.autoencoder.clone(),
        jobs,
        resume_dir: run.resume.then(|| out.join("cells")),
    };
    let report = run_benchmark(&config)?;
    write_file(&out.join("report.json"), &report.to_json()?)?;
    if run.write_csv {
        let file = fs::File::create(out.join("report.csv"))
            .map_err(|e| usage(format!("cannot write {}: {e}", out.display())))?;
        write_csv(&report, file)?;
    }
    print!("{}", summary_table(&report));
    Ok(())
}

/// Re-indexes `other`'s labels by the training split's class names and,
/// when the training split was normalized, applies its statistics.
fn align_to(train: &Dataset, other: &Dataset) -> CliResult<Dataset> {
    let instances = other
        .instances()
        .iter()
        .map(|i| {
            let name = &other.class_names()[i.label];
            let label = train
                .class_index(name)
                .ok_or_else(|| usage(format!("class {name:?} does not occur in the training split")))?;
            let series = match train.norm_stats() {
                Some(stats) => stats.apply(&i.series)?,
                None => i.series.clone(),
            };
            Ok(LabeledInstance { series, label })
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(Dataset::new(instances, train.class_names().to_vec())?)
}

fn series_field(record: &Value, key: &str) -> CliResult<TimeSeries> {
    let value = record
        .get(key)
        .ok_or_else(|| usage(format!("record has no {key:?} field")))?;
    serde_json::from_value(value.clone()).map_err(|e| usage(format!("bad {key:?} field: {e}")))
}

fn cmd_plot(record_path: &Path, out: &Path) -> CliResult<()> {
    let text = fs::read_to_string(record_path).map_err(|e| usage(format!("{}: {e}", record_path.display())))?;
    let record: Value = serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", record_path.display())))?;
    let x = series_field(&record, "original")?;
    let cf = series_field(&record, "counterfactual")?;
    let mask = changed_segments(&x, &cf, EvalConfig::default().tolerance)?;
    write_file(out, &svg::render_svg(&x, &cf, &mask)?)
}

fn cmd_methods(category: Option<&str>, as_json: bool) -> CliResult<()> {
    let filter = category.map(str::parse::<Category>).transpose()?;
    let entries = list_methods(filter);
    if as_json {
        print!("{}", to_pretty(&entries)?);
    } else {
        print!("{}", render_table(&entries));
    }
    Ok(())
}
