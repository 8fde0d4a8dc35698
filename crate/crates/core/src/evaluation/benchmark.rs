//! Benchmark runner: every generator on a deterministic sample of test
//! instances per dataset, evaluated uniformly and aggregated.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{diversity, evaluate_one, EvalConfig, MetricReport};
use crate::classifier::{train_knn, train_mlp, MlpSpec, SavedModel};
use crate::data::Dataset;
use crate::distance::DistanceConfig;
use crate::error::{CfxError, Result};
use crate::generator::latent::{train_autoencoder, Autoencoder};
use crate::generator::{GenerationContext, GeneratorSpec};
use crate::parallel::with_jobs;
use crate::rng::{derive_seed, fnv1a, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassifierSpec {
    Knn { k: usize, metric: DistanceConfig },
    Mlp(MlpSpec),
}

impl Default for ClassifierSpec {
    fn default() -> Self {
        ClassifierSpec::Mlp(MlpSpec::default())
    }
}

impl ClassifierSpec {
    pub fn train(&self, train: &Dataset) -> Result<SavedModel> {
        Ok(match self {
            ClassifierSpec::Knn { k, metric } => SavedModel::Knn(train_knn(train, *k, *metric)?),
            ClassifierSpec::Mlp(spec) => SavedModel::Mlp(train_mlp(train, spec)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderSpec {
    /// `None` uses `min(16, C * T)`.
    pub latent_dim: Option<usize>,
    pub spec: MlpSpec,
}

impl Default for AutoencoderSpec {
    fn default() -> Self {
        Self {
            latent_dim: None,
            spec: MlpSpec {
                hidden_sizes: vec![64],
                learning_rate: 0.005,
                ..MlpSpec::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkDataset {
    pub name: String,
    pub train: Dataset,
    /// Instances are sampled from here.
    pub test: Dataset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    #[serde(skip)]
    pub datasets: Vec<BenchmarkDataset>,
    pub classifier: ClassifierSpec,
    pub generators: Vec<GeneratorSpec>,
    /// Sampled test instances per dataset.
    pub instances: usize,
    pub seed: u64,
    pub evaluation: EvalConfig,
    pub autoencoder: AutoencoderSpec,
    /// Worker threads for benchmark cells; 1 runs them in order.
    pub jobs: usize,
    /// Per-cell completion markers; finished cells are reused on rerun.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resume_dir: Option<PathBuf>,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            datasets: Vec::new(),
            classifier: ClassifierSpec::default(),
            generators: Vec::new(),
            instances: 10,
            seed: 0,
            evaluation: EvalConfig::default(),
            autoencoder: AutoencoderSpec::default(),
            jobs: 1,
            resume_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub dataset: String,
    pub generator: String,
    /// Position of the generator in the configuration.
    pub generator_index: usize,
    /// Index into the test set.
    pub instance: usize,
    pub true_label: usize,
    pub predicted: usize,
    pub target: usize,
    pub seed: u64,
    /// Members returned by the generator.
    pub set_size: usize,
    /// Validity as claimed by the generator for its primary member.
    pub flagged_valid: bool,
    /// Every member the generator flagged valid re-verifies via argmax.
    pub members_reverified: bool,
    pub diversity: f64,
    pub budget_exhausted: bool,
    pub metrics: Option<MetricReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub median: f64,
    /// Sample standard deviation; zero for a single value.
    pub std: f64,
    pub count: usize,
}

impl MetricSummary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
        };
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Self {
            mean,
            median,
            std,
            count: n,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub dataset: String,
    pub generator: String,
    pub generator_index: usize,
    pub rows: usize,
    pub failures: usize,
    /// Valid results over all rows, failures included.
    pub validity_rate: f64,
    pub metrics: BTreeMap<String, MetricSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub seed: u64,
    pub instances: usize,
    pub generators: Vec<String>,
    pub classifier: ClassifierSpec,
    /// FNV-1a of the JSON configuration (datasets and job count excluded).
    pub config_digest: String,
    /// Test accuracy of the trained classifier per dataset.
    pub classifier_accuracy: BTreeMap<String, f64>,
    /// Whether each dataset's training split carries z-normalization stats.
    #[serde(default)]
    pub normalized: BTreeMap<String, bool>,
    pub ood_score_definition: String,
    pub started_unix_ms: u64,
    pub total_time_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub metadata: RunMetadata,
    pub rows: Vec<BenchmarkRow>,
    pub aggregates: Vec<Aggregate>,
}

impl BenchmarkReport {
    /// Copy with every wall-clock field zeroed and aggregates recomputed.
    pub fn without_timing(&self) -> Self {
        let mut out = self.clone();
        out.metadata.started_unix_ms = 0;
        out.metadata.total_time_ms = 0.0;
        for row in &mut out.rows {
            if let Some(m) = &mut row.metrics {
                m.generation_time_ms = 0.0;
            }
        }
        out.aggregates = aggregate_rows(&out.rows);
        out
    }

    /// JSON with timing excluded; identical across reruns with one seed.
    pub fn canonical_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.without_timing())?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Aggregates per (dataset, generator) in first-appearance order.
pub fn aggregate_rows(rows: &[BenchmarkRow]) -> Vec<Aggregate> {
    let mut keys: Vec<(String, usize, String)> = Vec::new();
    for r in rows {
        let key = (r.dataset.clone(), r.generator_index, r.generator.clone());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(dataset, generator_index, generator)| {
            let group: Vec<&BenchmarkRow> = rows
                .iter()
                .filter(|r| r.dataset == dataset && r.generator_index == generator_index)
                .collect();
            let reports: Vec<&MetricReport> = group.iter().filter_map(|r| r.metrics.as_ref()).collect();
            let mut columns: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for m in &reports {
                for (name, value) in m.numeric_fields() {
                    let column = columns.entry(name.to_string()).or_default();
                    if let Some(v) = value {
                        column.push(v);
                    }
                }
            }
            let metrics = columns
                .into_iter()
                .filter_map(|(k, v)| MetricSummary::of(&v).map(|s| (k, s)))
                .collect();
            let valid = reports.iter().filter(|m| m.validity).count();
            Aggregate {
                dataset,
                generator,
                generator_index,
                rows: group.len(),
                failures: group.len() - reports.len(),
                validity_rate: if group.is_empty() { 0.0 } else { valid as f64 / group.len() as f64 },
                metrics,
            }
        })
        .collect()
}

struct Prepared {
    model: SavedModel,
    autoencoder: Option<Autoencoder>,
    sample: Vec<usize>,
}

fn sample_instances(test: &Dataset, n: usize, seed: u64, name: &str) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..test.len()).collect();
    idx.shuffle(&mut stream(seed, &[fnv1a(name)]));
    idx.truncate(n.min(test.len()));
    idx
}

fn cell_id(dataset: &str, gen_index: usize, gen_id: &str, instance: usize) -> String {
    format!("{dataset}/{gen_index}-{gen_id}/{instance}")
}

fn run_cell(
    prepared: &Prepared,
    data: &BenchmarkDataset,
    spec: &GeneratorSpec,
    gen_index: usize,
    instance: usize,
    config: &BenchmarkConfig,
) -> Result<BenchmarkRow> {
    let model = prepared.model.as_classifier().expect("classifier models only");
    let item = data.test.instance(instance);
    let x = &item.series;
    let id = cell_id(&data.name, gen_index, spec.id(), instance);
    let seed = derive_seed(config.seed, &[fnv1a(&id)]);
    let ranking = model.predict_proba(x)?.ranking();
    let target = ranking[1];
    let mut row = BenchmarkRow {
        dataset: data.name.clone(),
        generator: spec.id().to_string(),
        generator_index: gen_index,
        instance,
        true_label: item.label,
        predicted: ranking[0],
        target,
        seed,
        set_size: 0,
        flagged_valid: false,
        members_reverified: true,
        diversity: 0.0,
        budget_exhausted: false,
        metrics: None,
        error: None,
    };
    let ctx = GenerationContext {
        model,
        dataset: &data.train,
        autoencoder: prepared.autoencoder.as_ref(),
    };
    let start = Instant::now();
    let outcome = spec.generate_set(&ctx, x, target, seed);
    let elapsed = start.elapsed().as_secs_f64() * 1e3;
    match outcome.and_then(|set| {
        let div = diversity(&set, &DistanceConfig::default())?;
        let mut report = evaluate_one(model, &data.train, x, set.primary(), &config.evaluation)?;
        report.generation_time_ms = elapsed;
        let mut reverified = true;
        for m in set.members.iter().filter(|m| m.valid) {
            reverified &= model.predict(&m.counterfactual)? == target;
        }
        Ok((set, div, report, reverified))
    }) {
        Ok((set, div, report, reverified)) => {
            row.set_size = set.members.len();
            row.flagged_valid = set.primary().valid;
            row.members_reverified = reverified;
            row.diversity = div;
            row.budget_exhausted = set.budget_exhausted;
            row.metrics = Some(report);
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    Ok(row)
}

fn prepare(data: &BenchmarkDataset, config: &BenchmarkConfig) -> Result<Prepared> {
    let model = config.classifier.train(&data.train)?;
    let needs_ae = config.generators.iter().any(GeneratorSpec::needs_autoencoder);
    let autoencoder = if needs_ae {
        let (c, t) = data.train.shape();
        let d = config.autoencoder.latent_dim.unwrap_or((c * t).min(16));
        Some(train_autoencoder(&data.train, d, &config.autoencoder.spec)?)
    } else {
        None
    };
    Ok(Prepared {
        model,
        autoencoder,
        sample: sample_instances(&data.test, config.instances, config.seed, &data.name),
    })
}

fn digest(config: &BenchmarkConfig) -> Result<String> {
    let mut value = serde_json::to_value(config)?;
    if let Some(obj) = value.as_object_mut() {
        obj.remove("resume_dir");
        obj.remove("jobs");
    }
    Ok(format!("{:016x}", fnv1a(&value.to_string())))
}

/// Runs every generator on every sampled instance. Generator failures are
/// recorded in their row; configuration and training errors abort.
pub fn run_benchmark(config: &BenchmarkConfig) -> Result<BenchmarkReport> {
    if config.generators.is_empty() || config.datasets.is_empty() {
        return Err(CfxError::Config("benchmark needs at least one dataset and one generator".into()));
    }
    let started = Instant::now();
    let started_unix_ms = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0);
    if let Some(dir) = &config.resume_dir {
        std::fs::create_dir_all(dir)?;
    }

    let mut rows = Vec::new();
    let mut accuracy = BTreeMap::new();
    for data in &config.datasets {
        let prepared = prepare(data, config)?;
        let model = prepared.model.as_classifier().expect("classifier models only");
        accuracy.insert(data.name.clone(), crate::classifier::accuracy(model, &data.test)?);
        let cells: Vec<(usize, usize)> = (0..config.generators.len())
            .flat_map(|g| prepared.sample.iter().map(move |&i| (g, i)))
            .collect();
        let results = with_jobs(config.jobs, |exec| {
            exec.map_slice(&cells, |&(g, i)| -> Result<BenchmarkRow> {
                let spec = &config.generators[g];
                let marker = config
                    .resume_dir
                    .as_ref()
                    .map(|d| d.join(format!("cell-{:016x}.json", fnv1a(&cell_id(&data.name, g, spec.id(), i)))));
                if let Some(path) = &marker {
                    if let Ok(text) = std::fs::read_to_string(path) {
                        if let Ok(row) = serde_json::from_str::<BenchmarkRow>(&text) {
                            return Ok(row);
                        }
                    }
                }
                let row = run_cell(&prepared, data, spec, g, i, config)?;
                if let Some(path) = &marker {
                    std::fs::write(path, serde_json::to_string(&row)?)?;
                }
                Ok(row)
            })
        });
        for r in results {
            rows.push(r?);
        }
    }

    let aggregates = aggregate_rows(&rows);
    Ok(BenchmarkReport {
        metadata: RunMetadata {
            seed: config.seed,
            instances: config.instances,
            generators: config.generators.iter().map(|g| g.id().to_string()).collect(),
            classifier: config.classifier.clone(),
            config_digest: digest(config)?,
            classifier_accuracy: accuracy,
            normalized: config
                .datasets
                .iter()
                .map(|d| (d.name.clone(), d.train.norm_stats().is_some()))
                .collect(),
            ood_score_definition: "nearest target-class distance / mean leave-one-out nearest-neighbour distance within the target class".into(),
            started_unix_ms,
            total_time_ms: started.elapsed().as_secs_f64() * 1e3,
        },
        rows,
        aggregates,
    })
}

#[derive(Serialize)]
struct CsvRow<'a> {
    dataset: &'a str,
    generator: &'a str,
    instance: usize,
    true_label: usize,
    predicted: usize,
    target: usize,
    seed: u64,
    set_size: usize,
    flagged_valid: bool,
    diversity: f64,
    budget_exhausted: bool,
    validity: Option<bool>,
    p_target: Option<f64>,
    l1: Option<f64>,
    l2: Option<f64>,
    linf: Option<f64>,
    dtw: Option<f64>,
    frechet: Option<f64>,
    l0_count: Option<usize>,
    changed_fraction: Option<f64>,
    segment_count: Option<usize>,
    mean_segment_length: Option<f64>,
    autocorr_distance: Option<f64>,
    spectral_distance: Option<f64>,
    ood_score: Option<f64>,
    generation_time_ms: Option<f64>,
    model_calls: Option<u64>,
    error: &'a str,
}

/// One CSV line per (instance, generator) with every metric as a column.
pub fn write_csv<W: std::io::Write>(report: &BenchmarkReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in &report.rows {
        let m = r.metrics.as_ref();
        w.serialize(CsvRow {
            dataset: &r.dataset,
            generator: &r.generator,
            instance: r.instance,
            true_label: r.true_label,
            predicted: r.predicted,
            target: r.target,
            seed: r.seed,
            set_size: r.set_size,
            flagged_valid: r.flagged_valid,
            diversity: r.diversity,
            budget_exhausted: r.budget_exhausted,
            validity: m.map(|m| m.validity),
            p_target: m.map(|m| m.p_target),
            l1: m.map(|m| m.l1),
            l2: m.map(|m| m.l2),
            linf: m.map(|m| m.linf),
            dtw: m.map(|m| m.dtw),
            frechet: m.map(|m| m.frechet),
            l0_count: m.map(|m| m.l0_count),
            changed_fraction: m.map(|m| m.changed_fraction),
            segment_count: m.map(|m| m.segment_count),
            mean_segment_length: m.map(|m| m.mean_segment_length),
            autocorr_distance: m.map(|m| m.autocorr_distance),
            spectral_distance: m.map(|m| m.spectral_distance),
            ood_score: m.and_then(|m| m.ood_score),
            generation_time_ms: m.map(|m| m.generation_time_ms),
            model_calls: m.map(|m| m.model_calls),
            error: r.error.as_deref().unwrap_or(""),
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Fixed-width table: one line per (dataset, generator) aggregate.
pub fn summary_table(report: &BenchmarkReport) -> String {
    let median = |a: &Aggregate, k: &str| {
        a.metrics
            .get(k)
            .map(|s| format!("{:.4}", s.median))
            .unwrap_or_else(|| "-".into())
    };
    let mut out = format!(
        "{:<16} {:<14} {:>9} {:>10} {:>10} {:>9} {:>11}\n",
        "dataset", "generator", "validity", "median_l2", "changed", "segments", "median_ms"
    );
    for a in &report.aggregates {
        out.push_str(&format!(
            "{:<16} {:<14} {:>9.3} {:>10} {:>10} {:>9} {:>11}\n",
            a.dataset,
            a.generator,
            a.validity_rate,
            median(a, "l2"),
            median(a, "changed_fraction"),
            median(a, "segment_count"),
            a.metrics
                .get("generation_time_ms")
                .map(|s| format!("{:.1}", s.median))
                .unwrap_or_else(|| "-".into()),
        ));
    }
    out
}
