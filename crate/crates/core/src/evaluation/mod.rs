//! Uniform evaluation of counterfactuals: validity, proximity, sparsity,
//! segment compactness, plausibility (autocorrelation, spectrum,
//! out-of-distribution ratio), diversity and stability, plus the
//! benchmark runner.

mod benchmark;

pub use benchmark::{
    aggregate_rows, run_benchmark, summary_table, write_csv, Aggregate, AutoencoderSpec, BenchmarkConfig,
    BenchmarkDataset, BenchmarkReport, BenchmarkRow, ClassifierSpec, MetricSummary, RunMetadata,
};

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::classifier::Classifier;
use crate::data::{ClassLabel, Dataset, TimeSeries};
use crate::distance::{changed_segments, dtw, frechet, minkowski, DistanceConfig, Metric, Norm};
use crate::error::{CfxError, Result};
use crate::generator::{CounterfactualResult, CounterfactualSet, GenerationContext, GeneratorSpec};
use crate::rng::stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Change tolerance for sparsity and segment metrics.
    pub tolerance: f64,
    pub dtw_band: Option<usize>,
    /// Autocorrelation lags; `None` uses `min(20, T / 2)`.
    pub max_lag: Option<usize>,
    /// Distance used by the out-of-distribution score.
    pub ood_metric: DistanceConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            dtw_band: None,
            max_lag: None,
            ood_metric: DistanceConfig::with_metric(Metric::L2),
        }
    }
}

impl EvalConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = || CfxError::Config(format!("invalid value {value:?} for evaluation.{key}"));
        let v = value.trim();
        match key {
            "tolerance" => self.tolerance = v.parse().map_err(|_| bad())?,
            "dtw_band" => self.dtw_band = if v == "none" { None } else { Some(v.parse().map_err(|_| bad())?) },
            "max_lag" => self.max_lag = if v == "auto" { None } else { Some(v.parse().map_err(|_| bad())?) },
            "ood_metric" => self.ood_metric.metric = v.parse()?,
            _ => return Err(CfxError::Config(format!("unknown key {key:?} in [evaluation]"))),
        }
        Ok(())
    }

    pub fn max_lag_for(&self, length: usize) -> usize {
        self.max_lag.unwrap_or((length / 2).min(20))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Recomputed here: argmax of the model on the counterfactual equals
    /// the target.
    pub validity: bool,
    pub p_target: f64,
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
    pub dtw: f64,
    pub frechet: f64,
    pub l0_count: usize,
    pub changed_fraction: f64,
    pub segment_count: usize,
    pub mean_segment_length: f64,
    pub autocorr_distance: f64,
    pub spectral_distance: f64,
    /// Nearest-target-instance distance over the class's mean leave-one-out
    /// nearest-neighbour distance; absent when the class is too small.
    pub ood_score: Option<f64>,
    pub generation_time_ms: f64,
    pub model_calls: u64,
}

impl MetricReport {
    /// Numeric fields in report order, for aggregation and tabular output.
    pub fn numeric_fields(&self) -> Vec<(&'static str, Option<f64>)> {
        vec![
            ("validity", Some(f64::from(u8::from(self.validity)))),
            ("p_target", Some(self.p_target)),
            ("l1", Some(self.l1)),
            ("l2", Some(self.l2)),
            ("linf", Some(self.linf)),
            ("dtw", Some(self.dtw)),
            ("frechet", Some(self.frechet)),
            ("l0_count", Some(self.l0_count as f64)),
            ("changed_fraction", Some(self.changed_fraction)),
            ("segment_count", Some(self.segment_count as f64)),
            ("mean_segment_length", Some(self.mean_segment_length)),
            ("autocorr_distance", Some(self.autocorr_distance)),
            ("spectral_distance", Some(self.spectral_distance)),
            ("ood_score", self.ood_score),
            ("generation_time_ms", Some(self.generation_time_ms)),
            ("model_calls", Some(self.model_calls as f64)),
        ]
    }
}

/// Biased, mean-removed sample autocorrelation at lags `1..=max_lag`.
/// A constant series has zero autocorrelation.
pub fn autocorrelation(series: &[f64], max_lag: usize) -> Vec<f64> {
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let denom: f64 = centered.iter().map(|v| v * v).sum();
    let constant = series.iter().all(|&v| v == series[0]);
    (1..=max_lag)
        .map(|lag| {
            if constant || denom == 0.0 || lag >= n {
                return 0.0;
            }
            (0..n - lag).map(|t| centered[t] * centered[t + lag]).sum::<f64>() / denom
        })
        .collect()
}

/// L2 distance between the per-channel autocorrelation vectors.
pub fn autocorr_distance(a: &TimeSeries, b: &TimeSeries, max_lag: usize) -> Result<f64> {
    a.check_same_shape(b)?;
    if max_lag >= a.length() {
        return Err(CfxError::Config(format!(
            "max lag {max_lag} must be below the series length {}",
            a.length()
        )));
    }
    let mut sum = 0.0;
    for c in 0..a.channels() {
        let ra = autocorrelation(a.channel(c), max_lag);
        let rb = autocorrelation(b.channel(c), max_lag);
        sum += ra.iter().zip(&rb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    }
    Ok(sum.sqrt())
}

/// One-sided periodogram (bins `0..=T/2`) by direct DFT, normalized to sum
/// to one; an all-zero spectrum becomes uniform.
pub fn normalized_periodogram(series: &[f64]) -> Vec<f64> {
    let n = series.len();
    let bins = n / 2 + 1;
    let mut power: Vec<f64> = (0..bins)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, &v) in series.iter().enumerate() {
                let angle = std::f64::consts::TAU * ((k * t) % n) as f64 / n as f64;
                re += v * angle.cos();
                im -= v * angle.sin();
            }
            re * re + im * im
        })
        .collect();
    let total: f64 = power.iter().sum();
    if total > 0.0 {
        power.iter_mut().for_each(|p| *p /= total);
    } else {
        power.fill(1.0 / bins as f64);
    }
    power
}

/// Sum over channels of the L2 distance between normalized periodograms.
pub fn spectral_distance(a: &TimeSeries, b: &TimeSeries) -> Result<f64> {
    a.check_same_shape(b)?;
    Ok((0..a.channels())
        .map(|c| {
            let pa = normalized_periodogram(a.channel(c));
            let pb = normalized_periodogram(b.channel(c));
            pa.iter().zip(&pb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
        })
        .sum())
}

/// Distance from `cf` to its nearest `target` instance, relative to the
/// mean leave-one-out nearest-neighbour distance inside that class.
pub fn ood_score(dataset: &Dataset, cf: &TimeSeries, target: ClassLabel, metric: &DistanceConfig) -> Result<f64> {
    let members: Vec<&TimeSeries> = dataset.of_class(target).map(|(_, s)| s).collect();
    if members.len() < 2 {
        return Err(CfxError::MetricUnavailable(format!(
            "ood_score needs at least 2 instances of class {target}, found {}",
            members.len()
        )));
    }
    let mut nearest = f64::INFINITY;
    for m in &members {
        nearest = nearest.min(metric.distance(cf, m)?);
    }
    let mut loo = 0.0;
    for (i, a) in members.iter().enumerate() {
        let mut best = f64::INFINITY;
        for (j, b) in members.iter().enumerate() {
            if i != j {
                best = best.min(metric.distance(a, b)?);
            }
        }
        loo += best;
    }
    let denom = loo / members.len() as f64;
    if denom == 0.0 {
        return if nearest == 0.0 {
            Ok(0.0)
        } else {
            Err(CfxError::MetricUnavailable("target class instances are all identical".into()))
        };
    }
    Ok(nearest / denom)
}

/// Mean pairwise distance between set members; zero for a singleton.
pub fn diversity(set: &CounterfactualSet, metric: &DistanceConfig) -> Result<f64> {
    let members = &set.members;
    if members.len() < 2 {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..members.len() {
        for j in i + 1..members.len() {
            sum += metric.distance(&members[i].counterfactual, &members[j].counterfactual)?;
            pairs += 1;
        }
    }
    Ok(sum / pairs as f64)
}

/// Fills every metric for one result. Validity is recomputed from the
/// model, never copied from the generator. Timing is left at zero.
pub fn evaluate_one(
    model: &dyn Classifier,
    dataset: &Dataset,
    x: &TimeSeries,
    result: &CounterfactualResult,
    cfg: &EvalConfig,
) -> Result<MetricReport> {
    let cf = &result.counterfactual;
    x.check_same_shape(cf)?;
    let p = model.predict_proba(cf)?;
    let mask = changed_segments(x, cf, cfg.tolerance)?;
    let dtw_cfg = DistanceConfig {
        metric: Metric::Dtw,
        dtw_band: cfg.dtw_band,
        ..DistanceConfig::default()
    };
    let ood = match ood_score(dataset, cf, result.target, &cfg.ood_metric) {
        Ok(v) => Some(v),
        Err(CfxError::MetricUnavailable(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(MetricReport {
        validity: p.argmax() == result.target,
        p_target: p.get(result.target),
        l1: minkowski(x, cf, Norm::L1)?,
        l2: minkowski(x, cf, Norm::L2)?,
        linf: minkowski(x, cf, Norm::Linf)?,
        dtw: dtw(x, cf, &dtw_cfg)?,
        frechet: frechet(x, cf)?,
        l0_count: mask.changed_count(),
        changed_fraction: mask.changed_count() as f64 / x.size() as f64,
        segment_count: mask.segment_count(),
        mean_segment_length: mask.mean_segment_length(),
        autocorr_distance: autocorr_distance(x, cf, cfg.max_lag_for(x.length()))?,
        spectral_distance: spectral_distance(x, cf)?,
        ood_score: ood,
        generation_time_ms: 0.0,
        model_calls: result.model_calls,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    /// Mean L2 distance between the counterfactual of `x` and those of the
    /// perturbed inputs (successful trials only).
    pub cf_distance_mean: f64,
    /// Fraction of trials where the noisy counterfactual still classifies
    /// as the target.
    pub validity_retention: f64,
    /// Trials whose regeneration failed.
    pub failed_trials: usize,
}

fn perturb(x: &TimeSeries, sigma: f64, seed: u64, path: &[u64]) -> Result<TimeSeries> {
    if sigma == 0.0 {
        return Ok(x.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| CfxError::Config(e.to_string()))?;
    let mut rng = stream(seed, path);
    x.with_values(x.values().iter().map(|v| v + normal.sample(&mut rng)).collect())
}

/// Regenerates under gaussian input noise (`cf_distance_mean`) and adds
/// independent noise to the counterfactual itself (`validity_retention`).
pub fn stability(
    generator: &GeneratorSpec,
    ctx: &GenerationContext<'_>,
    x: &TimeSeries,
    target: ClassLabel,
    sigma: f64,
    n_trials: usize,
    seed: u64,
) -> Result<StabilityReport> {
    if !(sigma >= 0.0) || !sigma.is_finite() || n_trials == 0 {
        return Err(CfxError::Config("stability needs sigma >= 0 and at least one trial".into()));
    }
    let base = generator.generate(ctx, x, target, seed)?;
    let mut dist_sum = 0.0;
    let mut ok = 0usize;
    let mut failed = 0usize;
    let mut retained = 0usize;
    for i in 0..n_trials as u64 {
        let noisy_x = perturb(x, sigma, seed, &[1, i])?;
        match generator.generate(ctx, &noisy_x, target, seed) {
            Ok(r) => {
                dist_sum += minkowski(&base.counterfactual, &r.counterfactual, Norm::L2)?;
                ok += 1;
            }
            Err(_) => failed += 1,
        }
        let noisy_cf = perturb(&base.counterfactual, sigma, seed, &[2, i])?;
        if ctx.model.predict(&noisy_cf)? == target {
            retained += 1;
        }
    }
    Ok(StabilityReport {
        cf_distance_mean: if ok > 0 { dist_sum / ok as f64 } else { 0.0 },
        validity_retention: retained as f64 / n_trials as f64,
        failed_trials: failed,
    })
}
