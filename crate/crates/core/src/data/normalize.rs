use serde::{Deserialize, Serialize};

use super::{Dataset, LabeledInstance, TimeSeries};
use crate::error::Result;

/// Per-channel statistics recorded by [`znormalize`]. A channel whose
/// standard deviation is zero is flagged constant and left untouched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub constant: Vec<bool>,
}

impl NormStats {
    pub fn from_dataset(dataset: &Dataset) -> Self {
        let count = (dataset.len() * dataset.length()) as f64;
        let mut mean = Vec::with_capacity(dataset.channels());
        let mut std = Vec::with_capacity(dataset.channels());
        for c in 0..dataset.channels() {
            let values = || dataset.instances().iter().flat_map(move |i| i.series.channel(c).iter().copied());
            let mu = values().sum::<f64>() / count;
            let var = values().map(|v| (v - mu) * (v - mu)).sum::<f64>() / count;
            mean.push(mu);
            std.push(var.sqrt());
        }
        let constant = std.iter().map(|&s| s == 0.0).collect();
        Self { mean, std, constant }
    }

    pub fn apply(&self, series: &TimeSeries) -> Result<TimeSeries> {
        self.map(series, |v, mu, sd| (v - mu) / sd)
    }

    pub fn invert(&self, series: &TimeSeries) -> Result<TimeSeries> {
        self.map(series, |v, mu, sd| v * sd + mu)
    }

    fn map(&self, series: &TimeSeries, f: impl Fn(f64, f64, f64) -> f64) -> Result<TimeSeries> {
        let t = series.length();
        let values = series
            .values()
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let c = i / t;
                if self.constant[c] {
                    v
                } else {
                    f(v, self.mean[c], self.std[c])
                }
            })
            .collect();
        series.with_values(values)
    }
}

/// Z-normalizes every channel over the whole dataset (all instances and time
/// steps pooled). The statistics are kept on the returned dataset.
pub fn znormalize(dataset: &Dataset) -> Result<Dataset> {
    let stats = NormStats::from_dataset(dataset);
    let instances = dataset
        .instances()
        .iter()
        .map(|inst| {
            Ok(LabeledInstance {
                series: stats.apply(&inst.series)?,
                label: inst.label,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(dataset.with_instances_and_stats(instances, stats))
}
