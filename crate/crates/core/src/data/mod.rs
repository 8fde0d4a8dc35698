//! Time series data model, dataset container and archive formats.

mod normalize;
mod ts;
mod ucr;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{CfxError, Result};

pub use normalize::{znormalize, NormStats};
pub use ts::{parse_ts, serialize_ts};
pub use ucr::{parse_ucr_tsv, serialize_ucr_tsv};

pub type ClassLabel = usize;

/// Multichannel real-valued sequence stored channel-major: the value at
/// `(channel, t)` lives at `channel * length + t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct TimeSeries {
    channels: usize,
    length: usize,
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(channels: usize, length: usize, values: Vec<f64>) -> Result<Self> {
        if channels == 0 || length == 0 {
            return Err(CfxError::shape("C >= 1 and T >= 1", format!("C={channels}, T={length}")));
        }
        if values.len() != channels * length {
            return Err(CfxError::shape(channels * length, values.len()));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(CfxError::Format(format!(
                "non-finite value at channel {}, time {}",
                pos / length,
                pos % length
            )));
        }
        Ok(Self {
            channels,
            length,
            values,
        })
    }

    pub fn univariate(values: Vec<f64>) -> Result<Self> {
        let len = values.len();
        Self::new(1, len, values)
    }

    pub fn from_channels(channels: Vec<Vec<f64>>) -> Result<Self> {
        let c = channels.len();
        let t = channels.first().map_or(0, Vec::len);
        if let Some(bad) = channels.iter().find(|ch| ch.len() != t) {
            return Err(CfxError::shape(format!("channel length {t}"), bad.len()));
        }
        Self::new(c, t, channels.into_iter().flatten().collect())
    }

    pub fn zeros(channels: usize, length: usize) -> Result<Self> {
        Self::new(channels, length, vec![0.0; channels * length])
    }

    /// Replaces the values, keeping the shape.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.channels, self.length, values)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.channels, self.length)
    }

    /// Total number of entries, `C * T`.
    pub fn size(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.values[c * self.length..(c + 1) * self.length]
    }

    pub fn get(&self, c: usize, t: usize) -> f64 {
        self.values[c * self.length + t]
    }

    pub fn to_channels(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.length).map(<[f64]>::to_vec).collect()
    }

    pub fn check_same_shape(&self, other: &TimeSeries) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(CfxError::shape(
                format!("{:?}", self.shape()),
                format!("{:?}", other.shape()),
            ));
        }
        Ok(())
    }
}

impl TryFrom<Vec<Vec<f64>>> for TimeSeries {
    type Error = CfxError;

    fn try_from(channels: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_channels(channels)
    }
}

impl From<TimeSeries> for Vec<Vec<f64>> {
    fn from(ts: TimeSeries) -> Self {
        ts.to_channels()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledInstance {
    pub series: TimeSeries,
    pub label: ClassLabel,
}

/// Labeled, equal-length collection of series.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    instances: Vec<LabeledInstance>,
    class_names: Vec<String>,
    channels: usize,
    length: usize,
    norm_stats: Option<NormStats>,
    name: Option<String>,
}

impl Dataset {
    pub fn new(instances: Vec<LabeledInstance>, class_names: Vec<String>) -> Result<Self> {
        let first = instances
            .first()
            .ok_or_else(|| CfxError::Format("dataset has no instances".into()))?;
        let (channels, length) = first.series.shape();
        for (i, inst) in instances.iter().enumerate() {
            if inst.series.shape() != (channels, length) {
                return Err(CfxError::shape(
                    format!("({channels}, {length})"),
                    format!("{:?} at instance {i}", inst.series.shape()),
                ));
            }
            if inst.label >= class_names.len() {
                return Err(CfxError::Format(format!(
                    "instance {i} has label {} but only {} classes exist",
                    inst.label,
                    class_names.len()
                )));
            }
        }
        for (i, name) in class_names.iter().enumerate() {
            if class_names[..i].contains(name) {
                return Err(CfxError::Format(format!("duplicate class name {name:?}")));
            }
        }
        Ok(Self {
            instances,
            class_names,
            channels,
            length,
            norm_stats: None,
            name: None,
        })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn instances(&self) -> &[LabeledInstance] {
        &self.instances
    }

    pub fn instance(&self, index: usize) -> &LabeledInstance {
        &self.instances[index]
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.channels, self.length)
    }

    pub fn norm_stats(&self) -> Option<&NormStats> {
        self.norm_stats.as_ref()
    }

    pub fn labels(&self) -> impl Iterator<Item = ClassLabel> + '_ {
        self.instances.iter().map(|i| i.label)
    }

    /// `(index, series)` pairs of every instance with the given label.
    pub fn of_class(&self, class: ClassLabel) -> impl Iterator<Item = (usize, &TimeSeries)> + '_ {
        self.instances
            .iter()
            .enumerate()
            .filter(move |(_, inst)| inst.label == class)
            .map(|(i, inst)| (i, &inst.series))
    }

    pub fn class_index(&self, name: &str) -> Option<ClassLabel> {
        self.class_names.iter().position(|n| n == name)
    }

    pub fn distinct_labels(&self) -> usize {
        let mut seen = vec![false; self.num_classes()];
        self.labels().for_each(|l| seen[l] = true);
        seen.into_iter().filter(|&s| s).count()
    }

    /// New dataset holding the listed instances, same classes.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let instances = indices.iter().map(|&i| self.instances[i].clone()).collect();
        let mut out = Dataset::new(instances, self.class_names.clone())?;
        out.norm_stats = self.norm_stats.clone();
        out.name = self.name.clone();
        Ok(out)
    }

    pub(crate) fn with_instances_and_stats(&self, instances: Vec<LabeledInstance>, stats: NormStats) -> Self {
        Self {
            instances,
            class_names: self.class_names.clone(),
            channels: self.channels,
            length: self.length,
            norm_stats: Some(stats),
            name: self.name.clone(),
        }
    }

    /// Per-channel (min, max) over all instances and time steps.
    pub fn channel_ranges(&self) -> Vec<(f64, f64)> {
        (0..self.channels)
            .map(|c| {
                self.instances
                    .iter()
                    .flat_map(|inst| inst.series.channel(c).iter().copied())
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    UcrTsv,
    Ts,
}

impl DatasetFormat {
    /// `.ts` files use the `.ts` grammar, everything else is read as UCR text.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("ts") => DatasetFormat::Ts,
            _ => DatasetFormat::UcrTsv,
        }
    }
}

impl FromStr for DatasetFormat {
    type Err = CfxError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ucr_tsv" | "ucr" | "tsv" => Ok(DatasetFormat::UcrTsv),
            "ts" => Ok(DatasetFormat::Ts),
            other => Err(CfxError::Config(format!(
                "unknown dataset format {other:?} (expected ucr_tsv or ts)"
            ))),
        }
    }
}

impl fmt::Display for DatasetFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetFormat::UcrTsv => "ucr_tsv",
            DatasetFormat::Ts => "ts",
        })
    }
}

pub fn parse_dataset(text: &str, format: DatasetFormat) -> Result<Dataset> {
    match format {
        DatasetFormat::UcrTsv => parse_ucr_tsv(text),
        DatasetFormat::Ts => parse_ts(text),
    }
}

pub fn serialize_dataset(dataset: &Dataset, format: DatasetFormat) -> Result<String> {
    match format {
        DatasetFormat::UcrTsv => serialize_ucr_tsv(dataset),
        DatasetFormat::Ts => serialize_ts(dataset),
    }
}

pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    parse_dataset(&text, format)
}

/// Maps label tokens to dense indices in first-appearance order.
#[derive(Debug, Default)]
pub(crate) struct LabelMap {
    names: Vec<String>,
}

impl LabelMap {
    pub(crate) fn index_of(&mut self, token: &str) -> ClassLabel {
        match self.names.iter().position(|n| n == token) {
            Some(i) => i,
            None => {
                self.names.push(token.to_string());
                self.names.len() - 1
            }
        }
    }

    pub(crate) fn into_names(self) -> Vec<String> {
        self.names
    }
}
