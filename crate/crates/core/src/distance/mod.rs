//! Distance and change-structure kernels.

mod dtw;
mod frechet;

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::TimeSeries;
use crate::error::{CfxError, Result};

pub use dtw::dtw;
pub use frechet::frechet;

pub const DEFAULT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    L1,
    L2,
    Linf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    L1,
    #[default]
    L2,
    Linf,
    Dtw,
    Frechet,
}

impl FromStr for Metric {
    type Err = CfxError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "l1" => Metric::L1,
            "l2" => Metric::L2,
            "linf" => Metric::Linf,
            "dtw" => Metric::Dtw,
            "frechet" => Metric::Frechet,
            other => {
                return Err(CfxError::Config(format!(
                    "unknown metric {other:?} (expected l1, l2, linf, dtw or frechet)"
                )))
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MultivariateMode {
    /// One warping path shared by all channels, local cost = L2 over channels.
    #[default]
    Dependent,
    /// Sum of per-channel univariate alignments.
    Independent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceConfig {
    pub metric: Metric,
    /// Sakoe-Chiba half-width; `None` is unbanded.
    pub dtw_band: Option<usize>,
    /// Entries with `|a - b| > tolerance` count as changed.
    pub tolerance: f64,
    pub multivariate: MultivariateMode,
    /// Squares the DTW local cost instead of using the raw difference.
    pub squared_cost: bool,
}

impl Default for DistanceConfig {
    fn default() -> Self {
        Self {
            metric: Metric::L2,
            dtw_band: None,
            tolerance: DEFAULT_TOLERANCE,
            multivariate: MultivariateMode::Dependent,
            squared_cost: false,
        }
    }
}

impl DistanceConfig {
    pub fn with_metric(metric: Metric) -> Self {
        Self {
            metric,
            ..Self::default()
        }
    }

    pub fn validate(&self, length: usize) -> Result<()> {
        if !(self.tolerance >= 0.0) {
            return Err(CfxError::Config(format!("tolerance must be >= 0, got {}", self.tolerance)));
        }
        if let Some(band) = self.dtw_band {
            if band >= length {
                return Err(CfxError::Config(format!(
                    "dtw band {band} must be smaller than the series length {length}"
                )));
            }
        }
        Ok(())
    }

    /// Distance between two series under the configured metric.
    pub fn distance(&self, a: &TimeSeries, b: &TimeSeries) -> Result<f64> {
        match self.metric {
            Metric::L1 => minkowski(a, b, Norm::L1),
            Metric::L2 => minkowski(a, b, Norm::L2),
            Metric::Linf => minkowski(a, b, Norm::Linf),
            Metric::Dtw => dtw(a, b, self),
            Metric::Frechet => frechet(a, b),
        }
    }
}

pub fn minkowski(a: &TimeSeries, b: &TimeSeries, p: Norm) -> Result<f64> {
    a.check_same_shape(b)?;
    let diffs = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs());
    Ok(match p {
        Norm::L1 => diffs.sum(),
        Norm::L2 => diffs.map(|d| d * d).sum::<f64>().sqrt(),
        Norm::Linf => diffs.fold(0.0, f64::max),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChangeCount {
    pub count: usize,
    /// `count / (C * T)`.
    pub fraction: f64,
}

pub fn l0_changed(a: &TimeSeries, b: &TimeSeries, tolerance: f64) -> Result<ChangeCount> {
    a.check_same_shape(b)?;
    let count = a
        .values()
        .iter()
        .zip(b.values())
        .filter(|(x, y)| (*x - *y).abs() > tolerance)
        .count();
    Ok(ChangeCount {
        count,
        fraction: count as f64 / a.size() as f64,
    })
}

/// Maximal contiguous run of changed points within one channel, inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub channel: usize,
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeMask {
    pub channels: usize,
    pub length: usize,
    /// Channel-major changed flags.
    pub flags: Vec<bool>,
    /// Sorted by channel, then start.
    pub segments: Vec<Segment>,
}

impl ChangeMask {
    pub fn is_changed(&self, channel: usize, t: usize) -> bool {
        self.flags[channel * self.length + t]
    }

    pub fn changed_count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    pub fn segment_count(&self) -> usize {
        self.segments.len()
    }

    pub fn total_segment_length(&self) -> usize {
        self.segments.iter().map(Segment::len).sum()
    }

    /// Zero when nothing changed.
    pub fn mean_segment_length(&self) -> f64 {
        if self.segments.is_empty() {
            0.0
        } else {
            self.total_segment_length() as f64 / self.segments.len() as f64
        }
    }
}

pub fn changed_segments(a: &TimeSeries, b: &TimeSeries, tolerance: f64) -> Result<ChangeMask> {
    a.check_same_shape(b)?;
    let (channels, length) = a.shape();
    let flags: Vec<bool> = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).abs() > tolerance)
        .collect();
    let mut segments = Vec::new();
    for (channel, row) in flags.chunks(length).enumerate() {
        let mut start = None;
        for (t, &changed) in row.iter().enumerate() {
            match (changed, start) {
                (true, None) => start = Some(t),
                (false, Some(s)) => {
                    segments.push(Segment { channel, start: s, end: t - 1 });
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            segments.push(Segment { channel, start: s, end: length - 1 });
        }
    }
    Ok(ChangeMask {
        channels,
        length,
        flags,
        segments,
    })
}
