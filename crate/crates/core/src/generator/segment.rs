//! Segment-level generators: brute-force matrix profile with discord
//! discovery, discord replacement from target-class donors, and greedy
//! replacement of saliency-ranked windows by the NUN.

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::instance::{default_window, guidance_profile, nearest_unlike_neighbor};
use super::{already_target, parse_optional, parse_value, transplant, unknown_key, CounterfactualResult};
use crate::classifier::{Classifier, CountingClassifier};
use crate::data::{ClassLabel, Dataset, TimeSeries};
use crate::distance::{DistanceConfig, Metric};
use crate::error::{CfxError, Result};
use crate::parallel::Execution;

/// Below this standard deviation a subsequence is treated as constant and
/// compared without z-normalization.
pub const CONSTANT_STD: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixProfile {
    pub m: usize,
    pub exclusion: usize,
    pub distances: Vec<f64>,
    pub indices: Vec<usize>,
}

impl MatrixProfile {
    pub fn len(&self) -> usize {
        self.distances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distances.is_empty()
    }
}

pub fn exclusion_zone(m: usize) -> usize {
    m.div_ceil(2)
}

/// Population mean and standard deviation of a window.
pub fn window_stats(w: &[f64]) -> (f64, f64) {
    let m = w.len() as f64;
    let mean = w.iter().sum::<f64>() / m;
    let var = w.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
    (mean, var.sqrt())
}

/// z-normalized Euclidean distance; plain Euclidean if either window is
/// constant.
pub fn subsequence_distance(a: &[f64], b: &[f64]) -> f64 {
    let (ma, sa) = window_stats(a);
    let (mb, sb) = window_stats(b);
    let mut sum = 0.0;
    if sa < CONSTANT_STD || sb < CONSTANT_STD {
        for k in 0..a.len() {
            let d = a[k] - b[k];
            sum += d * d;
        }
    } else {
        for k in 0..a.len() {
            let d = (a[k] - ma) / sa - (b[k] - mb) / sb;
            sum += d * d;
        }
    }
    sum.sqrt()
}

pub fn matrix_profile(series: &[f64], m: usize) -> Result<MatrixProfile> {
    matrix_profile_with(series, m, Execution::Sequential)
}

/// Brute-force matrix profile. Position `i` is matched against every `j`
/// with `|i - j| >= ceil(m / 2)`; ties go to the lower `j`.
///
/// Errors unless every position has at least one admissible match.
pub fn matrix_profile_with(series: &[f64], m: usize, exec: Execution) -> Result<MatrixProfile> {
    let t = series.len();
    if m < 2 || m > t {
        return Err(CfxError::Config(format!("subsequence length {m} must be in 2..={t}")));
    }
    let n = t - m + 1;
    let ez = exclusion_zone(m);
    if n <= ez || (n - 1).div_ceil(2) < ez {
        return Err(CfxError::Config(format!(
            "series of length {t} too short for subsequence length {m} (exclusion zone {ez})"
        )));
    }
    let rows = exec.map_range(n, |i| {
        let a = &series[i..i + m];
        let mut best = (f64::INFINITY, 0);
        for j in 0..n {
            if i.abs_diff(j) < ez {
                continue;
            }
            let d = subsequence_distance(a, &series[j..j + m]);
            if d < best.0 {
                best = (d, j);
            }
        }
        best
    });
    let (distances, indices) = rows.into_iter().unzip();
    Ok(MatrixProfile {
        m,
        exclusion: ez,
        distances,
        indices,
    })
}

/// Up to `k` profile maxima, descending, pairwise at least the exclusion
/// zone apart. Ties go to the lower position.
pub fn top_discord(profile: &MatrixProfile, k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..profile.len()).collect();
    order.sort_by(|&a, &b| profile.distances[b].total_cmp(&profile.distances[a]).then(a.cmp(&b)));
    let mut chosen: Vec<usize> = Vec::new();
    for i in order {
        if chosen.len() == k {
            break;
        }
        if chosen.iter().all(|&j| i.abs_diff(j) >= profile.exclusion) {
            chosen.push(i);
        }
    }
    chosen
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscordConfig {
    /// Subsequence length; `None` uses `max(4, T / 10)`.
    pub m: Option<usize>,
    pub k: usize,
    pub exec: Execution,
}

impl Default for DiscordConfig {
    fn default() -> Self {
        Self {
            m: None,
            k: 3,
            exec: Execution::default(),
        }
    }
}

impl DiscordConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "m" | "window" => self.m = parse_optional(key, value)?,
            "k" => self.k = parse_value(key, value)?,
            _ => return Err(unknown_key("discord", key)),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
struct Discord {
    channel: usize,
    start: usize,
    distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct Donor {
    instance: usize,
    start: usize,
    values: Vec<f64>,
}

/// Closest (z-normalized) target-class window of the same length and
/// channel, rescaled to the mean and spread of `x` around the window.
fn find_donor(dataset: &Dataset, x: &TimeSeries, target: ClassLabel, d: &Discord, m: usize) -> Result<Donor> {
    let query = &x.channel(d.channel)[d.start..d.start + m];
    let mut best: Option<(f64, usize, usize)> = None;
    for (idx, series) in dataset.of_class(target) {
        let ch = series.channel(d.channel);
        for s in 0..=ch.len() - m {
            let dist = subsequence_distance(query, &ch[s..s + m]);
            if best.is_none_or(|(bd, _, _)| dist < bd) {
                best = Some((dist, idx, s));
            }
        }
    }
    let (_, instance, start) = best.ok_or(CfxError::NoNeighbor { class: target })?;
    let raw = &dataset.instance(instance).series.channel(d.channel)[start..start + m];

    let row = x.channel(d.channel);
    let lo = d.start.saturating_sub(m);
    let hi = (d.start + 2 * m).min(row.len());
    let context: Vec<f64> = row[lo..d.start].iter().chain(&row[d.start + m..hi]).copied().collect();
    let (ctx_mean, ctx_std) = if context.is_empty() { window_stats(query) } else { window_stats(&context) };
    let (d_mean, d_std) = window_stats(raw);
    let values = if d_std < CONSTANT_STD || ctx_std < CONSTANT_STD {
        raw.iter().map(|v| v - d_mean + ctx_mean).collect()
    } else {
        raw.iter().map(|v| (v - d_mean) / d_std * ctx_std + ctx_mean).collect()
    };
    Ok(Donor { instance, start, values })
}

/// Discords across all channels, strongest first, keeping only windows
/// separated by at least one untouched step within a channel.
fn ranked_discords(x: &TimeSeries, m: usize, k: usize, exec: Execution) -> Result<Vec<Discord>> {
    let mut all = Vec::new();
    for c in 0..x.channels() {
        let profile = matrix_profile_with(x.channel(c), m, exec)?;
        for s in top_discord(&profile, k) {
            all.push(Discord {
                channel: c,
                start: s,
                distance: profile.distances[s],
            });
        }
    }
    all.sort_by(|a, b| {
        b.distance
            .total_cmp(&a.distance)
            .then(a.channel.cmp(&b.channel))
            .then(a.start.cmp(&b.start))
    });
    let mut kept: Vec<Discord> = Vec::new();
    for d in all {
        if kept.len() == k {
            break;
        }
        if kept.iter().all(|o| o.channel != d.channel || o.start.abs_diff(d.start) > m) {
            kept.push(d);
        }
    }
    Ok(kept)
}

/// Index subsets of `0..n` by size, then lexicographically.
fn combinations(n: usize) -> impl Iterator<Item = Vec<usize>> {
    (1..=n).flat_map(move |size| {
        let mut out = Vec::new();
        let mut current = Vec::with_capacity(size);
        fn rec(start: usize, n: usize, size: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if current.len() == size {
                out.push(current.clone());
                return;
            }
            for i in start..n {
                current.push(i);
                rec(i + 1, n, size, current, out);
                current.pop();
            }
        }
        rec(0, n, size, &mut current, &mut out);
        out
    })
}

/// Replaces discord windows of `x` with rescaled target-class donor
/// windows, trying single discords first, then pairs, and so on.
pub fn discord_generate(
    model: &dyn Classifier,
    dataset: &Dataset,
    x: &TimeSeries,
    target: ClassLabel,
    cfg: &DiscordConfig,
) -> Result<CounterfactualResult> {
    let counted = CountingClassifier::new(model);
    if let Some(done) = already_target(&counted, x, target, "discord", 0)? {
        return Ok(done);
    }
    if cfg.k == 0 {
        return Err(CfxError::Config("k must be positive".into()));
    }
    let m = cfg.m.unwrap_or_else(|| (x.length() / 10).max(4));
    let discords = ranked_discords(x, m, cfg.k, cfg.exec)?;
    if discords.is_empty() {
        return Err(CfxError::Config("no discord windows found".into()));
    }
    let donors = discords
        .iter()
        .map(|d| find_donor(dataset, x, target, d, m))
        .collect::<Result<Vec<_>>>()?;

    let apply = |subset: &[usize]| -> Result<TimeSeries> {
        let mut values = x.values().to_vec();
        let t = x.length();
        for &i in subset {
            let d = &discords[i];
            let off = d.channel * t + d.start;
            values[off..off + m].copy_from_slice(&donors[i].values);
        }
        x.with_values(values)
    };

    let mut tried = 0;
    let mut chosen = None;
    let mut last = Vec::new();
    for subset in combinations(discords.len()) {
        tried += 1;
        let cf = apply(&subset)?;
        if counted.predict(&cf)? == target {
            chosen = Some((subset, cf));
            break;
        }
        last = subset;
    }
    let (subset, cf) = match chosen {
        Some(found) => found,
        None => {
            let cf = apply(&last)?;
            (last, cf)
        }
    };
    let windows: Vec<_> = subset
        .iter()
        .map(|&i| {
            let d = &discords[i];
            json!({
                "channel": d.channel,
                "start": d.start,
                "end": d.start + m - 1,
                "discord_distance": d.distance,
                "donor_instance": donors[i].instance,
                "donor_start": donors[i].start,
            })
        })
        .collect();
    let mut r = CounterfactualResult::assess(&counted, x, cf, target, "discord", 0)?
        .with_meta("m", m)
        .with_meta("windows", windows)
        .with_meta("donor_rule", "best z-normalized target-class window, rescaled to local context");
    r.iterations = tried;
    r.model_calls = counted.calls();
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyWindowConfig {
    /// Tile length; `None` uses `max(1, T / 10)`.
    pub window: Option<usize>,
    /// `None` allows every tile.
    pub max_windows: Option<usize>,
    pub metric: DistanceConfig,
    pub exec: Execution,
}

impl Default for GreedyWindowConfig {
    fn default() -> Self {
        Self {
            window: None,
            max_windows: None,
            metric: DistanceConfig::with_metric(Metric::L2),
            exec: Execution::default(),
        }
    }
}

impl GreedyWindowConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "window" => self.window = parse_optional(key, value)?,
            "max_windows" => self.max_windows = parse_optional(key, value)?,
            "metric" => self.metric.metric = value.trim().parse()?,
            _ => return Err(unknown_key("greedy_window", key)),
        }
        Ok(())
    }
}

/// Tiles the series into consecutive windows (the last may be shorter),
/// ranks them by mean guidance and copies the NUN into the top-ranked
/// tiles one at a time until the prediction flips.
pub fn greedy_window_generate(
    model: &dyn Classifier,
    dataset: &Dataset,
    x: &TimeSeries,
    target: ClassLabel,
    cfg: &GreedyWindowConfig,
) -> Result<CounterfactualResult> {
    let counted = CountingClassifier::new(model);
    if let Some(done) = already_target(&counted, x, target, "greedy_window", 0)? {
        return Ok(done);
    }
    let length = x.length();
    let window = cfg.window.unwrap_or_else(|| default_window(length));
    if window == 0 || window > length {
        return Err(CfxError::Config(format!("window {window} must be in 1..={length}")));
    }
    let nun = nearest_unlike_neighbor(dataset, x, target, &cfg.metric)?;
    let (profile, source) = guidance_profile(&counted, x, &nun.series, window, cfg.exec)?;
    let mut tiles: Vec<(usize, usize, f64)> = (0..length)
        .step_by(window)
        .map(|s| {
            let e = (s + window).min(length);
            (s, e, profile[s..e].iter().sum::<f64>() / (e - s) as f64)
        })
        .collect();
    tiles.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
    let limit = cfg.max_windows.unwrap_or(tiles.len()).min(tiles.len());
    if limit == 0 {
        return Err(CfxError::Config("max_windows must be positive".into()));
    }

    let mut values = x.values().to_vec();
    let mut used = Vec::new();
    let mut cf = x.clone();
    for &(s, e, _) in tiles.iter().take(limit) {
        transplant(&mut values, &nun.series, 0..x.channels(), s, e);
        used.push(json!({ "start": s, "end": e - 1 }));
        cf = x.with_values(values.clone())?;
        if counted.predict(&cf)? == target {
            break;
        }
    }
    let mut r = CounterfactualResult::assess(&counted, x, cf, target, "greedy_window", 0)?
        .with_meta("nun_index", nun.index)
        .with_meta("guidance", source)
        .with_meta("windows", used.clone());
    r.iterations = used.len();
    r.model_calls = counted.calls();
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn periodic_series_has_flat_profile() {
        let s: Vec<f64> = (0..64).map(|t| (t as f64 * std::f64::consts::TAU / 8.0).sin()).collect();
        let p = matrix_profile(&s, 8).unwrap();
        assert_eq!(p.len(), 64 - 8 + 1);
        assert!(p.distances.iter().all(|&d| d < 1e-6), "{:?}", p.distances);
    }

    #[test]
    fn spike_is_top_discord() {
        let mut s = vec![0.0; 40];
        s[10] = 5.0;
        let p = matrix_profile(&s, 4).unwrap();
        let top = top_discord(&p, 1)[0];
        assert!((top..top + 4).contains(&10), "top={top}");
    }

    #[test]
    fn too_short_is_rejected() {
        assert!(matrix_profile(&[0.0; 5], 4).is_err());
        assert!(matrix_profile(&[0.0; 5], 1).is_err());
        assert!(matrix_profile(&[0.0; 5], 6).is_err());
    }

    #[test]
    fn constant_series_tie_order() {
        let p = matrix_profile(&[1.0; 20], 4).unwrap();
        let top = top_discord(&p, 100);
        assert_eq!(top[0], 0);
        assert!(top.windows(2).all(|w| w[0] < w[1]));
        assert!(top.len() < 100);
    }

    #[test]
    fn combination_order() {
        let all: Vec<_> = combinations(3).collect();
        assert_eq!(all, vec![vec![0], vec![1], vec![2], vec![0, 1], vec![0, 2], vec![1, 2], vec![0, 1, 2]]);
    }
}
