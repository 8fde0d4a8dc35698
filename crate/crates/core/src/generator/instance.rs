//! Instance-based generators built on the nearest unlike neighbour (NUN):
//! occlusion saliency, Native Guide subsequence transplant and CoMTE-style
//! channel substitution.

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{already_target, parse_optional, parse_value, transplant, unknown_key, CounterfactualResult};
use crate::classifier::{Classifier, CountingClassifier};
use crate::data::{ClassLabel, Dataset, TimeSeries};
use crate::distance::{DistanceConfig, Metric};
use crate::error::{CfxError, Result};
use crate::parallel::Execution;

#[derive(Debug, Clone, PartialEq)]
pub struct NunResult {
    pub index: usize,
    pub series: TimeSeries,
    pub distance: f64,
}

/// Closest instance of `target` under `metric`; ties go to the lower index.
pub fn nearest_unlike_neighbor(
    dataset: &Dataset,
    x: &TimeSeries,
    target: ClassLabel,
    metric: &DistanceConfig,
) -> Result<NunResult> {
    let mut best: Option<(usize, f64)> = None;
    for (i, series) in dataset.of_class(target) {
        let d = metric.distance(x, series)?;
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    let (index, distance) = best.ok_or(CfxError::NoNeighbor { class: target })?;
    Ok(NunResult {
        index,
        series: dataset.instance(index).series.clone(),
        distance,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    SeriesMean,
    Zero,
    #[default]
    Nun,
}

/// Replacement values used to occlude a window.
#[derive(Debug, Clone, Copy)]
pub enum Baseline<'a> {
    /// Mean of the occluded channel of `x`.
    SeriesMean,
    Zero,
    /// Values of another series (normally the NUN) at the same positions.
    Series(&'a TimeSeries),
}

/// Non-negative importance per (channel, time), max-normalized to `[0, 1]`
/// unless every score is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyVector {
    pub scores: TimeSeries,
}

impl SaliencyVector {
    pub fn is_zero(&self) -> bool {
        self.scores.values().iter().all(|&v| v == 0.0)
    }

    /// Sum over channels at each time step.
    pub fn time_profile(&self) -> Vec<f64> {
        let (c, t) = self.scores.shape();
        (0..t).map(|i| (0..c).map(|ch| self.scores.get(ch, i)).sum()).collect()
    }
}

/// Occlusion saliency: every window of `window` steps (stride 1, per
/// channel) is replaced by the baseline and the drop in probability of the
/// currently predicted class is spread evenly over the covered steps.
pub fn occlusion_saliency(
    model: &dyn Classifier,
    x: &TimeSeries,
    window: usize,
    baseline: Baseline<'_>,
    exec: Execution,
) -> Result<SaliencyVector> {
    let (channels, length) = x.shape();
    if window == 0 || window > length {
        return Err(CfxError::Config(format!("occlusion window {window} must be in 1..={length}")));
    }
    if let Baseline::Series(b) = baseline {
        x.check_same_shape(b)?;
    }
    let p = model.predict_proba(x)?;
    let class = p.argmax();
    let p_class = p.get(class);
    let positions = length - window + 1;

    let drops = exec.map_range(channels * positions, |job| -> Result<f64> {
        let (c, start) = (job / positions, job % positions);
        let mut values = x.values().to_vec();
        let row = &mut values[c * length..(c + 1) * length];
        match baseline {
            Baseline::Zero => row[start..start + window].fill(0.0),
            Baseline::SeriesMean => {
                let mean = x.channel(c).iter().sum::<f64>() / length as f64;
                row[start..start + window].fill(mean);
            }
            Baseline::Series(b) => row[start..start + window].copy_from_slice(&b.channel(c)[start..start + window]),
        }
        let occluded = model.predict_proba(&x.with_values(values)?)?;
        Ok((p_class - occluded.get(class)).max(0.0))
    });

    let mut sums = vec![0.0; channels * length];
    let mut counts = vec![0usize; length];
    for start in 0..positions {
        for c in &mut counts[start..start + window] {
            *c += 1;
        }
    }
    for (job, drop) in drops.into_iter().enumerate() {
        let drop = drop?;
        let (c, start) = (job / positions, job % positions);
        for t in start..start + window {
            sums[c * length + t] += drop;
        }
    }
    for (i, s) in sums.iter_mut().enumerate() {
        *s /= counts[i % length] as f64;
    }
    let max = sums.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        sums.iter_mut().for_each(|s| *s /= max);
    }
    Ok(SaliencyVector {
        scores: x.with_values(sums)?,
    })
}

/// Per-time importance guiding window placement: occlusion saliency against
/// the NUN, or the squared difference to the NUN when the model's output
/// does not react to any single window (e.g. a 1-NN vote).
pub(crate) fn guidance_profile(
    model: &dyn Classifier,
    x: &TimeSeries,
    nun: &TimeSeries,
    window: usize,
    exec: Execution,
) -> Result<(Vec<f64>, &'static str)> {
    let saliency = occlusion_saliency(model, x, window, Baseline::Series(nun), exec)?;
    if !saliency.is_zero() {
        return Ok((saliency.time_profile(), "occlusion"));
    }
    let (c, t) = x.shape();
    let profile = (0..t)
        .map(|i| {
            (0..c)
                .map(|ch| {
                    let d = x.get(ch, i) - nun.get(ch, i);
                    d * d
                })
                .sum()
        })
        .collect();
    Ok((profile, "nun_difference"))
}

pub(crate) fn default_window(length: usize) -> usize {
    (length / 10).max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NativeGuideConfig {
    pub metric: DistanceConfig,
    /// Occlusion window; `None` uses `max(1, T / 10)`.
    pub saliency_window: Option<usize>,
    /// Largest transplant window tried; `None` allows the full series.
    pub max_window: Option<usize>,
    pub exec: Execution,
}

impl Default for NativeGuideConfig {
    fn default() -> Self {
        Self {
            metric: DistanceConfig::with_metric(Metric::L2),
            saliency_window: None,
            max_window: None,
            exec: Execution::default(),
        }
    }
}

impl NativeGuideConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "metric" => self.metric.metric = value.trim().parse()?,
            "dtw_band" => self.metric.dtw_band = parse_optional(key, value)?,
            "saliency_window" => self.saliency_window = parse_optional(key, value)?,
            "max_window" | "max_expand" => self.max_window = parse_optional(key, value)?,
            _ => return Err(unknown_key("native_guide", key)),
        }
        Ok(())
    }
}

/// Native Guide: copy a contiguous window of the NUN into `x`, growing the
/// window length one step at a time until the model predicts the target.
///
/// For each length, windows covering the guidance peak are tried first,
/// then the rest, each group ordered by guidance mass. The first valid
/// window is therefore of minimal length among all contiguous windows.
pub fn native_guide_generate(
    model: &dyn Classifier,
    dataset: &Dataset,
    x: &TimeSeries,
    target: ClassLabel,
    cfg: &NativeGuideConfig,
) -> Result<CounterfactualResult> {
    let counted = CountingClassifier::new(model);
    if let Some(done) = already_target(&counted, x, target, "native_guide", 0)? {
        return Ok(done);
    }
    let nun = nearest_unlike_neighbor(dataset, x, target, &cfg.metric)?;
    let length = x.length();
    let window = cfg.saliency_window.unwrap_or_else(|| default_window(length)).min(length);
    let (profile, source) = guidance_profile(&counted, x, &nun.series, window, cfg.exec)?;
    let peak = crate::classifier::argmax(&profile);
    let mut prefix = vec![0.0; length + 1];
    for (i, v) in profile.iter().enumerate() {
        prefix[i + 1] = prefix[i] + v;
    }
    let max_len = cfg.max_window.unwrap_or(length).clamp(1, length);

    let with_window = |start: usize, end: usize| -> Result<TimeSeries> {
        let mut values = x.values().to_vec();
        transplant(&mut values, &nun.series, 0..x.channels(), start, end);
        x.with_values(values)
    };

    let mut tried = 0usize;
    let mut last = None;
    for len in 1..=max_len {
        let mut starts: Vec<usize> = (0..=length - len).collect();
        starts.sort_by(|&a, &b| {
            let covers = |s: usize| s <= peak && peak < s + len;
            let mass = |s: usize| prefix[s + len] - prefix[s];
            covers(b)
                .cmp(&covers(a))
                .then(mass(b).total_cmp(&mass(a)))
                .then(a.cmp(&b))
        });
        for start in starts {
            let cf = with_window(start, start + len)?;
            tried += 1;
            let p = counted.predict_proba(&cf)?;
            if p.argmax() == target {
                return finish(&counted, x, cf, target, &nun, source, (start, start + len), tried);
            }
            last = Some((cf, start));
        }
    }
    let (cf, start) = last.expect("at least one window tried");
    finish(&counted, x, cf, target, &nun, source, (start, start + max_len), tried)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    counted: &CountingClassifier<'_>,
    x: &TimeSeries,
    cf: TimeSeries,
    target: ClassLabel,
    nun: &NunResult,
    source: &str,
    (start, end): (usize, usize),
    tried: usize,
) -> Result<CounterfactualResult> {
    let mut r = CounterfactualResult::assess(counted, x, cf, target, "native_guide", 0)?
        .with_meta("nun_index", nun.index)
        .with_meta("window", json!({ "start": start, "end": end - 1 }))
        .with_meta("guidance", source);
    r.iterations = tried;
    r.model_calls = counted.calls();
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComteConfig {
    pub metric: DistanceConfig,
    /// Channel counts up to this value are searched exhaustively.
    pub exact_below: usize,
}

impl Default for ComteConfig {
    fn default() -> Self {
        Self {
            metric: DistanceConfig::with_metric(Metric::L2),
            exact_below: 10,
        }
    }
}

impl ComteConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "metric" => self.metric.metric = value.trim().parse()?,
            "dtw_band" => self.metric.dtw_band = parse_optional(key, value)?,
            "exact_below" => self.exact_below = parse_value(key, value)?,
            _ => return Err(unknown_key("comte", key)),
        }
        Ok(())
    }
}

fn substitute(x: &TimeSeries, nun: &TimeSeries, channels: &[usize]) -> Result<TimeSeries> {
    let mut values = x.values().to_vec();
    transplant(&mut values, nun, channels.iter().copied(), 0, x.length());
    x.with_values(values)
}

/// CoMTE-style search over which whole channels to take from the NUN.
/// Small channel counts are enumerated exhaustively by (subset size,
/// distance); larger ones use greedy forward selection by target
/// probability gain.
pub fn comte_generate(
    model: &dyn Classifier,
    dataset: &Dataset,
    x: &TimeSeries,
    target: ClassLabel,
    cfg: &ComteConfig,
) -> Result<CounterfactualResult> {
    let counted = CountingClassifier::new(model);
    if let Some(done) = already_target(&counted, x, target, "comte", 0)? {
        return Ok(done);
    }
    let nun = nearest_unlike_neighbor(dataset, x, target, &cfg.metric)?;
    let channels = x.channels();

    let (chosen, search) = if channels <= cfg.exact_below {
        (exhaustive_subset(&counted, x, &nun.series, target, &cfg.metric)?, "exhaustive")
    } else {
        (greedy_subset(&counted, x, &nun.series, target)?, "greedy")
    };
    let subset = chosen.unwrap_or_else(|| (0..channels).collect());
    let cf = substitute(x, &nun.series, &subset)?;
    let mut r = CounterfactualResult::assess(&counted, x, cf, target, "comte", 0)?
        .with_meta("nun_index", nun.index)
        .with_meta("channels", subset.clone())
        .with_meta("search", search);
    r.model_calls = counted.calls();
    Ok(r)
}

fn exhaustive_subset(
    model: &dyn Classifier,
    x: &TimeSeries,
    nun: &TimeSeries,
    target: ClassLabel,
    metric: &DistanceConfig,
) -> Result<Option<Vec<usize>>> {
    let channels = x.channels();
    if channels >= usize::BITS as usize {
        return Err(CfxError::Config(format!("{channels} channels is too many for exhaustive search")));
    }
    for size in 1..=channels {
        let mut best: Option<(f64, Vec<usize>)> = None;
        for mask in 1usize..(1 << channels) {
            if mask.count_ones() as usize != size {
                continue;
            }
            let subset: Vec<usize> = (0..channels).filter(|c| mask >> c & 1 == 1).collect();
            let cf = substitute(x, nun, &subset)?;
            if model.predict(&cf)? != target {
                continue;
            }
            let d = metric.distance(x, &cf)?;
            if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                best = Some((d, subset));
            }
        }
        if let Some((_, subset)) = best {
            return Ok(Some(subset));
        }
    }
    Ok(None)
}

fn greedy_subset(
    model: &dyn Classifier,
    x: &TimeSeries,
    nun: &TimeSeries,
    target: ClassLabel,
) -> Result<Option<Vec<usize>>> {
    let mut chosen: Vec<usize> = Vec::new();
    while chosen.len() < x.channels() {
        let mut best: Option<(f64, usize, bool)> = None;
        for c in (0..x.channels()).filter(|c| !chosen.contains(c)) {
            let mut trial = chosen.clone();
            trial.push(c);
            trial.sort_unstable();
            let p = model.predict_proba(&substitute(x, nun, &trial)?)?;
            let score = p.get(target);
            if best.is_none_or(|(bs, _, _)| score > bs) {
                best = Some((score, c, p.argmax() == target));
            }
        }
        let (_, c, valid) = best.expect("at least one channel left");
        chosen.push(c);
        chosen.sort_unstable();
        if valid {
            return Ok(Some(chosen));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{train_knn, Activation, Dense, Mlp};
    use crate::data::{parse_ucr_tsv, LabeledInstance};

    #[test]
    fn nun_examples() {
        let d = parse_ucr_tsv("a\t0\t0\nb\t1\t0\nb\t2\t0\na\t9\t9").unwrap();
        let x = d.instance(0).series.clone();
        let own = nearest_unlike_neighbor(&d, &x, 0, &DistanceConfig::default()).unwrap();
        assert_eq!((own.index, own.distance), (0, 0.0));
        let other = nearest_unlike_neighbor(&d, &x, 1, &DistanceConfig::default()).unwrap();
        assert_eq!((other.index, other.distance), (1, 1.0));
        let d1 = parse_ucr_tsv("a\t0\na\t1").unwrap();
        let err = nearest_unlike_neighbor(&d1, &TimeSeries::univariate(vec![0.0]).unwrap(), 1, &DistanceConfig::default());
        assert!(err.is_err());
    }

    #[test]
    fn nun_missing_class() {
        let instances = vec![LabeledInstance {
            series: TimeSeries::univariate(vec![0.0]).unwrap(),
            label: 0,
        }];
        let d = Dataset::new(instances, vec!["a".into(), "b".into()]).unwrap();
        let x = TimeSeries::univariate(vec![0.0]).unwrap();
        assert!(matches!(
            nearest_unlike_neighbor(&d, &x, 1, &DistanceConfig::default()),
            Err(CfxError::NoNeighbor { class: 1 })
        ));
    }

    fn reads_step_zero(length: usize) -> Mlp {
        let mut weights = vec![0.0; 2 * length];
        weights[length] = 3.0;
        let layer = Dense {
            inputs: length,
            outputs: 2,
            weights,
            bias: vec![0.0, 0.0],
        };
        Mlp::from_layers(1, length, vec![layer], Activation::Linear).unwrap()
    }

    #[test]
    fn constant_model_has_zero_saliency() {
        let m = Mlp::from_layers(1, 6, vec![Dense::zeros(6, 2)], Activation::Linear).unwrap();
        let x = TimeSeries::univariate(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let s = occlusion_saliency(&m, &x, 2, Baseline::Zero, Execution::Sequential).unwrap();
        assert!(s.is_zero());
    }

    #[test]
    fn saliency_peaks_where_the_model_looks() {
        let m = reads_step_zero(10);
        let x = TimeSeries::univariate(vec![1.0; 10]).unwrap();
        let s = occlusion_saliency(&m, &x, 3, Baseline::Zero, Execution::Sequential).unwrap();
        let v = s.scores.values();
        assert_eq!(crate::classifier::argmax(v), 0);
        assert_eq!(v[0], 1.0);
        assert!(v.iter().all(|&s| (0.0..=1.0).contains(&s)));
        assert!(v[3..].iter().all(|&s| s == 0.0));
        assert_eq!(s.scores.shape(), x.shape());
    }

    #[test]
    fn saliency_window_too_large() {
        let m = reads_step_zero(4);
        let x = TimeSeries::univariate(vec![1.0; 4]).unwrap();
        assert!(occlusion_saliency(&m, &x, 5, Baseline::Zero, Execution::Sequential).is_err());
        assert!(occlusion_saliency(&m, &x, 0, Baseline::Zero, Execution::Sequential).is_err());
    }

    #[test]
    fn full_window_equals_nun() {
        // The model only flips on a whole-series match, so Native Guide must
        // expand to the full length.
        let d = parse_ucr_tsv("a\t0\t0\t0\t0\nb\t1\t1\t1\t1").unwrap();
        let knn = train_knn(&d, 1, DistanceConfig::default()).unwrap();
        let x = TimeSeries::univariate(vec![-2.0, -2.0, -2.0, -2.0]).unwrap();
        let r = native_guide_generate(&knn, &d, &x, 1, &NativeGuideConfig::default()).unwrap();
        assert!(r.valid);
        assert_eq!(r.counterfactual, d.instance(1).series);
    }

    #[test]
    fn comte_single_channel_is_full_substitution() {
        let d = parse_ucr_tsv("a\t0\t0\nb\t1\t1").unwrap();
        let knn = train_knn(&d, 1, DistanceConfig::default()).unwrap();
        let x = d.instance(0).series.clone();
        let r = comte_generate(&knn, &d, &x, 1, &ComteConfig::default()).unwrap();
        assert!(r.valid);
        assert_eq!(r.counterfactual, d.instance(1).series);
        assert_eq!(r.metadata["channels"], json!([0]));
    }
}
