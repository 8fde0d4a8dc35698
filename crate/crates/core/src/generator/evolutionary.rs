//! Multi-objective evolutionary search (NSGA-II) over four fixed objectives:
//! validity gap, proximity, changed fraction and changed segment count.
//!
//! Variation operators are time-aware: one-point crossover cuts all
//! channels at the same time step, and segment-swap mutation copies a
//! contiguous window of the nearest unlike neighbour into the child.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::instance::nearest_unlike_neighbor;
use super::{already_target, parse_value, unknown_key, CounterfactualResult, CounterfactualSet};
use crate::classifier::{Classifier, CountingClassifier};
use crate::data::{ClassLabel, Dataset, TimeSeries};
use crate::distance::{changed_segments, DistanceConfig};
use crate::error::{CfxError, Result};
use crate::parallel::Execution;
use crate::rng::stream;

/// Ordering of the returned counterfactual set. Members meeting the
/// margin always come first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SetOrder {
    /// Changed fraction, then proximity.
    #[default]
    Sparsity,
    /// Proximity alone.
    Proximity,
}

impl std::str::FromStr for SetOrder {
    type Err = CfxError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "sparsity" => Ok(SetOrder::Sparsity),
            "proximity" => Ok(SetOrder::Proximity),
            other => Err(CfxError::Config(format!("unknown order {other:?}; expected sparsity or proximity"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvoConfig {
    pub population_size: usize,
    pub generations: usize,
    /// Per-point probability of gaussian noise. Only points that already
    /// differ from `x` are perturbed, so the operator refines existing edits
    /// instead of scattering new ones.
    pub gaussian_point_prob: f64,
    /// Noise scale relative to the per-channel standard deviation of `x`.
    pub gaussian_sigma: f64,
    pub segment_swap_prob: f64,
    /// Probability of restoring a random window to the original values,
    /// the shrinking counterpart of the segment swap.
    pub segment_revert_prob: f64,
    /// Segment length bounds as fractions of the series length.
    pub segment_len_range: (f64, f64),
    pub crossover_prob: f64,
    pub tournament_size: usize,
    pub target_margin: f64,
    pub seed: u64,
    pub max_model_calls: u64,
    /// Used for the NUN lookup and the change tolerance.
    pub metric: DistanceConfig,
    pub order: SetOrder,
    pub exec: Execution,
}

impl Default for EvoConfig {
    fn default() -> Self {
        Self {
            population_size: 100,
            generations: 100,
            gaussian_point_prob: 0.05,
            gaussian_sigma: 0.1,
            segment_swap_prob: 0.3,
            segment_revert_prob: 0.3,
            segment_len_range: (0.05, 0.3),
            crossover_prob: 0.9,
            tournament_size: 2,
            target_margin: 0.05,
            seed: 0,
            max_model_calls: 200_000,
            metric: DistanceConfig::default(),
            order: SetOrder::default(),
            exec: Execution::default(),
        }
    }
}

impl EvoConfig {
    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("gaussian_point_prob", self.gaussian_point_prob),
            ("segment_swap_prob", self.segment_swap_prob),
            ("segment_revert_prob", self.segment_revert_prob),
            ("crossover_prob", self.crossover_prob),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(CfxError::Config(format!("{name} must be in [0, 1], got {p}")));
            }
        }
        if self.population_size < 4 {
            return Err(CfxError::Config("population_size must be at least 4".into()));
        }
        if self.tournament_size == 0 {
            return Err(CfxError::Config("tournament_size must be positive".into()));
        }
        let (lo, hi) = self.segment_len_range;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(CfxError::Config(format!("segment_len_range must satisfy 0 < lo <= hi <= 1, got ({lo}, {hi})")));
        }
        if !(self.gaussian_sigma >= 0.0) {
            return Err(CfxError::Config("gaussian_sigma must be non-negative".into()));
        }
        if !(0.0..0.5).contains(&self.target_margin) {
            return Err(CfxError::Config("target_margin must be in [0, 0.5)".into()));
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "population_size" => self.population_size = parse_value(key, value)?,
            "generations" => self.generations = parse_value(key, value)?,
            "gaussian_point_prob" => self.gaussian_point_prob = parse_value(key, value)?,
            "gaussian_sigma" => self.gaussian_sigma = parse_value(key, value)?,
            "segment_swap_prob" => self.segment_swap_prob = parse_value(key, value)?,
            "segment_revert_prob" => self.segment_revert_prob = parse_value(key, value)?,
            "segment_len_min" => self.segment_len_range.0 = parse_value(key, value)?,
            "segment_len_max" => self.segment_len_range.1 = parse_value(key, value)?,
            "crossover_prob" => self.crossover_prob = parse_value(key, value)?,
            "tournament_size" => self.tournament_size = parse_value(key, value)?,
            "target_margin" => self.target_margin = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "max_model_calls" => self.max_model_calls = parse_value(key, value)?,
            "metric" => self.metric.metric = value.trim().parse()?,
            "tolerance" => self.metric.tolerance = parse_value(key, value)?,
            "order" => self.order = value.parse()?,
            _ => return Err(unknown_key("evo", key)),
        }
        Ok(())
    }
}

/// `[validity_gap, proximity, sparsity, segments]`, all minimized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveVector(pub [f64; 4]);

impl ObjectiveVector {
    pub fn validity_gap(&self) -> f64 {
        self.0[0]
    }
    pub fn proximity(&self) -> f64 {
        self.0[1]
    }
    pub fn sparsity(&self) -> f64 {
        self.0[2]
    }
    pub fn segments(&self) -> f64 {
        self.0[3]
    }

    pub fn dominates(&self, other: &Self) -> bool {
        dominates(&self.0, &other.0)
    }
}

impl AsRef<[f64]> for ObjectiveVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// `a` is no worse than `b` everywhere and strictly better somewhere.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    let mut strict = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        strict |= x < y;
    }
    strict
}

/// Fast non-dominated sort. Every index appears in exactly one front;
/// indices within a front are ascending.
pub fn nondominated_sort<V: AsRef<[f64]>>(objectives: &[V]) -> Vec<Vec<usize>> {
    let n = objectives.len();
    let mut dominated_by_me: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut counts = vec![0usize; n];
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (objectives[i].as_ref(), objectives[j].as_ref());
            if dominates(a, b) {
                dominated_by_me[i].push(j);
                counts[j] += 1;
            } else if dominates(b, a) {
                dominated_by_me[j].push(i);
                counts[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| counts[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominated_by_me[i] {
                counts[j] -= 1;
                if counts[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(std::mem::replace(&mut current, next));
    }
    fronts
}

/// Crowding distance within one front. Per objective, the extreme points
/// (after a stable sort) get infinity and interior points add the
/// normalized gap between their neighbours.
pub fn crowding_distance<V: AsRef<[f64]>>(front: &[V]) -> Vec<f64> {
    let n = front.len();
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    let dims = front[0].as_ref().len();
    let mut dist = vec![0.0; n];
    for k in 0..dims {
        let value = |i: usize| front[i].as_ref()[k];
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| value(a).total_cmp(&value(b)));
        let (lo, hi) = (value(order[0]), value(order[n - 1]));
        dist[order[0]] = f64::INFINITY;
        dist[order[n - 1]] = f64::INFINITY;
        if hi > lo {
            for w in order.windows(3) {
                dist[w[1]] += (value(w[2]) - value(w[0])) / (hi - lo);
            }
        }
    }
    dist
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoFront {
    pub members: Vec<(TimeSeries, ObjectiveVector)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvoOutcome {
    pub set: CounterfactualSet,
    /// Front 0 of the final population.
    pub front: ParetoFront,
    /// Smallest validity gap in the population after each generation
    /// (index 0 is the initial population).
    pub best_gap_history: Vec<f64>,
    pub generations_run: usize,
}

struct Scorer<'a> {
    model: &'a dyn Classifier,
    x: &'a TimeSeries,
    target: ClassLabel,
    margin: f64,
    tolerance: f64,
}

impl Scorer<'_> {
    fn score(&self, cand: &TimeSeries) -> Result<ObjectiveVector> {
        let p = self.model.predict_proba(cand)?.get(self.target);
        let gap = (0.5 + self.margin - p).max(0.0);
        let n = self.x.size() as f64;
        let proximity = self
            .x
            .values()
            .iter()
            .zip(cand.values())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
            / n.sqrt();
        let mask = changed_segments(self.x, cand, self.tolerance)?;
        Ok(ObjectiveVector([
            gap,
            proximity,
            mask.changed_count() as f64 / n,
            mask.segment_count() as f64,
        ]))
    }
}

struct Operators<'a> {
    x: &'a TimeSeries,
    nun: &'a TimeSeries,
    cfg: &'a EvoConfig,
    /// Absolute noise scale per channel.
    sigma: Vec<f64>,
}

impl Operators<'_> {
    fn segment_len(&self, rng: &mut ChaCha8Rng) -> usize {
        let t = self.x.length() as f64;
        let lo = (self.cfg.segment_len_range.0 * t).round().max(1.0) as usize;
        let hi = ((self.cfg.segment_len_range.1 * t).round() as usize).max(lo);
        rng.random_range(lo..=hi).min(self.x.length())
    }

    /// Copies a random window of `source` into `values` on one channel.
    fn copy_segment(&self, values: &mut [f64], source: &TimeSeries, rng: &mut ChaCha8Rng) {
        let (c_count, t) = self.x.shape();
        let c = rng.random_range(0..c_count);
        let len = self.segment_len(rng);
        let start = rng.random_range(0..=t - len);
        super::transplant(values, source, [c], start, start + len);
    }

    fn swap_segment(&self, values: &mut [f64], rng: &mut ChaCha8Rng) {
        self.copy_segment(values, self.nun, rng);
    }

    fn child(&self, parents: &[(TimeSeries, ObjectiveVector)], rank: &[(usize, f64)], rng: &mut ChaCha8Rng) -> Result<TimeSeries> {
        let a = self.tournament(rank, rng);
        let b = self.tournament(rank, rng);
        let t = self.x.length();
        let mut values = parents[a].0.values().to_vec();
        if t > 1 && rng.random_bool(self.cfg.crossover_prob) {
            let cut = rng.random_range(1..t);
            let other = parents[b].0.values();
            for c in 0..self.x.channels() {
                values[c * t + cut..(c + 1) * t].copy_from_slice(&other[c * t + cut..(c + 1) * t]);
            }
        }
        if self.cfg.gaussian_point_prob > 0.0 && self.cfg.gaussian_sigma > 0.0 {
            let original = self.x.values();
            for (i, v) in values.iter_mut().enumerate() {
                if (*v - original[i]).abs() > self.cfg.metric.tolerance && rng.random_bool(self.cfg.gaussian_point_prob) {
                    let noise = Normal::new(0.0, self.sigma[i / t]).expect("sigma is positive and finite");
                    *v += noise.sample(rng);
                }
            }
        }
        if rng.random_bool(self.cfg.segment_swap_prob) {
            self.swap_segment(&mut values, rng);
        }
        if rng.random_bool(self.cfg.segment_revert_prob) {
            self.copy_segment(&mut values, self.x, rng);
        }
        self.x.with_values(values)
    }

    /// Lower rank wins, then larger crowding, then lower index.
    fn tournament(&self, rank: &[(usize, f64)], rng: &mut ChaCha8Rng) -> usize {
        let mut best = rng.random_range(0..rank.len());
        for _ in 1..self.cfg.tournament_size {
            let c = rng.random_range(0..rank.len());
            let better = rank[c].0 < rank[best].0
                || (rank[c].0 == rank[best].0 && (rank[c].1 > rank[best].1 || (rank[c].1 == rank[best].1 && c < best)));
            if better {
                best = c;
            }
        }
        best
    }
}

/// Rank and crowding per member, in population order.
fn rank_population(objs: &[ObjectiveVector]) -> Vec<(usize, f64)> {
    let mut out = vec![(0, 0.0); objs.len()];
    for (r, front) in nondominated_sort(objs).iter().enumerate() {
        let members: Vec<ObjectiveVector> = front.iter().map(|&i| objs[i]).collect();
        for (&i, d) in front.iter().zip(crowding_distance(&members)) {
            out[i] = (r, d);
        }
    }
    out
}

/// NSGA-II survivor selection: whole fronts first, the last front by
/// descending crowding. The member with the smallest validity gap always
/// survives.
fn select_survivors(objs: &[ObjectiveVector], size: usize) -> Vec<usize> {
    let mut chosen = Vec::with_capacity(size);
    for front in nondominated_sort(objs) {
        if chosen.len() + front.len() <= size {
            chosen.extend(front);
            continue;
        }
        let members: Vec<ObjectiveVector> = front.iter().map(|&i| objs[i]).collect();
        let crowd = crowding_distance(&members);
        let mut order: Vec<usize> = (0..front.len()).collect();
        order.sort_by(|&a, &b| crowd[b].total_cmp(&crowd[a]).then(front[a].cmp(&front[b])));
        chosen.extend(order.into_iter().take(size - chosen.len()).map(|k| front[k]));
        break;
    }
    let best = best_gap_index(objs);
    if !chosen.contains(&best) {
        *chosen.last_mut().expect("size >= 1") = best;
    }
    chosen
}

fn best_gap_index(objs: &[ObjectiveVector]) -> usize {
    (0..objs.len())
        .min_by(|&a, &b| objs[a].0.partial_cmp(&objs[b].0).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)))
        .expect("non-empty population")
}

pub fn evolve_generate(
    model: &dyn Classifier,
    dataset: &Dataset,
    x: &TimeSeries,
    target: ClassLabel,
    cfg: &EvoConfig,
) -> Result<CounterfactualSet> {
    evolve(model, dataset, x, target, cfg).map(|o| o.set)
}

/// Full evolutionary run, exposing the final front and the per-generation
/// best validity gap alongside the returned counterfactual set.
pub fn evolve(
    model: &dyn Classifier,
    dataset: &Dataset,
    x: &TimeSeries,
    target: ClassLabel,
    cfg: &EvoConfig,
) -> Result<EvoOutcome> {
    cfg.validate()?;
    let counted = CountingClassifier::new(model);
    if let Some(done) = already_target(&counted, x, target, "evo", cfg.seed)? {
        let objective = ObjectiveVector([0.0; 4]);
        return Ok(EvoOutcome {
            set: CounterfactualSet::single(done),
            front: ParetoFront {
                members: vec![(x.clone(), objective)],
            },
            best_gap_history: vec![0.0],
            generations_run: 0,
        });
    }
    let nun = nearest_unlike_neighbor(dataset, x, target, &cfg.metric)?;
    let scorer = Scorer {
        model: &counted,
        x,
        target,
        margin: cfg.target_margin,
        tolerance: cfg.metric.tolerance,
    };
    let sigma = (0..x.channels())
        .map(|c| {
            let ch = x.channel(c);
            let mean = ch.iter().sum::<f64>() / ch.len() as f64;
            let sd = (ch.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / ch.len() as f64).sqrt();
            cfg.gaussian_sigma * if sd > 1e-12 { sd } else { 1.0 }
        })
        .collect();
    let ops = Operators {
        x,
        nun: &nun.series,
        cfg,
        sigma,
    };
    let n = cfg.population_size;

    let initial: Vec<TimeSeries> = (0..n)
        .map(|i| match i {
            0 => Ok(x.clone()),
            1 => Ok(nun.series.clone()),
            _ => {
                let mut rng = stream(cfg.seed, &[0, i as u64]);
                let mut values = x.values().to_vec();
                ops.swap_segment(&mut values, &mut rng);
                x.with_values(values)
            }
        })
        .collect::<Result<_>>()?;
    let scores = cfg.exec.map_slice(&initial, |c| scorer.score(c));
    let mut population: Vec<(TimeSeries, ObjectiveVector)> = initial
        .into_iter()
        .zip(scores)
        .map(|(c, s)| s.map(|s| (c, s)))
        .collect::<Result<_>>()?;

    let best_gap = |pop: &[(TimeSeries, ObjectiveVector)]| pop.iter().map(|m| m.1.validity_gap()).fold(f64::INFINITY, f64::min);
    let mut history = vec![best_gap(&population)];
    let mut budget_exhausted = false;
    let mut generations_run = 0;
    for gen in 1..=cfg.generations {
        if counted.calls() + n as u64 > cfg.max_model_calls {
            budget_exhausted = true;
            break;
        }
        let objs: Vec<ObjectiveVector> = population.iter().map(|m| m.1).collect();
        let rank = rank_population(&objs);
        let offspring = cfg.exec.map_range(n, |i| -> Result<(TimeSeries, ObjectiveVector)> {
            let mut rng = stream(cfg.seed, &[gen as u64, i as u64]);
            let child = ops.child(&population, &rank, &mut rng)?;
            let score = scorer.score(&child)?;
            Ok((child, score))
        });
        let mut combined = population;
        for child in offspring {
            combined.push(child?);
        }
        let objs: Vec<ObjectiveVector> = combined.iter().map(|m| m.1).collect();
        let keep = select_survivors(&objs, n);
        let mut slots: Vec<Option<(TimeSeries, ObjectiveVector)>> = combined.into_iter().map(Some).collect();
        population = keep.iter().map(|&i| slots[i].take().expect("survivor indices are distinct")).collect();
        history.push(best_gap(&population));
        generations_run = gen;
    }

    let objs: Vec<ObjectiveVector> = population.iter().map(|m| m.1).collect();
    let front0 = nondominated_sort(&objs).swap_remove(0);
    let mut front: Vec<(TimeSeries, ObjectiveVector)> = front0.iter().map(|&i| population[i].clone()).collect();
    front.sort_by(|a, b| a.1.proximity().total_cmp(&b.1.proximity()));
    front.dedup_by(|a, b| a.0 == b.0);

    let finish = |series: &TimeSeries, obj: &ObjectiveVector| -> Result<CounterfactualResult> {
        let mut r = CounterfactualResult::assess(&counted, x, series.clone(), target, "evo", cfg.seed)?
            .with_meta("objectives", obj.0.to_vec())
            .with_meta("nun_index", nun.index)
            .with_meta("generations", generations_run);
        r.iterations = generations_run;
        Ok(r)
    };
    let mut valid: Vec<(&ObjectiveVector, CounterfactualResult)> = Vec::new();
    for (series, obj) in &front {
        let r = finish(series, obj)?;
        if r.valid {
            valid.push((obj, r));
        }
    }
    valid.sort_by(|(a, _), (b, _)| {
        let tier = (a.validity_gap() > 0.0).cmp(&(b.validity_gap() > 0.0));
        let key = match cfg.order {
            SetOrder::Sparsity => a.sparsity().total_cmp(&b.sparsity()),
            SetOrder::Proximity => std::cmp::Ordering::Equal,
        };
        tier.then(key).then(a.proximity().total_cmp(&b.proximity()))
    });
    let mut members: Vec<CounterfactualResult> = valid.into_iter().map(|(_, r)| r).collect();
    if members.is_empty() {
        let i = best_gap_index(&objs);
        let mut r = finish(&population[i].0, &population[i].1)?;
        r.valid = false;
        members.push(r.with_meta("fallback", json!("best_validity_gap")));
    }
    let calls = counted.calls();
    for m in &mut members {
        m.model_calls = calls;
    }
    Ok(EvoOutcome {
        set: CounterfactualSet {
            members,
            budget_exhausted,
        },
        front: ParetoFront { members: front },
        best_gap_history: history,
        generations_run,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_vector_one_front() {
        assert_eq!(nondominated_sort(&[[1.0, 2.0]]), vec![vec![0]]);
    }

    #[test]
    fn incomparable_share_front() {
        let objs = [[1.0, 2.0, 0.0, 0.0], [2.0, 1.0, 0.0, 0.0], [3.0, 3.0, 0.0, 0.0]];
        assert_eq!(nondominated_sort(&objs), vec![vec![0, 1], vec![2]]);
    }

    #[test]
    fn crowding_examples() {
        assert!(crowding_distance(&[[0.0], [1.0]]).iter().all(|d| d.is_infinite()));
        let d = crowding_distance(&[[0.0], [1.0], [3.0]]);
        assert!(d[0].is_infinite() && d[2].is_infinite());
        assert!((d[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn survivors_keep_best_gap() {
        let objs: Vec<ObjectiveVector> = (0..6)
            .map(|i| ObjectiveVector([if i == 5 { 0.0 } else { 1.0 }, i as f64, 0.0, 0.0]))
            .collect();
        let keep = select_survivors(&objs, 2);
        assert_eq!(keep.len(), 2);
        assert!(keep.contains(&5));
    }

    #[test]
    fn config_validation() {
        let mut cfg = EvoConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.population_size = 3;
        assert!(cfg.validate().is_err());
        let cfg = EvoConfig {
            crossover_prob: 1.5,
            ..EvoConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
