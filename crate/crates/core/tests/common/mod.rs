//! Independent reference implementations used as test oracles.
//!
//! Each oracle is written from the textbook definition, without sharing
//! code with the crate, and is only fast enough for tiny inputs.

#![allow(dead_code)]

use std::collections::HashMap;

use cfx_core::data::{Dataset, LabeledInstance, TimeSeries};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_values(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()
}

pub fn univariate(values: Vec<f64>) -> TimeSeries {
    TimeSeries::univariate(values).unwrap()
}

/// Minimum over every monotone warping path of the summed `|a_i - b_j|`,
/// accumulated in path order.
pub fn dtw_by_enumeration(a: &[f64], b: &[f64]) -> f64 {
    fn walk(a: &[f64], b: &[f64], i: usize, j: usize, acc: f64, best: &mut f64) {
        let acc = acc + (a[i] - b[j]).abs();
        if i + 1 == a.len() && j + 1 == b.len() {
            *best = best.min(acc);
            return;
        }
        if i + 1 < a.len() {
            walk(a, b, i + 1, j, acc, best);
        }
        if j + 1 < b.len() {
            walk(a, b, i, j + 1, acc, best);
        }
        if i + 1 < a.len() && j + 1 < b.len() {
            walk(a, b, i + 1, j + 1, acc, best);
        }
    }
    let mut best = f64::INFINITY;
    walk(a, b, 0, 0, 0.0, &mut best);
    best
}

/// Discrete Fréchet distance by its recursive definition, memoized.
pub fn frechet_recursive(a: &[f64], b: &[f64]) -> f64 {
    fn f(a: &[f64], b: &[f64], i: usize, j: usize, memo: &mut HashMap<(usize, usize), f64>) -> f64 {
        if let Some(&v) = memo.get(&(i, j)) {
            return v;
        }
        let d = (a[i] - b[j]).abs();
        let v = match (i, j) {
            (0, 0) => d,
            (0, _) => d.max(f(a, b, 0, j - 1, memo)),
            (_, 0) => d.max(f(a, b, i - 1, 0, memo)),
            _ => d.max(
                f(a, b, i - 1, j, memo)
                    .min(f(a, b, i - 1, j - 1, memo))
                    .min(f(a, b, i, j - 1, memo)),
            ),
        };
        memo.insert((i, j), v);
        v
    }
    f(a, b, a.len() - 1, b.len() - 1, &mut HashMap::new())
}

pub fn dominates_naive(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x <= y) && a.iter().zip(b).any(|(x, y)| x < y)
}

/// Fronts by repeatedly peeling off the members nobody remaining dominates.
pub fn fronts_by_peeling(points: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let mut remaining: Vec<usize> = (0..points.len()).collect();
    let mut fronts = Vec::new();
    while !remaining.is_empty() {
        let front: Vec<usize> = remaining
            .iter()
            .copied()
            .filter(|&i| !remaining.iter().any(|&j| dominates_naive(&points[j], &points[i])))
            .collect();
        remaining.retain(|i| !front.contains(i));
        fronts.push(front);
    }
    fronts
}

/// Crowding distance: sort once per objective, boundaries infinite,
/// interior points accumulate the normalized neighbour gap.
pub fn crowding_naive(front: &[Vec<f64>]) -> Vec<f64> {
    let n = front.len();
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    let mut out = vec![0.0; n];
    #[allow(clippy::needless_range_loop)]
    for k in 0..front[0].len() {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| front[a][k].partial_cmp(&front[b][k]).unwrap());
        let span = front[idx[n - 1]][k] - front[idx[0]][k];
        out[idx[0]] = f64::INFINITY;
        out[idx[n - 1]] = f64::INFINITY;
        for r in 1..n - 1 {
            if span > 0.0 {
                out[idx[r]] += (front[idx[r + 1]][k] - front[idx[r - 1]][k]) / span;
            }
        }
    }
    out
}

fn znorm_distance(a: &[f64], b: &[f64]) -> f64 {
    let m = a.len() as f64;
    let stats = |w: &[f64]| {
        let mean = w.iter().sum::<f64>() / m;
        let var = w.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
        (mean, var.sqrt())
    };
    let ((ma, sa), (mb, sb)) = (stats(a), stats(b));
    let constant = sa < 1e-9 || sb < 1e-9;
    let mut s = 0.0;
    for k in 0..a.len() {
        let d = if constant { a[k] - b[k] } else { (a[k] - ma) / sa - (b[k] - mb) / sb };
        s += d * d;
    }
    s.sqrt()
}

/// Double-loop matrix profile with exclusion zone `ceil(m / 2)`.
pub fn matrix_profile_naive(series: &[f64], m: usize) -> (Vec<f64>, Vec<usize>) {
    let n = series.len() - m + 1;
    let ez = m.div_ceil(2);
    let mut dist = vec![f64::INFINITY; n];
    let mut idx = vec![0; n];
    for i in 0..n {
        for j in 0..n {
            if (i as isize - j as isize).unsigned_abs() < ez {
                continue;
            }
            let d = znorm_distance(&series[i..i + m], &series[j..j + m]);
            if d < dist[i] {
                dist[i] = d;
                idx[i] = j;
            }
        }
    }
    (dist, idx)
}

/// Smallest contiguous window (all channels copied from `donor`) that
/// makes `predict` return true, found by scanning every window.
pub fn minimal_window(x: &TimeSeries, donor: &TimeSeries, predict: impl Fn(&TimeSeries) -> bool) -> Option<usize> {
    let t = x.length();
    for len in 1..=t {
        for start in 0..=t - len {
            let mut values = x.to_channels();
            for (c, row) in values.iter_mut().enumerate() {
                row[start..start + len].copy_from_slice(&donor.channel(c)[start..start + len]);
            }
            if predict(&TimeSeries::from_channels(values).unwrap()) {
                return Some(len);
            }
        }
    }
    None
}

/// Random dataset with `classes` labels (each used at least once).
pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize, channels: usize, length: usize, classes: usize) -> Dataset {
    let instances = (0..n.max(classes))
        .map(|i| LabeledInstance {
            series: TimeSeries::new(channels, length, random_values(rng, channels * length)).unwrap(),
            label: if i < classes { i } else { rng.random_range(0..classes) },
        })
        .collect();
    let names = (0..classes).map(|c| format!("c{c}")).collect();
    Dataset::new(instances, names).unwrap()
}

/// Noisy sine of period `period` with a half-sine bump of height 2
/// occupying the middle half of `[at, at + width)`. The bump is zero at
/// its ends, so the anomaly has no level discontinuity.
pub fn planted_discord_series(rng: &mut ChaCha8Rng, length: usize, period: f64, at: usize, width: usize) -> Vec<f64> {
    let (lo, hi) = (at + width / 4, at + width - width / 4);
    (0..length)
        .map(|t| {
            let base = (std::f64::consts::TAU * t as f64 / period).sin();
            let bump = if (lo..hi).contains(&t) {
                2.0 * (std::f64::consts::PI * (t - lo) as f64 / (hi - lo) as f64).sin()
            } else {
                0.0
            };
            base + bump + rng.random_range(-0.05..0.05)
        })
        .collect()
}
