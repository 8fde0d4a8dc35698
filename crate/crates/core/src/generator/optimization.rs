//! Gradient-based counterfactual search in input space.
//!
//! The loss is `hinge + (1/lambda) * (d(x, x') + s * TV(delta) + r * L1(delta))`
//! where `hinge = max(0, max_{k != t} z_k - z_t + margin)` on the logits and
//! `delta = x' - x`. Plain Wachter search uses `s = r = 0`.
//!
//! Optimization runs in stages of `inner_iters` steps. A stage that ends
//! without any valid iterate multiplies lambda by `lambda_growth`, which
//! weakens the proximity pull. Once valid iterates appear, lambda is held and
//! the search keeps refining until a whole stage brings no improvement.
//! Each step uses the fixed learning rate with up to eight halvings; a step
//! that still raises the loss is rejected and ends the stage.

use serde::{Deserialize, Serialize};

use super::{already_target, logit_margin, parse_optional, parse_value, unknown_key, CounterfactualResult, TraceEntry};
use crate::classifier::{argmax, Classifier, CountingClassifier, ProbVector};
use crate::data::{ClassLabel, Dataset, TimeSeries};
use crate::error::{CfxError, Result};

const MAX_HALVINGS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Proximity {
    L1,
    #[default]
    L2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptConfig {
    pub lambda_init: f64,
    pub lambda_growth: f64,
    pub lambda_max: f64,
    pub learning_rate: f64,
    pub max_iters: usize,
    pub inner_iters: usize,
    pub proximity: Proximity,
    pub smoothness_weight: f64,
    pub sparsity_weight: f64,
    /// Required target probability above 0.5, enforced through the
    /// equivalent logit gap.
    pub target_margin: f64,
    pub seed: u64,
    /// Optional per-channel `(min, max)` clamp applied after every step.
    pub bounds: Option<Vec<(f64, f64)>>,
    pub record_trace: bool,
}

impl Default for OptConfig {
    fn default() -> Self {
        Self::wachter()
    }
}

impl OptConfig {
    pub fn wachter() -> Self {
        Self {
            lambda_init: 0.1,
            lambda_growth: 1.5,
            lambda_max: 1e4,
            learning_rate: 0.05,
            max_iters: 2000,
            inner_iters: 200,
            proximity: Proximity::L2,
            smoothness_weight: 0.0,
            sparsity_weight: 0.0,
            target_margin: 0.05,
            seed: 0,
            bounds: None,
            record_trace: true,
        }
    }

    pub fn tscf() -> Self {
        Self {
            smoothness_weight: 0.5,
            sparsity_weight: 0.1,
            ..Self::wachter()
        }
    }

    /// Clamp range taken from the per-channel extremes of `dataset`.
    pub fn with_dataset_bounds(mut self, dataset: &Dataset) -> Self {
        self.bounds = Some(dataset.channel_ranges());
        self
    }

    pub(crate) fn reseeded(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lambda_init > 0.0
            && self.lambda_growth > 1.0
            && self.lambda_max >= self.lambda_init
            && self.learning_rate > 0.0
            && self.inner_iters > 0
            && self.smoothness_weight >= 0.0
            && self.sparsity_weight >= 0.0;
        if !ok {
            return Err(CfxError::Config(format!("invalid optimizer configuration: {self:?}")));
        }
        logit_margin(self.target_margin).map(|_| ())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "lambda_init" => self.lambda_init = parse_value(key, value)?,
            "lambda_growth" => self.lambda_growth = parse_value(key, value)?,
            "lambda_max" => self.lambda_max = parse_value(key, value)?,
            "learning_rate" => self.learning_rate = parse_value(key, value)?,
            "max_iters" => self.max_iters = parse_value(key, value)?,
            "inner_iters" => self.inner_iters = parse_value(key, value)?,
            "proximity" => {
                self.proximity = match value.trim() {
                    "l1" => Proximity::L1,
                    "l2" => Proximity::L2,
                    other => return Err(CfxError::Config(format!("proximity must be l1 or l2, got {other:?}"))),
                }
            }
            "smoothness_weight" => self.smoothness_weight = parse_value(key, value)?,
            "sparsity_weight" => self.sparsity_weight = parse_value(key, value)?,
            "target_margin" => self.target_margin = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "record_trace" => self.record_trace = parse_value(key, value)?,
            "bounds" => {
                if parse_optional::<String>(key, value)?.is_some() {
                    return Err(CfxError::Config("bounds can only be set programmatically or to none".into()));
                }
                self.bounds = None;
            }
            _ => return Err(unknown_key("optimization", key)),
        }
        Ok(())
    }
}

pub fn wachter_generate(
    model: &dyn Classifier,
    x: &TimeSeries,
    target: ClassLabel,
    cfg: &OptConfig,
) -> Result<CounterfactualResult> {
    optimize(model, x, target, cfg, "wachter")
}

pub fn tscf_generate(
    model: &dyn Classifier,
    x: &TimeSeries,
    target: ClassLabel,
    cfg: &OptConfig,
) -> Result<CounterfactualResult> {
    optimize(model, x, target, cfg, "tscf")
}

#[derive(Debug, Clone, Copy, Default)]
struct Terms {
    validity: f64,
    proximity: f64,
    smoothness: f64,
    sparsity: f64,
}

impl Terms {
    fn total(&self, lambda: f64, cfg: &OptConfig) -> f64 {
        self.validity
            + (self.proximity + cfg.smoothness_weight * self.smoothness + cfg.sparsity_weight * self.sparsity) / lambda
    }
}

/// Largest non-target logit, lowest index on ties.
pub(crate) fn rival(logits: &[f64], target: usize) -> usize {
    let masked: Vec<f64> = logits
        .iter()
        .enumerate()
        .map(|(k, &z)| if k == target { f64::NEG_INFINITY } else { z })
        .collect();
    argmax(&masked)
}

pub(crate) fn hinge(logits: &[f64], target: usize, margin: f64) -> f64 {
    (logits[rival(logits, target)] - logits[target] + margin).max(0.0)
}

pub(crate) fn hinge_cotangent(logits: &[f64], target: usize, margin: f64) -> Vec<f64> {
    let mut w = vec![0.0; logits.len()];
    if hinge(logits, target, margin) > 0.0 {
        w[rival(logits, target)] = 1.0;
        w[target] = -1.0;
    }
    w
}

struct Problem<'a> {
    x: &'a [f64],
    length: usize,
    cfg: &'a OptConfig,
}

impl Problem<'_> {
    fn penalty_terms(&self, cand: &[f64]) -> Terms {
        let delta: Vec<f64> = cand.iter().zip(self.x).map(|(a, b)| a - b).collect();
        let proximity = match self.cfg.proximity {
            Proximity::L2 => delta.iter().map(|d| d * d).sum::<f64>().sqrt(),
            Proximity::L1 => delta.iter().map(|d| d.abs()).sum(),
        };
        let smoothness = if self.cfg.smoothness_weight > 0.0 {
            delta
                .chunks(self.length)
                .map(|ch| ch.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>())
                .sum()
        } else {
            0.0
        };
        let sparsity = if self.cfg.sparsity_weight > 0.0 {
            delta.iter().map(|d| d.abs()).sum()
        } else {
            0.0
        };
        Terms {
            validity: 0.0,
            proximity,
            smoothness,
            sparsity,
        }
    }

    /// Subgradient of the lambda-scaled penalty part.
    fn penalty_gradient(&self, cand: &[f64], lambda: f64) -> Vec<f64> {
        let delta: Vec<f64> = cand.iter().zip(self.x).map(|(a, b)| a - b).collect();
        let mut grad = match self.cfg.proximity {
            Proximity::L2 => {
                let norm = delta.iter().map(|d| d * d).sum::<f64>().sqrt();
                if norm > 0.0 {
                    delta.iter().map(|d| d / norm).collect()
                } else {
                    vec![0.0; delta.len()]
                }
            }
            Proximity::L1 => delta.iter().map(|&d| sign(d)).collect(),
        };
        if self.cfg.sparsity_weight > 0.0 {
            for (g, &d) in grad.iter_mut().zip(&delta) {
                *g += self.cfg.sparsity_weight * sign(d);
            }
        }
        if self.cfg.smoothness_weight > 0.0 {
            let s = self.cfg.smoothness_weight;
            for (ch, gch) in delta.chunks(self.length).zip(grad.chunks_mut(self.length)) {
                for t in 0..ch.len().saturating_sub(1) {
                    let sg = sign(ch[t + 1] - ch[t]);
                    gch[t + 1] += s * sg;
                    gch[t] -= s * sg;
                }
            }
        }
        grad.iter_mut().for_each(|g| *g /= lambda);
        grad
    }

    fn clamp(&self, cand: &mut [f64]) {
        if let Some(bounds) = &self.cfg.bounds {
            for (i, v) in cand.iter_mut().enumerate() {
                let (lo, hi) = bounds[i / self.length];
                *v = v.clamp(lo, hi);
            }
        }
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Best candidate so far by distance to the original.
#[derive(Default)]
struct Best {
    margin: Option<(f64, Vec<f64>)>,
    argmax: Option<(f64, Vec<f64>)>,
}

impl Best {
    fn offer(slot: &mut Option<(f64, Vec<f64>)>, dist: f64, cand: &[f64]) -> bool {
        match slot {
            Some((d, _)) if *d <= dist => false,
            _ => {
                *slot = Some((dist, cand.to_vec()));
                true
            }
        }
    }

    fn distance(&self) -> Option<f64> {
        self.margin.as_ref().or(self.argmax.as_ref()).map(|(d, _)| *d)
    }
}

fn optimize(
    model: &dyn Classifier,
    x: &TimeSeries,
    target: ClassLabel,
    cfg: &OptConfig,
    generator_id: &str,
) -> Result<CounterfactualResult> {
    cfg.validate()?;
    if model.as_gradient().is_none() {
        return Err(CfxError::Capability(format!("{generator_id} requires a gradient-capable classifier")));
    }
    let counted = CountingClassifier::new(model);
    if let Some(done) = already_target(&counted, x, target, generator_id, cfg.seed)? {
        return Ok(done);
    }
    let grad_model = counted.as_gradient().expect("checked above");
    if let Some(bounds) = &cfg.bounds {
        if bounds.len() != x.channels() {
            return Err(CfxError::Config(format!(
                "bounds list {} channels, series has {}",
                bounds.len(),
                x.channels()
            )));
        }
    }

    let margin = logit_margin(cfg.target_margin)?;
    let problem = Problem {
        x: x.values(),
        length: x.length(),
        cfg,
    };
    let loss_at = |cand: &[f64], lambda: f64| -> Result<f64> {
        let logits = grad_model.logits(&x.with_values(cand.to_vec())?)?;
        let mut terms = problem.penalty_terms(cand);
        terms.validity = hinge(&logits, target, margin);
        Ok(terms.total(lambda, cfg))
    };

    let mut current = x.values().to_vec();
    let mut lambda = cfg.lambda_init;
    let mut best = Best::default();
    let mut trace = Vec::new();
    let mut iteration = 0;

    while iteration < cfg.max_iters {
        let before = best.distance();
        let mut stage_valid = false;
        for _ in 0..cfg.inner_iters {
            if iteration >= cfg.max_iters {
                break;
            }
            let series = x.with_values(current.clone())?;
            let (logits, grad_validity) =
                grad_model.logits_with_vjp(&series, &|z| hinge_cotangent(z, target, margin))?;
            let mut terms = problem.penalty_terms(&current);
            terms.validity = hinge(&logits, target, margin);
            let loss = terms.total(lambda, cfg);

            let valid = argmax(&logits) == target;
            let margin_met = valid && logits[target] - logits[rival(&logits, target)] >= margin;
            let distance = l2(&current, x.values());
            if valid {
                stage_valid = true;
                Best::offer(&mut best.argmax, distance, &current);
            }
            if margin_met {
                Best::offer(&mut best.margin, distance, &current);
            }
            if cfg.record_trace {
                trace.push(TraceEntry {
                    iteration,
                    lambda,
                    loss,
                    validity_loss: terms.validity,
                    proximity: terms.proximity,
                    smoothness: terms.smoothness,
                    sparsity: terms.sparsity,
                    p_target: ProbVector::softmax(&logits).get(target),
                    distance,
                    valid,
                    margin_met,
                });
            }
            iteration += 1;

            let penalty_grad = problem.penalty_gradient(&current, lambda);
            let grad: Vec<f64> = grad_validity.iter().zip(&penalty_grad).map(|(a, b)| a + b).collect();
            if grad.iter().all(|&g| g == 0.0) {
                break;
            }
            let mut step = cfg.learning_rate;
            let mut accepted = None;
            for _ in 0..=MAX_HALVINGS {
                let mut cand: Vec<f64> = current.iter().zip(&grad).map(|(v, g)| v - step * g).collect();
                problem.clamp(&mut cand);
                if loss_at(&cand, lambda)? <= loss {
                    accepted = Some(cand);
                    break;
                }
                step *= 0.5;
            }
            match accepted {
                Some(cand) => current = cand,
                None => break,
            }
        }

        if !stage_valid {
            if lambda >= cfg.lambda_max {
                break;
            }
            lambda = (lambda * cfg.lambda_growth).min(cfg.lambda_max);
        } else if let (Some(old), Some(new)) = (before, best.distance()) {
            if new >= old - 1e-12 * old.max(1.0) {
                break;
            }
        }
    }

    let (values, margin_met) = match (best.margin, best.argmax) {
        (Some((_, v)), _) => (v, true),
        (None, Some((_, v))) => (v, false),
        (None, None) => (current, false),
    };
    let cf = x.with_values(values)?;
    let mut result = CounterfactualResult::assess(&counted, x, cf, target, generator_id, cfg.seed)?
        .with_meta("margin_met", margin_met)
        .with_meta("final_lambda", lambda);
    result.iterations = iteration;
    result.model_calls = counted.calls();
    result.trace = cfg.record_trace.then_some(trace);
    Ok(result)
}
