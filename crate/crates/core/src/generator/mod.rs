//! Counterfactual generators and their shared result types.
//!
//! Every generator follows the same contract: if the model already assigns
//! the target class to `x`, the original is returned unchanged and valid.
//! A result is flagged valid only when the model's argmax on the
//! counterfactual equals the target.

pub mod evolutionary;
pub mod instance;
pub mod latent;
pub mod optimization;
pub mod segment;

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::classifier::{Classifier, CountingClassifier};
use crate::data::{ClassLabel, Dataset, TimeSeries};
use crate::error::{CfxError, Result};

pub use evolutionary::{EvoConfig, SetOrder};
pub use instance::{ComteConfig, NativeGuideConfig};
pub use latent::{Autoencoder, LatentConfig};
pub use optimization::OptConfig;
pub use segment::{DiscordConfig, GreedyWindowConfig};

pub const GENERATOR_IDS: [&str; 8] = [
    "wachter",
    "tscf",
    "native_guide",
    "comte",
    "evo",
    "discord",
    "greedy_window",
    "latentcf",
];

/// One optimizer iterate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub lambda: f64,
    pub loss: f64,
    pub validity_loss: f64,
    pub proximity: f64,
    pub smoothness: f64,
    pub sparsity: f64,
    pub p_target: f64,
    /// L2 distance of the iterate to the original.
    pub distance: f64,
    /// Argmax of the iterate equals the target.
    pub valid: bool,
    /// Target logit leads every other logit by the configured margin.
    pub margin_met: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualResult {
    pub original: TimeSeries,
    pub counterfactual: TimeSeries,
    pub target: ClassLabel,
    pub achieved: ClassLabel,
    pub valid: bool,
    pub p_target: f64,
    pub generator_id: String,
    pub iterations: usize,
    pub model_calls: u64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TraceEntry>>,
    /// Generator-specific provenance (windows, donors, channel sets, ...).
    #[serde(default)]
    pub metadata: BTreeMap<String, Value>,
}

impl CounterfactualResult {
    /// Scores `counterfactual` with the model and fills achieved class,
    /// target probability and the argmax validity flag.
    pub fn assess(
        model: &dyn Classifier,
        original: &TimeSeries,
        counterfactual: TimeSeries,
        target: ClassLabel,
        generator_id: &str,
        seed: u64,
    ) -> Result<Self> {
        let p = model.predict_proba(&counterfactual)?;
        let achieved = p.argmax();
        Ok(Self {
            original: original.clone(),
            counterfactual,
            target,
            achieved,
            valid: achieved == target,
            p_target: p.get(target),
            generator_id: generator_id.to_string(),
            iterations: 0,
            model_calls: 0,
            seed,
            trace: None,
            metadata: BTreeMap::new(),
        })
    }

    pub fn with_meta(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.metadata.insert(key.to_string(), value.into());
        self
    }
}

/// Several counterfactuals for one original and target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualSet {
    pub members: Vec<CounterfactualResult>,
    pub budget_exhausted: bool,
}

impl CounterfactualSet {
    pub fn single(result: CounterfactualResult) -> Self {
        Self {
            members: vec![result],
            budget_exhausted: false,
        }
    }

    /// The preferred member (first after the generator's own ordering).
    pub fn primary(&self) -> &CounterfactualResult {
        &self.members[0]
    }
}

pub(crate) fn check_target(model: &dyn Classifier, x: &TimeSeries, target: ClassLabel) -> Result<()> {
    model.check_input(x)?;
    if target >= model.num_classes() {
        return Err(CfxError::Config(format!(
            "target class {target} out of range for {} classes",
            model.num_classes()
        )));
    }
    Ok(())
}

/// Shared degenerate-input rule: when `x` is already classified as the
/// target, return it unchanged.
pub(crate) fn already_target(
    model: &CountingClassifier<'_>,
    x: &TimeSeries,
    target: ClassLabel,
    generator_id: &str,
    seed: u64,
) -> Result<Option<CounterfactualResult>> {
    check_target(model, x, target)?;
    let result = CounterfactualResult::assess(model, x, x.clone(), target, generator_id, seed)?;
    if result.valid {
        let mut result = result.with_meta("degenerate", true);
        result.model_calls = model.calls();
        Ok(Some(result))
    } else {
        Ok(None)
    }
}

/// Converts a probability margin `m` (target probability at least `0.5 + m`)
/// into the equivalent pairwise logit gap `ln((0.5 + m) / (0.5 - m))`.
pub fn logit_margin(margin: f64) -> Result<f64> {
    if !(0.0..0.5).contains(&margin) {
        return Err(CfxError::Config(format!("target margin must be in [0, 0.5), got {margin}")));
    }
    Ok(((0.5 + margin) / (0.5 - margin)).ln())
}

/// Everything a generator may draw on besides the instance itself.
#[derive(Clone, Copy)]
pub struct GenerationContext<'a> {
    pub model: &'a dyn Classifier,
    /// Reference population, normally the training set.
    pub dataset: &'a Dataset,
    pub autoencoder: Option<&'a Autoencoder>,
}

/// A configured generator, selectable by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case")]
pub enum GeneratorSpec {
    Wachter(OptConfig),
    Tscf(OptConfig),
    NativeGuide(NativeGuideConfig),
    Comte(ComteConfig),
    Evo(EvoConfig),
    Discord(DiscordConfig),
    GreedyWindow(GreedyWindowConfig),
    Latentcf(LatentConfig),
}

impl FromStr for GeneratorSpec {
    type Err = CfxError;

    fn from_str(id: &str) -> Result<Self> {
        Ok(match id {
            "wachter" => GeneratorSpec::Wachter(OptConfig::wachter()),
            "tscf" => GeneratorSpec::Tscf(OptConfig::tscf()),
            "native_guide" => GeneratorSpec::NativeGuide(NativeGuideConfig::default()),
            "comte" => GeneratorSpec::Comte(ComteConfig::default()),
            "evo" => GeneratorSpec::Evo(EvoConfig::default()),
            "discord" => GeneratorSpec::Discord(DiscordConfig::default()),
            "greedy_window" => GeneratorSpec::GreedyWindow(GreedyWindowConfig::default()),
            "latentcf" => GeneratorSpec::Latentcf(LatentConfig::default()),
            other => {
                return Err(CfxError::Config(format!(
                    "unknown generator {other:?}; valid ids: {}",
                    GENERATOR_IDS.join(", ")
                )))
            }
        })
    }
}

impl GeneratorSpec {
    pub fn id(&self) -> &'static str {
        match self {
            GeneratorSpec::Wachter(_) => "wachter",
            GeneratorSpec::Tscf(_) => "tscf",
            GeneratorSpec::NativeGuide(_) => "native_guide",
            GeneratorSpec::Comte(_) => "comte",
            GeneratorSpec::Evo(_) => "evo",
            GeneratorSpec::Discord(_) => "discord",
            GeneratorSpec::GreedyWindow(_) => "greedy_window",
            GeneratorSpec::Latentcf(_) => "latentcf",
        }
    }

    pub fn needs_gradients(&self) -> bool {
        matches!(
            self,
            GeneratorSpec::Wachter(_) | GeneratorSpec::Tscf(_) | GeneratorSpec::Latentcf(_)
        )
    }

    pub fn needs_autoencoder(&self) -> bool {
        matches!(self, GeneratorSpec::Latentcf(_))
    }

    /// Sets one configuration key from its textual value. Unknown keys are
    /// rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match self {
            GeneratorSpec::Wachter(c) | GeneratorSpec::Tscf(c) => c.set(key, value),
            GeneratorSpec::NativeGuide(c) => c.set(key, value),
            GeneratorSpec::Comte(c) => c.set(key, value),
            GeneratorSpec::Evo(c) => c.set(key, value),
            GeneratorSpec::Discord(c) => c.set(key, value),
            GeneratorSpec::GreedyWindow(c) => c.set(key, value),
            GeneratorSpec::Latentcf(c) => c.set(key, value),
        }
    }

    /// Runs the generator with `seed` overriding the configured seed.
    pub fn generate_set(
        &self,
        ctx: &GenerationContext<'_>,
        x: &TimeSeries,
        target: ClassLabel,
        seed: u64,
    ) -> Result<CounterfactualSet> {
        let model = ctx.model;
        let data = ctx.dataset;
        let single = |r: Result<CounterfactualResult>| r.map(CounterfactualSet::single);
        match self {
            GeneratorSpec::Wachter(c) => single(optimization::wachter_generate(model, x, target, &c.reseeded(seed))),
            GeneratorSpec::Tscf(c) => single(optimization::tscf_generate(model, x, target, &c.reseeded(seed))),
            GeneratorSpec::NativeGuide(c) => single(instance::native_guide_generate(model, data, x, target, c)),
            GeneratorSpec::Comte(c) => single(instance::comte_generate(model, data, x, target, c)),
            GeneratorSpec::Evo(c) => {
                let cfg = EvoConfig { seed, ..c.clone() };
                evolutionary::evolve_generate(model, data, x, target, &cfg)
            }
            GeneratorSpec::Discord(c) => single(segment::discord_generate(model, data, x, target, c)),
            GeneratorSpec::GreedyWindow(c) => single(segment::greedy_window_generate(model, data, x, target, c)),
            GeneratorSpec::Latentcf(c) => {
                let ae = ctx
                    .autoencoder
                    .ok_or_else(|| CfxError::Capability("latentcf needs a trained autoencoder".into()))?;
                let cfg = LatentConfig { seed, ..c.clone() };
                single(latent::latentcf_generate(model, ae, x, target, &cfg))
            }
        }
        .map(|mut set| {
            for m in &mut set.members {
                m.seed = seed;
            }
            set
        })
    }

    pub fn generate(
        &self,
        ctx: &GenerationContext<'_>,
        x: &TimeSeries,
        target: ClassLabel,
        seed: u64,
    ) -> Result<CounterfactualResult> {
        let set = self.generate_set(ctx, x, target, seed)?;
        Ok(set.members.into_iter().next().expect("generators return at least one member"))
    }
}

pub(crate) fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| CfxError::Config(format!("invalid value {value:?} for {key}")))
}

pub(crate) fn parse_optional<T: FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    match value.trim() {
        "auto" | "none" => Ok(None),
        v => parse_value(key, v).map(Some),
    }
}

pub(crate) fn unknown_key(generator: &str, key: &str) -> CfxError {
    CfxError::Config(format!("unknown key {key:?} for generator {generator}"))
}

/// Copies `source[start..end]` into `target` on the listed channels.
pub(crate) fn transplant(
    target: &mut [f64],
    source: &TimeSeries,
    channels: impl IntoIterator<Item = usize>,
    start: usize,
    end: usize,
) {
    let t = source.length();
    for c in channels {
        target[c * t + start..c * t + end].copy_from_slice(&source.channel(c)[start..end]);
    }
}
