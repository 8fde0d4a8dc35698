//! Synthetic datasets and toy models with known ground truth.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::classifier::{Activation, Dense, Mlp};
use crate::data::{Dataset, LabeledInstance, TimeSeries};
use crate::error::{CfxError, Result};
use crate::rng::stream;

/// Two-class dataset: a noisy sine background, with a half-sine bump
/// planted at a fixed window in every instance of class `bump` (label 1)
/// and absent from class `plain` (label 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedPattern {
    pub instances: usize,
    pub channels: usize,
    pub length: usize,
    /// First step of the planted window.
    pub start: usize,
    /// Width of the planted window.
    pub width: usize,
    pub height: f64,
    /// Channel carrying the bump.
    pub pattern_channel: usize,
    pub noise: f64,
    pub sine_amplitude: f64,
    pub sine_period: f64,
    pub seed: u64,
}

impl Default for PlantedPattern {
    fn default() -> Self {
        Self {
            instances: 200,
            channels: 1,
            length: 100,
            start: 41,
            width: 8,
            height: 2.0,
            pattern_channel: 0,
            noise: 0.1,
            sine_amplitude: 1.0,
            sine_period: 40.0,
            seed: 0,
        }
    }
}

impl PlantedPattern {
    /// Half-open planted window `[start, start + width)`.
    pub fn window(&self) -> (usize, usize) {
        (self.start, self.start + self.width)
    }

    pub fn bump(&self, t: usize) -> f64 {
        if t < self.start || t >= self.start + self.width {
            return 0.0;
        }
        let u = (t - self.start) as f64 + 0.5;
        self.height * (std::f64::consts::PI * u / self.width as f64).sin()
    }

    /// Instances alternate between the classes, starting with `plain`. Each
    /// instance draws its own sine phase and noise.
    pub fn generate(&self) -> Result<Dataset> {
        if self.instances < 2 || self.channels == 0 || self.pattern_channel >= self.channels {
            return Err(CfxError::Config("planted pattern needs >= 2 instances and a valid channel".into()));
        }
        if self.width == 0 || self.start + self.width > self.length {
            return Err(CfxError::Config("planted window must fit inside the series".into()));
        }
        let noise = Normal::new(0.0, self.noise).map_err(|e| CfxError::Config(e.to_string()))?;
        let instances = (0..self.instances)
            .map(|i| {
                let label = i % 2;
                let mut rng = stream(self.seed, &[i as u64]);
                let mut values = Vec::with_capacity(self.channels * self.length);
                for c in 0..self.channels {
                    let phase = rng.random_range(0.0..std::f64::consts::TAU);
                    for t in 0..self.length {
                        let base = self.sine_amplitude * (std::f64::consts::TAU * t as f64 / self.sine_period + phase).sin();
                        let bump = if label == 1 && c == self.pattern_channel { self.bump(t) } else { 0.0 };
                        values.push(base + bump + noise.sample(&mut rng));
                    }
                }
                Ok(LabeledInstance {
                    series: TimeSeries::new(self.channels, self.length, values)?,
                    label,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset::new(instances, vec!["plain".into(), "bump".into()])?.with_name("planted_pattern"))
    }
}

/// One-input linear model with logits `(0, 2x - 1)`: class 1 wins for
/// `x > 0.5`, and `P(class 1) = sigmoid(2x - 1)`.
pub fn linear_toy_model() -> Mlp {
    let layer = Dense {
        inputs: 1,
        outputs: 2,
        weights: vec![0.0, 2.0],
        bias: vec![0.0, -1.0],
    };
    Mlp::from_layers(1, 1, vec![layer], Activation::Linear).expect("valid toy layer")
}

/// Evenly spaced one-step series on `[-1, 2]`, labeled by the linear toy's
/// decision boundary.
pub fn linear_toy_dataset(points: usize) -> Result<Dataset> {
    let points = points.max(2);
    let instances = (0..points)
        .map(|i| {
            let x = -1.0 + 3.0 * i as f64 / (points - 1) as f64;
            Ok(LabeledInstance {
                series: TimeSeries::univariate(vec![x])?,
                label: usize::from(x > 0.5),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(instances, vec!["low".into(), "high".into()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::Classifier;

    #[test]
    fn planted_shapes_and_balance() {
        let d = PlantedPattern::default().generate().unwrap();
        assert_eq!(d.len(), 200);
        assert_eq!(d.shape(), (1, 100));
        assert_eq!(d.labels().filter(|&l| l == 1).count(), 100);
        assert_eq!(d, PlantedPattern::default().generate().unwrap());
    }

    #[test]
    fn bump_lives_in_window() {
        let p = PlantedPattern::default();
        assert_eq!(p.bump(40), 0.0);
        assert_eq!(p.bump(49), 0.0);
        assert!(p.bump(45) > 1.9);
    }

    #[test]
    fn linear_toy_boundary() {
        let m = linear_toy_model();
        let p = m.predict_proba(&TimeSeries::univariate(vec![0.5]).unwrap()).unwrap();
        assert!((p.get(1) - 0.5).abs() < 1e-15);
        let d = linear_toy_dataset(31).unwrap();
        assert_eq!(crate::classifier::accuracy(&m, &d).unwrap(), 1.0);
    }
}
