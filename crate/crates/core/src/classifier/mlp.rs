use serde::{Deserialize, Serialize};

use super::network::{self, Activation, Dense, Network, TrainSpec};
use super::{accuracy, require_two_classes, Classifier, GradientClassifier, ProbVector};
use crate::data::{Dataset, TimeSeries};
use crate::error::{CfxError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub hidden_sizes: Vec<usize>,
    pub activation: Activation,
    pub seed: u64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub momentum: f64,
}

impl Default for MlpSpec {
    fn default() -> Self {
        Self {
            hidden_sizes: vec![64],
            activation: Activation::Relu,
            seed: 0,
            learning_rate: 0.01,
            epochs: 100,
            batch_size: 16,
            momentum: 0.9,
        }
    }
}

impl MlpSpec {
    pub(crate) fn train_spec(&self) -> TrainSpec {
        TrainSpec {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            momentum: self.momentum,
            seed: self.seed,
        }
    }
}

/// Fully connected classifier over the flattened (channel-major) series.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    network: Network,
    channels: usize,
    length: usize,
    spec: Option<MlpSpec>,
    train_accuracy: Option<f64>,
}

impl Mlp {
    /// Builds a model from explicit layers. The first layer must accept
    /// `channels * length` inputs; the last layer's width is the class count.
    pub fn from_layers(channels: usize, length: usize, layers: Vec<Dense>, activation: Activation) -> Result<Self> {
        let network = Network::new(layers, activation)?;
        if network.input_size() != channels * length {
            return Err(CfxError::shape(channels * length, network.input_size()));
        }
        Ok(Self {
            network,
            channels,
            length,
            spec: None,
            train_accuracy: None,
        })
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn train_accuracy(&self) -> Option<f64> {
        self.train_accuracy
    }

    /// Training hyper-parameters, when the model came from [`train_mlp`].
    pub fn spec(&self) -> Option<&MlpSpec> {
        self.spec.as_ref()
    }

    pub(crate) fn with_metadata(mut self, spec: Option<MlpSpec>, train_accuracy: Option<f64>) -> Self {
        self.spec = spec;
        self.train_accuracy = train_accuracy;
        self
    }
}

pub fn train_mlp(train: &Dataset, spec: &MlpSpec) -> Result<Mlp> {
    require_two_classes(train)?;
    if spec.hidden_sizes.contains(&0) {
        return Err(CfxError::Config("hidden layer sizes must be positive".into()));
    }
    let (channels, length) = train.shape();
    let mut sizes = vec![channels * length];
    sizes.extend(&spec.hidden_sizes);
    sizes.push(train.num_classes());
    let mut network = Network::init(&sizes, spec.activation, spec.seed)?;

    let inputs: Vec<Vec<f64>> = train.instances().iter().map(|i| i.series.values().to_vec()).collect();
    let labels: Vec<usize> = train.labels().collect();
    network::train(&mut network, &inputs, &spec.train_spec(), |i, logits| {
        let p = ProbVector::softmax(logits);
        let mut cot = p.as_slice().to_vec();
        cot[labels[i]] -= 1.0;
        (-p.get(labels[i]).max(1e-300).ln(), cot)
    })?;

    let mut model = Mlp {
        network,
        channels,
        length,
        spec: Some(spec.clone()),
        train_accuracy: None,
    };
    model.train_accuracy = Some(accuracy(&model, train)?);
    Ok(model)
}

impl Classifier for Mlp {
    fn num_classes(&self) -> usize {
        self.network.output_size()
    }

    fn input_shape(&self) -> (usize, usize) {
        (self.channels, self.length)
    }

    fn predict_proba(&self, x: &TimeSeries) -> Result<ProbVector> {
        Ok(ProbVector::softmax(&self.logits(x)?))
    }

    fn as_gradient(&self) -> Option<&dyn GradientClassifier> {
        Some(self)
    }
}

impl GradientClassifier for Mlp {
    fn logits(&self, x: &TimeSeries) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.network.forward(x.values()))
    }

    fn logits_with_vjp(
        &self,
        x: &TimeSeries,
        cotangent: &dyn Fn(&[f64]) -> Vec<f64>,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_input(x)?;
        let trace = self.network.trace(x.values());
        let logits = trace.output().to_vec();
        let cot = cotangent(&logits);
        let grad = self.network.backward(&trace, &cot, None);
        Ok((logits, grad))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::input_gradient;
    use crate::data::LabeledInstance;
    use crate::rng;
    use rand_distr::{Distribution, Normal};

    fn separable_toy() -> Dataset {
        let mut rng = rng::stream(42, &[]);
        let noise = Normal::new(0.0, 0.01).unwrap();
        let instances = (0..40)
            .map(|i| {
                let label = i % 2;
                let values = (0..8).map(|_| label as f64 + noise.sample(&mut rng)).collect();
                LabeledInstance {
                    series: TimeSeries::univariate(values).unwrap(),
                    label,
                }
            })
            .collect();
        Dataset::new(instances, vec!["zeros".into(), "ones".into()]).unwrap()
    }

    #[test]
    fn separable_toy_reaches_full_accuracy() {
        let spec = MlpSpec {
            epochs: 50,
            ..MlpSpec::default()
        };
        let model = train_mlp(&separable_toy(), &spec).unwrap();
        assert_eq!(model.train_accuracy(), Some(1.0));
    }

    #[test]
    fn same_seed_same_weights() {
        let spec = MlpSpec {
            epochs: 5,
            seed: 9,
            ..MlpSpec::default()
        };
        let a = train_mlp(&separable_toy(), &spec).unwrap();
        let b = train_mlp(&separable_toy(), &spec).unwrap();
        let bits = |m: &Mlp| m.network().parameters().map(f64::to_bits).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn zero_epochs_rejected() {
        let spec = MlpSpec {
            epochs: 0,
            ..MlpSpec::default()
        };
        assert!(matches!(train_mlp(&separable_toy(), &spec), Err(CfxError::Train { epoch: 0, .. })));
    }

    #[test]
    fn divergence_reports_epoch() {
        let spec = MlpSpec {
            learning_rate: 1e200,
            momentum: 0.0,
            epochs: 10,
            ..MlpSpec::default()
        };
        assert!(matches!(train_mlp(&separable_toy(), &spec), Err(CfxError::Train { .. })));
    }

    #[test]
    fn zero_weights_give_uniform_and_zero_gradient() {
        let m = Mlp::from_layers(1, 4, vec![Dense::zeros(4, 3), Dense::zeros(3, 3)], Activation::Relu).unwrap();
        let x = TimeSeries::univariate(vec![1.0, -2.0, 3.0, 0.5]).unwrap();
        let p = m.predict_proba(&x).unwrap();
        for v in p.as_slice() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let g = input_gradient(&m, &x, 2).unwrap();
        assert!(g.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_layer_gradient_is_weight_row() {
        let layer = Dense {
            inputs: 3,
            outputs: 2,
            weights: vec![1.0, 2.0, 3.0, -1.0, 0.5, 4.0],
            bias: vec![0.1, -0.1],
        };
        let m = Mlp::from_layers(1, 3, vec![layer], Activation::Relu).unwrap();
        let x = TimeSeries::univariate(vec![0.3, 0.2, -0.4]).unwrap();
        assert_eq!(input_gradient(&m, &x, 1).unwrap().values(), &[-1.0, 0.5, 4.0]);
        assert!(input_gradient(&m, &x, 2).is_err());
    }

    #[test]
    fn shape_mismatch() {
        let m = Mlp::from_layers(1, 3, vec![Dense::zeros(3, 2)], Activation::Relu).unwrap();
        let x = TimeSeries::univariate(vec![0.0; 4]).unwrap();
        assert!(matches!(m.predict_proba(&x), Err(CfxError::Shape { .. })));
    }
}
