//! Fully connected network with manual backpropagation. Shared by the MLP
//! classifier and the autoencoder.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::str::FromStr;

use crate::error::{CfxError, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
    Linear,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Tanh => v.tanh(),
            Activation::Linear => v,
        }
    }

    /// Derivative expressed through the pre-activation and activated value.
    fn derivative(self, pre: f64, post: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - post * post,
            Activation::Linear => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Linear => "linear",
        }
    }
}

impl FromStr for Activation {
    type Err = CfxError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "linear" => Ok(Activation::Linear),
            other => Err(CfxError::Config(format!("unknown activation {other:?}"))),
        }
    }
}

/// Row-major `outputs x inputs` weight matrix plus bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn glorot<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = (0..inputs * outputs).map(|_| rng.random_range(-limit..=limit)).collect();
        Self {
            inputs,
            outputs,
            weights,
            bias: vec![0.0; outputs],
        }
    }

    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.weights.chunks(self.inputs).zip(&self.bias).map(|(row, b)| {
            row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b
        }));
    }
}

/// Dense layers with the activation applied after every layer but the last.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub layers: Vec<Dense>,
    pub activation: Activation,
}

/// Pre- and post-activation values of every layer for one input.
pub struct Trace {
    /// `post[0]` is the input, `post[l + 1]` the output of layer `l`.
    post: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.post.last().map(Vec::as_slice).unwrap_or_default()
    }
}

impl Network {
    pub fn new(layers: Vec<Dense>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(CfxError::Config("network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(CfxError::Config(format!(
                    "layer sizes do not chain: {} outputs feed {} inputs",
                    pair[0].outputs, pair[1].inputs
                )));
            }
        }
        for layer in &layers {
            if layer.weights.len() != layer.inputs * layer.outputs || layer.bias.len() != layer.outputs {
                return Err(CfxError::Config("layer parameter count mismatch".into()));
            }
        }
        Ok(Self { layers, activation })
    }

    /// Glorot-uniform initialization of the layer widths in `sizes`
    /// (input first, output last); biases start at zero.
    pub fn init(sizes: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(CfxError::Config(format!("invalid layer sizes {sizes:?}")));
        }
        let mut rng = rng::stream(seed, &[0]);
        let layers = sizes.windows(2).map(|w| Dense::glorot(w[0], w[1], &mut rng)).collect();
        Self::new(layers, activation)
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_size(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let last = self.layers.len() - 1;
        let mut current = x.to_vec();
        let mut next = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            layer.forward(&current, &mut next);
            if l != last {
                next.iter_mut().for_each(|v| *v = self.activation.apply(*v));
            }
            std::mem::swap(&mut current, &mut next);
        }
        current
    }

    pub fn trace(&self, x: &[f64]) -> Trace {
        let last = self.layers.len() - 1;
        let mut post = vec![x.to_vec()];
        let mut pre = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::new();
            layer.forward(&post[l], &mut z);
            let a = if l == last {
                z.clone()
            } else {
                z.iter().map(|&v| self.activation.apply(v)).collect()
            };
            pre.push(z);
            post.push(a);
        }
        Trace { post, pre }
    }

    /// Pulls `cotangent` (w.r.t. the output) back to the input. When `grads`
    /// is given, parameter gradients are accumulated into it.
    pub fn backward(&self, trace: &Trace, cotangent: &[f64], mut grads: Option<&mut [Dense]>) -> Vec<f64> {
        let last = self.layers.len() - 1;
        let mut delta = cotangent.to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            if l != last {
                for (d, (&z, &a)) in delta.iter_mut().zip(trace.pre[l].iter().zip(&trace.post[l + 1])) {
                    *d *= self.activation.derivative(z, a);
                }
            }
            let input = &trace.post[l];
            if let Some(g) = grads.as_deref_mut() {
                let g = &mut g[l];
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    g.bias[o] += d;
                    let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    row.iter_mut().zip(input).for_each(|(w, v)| *w += d * v);
                }
            }
            let mut back = vec![0.0; layer.inputs];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                back.iter_mut().zip(row).for_each(|(b, w)| *b += d * w);
            }
            delta = back;
        }
        delta
    }

    pub fn zero_grads(&self) -> Vec<Dense> {
        self.layers.iter().map(|l| Dense::zeros(l.inputs, l.outputs)).collect()
    }

    pub fn parameters(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.bias).copied())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSpec {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub momentum: f64,
    pub seed: u64,
}

impl TrainSpec {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(CfxError::Train {
                epoch: 0,
                message: "at least one epoch is required".into(),
            });
        }
        if !(self.learning_rate > 0.0) || self.batch_size == 0 || !(0.0..1.0).contains(&self.momentum) {
            return Err(CfxError::Config(format!(
                "invalid training spec: learning_rate={}, batch_size={}, momentum={}",
                self.learning_rate, self.batch_size, self.momentum
            )));
        }
        Ok(())
    }
}

/// Momentum buffers for one network.
pub struct Momentum {
    velocity: Vec<Dense>,
    momentum: f64,
}

impl Momentum {
    pub fn new(net: &Network, momentum: f64) -> Self {
        Self {
            velocity: net.zero_grads(),
            momentum,
        }
    }

    /// `v = momentum * v - scale * g; p += v`.
    pub fn step(&mut self, net: &mut Network, grads: &[Dense], scale: f64) {
        for ((layer, g), v) in net.layers.iter_mut().zip(grads).zip(&mut self.velocity) {
            let params = layer.weights.iter_mut().chain(layer.bias.iter_mut());
            let gs = g.weights.iter().chain(&g.bias);
            let vs = v.weights.iter_mut().chain(v.bias.iter_mut());
            for ((p, gv), vel) in params.zip(gs).zip(vs) {
                *vel = self.momentum * *vel - scale * gv;
                *p += *vel;
            }
        }
    }
}

pub(crate) fn check_finite(net: &Network, epoch: usize, epoch_loss: f64) -> Result<()> {
    if !epoch_loss.is_finite() || net.parameters().any(|p| !p.is_finite()) {
        return Err(CfxError::Train {
            epoch,
            message: "loss diverged".into(),
        });
    }
    Ok(())
}

/// Mini-batch gradient descent with momentum. `loss` maps (sample index,
/// network output) to the sample loss and its gradient w.r.t. the output.
/// Returns the mean loss of the final epoch.
pub fn train<F>(net: &mut Network, inputs: &[Vec<f64>], spec: &TrainSpec, loss: F) -> Result<f64>
where
    F: Fn(usize, &[f64]) -> (f64, Vec<f64>),
{
    spec.validate()?;
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut shuffle = rng::stream(spec.seed, &[1]);
    let mut momentum = Momentum::new(net, spec.momentum);
    let mut epoch_loss = f64::NAN;

    for epoch in 1..=spec.epochs {
        order.shuffle(&mut shuffle);
        let mut total = 0.0;
        for batch in order.chunks(spec.batch_size) {
            let mut grads = net.zero_grads();
            for &i in batch {
                let trace = net.trace(&inputs[i]);
                let (l, cot) = loss(i, trace.output());
                total += l;
                net.backward(&trace, &cot, Some(&mut grads));
            }
            momentum.step(net, &grads, spec.learning_rate / batch.len() as f64);
        }
        epoch_loss = total / inputs.len() as f64;
        check_finite(net, epoch, epoch_loss)?;
    }
    Ok(epoch_loss)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backward_matches_finite_differences() {
        let net = Network::init(&[5, 7, 3], Activation::Tanh, 11).unwrap();
        let x = [0.3, -0.2, 0.9, 0.1, -0.7];
        let cot = [0.5, -1.0, 2.0];
        let grad = net.backward(&net.trace(&x), &cot, None);
        let f = |x: &[f64]| net.forward(x).iter().zip(&cot).map(|(o, c)| o * c).sum::<f64>();
        let h = 1e-5;
        for i in 0..x.len() {
            let mut up = x.to_vec();
            let mut down = x.to_vec();
            up[i] += h;
            down[i] -= h;
            let fd = (f(&up) - f(&down)) / (2.0 * h);
            assert!((fd - grad[i]).abs() < 1e-8, "{i}: {fd} vs {}", grad[i]);
        }
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = Network::init(&[10, 4, 2], Activation::Relu, 5).unwrap();
        let b = Network::init(&[10, 4, 2], Activation::Relu, 5).unwrap();
        assert_eq!(a, b);
        let limit = (6.0f64 / 14.0).sqrt();
        assert!(a.layers[0].weights.iter().all(|w| w.abs() <= limit));
        assert!(a.layers[0].bias.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn chained_sizes_checked() {
        assert!(Network::new(vec![Dense::zeros(2, 3), Dense::zeros(4, 1)], Activation::Relu).is_err());
    }
}
