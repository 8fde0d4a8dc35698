//! Mirrored fully connected autoencoder and latent-space counterfactual
//! search: descend on the latent code, decode back to the input domain.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::optimization::{hinge, hinge_cotangent};
use super::{already_target, logit_margin, parse_value, unknown_key, CounterfactualResult};
use crate::classifier::network::{check_finite, Momentum, Network};
use crate::classifier::{Classifier, CountingClassifier, GradientClassifier, MlpSpec};
use crate::data::{ClassLabel, Dataset, TimeSeries};
use crate::error::{CfxError, Result};
use crate::rng::{derive_seed, stream};

/// Encoder `[C*T, hidden.., d]` and decoder `[d, ..hidden, C*T]`, both with
/// linear output layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Autoencoder {
    encoder: Network,
    decoder: Network,
    channels: usize,
    length: usize,
    spec: Option<MlpSpec>,
    reconstruction_mse: f64,
}

impl Autoencoder {
    pub fn from_parts(
        encoder: Network,
        decoder: Network,
        channels: usize,
        length: usize,
        spec: Option<MlpSpec>,
        reconstruction_mse: f64,
    ) -> Result<Self> {
        let n = channels * length;
        if encoder.input_size() != n || decoder.output_size() != n {
            return Err(CfxError::shape(n, encoder.input_size()));
        }
        if encoder.output_size() != decoder.input_size() {
            return Err(CfxError::shape(encoder.output_size(), decoder.input_size()));
        }
        Ok(Self {
            encoder,
            decoder,
            channels,
            length,
            spec,
            reconstruction_mse,
        })
    }

    pub fn input_shape(&self) -> (usize, usize) {
        (self.channels, self.length)
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.output_size()
    }

    pub fn spec(&self) -> Option<&MlpSpec> {
        self.spec.as_ref()
    }

    /// Mean squared reconstruction error on the training set.
    pub fn reconstruction_mse(&self) -> f64 {
        self.reconstruction_mse
    }

    pub fn encoder(&self) -> &Network {
        &self.encoder
    }

    pub fn decoder(&self) -> &Network {
        &self.decoder
    }

    pub fn encode(&self, x: &TimeSeries) -> Result<Vec<f64>> {
        if x.shape() != self.input_shape() {
            return Err(CfxError::shape(self.channels * self.length, x.size()));
        }
        Ok(self.encoder.forward(x.values()))
    }

    pub fn decode(&self, z: &[f64]) -> Result<TimeSeries> {
        if z.len() != self.latent_dim() {
            return Err(CfxError::shape(self.latent_dim(), z.len()));
        }
        TimeSeries::new(self.channels, self.length, self.decoder.forward(z))
    }

    pub fn reconstruct(&self, x: &TimeSeries) -> Result<TimeSeries> {
        self.decode(&self.encode(x)?)
    }
}

/// Trains the autoencoder on mean squared reconstruction error with the
/// optimizer settings of `spec` (hidden sizes, activation, learning rate,
/// epochs, batch size, momentum, seed).
pub fn train_autoencoder(train: &Dataset, latent_dim: usize, spec: &MlpSpec) -> Result<Autoencoder> {
    if latent_dim == 0 {
        return Err(CfxError::Config("latent dimension must be positive".into()));
    }
    if spec.hidden_sizes.contains(&0) {
        return Err(CfxError::Config("hidden layer sizes must be positive".into()));
    }
    let ts = spec.train_spec();
    ts.validate()?;
    let (channels, length) = train.shape();
    let n = channels * length;
    let mut sizes = vec![n];
    sizes.extend(&spec.hidden_sizes);
    sizes.push(latent_dim);
    let mut encoder = Network::init(&sizes, spec.activation, derive_seed(spec.seed, &[1]))?;
    sizes.reverse();
    let mut decoder = Network::init(&sizes, spec.activation, derive_seed(spec.seed, &[2]))?;

    let inputs: Vec<&[f64]> = train.instances().iter().map(|i| i.series.values()).collect();
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut shuffle = stream(spec.seed, &[3]);
    let mut enc_m = Momentum::new(&encoder, ts.momentum);
    let mut dec_m = Momentum::new(&decoder, ts.momentum);
    for epoch in 1..=ts.epochs {
        order.shuffle(&mut shuffle);
        let mut total = 0.0;
        for batch in order.chunks(ts.batch_size) {
            let mut enc_g = encoder.zero_grads();
            let mut dec_g = decoder.zero_grads();
            for &i in batch {
                let x = inputs[i];
                let te = encoder.trace(x);
                let td = decoder.trace(te.output());
                let diff: Vec<f64> = td.output().iter().zip(x).map(|(o, v)| o - v).collect();
                total += diff.iter().map(|d| d * d).sum::<f64>() / n as f64;
                let cot: Vec<f64> = diff.iter().map(|d| 2.0 * d / n as f64).collect();
                let gz = decoder.backward(&td, &cot, Some(&mut dec_g));
                encoder.backward(&te, &gz, Some(&mut enc_g));
            }
            let scale = ts.learning_rate / batch.len() as f64;
            enc_m.step(&mut encoder, &enc_g, scale);
            dec_m.step(&mut decoder, &dec_g, scale);
        }
        let mean = total / inputs.len() as f64;
        check_finite(&encoder, epoch, mean)?;
        check_finite(&decoder, epoch, mean)?;
    }

    let mse = inputs
        .iter()
        .map(|x| {
            let out = decoder.forward(&encoder.forward(x));
            out.iter().zip(*x).map(|(o, v)| (o - v) * (o - v)).sum::<f64>() / n as f64
        })
        .sum::<f64>()
        / inputs.len() as f64;
    Autoencoder::from_parts(encoder, decoder, channels, length, Some(spec.clone()), mse)
}

/// Logits of `model(decode(z))` and the gradient of `cotangent(logits) ·
/// logits` with respect to `z`.
pub fn decoded_logits_with_vjp(
    model: &dyn GradientClassifier,
    ae: &Autoencoder,
    z: &[f64],
    cotangent: &dyn Fn(&[f64]) -> Vec<f64>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if z.len() != ae.latent_dim() {
        return Err(CfxError::shape(ae.latent_dim(), z.len()));
    }
    let trace = ae.decoder.trace(z);
    let x = TimeSeries::new(ae.channels, ae.length, trace.output().to_vec())?;
    let (logits, gx) = model.logits_with_vjp(&x, cotangent)?;
    Ok((logits, ae.decoder.backward(&trace, &gx, None)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentConfig {
    /// Weight of the quadratic anchor `||z - z0||^2`.
    pub latent_weight: f64,
    pub learning_rate: f64,
    pub max_iters: usize,
    /// Probability margin, as for the input-space optimizers.
    pub target_margin: f64,
    pub seed: u64,
}

impl Default for LatentConfig {
    fn default() -> Self {
        Self {
            latent_weight: 0.01,
            learning_rate: 0.05,
            max_iters: 500,
            target_margin: 0.05,
            seed: 0,
        }
    }
}

impl LatentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.latent_weight >= 0.0) || !self.latent_weight.is_finite() {
            return Err(CfxError::Config("latent_weight must be finite and non-negative".into()));
        }
        if !(self.learning_rate > 0.0) || self.max_iters == 0 {
            return Err(CfxError::Config("learning_rate and max_iters must be positive".into()));
        }
        logit_margin(self.target_margin).map(|_| ())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "latent_weight" => self.latent_weight = parse_value(key, value)?,
            "learning_rate" => self.learning_rate = parse_value(key, value)?,
            "max_iters" => self.max_iters = parse_value(key, value)?,
            "target_margin" => self.target_margin = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            _ => return Err(unknown_key("latentcf", key)),
        }
        Ok(())
    }
}

const MAX_HALVINGS: usize = 8;

/// Gradient descent on `hinge(model(decode(z))) + mu * ||z - z0||^2` from
/// `z0 = encode(x)`. Returns the decoded valid iterate closest to `x` in
/// input space, or the last iterate flagged invalid.
pub fn latentcf_generate(
    model: &dyn Classifier,
    ae: &Autoencoder,
    x: &TimeSeries,
    target: ClassLabel,
    cfg: &LatentConfig,
) -> Result<CounterfactualResult> {
    cfg.validate()?;
    if model.as_gradient().is_none() {
        return Err(CfxError::Capability("latentcf requires a gradient-capable classifier".into()));
    }
    if ae.input_shape() != x.shape() {
        return Err(CfxError::shape(ae.channels * ae.length, x.size()));
    }
    let counted = CountingClassifier::new(model);
    if let Some(done) = already_target(&counted, x, target, "latentcf", cfg.seed)? {
        return Ok(done);
    }
    let grad_model = counted.as_gradient().expect("checked above");
    let margin = logit_margin(cfg.target_margin)?;
    let mu = cfg.latent_weight;
    let z0 = ae.encode(x)?;
    let anchor = |z: &[f64]| mu * z.iter().zip(&z0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    let cot = |logits: &[f64]| hinge_cotangent(logits, target, margin);

    let evaluate = |z: &[f64]| -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let (logits, mut g) = decoded_logits_with_vjp(grad_model, ae, z, &cot)?;
        for (gi, (a, b)) in g.iter_mut().zip(z.iter().zip(&z0)) {
            *gi += 2.0 * mu * (a - b);
        }
        Ok((hinge(&logits, target, margin) + anchor(z), g, logits))
    };

    let mut best: Option<(f64, TimeSeries)> = None;
    let mut consider = |z: &[f64], logits: &[f64]| -> Result<()> {
        if crate::classifier::argmax(logits) == target {
            let cand = ae.decode(z)?;
            let d = l2(x.values(), cand.values());
            if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                best = Some((d, cand));
            }
        }
        Ok(())
    };

    let mut z = z0.clone();
    let (mut loss, mut grad, logits) = evaluate(&z)?;
    consider(&z, &logits)?;
    let mut iterations = 0;
    for _ in 0..cfg.max_iters {
        if grad.iter().all(|&g| g == 0.0) {
            break;
        }
        let mut step = cfg.learning_rate;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let cand: Vec<f64> = z.iter().zip(&grad).map(|(a, g)| a - step * g).collect();
            let next = evaluate(&cand)?;
            if next.0 < loss {
                accepted = Some((cand, next));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, (l, g, logits))) = accepted else {
            break;
        };
        iterations += 1;
        consider(&cand, &logits)?;
        z = cand;
        loss = l;
        grad = g;
    }

    let cf = match best {
        Some((_, cf)) => cf,
        None => ae.decode(&z)?,
    };
    let mut r = CounterfactualResult::assess(&counted, x, cf, target, "latentcf", cfg.seed)?
        .with_meta("latent_dim", ae.latent_dim())
        .with_meta("latent_shift", l2(&z, &z0));
    r.iterations = iterations;
    r.model_calls = counted.calls();
    Ok(r)
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
