//! Versioned text model file.
//!
//! Layout: a `CFXMODEL <version>` magic line, then `key value...` lines.
//! Weight rows are written row-major with Rust's shortest round-trip float
//! formatting, so a save/load cycle reproduces every parameter bit-exactly
//! and saving the same model twice yields identical bytes.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use super::network::{Activation, Dense, Network};
use super::{Knn, Mlp, MlpSpec};
use crate::data::{Dataset, LabeledInstance, TimeSeries};
use crate::distance::{DistanceConfig, Metric, MultivariateMode};
use crate::error::{CfxError, Result};
use crate::generator::latent::Autoencoder;

const MAGIC: &str = "CFXMODEL";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum SavedModel {
    Knn(Knn),
    Mlp(Mlp),
    Autoencoder(Autoencoder),
}

impl SavedModel {
    pub fn kind(&self) -> &'static str {
        match self {
            SavedModel::Knn(_) => "knn",
            SavedModel::Mlp(_) => "mlp",
            SavedModel::Autoencoder(_) => "autoencoder",
        }
    }

    pub fn as_classifier(&self) -> Option<&dyn super::Classifier> {
        match self {
            SavedModel::Knn(m) => Some(m),
            SavedModel::Mlp(m) => Some(m),
            SavedModel::Autoencoder(_) => None,
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{MAGIC} {FORMAT_VERSION}\nkind {}\n", self.kind());
        match self {
            SavedModel::Knn(m) => write_knn(&mut out, m),
            SavedModel::Mlp(m) => write_mlp(&mut out, m),
            SavedModel::Autoencoder(ae) => write_autoencoder(&mut out, ae),
        }
        out.push_str("end\n");
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut r = Reader::new(text);
        let (magic, version) = r.next_line()?;
        if magic != MAGIC {
            return Err(CfxError::Model(format!("bad magic {magic:?}")));
        }
        let version: u32 = parse_one(version, r.line)?;
        if version != FORMAT_VERSION {
            return Err(CfxError::Model(format!(
                "unsupported model file version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let kind = r.expect("kind")?.to_string();
        let model = match kind.as_str() {
            "knn" => SavedModel::Knn(read_knn(&mut r)?),
            "mlp" => SavedModel::Mlp(read_mlp(&mut r)?),
            "autoencoder" => SavedModel::Autoencoder(read_autoencoder(&mut r)?),
            other => return Err(CfxError::Model(format!("unknown model kind {other:?}"))),
        };
        r.expect("end")?;
        Ok(model)
    }
}

pub fn save_model(model: &SavedModel, path: &Path) -> Result<()> {
    std::fs::write(path, model.to_text())?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<SavedModel> {
    SavedModel::from_text(&std::fs::read_to_string(path)?)
}

fn join(values: &[f64]) -> String {
    values.iter().map(f64::to_string).collect::<Vec<_>>().join(" ")
}

fn write_network(out: &mut String, net: &Network) {
    let _ = writeln!(out, "activation {}", net.activation.name());
    let _ = writeln!(out, "layers {}", net.layers.len());
    for layer in &net.layers {
        let _ = writeln!(out, "layer {} {}", layer.inputs, layer.outputs);
        let _ = writeln!(out, "w {}", join(&layer.weights));
        let _ = writeln!(out, "b {}", join(&layer.bias));
    }
}

fn write_optional(out: &mut String, key: &str, value: Option<f64>) {
    match value {
        Some(v) => {
            let _ = writeln!(out, "{key} {v}");
        }
        None => {
            let _ = writeln!(out, "{key} none");
        }
    }
}

fn write_spec(out: &mut String, spec: Option<&MlpSpec>) {
    let Some(s) = spec else {
        out.push_str("spec none\n");
        return;
    };
    let hidden: Vec<String> = s.hidden_sizes.iter().map(usize::to_string).collect();
    let _ = writeln!(
        out,
        "spec {} {} {} {} {} {} [{}]",
        s.activation.name(),
        s.seed,
        s.learning_rate,
        s.epochs,
        s.batch_size,
        s.momentum,
        hidden.join(",")
    );
}

fn write_mlp(out: &mut String, m: &Mlp) {
    let (c, t) = super::Classifier::input_shape(m);
    let _ = writeln!(out, "shape {c} {t}");
    write_spec(out, m.spec());
    write_optional(out, "train_accuracy", m.train_accuracy());
    write_network(out, m.network());
}

fn write_knn(out: &mut String, m: &Knn) {
    let d = m.training_set();
    let cfg = m.metric();
    let _ = writeln!(out, "shape {} {}", d.channels(), d.length());
    let _ = writeln!(out, "k {}", m.k());
    let metric = match cfg.metric {
        Metric::L1 => "l1",
        Metric::L2 => "l2",
        Metric::Linf => "linf",
        Metric::Dtw => "dtw",
        Metric::Frechet => "frechet",
    };
    let _ = writeln!(out, "metric {metric}");
    match cfg.dtw_band {
        Some(b) => {
            let _ = writeln!(out, "band {b}");
        }
        None => out.push_str("band none\n"),
    }
    let _ = writeln!(out, "tolerance {}", cfg.tolerance);
    let mode = match cfg.multivariate {
        MultivariateMode::Dependent => "dependent",
        MultivariateMode::Independent => "independent",
    };
    let _ = writeln!(out, "multivariate {mode}");
    let _ = writeln!(out, "squared_cost {}", cfg.squared_cost);
    let _ = writeln!(out, "classes {}", d.num_classes());
    for name in d.class_names() {
        let _ = writeln!(out, "class {name}");
    }
    let _ = writeln!(out, "instances {}", d.len());
    for inst in d.instances() {
        let _ = writeln!(out, "row {} {}", inst.label, join(inst.series.values()));
    }
}

fn write_autoencoder(out: &mut String, ae: &Autoencoder) {
    let (c, t) = ae.input_shape();
    let _ = writeln!(out, "shape {c} {t}");
    let _ = writeln!(out, "latent {}", ae.latent_dim());
    write_spec(out, ae.spec());
    let _ = writeln!(out, "reconstruction_mse {}", ae.reconstruction_mse());
    out.push_str("encoder\n");
    write_network(out, ae.encoder());
    out.push_str("decoder\n");
    write_network(out, ae.decoder());
}

struct Reader<'a> {
    lines: std::str::Lines<'a>,
    line: usize,
}

fn parse_one<T: FromStr>(token: &str, line: usize) -> Result<T> {
    token
        .trim()
        .parse()
        .map_err(|_| CfxError::Model(format!("line {line}: cannot parse {token:?}")))
}

impl<'a> Reader<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            lines: text.lines(),
            line: 0,
        }
    }

    fn next_line(&mut self) -> Result<(&'a str, &'a str)> {
        let raw = self
            .lines
            .next()
            .ok_or_else(|| CfxError::Model("unexpected end of file".into()))?;
        self.line += 1;
        let raw = raw.trim_end_matches('\r');
        Ok(raw.split_once(' ').unwrap_or((raw, "")))
    }

    fn expect(&mut self, key: &str) -> Result<&'a str> {
        let (k, rest) = self.next_line()?;
        if k != key {
            return Err(CfxError::Model(format!("line {}: expected {key:?}, found {k:?}", self.line)));
        }
        Ok(rest)
    }

    fn value<T: FromStr>(&mut self, key: &str) -> Result<T> {
        let rest = self.expect(key)?;
        parse_one(rest, self.line)
    }

    fn optional(&mut self, key: &str) -> Result<Option<f64>> {
        let rest = self.expect(key)?;
        if rest == "none" {
            Ok(None)
        } else {
            parse_one(rest, self.line).map(Some)
        }
    }

    fn floats(&mut self, key: &str, expected: usize) -> Result<Vec<f64>> {
        let rest = self.expect(key)?;
        let values = rest
            .split_whitespace()
            .map(|t| parse_one::<f64>(t, self.line))
            .collect::<Result<Vec<_>>>()?;
        if values.len() != expected {
            return Err(CfxError::Model(format!(
                "line {}: expected {expected} values, found {}",
                self.line,
                values.len()
            )));
        }
        Ok(values)
    }

    fn shape(&mut self) -> Result<(usize, usize)> {
        let rest = self.expect("shape")?;
        let mut it = rest.split_whitespace();
        let c = parse_one(it.next().unwrap_or_default(), self.line)?;
        let t = parse_one(it.next().unwrap_or_default(), self.line)?;
        Ok((c, t))
    }

    fn network(&mut self) -> Result<Network> {
        let activation: Activation = self.expect("activation")?.parse()?;
        let count: usize = self.value("layers")?;
        let mut layers = Vec::with_capacity(count);
        for _ in 0..count {
            let rest = self.expect("layer")?;
            let mut it = rest.split_whitespace();
            let inputs: usize = parse_one(it.next().unwrap_or_default(), self.line)?;
            let outputs: usize = parse_one(it.next().unwrap_or_default(), self.line)?;
            let weights = self.floats("w", inputs * outputs)?;
            let bias = self.floats("b", outputs)?;
            layers.push(Dense {
                inputs,
                outputs,
                weights,
                bias,
            });
        }
        Network::new(layers, activation)
    }

    fn spec(&mut self) -> Result<Option<MlpSpec>> {
        let rest = self.expect("spec")?;
        if rest == "none" {
            return Ok(None);
        }
        let parts: Vec<&str> = rest.split_whitespace().collect();
        if parts.len() != 7 {
            return Err(CfxError::Model(format!("line {}: malformed spec", self.line)));
        }
        let hidden = parts[6].trim_start_matches('[').trim_end_matches(']');
        let hidden_sizes = if hidden.is_empty() {
            Vec::new()
        } else {
            hidden
                .split(',')
                .map(|t| parse_one(t, self.line))
                .collect::<Result<Vec<usize>>>()?
        };
        Ok(Some(MlpSpec {
            activation: parts[0].parse()?,
            seed: parse_one(parts[1], self.line)?,
            learning_rate: parse_one(parts[2], self.line)?,
            epochs: parse_one(parts[3], self.line)?,
            batch_size: parse_one(parts[4], self.line)?,
            momentum: parse_one(parts[5], self.line)?,
            hidden_sizes,
        }))
    }
}

fn read_mlp(r: &mut Reader<'_>) -> Result<Mlp> {
    let (c, t) = r.shape()?;
    let spec = r.spec()?;
    let acc = r.optional("train_accuracy")?;
    let net = r.network()?;
    Ok(Mlp::from_layers(c, t, net.layers, net.activation)?.with_metadata(spec, acc))
}

fn read_knn(r: &mut Reader<'_>) -> Result<Knn> {
    let (c, t) = r.shape()?;
    let k: usize = r.value("k")?;
    let metric: Metric = r.expect("metric")?.parse()?;
    let band = r.expect("band")?;
    let dtw_band = if band == "none" {
        None
    } else {
        Some(parse_one(band, r.line)?)
    };
    let tolerance: f64 = r.value("tolerance")?;
    let multivariate = match r.expect("multivariate")? {
        "dependent" => MultivariateMode::Dependent,
        "independent" => MultivariateMode::Independent,
        other => return Err(CfxError::Model(format!("unknown multivariate mode {other:?}"))),
    };
    let squared_cost: bool = r.value("squared_cost")?;
    let classes: usize = r.value("classes")?;
    let names = (0..classes)
        .map(|_| r.expect("class").map(str::to_string))
        .collect::<Result<Vec<_>>>()?;
    let n: usize = r.value("instances")?;
    let mut instances = Vec::with_capacity(n);
    for _ in 0..n {
        let rest = r.expect("row")?;
        let (label, values) = rest.split_once(' ').unwrap_or((rest, ""));
        let label: usize = parse_one(label, r.line)?;
        let values = values
            .split_whitespace()
            .map(|v| parse_one(v, r.line))
            .collect::<Result<Vec<f64>>>()?;
        instances.push(LabeledInstance {
            series: TimeSeries::new(c, t, values)?,
            label,
        });
    }
    let dataset = Dataset::new(instances, names)?;
    let cfg = DistanceConfig {
        metric,
        dtw_band,
        tolerance,
        multivariate,
        squared_cost,
    };
    super::train_knn(&dataset, k, cfg)
}

fn read_autoencoder(r: &mut Reader<'_>) -> Result<Autoencoder> {
    let (c, t) = r.shape()?;
    let latent: usize = r.value("latent")?;
    let spec = r.spec()?;
    let mse: f64 = r.value("reconstruction_mse")?;
    r.expect("encoder")?;
    let encoder = r.network()?;
    r.expect("decoder")?;
    let decoder = r.network()?;
    let ae = Autoencoder::from_parts(encoder, decoder, c, t, spec, mse)?;
    if ae.latent_dim() != latent {
        return Err(CfxError::Model(format!(
            "latent size {latent} does not match the encoder output {}",
            ae.latent_dim()
        )));
    }
    Ok(ae)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{train_knn, train_mlp};
    use crate::data::parse_ucr_tsv;

    fn toy() -> Dataset {
        parse_ucr_tsv("xy\t0.1\t0.2\t0.3\nz\t1.5\t-2\t1e-7\nxy\t0.3\t0.1\t0.25\nz\t1.1\t-1.9\t0.0").unwrap()
    }

    #[test]
    fn mlp_round_trip_is_exact() {
        let spec = MlpSpec {
            epochs: 3,
            hidden_sizes: vec![5, 4],
            ..MlpSpec::default()
        };
        let m = train_mlp(&toy(), &spec).unwrap();
        let saved = SavedModel::Mlp(m);
        let text = saved.to_text();
        let back = SavedModel::from_text(&text).unwrap();
        assert_eq!(back, saved);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn knn_round_trip() {
        let saved = SavedModel::Knn(train_knn(&toy(), 3, DistanceConfig::default()).unwrap());
        assert_eq!(SavedModel::from_text(&saved.to_text()).unwrap(), saved);
    }

    #[test]
    fn rejects_version_mismatch_and_garbage() {
        let saved = SavedModel::Knn(train_knn(&toy(), 1, DistanceConfig::default()).unwrap());
        let text = saved.to_text().replacen("CFXMODEL 1", "CFXMODEL 2", 1);
        let err = SavedModel::from_text(&text).unwrap_err();
        assert!(err.to_string().contains("version"));
        assert!(SavedModel::from_text("hello").is_err());
        assert!(SavedModel::from_text("").is_err());
        let truncated: String = saved.to_text().lines().take(5).collect::<Vec<_>>().join("\n");
        assert!(SavedModel::from_text(&truncated).is_err());
    }
}
