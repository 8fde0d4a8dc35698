//! Run configuration: `key = value` lines grouped under `[section]` headers.
//!
//! Sections are `dataset` (or `dataset.<name>`, repeatable), `classifier`,
//! `generator.<id>` (one per generator, in run order), `evaluation` and
//! `output`. Unknown sections and keys are errors. Relative paths resolve
//! against the directory holding the file.

use std::path::{Path, PathBuf};

use cfx_core::classifier::MlpSpec;
use cfx_core::data::DatasetFormat;
use cfx_core::distance::DistanceConfig;
use cfx_core::evaluation::{AutoencoderSpec, ClassifierSpec, EvalConfig};
use cfx_core::generator::GeneratorSpec;
use cfx_core::{CfxError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetEntry {
    pub name: String,
    pub train: PathBuf,
    /// Instances are sampled from here; defaults to the training file.
    pub test: Option<PathBuf>,
    /// `None` picks the format from the file extension.
    pub format: Option<DatasetFormat>,
    pub normalize: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub datasets: Vec<DatasetEntry>,
    pub classifier: ClassifierSpec,
    pub generators: Vec<GeneratorSpec>,
    pub evaluation: EvalConfig,
    pub autoencoder: AutoencoderSpec,
    pub instances: usize,
    pub seed: u64,
    pub write_csv: bool,
    /// Keep per-cell markers under `<out>/cells` so reruns skip finished work.
    pub resume: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            datasets: Vec::new(),
            classifier: ClassifierSpec::default(),
            generators: Vec::new(),
            evaluation: EvalConfig::default(),
            autoencoder: AutoencoderSpec::default(),
            instances: 10,
            seed: 0,
            write_csv: true,
            resume: false,
        }
    }
}

fn err(line: usize, message: impl std::fmt::Display) -> CfxError {
    CfxError::Config(format!("line {line}: {message}"))
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| CfxError::Config(format!("invalid value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(CfxError::Config(format!("invalid boolean {value:?} for {key}"))),
    }
}

/// Applies one `[classifier]` key. `kind` switches the model family and
/// resets the family's parameters to their defaults.
pub fn set_classifier(spec: &mut ClassifierSpec, key: &str, value: &str) -> Result<()> {
    if key == "kind" {
        *spec = match value {
            "knn" => ClassifierSpec::Knn {
                k: 1,
                metric: DistanceConfig::default(),
            },
            "mlp" => ClassifierSpec::Mlp(MlpSpec::default()),
            other => return Err(CfxError::Config(format!("unknown classifier kind {other:?} (expected knn or mlp)"))),
        };
        return Ok(());
    }
    match spec {
        ClassifierSpec::Knn { k, metric } => match key {
            "k" => *k = parse(key, value)?,
            "metric" => metric.metric = value.parse()?,
            "dtw_band" => metric.dtw_band = if value == "none" { None } else { Some(parse(key, value)?) },
            "seed" => {}
            _ => return Err(CfxError::Config(format!("unknown key {key:?} for a knn classifier"))),
        },
        ClassifierSpec::Mlp(m) => set_mlp(m, "mlp classifier", key, value)?,
    }
    Ok(())
}

fn set_mlp(spec: &mut MlpSpec, what: &str, key: &str, value: &str) -> Result<()> {
    match key {
        "hidden" => {
            spec.hidden_sizes = value
                .split(',')
                .map(|s| parse(key, s.trim()))
                .collect::<Result<_>>()?
        }
        "activation" => spec.activation = value.parse()?,
        "epochs" => spec.epochs = parse(key, value)?,
        "learning_rate" => spec.learning_rate = parse(key, value)?,
        "batch_size" => spec.batch_size = parse(key, value)?,
        "momentum" => spec.momentum = parse(key, value)?,
        "seed" => spec.seed = parse(key, value)?,
        _ => return Err(CfxError::Config(format!("unknown key {key:?} for an {what}"))),
    }
    Ok(())
}

/// Keys of `[generator.latentcf]` prefixed `ae_` configure the autoencoder.
fn set_autoencoder(spec: &mut AutoencoderSpec, key: &str, value: &str) -> Result<()> {
    match key {
        "latent_dim" => spec.latent_dim = if value == "auto" { None } else { Some(parse(key, value)?) },
        _ => set_mlp(&mut spec.spec, "autoencoder", key, value)?,
    }
    Ok(())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CfxError::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let config = Self::parse(&text, base)?;
        config.validate()?;
        Ok(config)
    }

    /// Parses without touching the file system.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut config = RunConfig::default();
        let mut section = String::new();
        let mut seen = Vec::<String>::new();
        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let line = raw.split(['#', ';']).next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(header) = line.strip_prefix('[') {
                let name = header
                    .strip_suffix(']')
                    .ok_or_else(|| err(line_no, "unterminated section header"))?
                    .trim()
                    .to_string();
                if seen.contains(&name) {
                    return Err(err(line_no, format!("duplicate section [{name}]")));
                }
                config.open_section(&name, line_no)?;
                seen.push(name.clone());
                section = name;
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(line_no, format!("expected key = value, found {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            config
                .set(&section, key, value, base)
                .map_err(|e| err(line_no, format!("[{section}] {e}")))?;
        }
        Ok(config)
    }

    fn open_section(&mut self, name: &str, line: usize) -> Result<()> {
        if name == "dataset" || name.starts_with("dataset.") {
            let label = name.strip_prefix("dataset.").unwrap_or("");
            self.datasets.push(DatasetEntry {
                name: label.to_string(),
                train: PathBuf::new(),
                test: None,
                format: None,
                normalize: false,
            });
        } else if let Some(id) = name.strip_prefix("generator.") {
            let spec: GeneratorSpec = id.parse().map_err(|e| err(line, e))?;
            self.generators.push(spec);
        } else if !matches!(name, "classifier" | "evaluation" | "output") {
            return Err(err(line, format!("unknown section [{name}]")));
        }
        Ok(())
    }

    fn set(&mut self, section: &str, key: &str, value: &str, base: &Path) -> Result<()> {
        match section {
            "" => Err(CfxError::Config(format!("key {key:?} outside any section"))),
            "classifier" => set_classifier(&mut self.classifier, key, value),
            "evaluation" => {
                match key {
                    "instances" => self.instances = parse(key, value)?,
                    "seed" => self.seed = parse(key, value)?,
                    _ => self.evaluation.set(key, value)?,
                }
                Ok(())
            }
            "output" => {
                match key {
                    "csv" => self.write_csv = parse_bool(key, value)?,
                    "resume" => self.resume = parse_bool(key, value)?,
                    _ => return Err(CfxError::Config(format!("unknown key {key:?}"))),
                }
                Ok(())
            }
            s if s.starts_with("dataset") => {
                let entry = self.datasets.last_mut().expect("section opened");
                match key {
                    "name" => entry.name = value.to_string(),
                    "train" => entry.train = base.join(value),
                    "test" => entry.test = Some(base.join(value)),
                    "format" => entry.format = if value == "auto" { None } else { Some(value.parse()?) },
                    "normalize" => entry.normalize = parse_bool(key, value)?,
                    _ => return Err(CfxError::Config(format!("unknown key {key:?}"))),
                }
                Ok(())
            }
            _ => {
                let spec = self.generators.last_mut().expect("section opened");
                match key.strip_prefix("ae_") {
                    Some(ae_key) if spec.needs_autoencoder() => set_autoencoder(&mut self.autoencoder, ae_key, value),
                    _ => spec.set(key, value),
                }
            }
        }
    }

    /// Checks that every referenced file exists and dataset names are set.
    pub fn validate(&self) -> Result<()> {
        for (i, d) in self.datasets.iter().enumerate() {
            if d.train.as_os_str().is_empty() {
                return Err(CfxError::Config(format!("dataset {} has no train path", i + 1)));
            }
            for path in std::iter::once(&d.train).chain(d.test.as_ref()) {
                if !path.is_file() {
                    return Err(CfxError::Config(format!("file not found: {}", path.display())));
                }
            }
        }
        Ok(())
    }

    pub fn generator(&self, id: &str) -> Option<&GeneratorSpec> {
        self.generators.iter().find(|g| g.id() == id)
    }
}

impl DatasetEntry {
    pub fn display_name(&self) -> String {
        if !self.name.is_empty() {
            return self.name.clone();
        }
        self.train
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".into())
    }

    pub fn format_of(&self, path: &Path) -> DatasetFormat {
        self.format.unwrap_or_else(|| DatasetFormat::from_path(path))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig> {
        RunConfig::parse(text, Path::new("/data"))
    }

    #[test]
    fn full_file() {
        let c = parse(
            "# comment\n[dataset]\nname = toy\ntrain = a.tsv\ntest = b.tsv\n\n[classifier]\nkind = knn\nk = 3\n\
             [generator.native_guide]\nmetric = dtw\n[generator.evo]\npopulation_size = 20\n\
             [evaluation]\ninstances = 4\nseed = 7\ntolerance = 1e-3\n[output]\ncsv = false\n",
        )
        .unwrap();
        assert_eq!(c.datasets[0].train, Path::new("/data/a.tsv"));
        assert_eq!(c.datasets[0].display_name(), "toy");
        assert!(matches!(c.classifier, ClassifierSpec::Knn { k: 3, .. }));
        let ids: Vec<&str> = c.generators.iter().map(|g| g.id()).collect();
        assert_eq!(ids, ["native_guide", "evo"]);
        assert_eq!((c.instances, c.seed, c.write_csv), (4, 7, false));
        assert_eq!(c.evaluation.tolerance, 1e-3);
    }

    #[test]
    fn unknown_keys_and_sections_rejected() {
        assert!(parse("[classifier]\nkind = mlp\nfoo = 1\n").is_err());
        assert!(parse("[plots]\n").is_err());
        assert!(parse("[generator.magic]\n").is_err());
        assert!(parse("[generator.wachter]\nnot_a_key = 2\n").is_err());
        assert!(parse("[output]\ncsv = maybe\n").is_err());
        assert!(parse("k = 1\n").is_err());
        assert!(parse("[evaluation]\n[evaluation]\n").is_err());
    }

    #[test]
    fn autoencoder_keys_only_under_latentcf() {
        let c = parse("[generator.latentcf]\nae_latent_dim = 4\nae_epochs = 7\nlatent_weight = 0.5\n").unwrap();
        assert_eq!(c.autoencoder.latent_dim, Some(4));
        assert_eq!(c.autoencoder.spec.epochs, 7);
        assert!(parse("[generator.wachter]\nae_epochs = 7\n").is_err());
    }

    #[test]
    fn missing_files_fail_validation() {
        let c = parse("[dataset]\ntrain = /definitely/not/here.tsv\n").unwrap();
        assert!(c.validate().is_err());
        assert!(parse("[dataset]\nname = x\n").unwrap().validate().is_err());
    }
}
