use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::AdamRunConfig;
use crate::driver::SaaConfig;
use crate::error::{Error, Result};
use crate::families::FamilyKind;
use crate::models::{
    apply_transform_stack, exponential_model, funnel_model, load_csv, load_libsvm,
    logistic_regression_model, random_gaussian_target, synthetic_logistic, Bijector, CsvOptions,
    LatentModel, LibsvmOptions, Transform,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Saa,
    Adam,
    Compare,
    DiagnoseUnbounded,
    CheckGradients,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    Libsvm,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub path: PathBuf,
    pub format: DatasetFormat,
    /// CSV label column.
    #[serde(default)]
    pub target: Option<String>,
    #[serde(default)]
    pub add_intercept: bool,
    /// LIBSVM feature count when it cannot be inferred from the file.
    #[serde(default)]
    pub num_features: Option<usize>,
}

/// Settings for `diagnose-unbounded`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UnboundedSpec {
    pub dim: usize,
    pub n: usize,
}

impl Default for UnboundedSpec {
    fn default() -> Self {
        Self { dim: 4, n: 2 }
    }
}

/// A complete experiment description, read from JSON.
///
/// `model` is a built-in name (`gaussian-<d>d`, `funnel-<d>d`,
/// `exponential-<d>d`, `logistic-synthetic`) or `logistic` together with a
/// `dataset`. The top-level `seed` is copied into the `saa` and `adam`
/// sections; repetition `r` runs with `seed + r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub model: String,
    /// Seed for generating built-in targets and synthetic data.
    pub model_seed: u64,
    pub dataset: Option<DatasetSpec>,
    pub prior_variance: f64,
    pub family: FamilyKind,
    pub method: Method,
    pub seed: u64,
    pub repetitions: usize,
    pub out: Option<PathBuf>,
    pub saa: SaaConfig,
    pub adam: AdamRunConfig,
    pub adam_grid: Vec<f64>,
    pub unbounded: UnboundedSpec,
    /// Random points for `check-gradients`.
    pub gradient_points: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: "gaussian-2d".into(),
            model_seed: 0,
            dataset: None,
            prior_variance: 1.0,
            family: FamilyKind::Diagonal,
            method: Method::Saa,
            seed: 0,
            repetitions: 1,
            out: None,
            saa: SaaConfig::default(),
            adam: AdamRunConfig::default(),
            adam_grid: vec![0.1, 0.01, 0.001],
            unbounded: UnboundedSpec::default(),
            gradient_points: 20,
        }
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub family: Option<String>,
    pub model: Option<String>,
    pub repetitions: Option<usize>,
    pub method: Option<Method>,
}

fn parse_dim(name: &str, prefix: &str) -> Option<usize> {
    name.strip_prefix(prefix)?.strip_suffix('d')?.parse().ok()
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(out) = &o.out {
            self.out = Some(out.clone());
        }
        if let Some(f) = &o.family {
            self.family = f.parse()?;
        }
        if let Some(m) = &o.model {
            self.model = m.clone();
        }
        if let Some(r) = o.repetitions {
            self.repetitions = r;
        }
        if let Some(m) = o.method {
            self.method = m;
        }
        Ok(())
    }

    /// Propagates the seed and checks every constraint.
    pub fn resolve(mut self) -> Result<Self> {
        self.saa.seed = self.seed;
        self.adam.seed = self.seed;
        self.saa.validate()?;
        self.adam.validate()?;
        if self.repetitions < 1 {
            return Err(Error::Config("repetitions must be >= 1".into()));
        }
        if !(self.prior_variance > 0.0) {
            return Err(Error::Config(format!("prior_variance must be > 0, got {}", self.prior_variance)));
        }
        if self.adam_grid.is_empty() || self.adam_grid.iter().any(|g| !(*g > 0.0)) {
            return Err(Error::Config("adam_grid must be a non-empty list of positive step sizes".into()));
        }
        if self.gradient_points < 1 {
            return Err(Error::Config("gradient_points must be >= 1".into()));
        }
        if let Some(ds) = &self.dataset {
            if self.model != "logistic" {
                return Err(Error::Config(format!(
                    "a dataset needs model \"logistic\", got \"{}\"",
                    self.model
                )));
            }
            if !ds.path.exists() {
                return Err(Error::Config(format!("dataset file {} does not exist", ds.path.display())));
            }
        } else {
            self.check_model_name()?;
        }
        Ok(self)
    }

    fn check_model_name(&self) -> Result<()> {
        let m = self.model.as_str();
        let known = m == "logistic-synthetic"
            || parse_dim(m, "gaussian-").is_some_and(|d| d >= 1)
            || parse_dim(m, "funnel-").is_some_and(|d| d >= 2)
            || parse_dim(m, "exponential-").is_some_and(|d| d >= 1);
        if known {
            Ok(())
        } else if m == "logistic" {
            Err(Error::Config("model \"logistic\" needs a dataset".into()))
        } else {
            Err(Error::Config(format!(
                "unknown model \"{m}\"; expected one of gaussian-<d>d, funnel-<d>d (d >= 2), exponential-<d>d, logistic-synthetic, or logistic with a dataset"
            )))
        }
    }

    pub fn build_model(&self) -> Result<Box<dyn LatentModel>> {
        let m = self.model.as_str();
        if let Some(ds) = &self.dataset {
            let data = match ds.format {
                DatasetFormat::Libsvm => load_libsvm(
                    &ds.path,
                    &LibsvmOptions {
                        num_features: ds.num_features,
                        add_intercept: ds.add_intercept,
                    },
                )?,
                DatasetFormat::Csv => load_csv(
                    &ds.path,
                    &CsvOptions {
                        target: ds.target.clone().unwrap_or_else(|| "y".into()),
                        add_intercept: ds.add_intercept,
                    },
                )?,
            };
            let name = ds
                .path
                .file_stem()
                .map_or_else(|| "logistic".into(), |s| s.to_string_lossy().into_owned());
            return Ok(Box::new(logistic_regression_model(data, self.prior_variance)?.with_name(name)));
        }
        if m == "logistic-synthetic" {
            let data = synthetic_logistic(200, 5, self.model_seed, false);
            return Ok(Box::new(
                logistic_regression_model(data, self.prior_variance)?.with_name(m),
            ));
        }
        if let Some(d) = parse_dim(m, "gaussian-") {
            return Ok(Box::new(random_gaussian_target(d, self.model_seed)?));
        }
        if let Some(d) = parse_dim(m, "funnel-") {
            return Ok(Box::new(funnel_model(d)?));
        }
        if let Some(d) = parse_dim(m, "exponential-") {
            let indices: Vec<usize> = (0..d).collect();
            return Ok(Box::new(apply_transform_stack(
                exponential_model(d, 1.0)?,
                &[Transform::new(Bijector::Exp, indices)],
            )?));
        }
        self.check_model_name()?;
        unreachable!("check_model_name accepts only buildable names")
    }
}

/// Reads the optional config file, applies flag overrides and validates.
pub fn parse_config(path: Option<&Path>, overrides: &Overrides) -> Result<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            ExperimentConfig::from_json(&text)?
        }
        None => ExperimentConfig::default(),
    };
    cfg.apply(overrides)?;
    cfg.resolve()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_resolves_defaults() {
        let cfg = ExperimentConfig::from_json(
            r#"{"model": "gaussian-2d", "family": "dense", "method": "saa", "seed": 1}"#,
        )
        .unwrap()
        .resolve()
        .unwrap();
        assert_eq!(cfg.family, FamilyKind::Dense);
        assert_eq!(cfg.saa.n0, 32);
        assert_eq!(cfg.saa.tau0, 300);
        assert_eq!(cfg.saa.delta, 0.01);
        assert_eq!(cfg.saa.n_max, 262_144);
        assert_eq!(cfg.saa.seed, 1);
    }

    #[test]
    fn unknown_family_lists_choices() {
        let e = ExperimentConfig::from_json(r#"{"family": "banana"}"#).unwrap_err().to_string();
        assert!(e.contains("diagonal") && e.contains("dense"), "{e}");
    }

    #[test]
    fn unknown_key_is_named() {
        let e = ExperimentConfig::from_json(r#"{"sede": 3}"#).unwrap_err().to_string();
        assert!(e.contains("sede"), "{e}");
        let e = ExperimentConfig::from_json(r#"{"saa": {"n00": 3}}"#).unwrap_err().to_string();
        assert!(e.contains("n00"), "{e}");
    }

    #[test]
    fn flag_overrides_file() {
        let mut cfg = ExperimentConfig::from_json(r#"{"seed": 1}"#).unwrap();
        cfg.apply(&Overrides {
            seed: Some(9),
            ..Default::default()
        })
        .unwrap();
        assert_eq!(cfg.resolve().unwrap().seed, 9);
    }

    #[test]
    fn out_of_range_names_constraint() {
        let e = ExperimentConfig::from_json(r#"{"saa": {"p_threshold": 2.0}}"#)
            .unwrap()
            .resolve()
            .unwrap_err()
            .to_string();
        assert!(e.contains("p_threshold"), "{e}");
    }

    #[test]
    fn builds_every_builtin() {
        for name in ["gaussian-3d", "funnel-4d", "exponential-2d", "logistic-synthetic"] {
            let cfg = ExperimentConfig {
                model: name.into(),
                ..Default::default()
            }
            .resolve()
            .unwrap();
            assert!(cfg.build_model().unwrap().dim() >= 2);
        }
        assert!(ExperimentConfig {
            model: "funnel-1d".into(),
            ..Default::default()
        }
        .resolve()
        .is_err());
    }
}
