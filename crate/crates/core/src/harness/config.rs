use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::{load_csv, synthetic_credit, Dataset, DatasetSchema};
use crate::embedding::MdMatrixMode;
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Fkrf2e,
    Fkrr,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Fkrf2e => "fkrf2e",
            Method::Fkrr => "fkrr",
        }
    }
}

/// Kernel as written in a config. Sigmoid and RBF gains default to
/// `1/d` of the (possibly augmented) feature dimension.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelChoice {
    Linear,
    Polynomial {
        degree: u32,
        coef: f64,
    },
    Sigmoid {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gain: Option<f64>,
        #[serde(default = "default_sigmoid_coef")]
        coef: f64,
    },
    Rbf {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gain: Option<f64>,
    },
}

fn default_sigmoid_coef() -> f64 {
    0.01
}

impl Default for KernelChoice {
    fn default() -> Self {
        KernelChoice::Polynomial { degree: 4, coef: 0.1 }
    }
}

impl KernelChoice {
    pub fn resolve(&self, dim: usize) -> KernelSpec<f64> {
        let inv_d = 1.0 / dim.max(1) as f64;
        match *self {
            KernelChoice::Linear => KernelSpec::Linear,
            KernelChoice::Polynomial { degree, coef } => KernelSpec::polynomial(degree, coef),
            KernelChoice::Sigmoid { gain, coef } => KernelSpec::Sigmoid {
                gain: gain.unwrap_or(inv_d),
                coef,
            },
            KernelChoice::Rbf { gain } => KernelSpec::rbf(gain.unwrap_or(inv_d)),
        }
    }

    /// Compact label used in result tables, e.g. `polynomial(4,0.1)`.
    pub fn label(&self) -> String {
        match *self {
            KernelChoice::Linear => "linear".into(),
            KernelChoice::Polynomial { degree, coef } => format!("polynomial({degree},{coef})"),
            KernelChoice::Sigmoid { gain, coef } => match gain {
                Some(g) => format!("sigmoid({g},{coef})"),
                None => format!("sigmoid(1/d,{coef})"),
            },
            KernelChoice::Rbf { gain } => match gain {
                Some(g) => format!("rbf({g})"),
                None => "rbf(1/d)".into(),
            },
        }
    }

    /// Parses `linear`, `poly:DEG:COEF`, `sigmoid[:GAIN[:COEF]]`, `rbf[:GAIN]`.
    pub fn parse(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.trim().split(':').collect();
        let num = |i: usize| -> Result<Option<f64>> {
            parts
                .get(i)
                .map(|p| p.parse::<f64>().map_err(|_| Error::Config(format!("bad number `{p}` in kernel `{text}`"))))
                .transpose()
        };
        let choice = match parts[0] {
            "linear" if parts.len() == 1 => KernelChoice::Linear,
            "poly" | "polynomial" if parts.len() <= 3 => {
                let degree = match parts.get(1) {
                    Some(p) => p.parse().map_err(|_| Error::Config(format!("bad degree in kernel `{text}`")))?,
                    None => 4,
                };
                KernelChoice::Polynomial {
                    degree,
                    coef: num(2)?.unwrap_or(0.1),
                }
            }
            "sigmoid" if parts.len() <= 3 => KernelChoice::Sigmoid {
                gain: num(1)?,
                coef: num(2)?.unwrap_or(0.01),
            },
            "rbf" if parts.len() <= 2 => KernelChoice::Rbf { gain: num(1)? },
            _ => return Err(Error::Config(format!("unrecognized kernel `{text}`"))),
        };
        choice.resolve(1).validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(choice)
    }
}

/// Number of embedding directions, possibly relative to the training size.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KRule {
    /// `ceil(n_train / denominator)`, at least 1.
    Fraction(usize),
    Absolute(usize),
}

impl Default for KRule {
    fn default() -> Self {
        KRule::Fraction(250)
    }
}

impl KRule {
    pub fn resolve(&self, n_train: usize) -> usize {
        match *self {
            KRule::Fraction(d) => n_train.div_ceil(d.max(1)).max(1),
            KRule::Absolute(k) => k,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            KRule::Fraction(d) => format!("n/{d}"),
            KRule::Absolute(k) => k.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    Csv {
        path: PathBuf,
        schema: PathBuf,
    },
    Synthetic {
        n: usize,
        #[serde(default = "default_synthetic_dim")]
        dim: usize,
        #[serde(default)]
        seed: u64,
    },
}

fn default_synthetic_dim() -> usize {
    10
}

impl DatasetSource {
    pub fn load(&self) -> Result<Dataset<f64>> {
        match self {
            DatasetSource::Csv { path, schema } => {
                let schema = DatasetSchema::load(schema)?;
                load_csv(path, &schema)
            }
            DatasetSource::Synthetic { n, dim, seed } => synthetic_credit(*n, *dim, *seed),
        }
    }

    fn rebase(&mut self, base: &Path) {
        if let DatasetSource::Csv { path, schema } = self {
            for p in [path, schema] {
                if p.is_relative() {
                    let joined = base.join(&*p);
                    *p = std::path::absolute(&joined).unwrap_or(joined);
                }
            }
        }
    }
}

fn default_trials() -> usize {
    50
}
fn default_test_fraction() -> f64 {
    0.25
}
fn default_threshold() -> f64 {
    0.5
}
fn default_true() -> bool {
    true
}
fn default_kernels() -> Vec<KernelChoice> {
    vec![KernelChoice::default()]
}
fn default_k_rules() -> Vec<KRule> {
    vec![KRule::default()]
}
fn default_one() -> Vec<f64> {
    vec![1.0]
}

/// Full description of an experiment. Every field except `dataset` has a
/// default, so a config file only needs the parts that differ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    #[serde(default)]
    pub method: Method,
    #[serde(default = "default_kernels")]
    pub kernels: Vec<KernelChoice>,
    #[serde(default = "default_k_rules")]
    pub k_rules: Vec<KRule>,
    #[serde(default = "default_one")]
    pub ridge_gammas: Vec<f64>,
    #[serde(default)]
    pub ridge_intercept: bool,
    #[serde(default = "default_one")]
    pub fkrr_mus: Vec<f64>,
    #[serde(default = "default_one")]
    pub fkrr_lambdas: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub md_mode: MdMatrixMode,
    #[serde(default = "default_true")]
    pub standardize: bool,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

impl ExperimentConfig {
    pub fn new(dataset: DatasetSource) -> Self {
        ExperimentConfig {
            dataset,
            method: Method::default(),
            kernels: default_kernels(),
            k_rules: default_k_rules(),
            ridge_gammas: default_one(),
            ridge_intercept: false,
            fkrr_mus: default_one(),
            fkrr_lambdas: default_one(),
            trials: default_trials(),
            test_fraction: default_test_fraction(),
            seed: 0,
            md_mode: MdMatrixMode::default(),
            standardize: true,
            threshold: default_threshold(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad(format!("test_fraction must be in (0, 1), got {}", self.test_fraction));
        }
        if self.kernels.is_empty() {
            return bad("kernel grid is empty".into());
        }
        for k in &self.kernels {
            k.resolve(1).validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        let grids: Vec<(&str, &Vec<f64>)> = match self.method {
            Method::Fkrf2e => vec![("ridge_gammas", &self.ridge_gammas)],
            Method::Fkrr => vec![("fkrr_mus", &self.fkrr_mus), ("fkrr_lambdas", &self.fkrr_lambdas)],
        };
        for (name, grid) in grids {
            if grid.is_empty() {
                return bad(format!("{name} grid is empty"));
            }
            if grid.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return bad(format!("{name} values must be finite and >= 0"));
            }
        }
        if self.method == Method::Fkrf2e {
            if self.k_rules.is_empty() {
                return bad("k grid is empty".into());
            }
            if self.k_rules.iter().any(|r| matches!(r, KRule::Fraction(0) | KRule::Absolute(0))) {
                return bad("k rules must be positive".into());
            }
        }
        if !self.threshold.is_finite() {
            return bad("threshold must be finite".into());
        }
        if let DatasetSource::Synthetic { n, dim, .. } = self.dataset {
            if n < 8 || dim < 3 {
                return bad("synthetic data needs n >= 8 and dim >= 3".into());
            }
        }
        Ok(())
    }

    /// Parses a config document; a run manifest (with a `config` member) is
    /// accepted too. Relative dataset paths resolve against `base`.
    pub fn from_value(value: Value, base: Option<&Path>) -> Result<Self> {
        let value = config_document(value);
        let mut cfg: ExperimentConfig =
            serde_json::from_value(value).map_err(|e| Error::Config(format!("config: {e}")))?;
        if let Some(base) = base {
            cfg.dataset.rebase(base);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value: Value = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_value(value, path.parent())
    }
}

/// The config part of a document: the `config` member of a run manifest, or
/// the document itself.
pub fn config_document(value: Value) -> Value {
    match value {
        Value::Object(mut m) if m.get("config").is_some_and(Value::is_object) && m.contains_key("format") => {
            m.remove("config").expect("checked")
        }
        v => v,
    }
}

/// Recursively overlays `top` onto `base`: objects merge key by key, anything
/// else in `top` replaces the value in `base`.
pub fn overlay(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => overlay(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, t) => *slot = t,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let v = serde_json::json!({"dataset": {"kind": "synthetic", "n": 100}});
        let cfg = ExperimentConfig::from_value(v, None).unwrap();
        assert_eq!(cfg.trials, 50);
        assert_eq!(cfg.test_fraction, 0.25);
        assert_eq!(cfg.kernels, vec![KernelChoice::Polynomial { degree: 4, coef: 0.1 }]);
        assert_eq!(cfg.k_rules, vec![KRule::Fraction(250)]);
        assert_eq!(cfg.dataset, DatasetSource::Synthetic { n: 100, dim: 10, seed: 0 });
    }

    #[test]
    fn bad_configs() {
        let base = serde_json::json!({"dataset": {"kind": "synthetic", "n": 100}});
        for patch in [
            serde_json::json!({"trials": 0}),
            serde_json::json!({"kernels": []}),
            serde_json::json!({"ridge_gammas": []}),
            serde_json::json!({"test_fraction": 1.0}),
            serde_json::json!({"unknown": 1}),
            serde_json::json!({"kernels": [{"family": "polynomial", "degree": 0, "coef": 1.0}]}),
        ] {
            let mut v = base.clone();
            overlay(&mut v, patch.clone());
            let err = ExperimentConfig::from_value(v, None).unwrap_err();
            assert!(err.is_config_error(), "{patch}: {err}");
        }
    }

    #[test]
    fn k_rule_resolution() {
        assert_eq!(KRule::Fraction(250).resolve(300), 2);
        assert_eq!(KRule::Fraction(100).resolve(300), 3);
        assert_eq!(KRule::Fraction(250).resolve(100), 1);
        assert_eq!(KRule::Absolute(7).resolve(3), 7);
        let v: KRule = serde_json::from_str(r#"{"fraction": 150}"#).unwrap();
        assert_eq!(v, KRule::Fraction(150));
    }

    #[test]
    fn kernel_strings() {
        assert_eq!(KernelChoice::parse("linear").unwrap(), KernelChoice::Linear);
        assert_eq!(KernelChoice::parse("poly:3:1").unwrap(), KernelChoice::Polynomial { degree: 3, coef: 1.0 });
        assert_eq!(KernelChoice::parse("sigmoid").unwrap(), KernelChoice::Sigmoid { gain: None, coef: 0.01 });
        assert_eq!(KernelChoice::parse("rbf:0.5").unwrap(), KernelChoice::Rbf { gain: Some(0.5) });
        assert!(KernelChoice::parse("poly:x").is_err());
        assert!(KernelChoice::parse("cubic").is_err());
        let s = KernelChoice::Sigmoid { gain: None, coef: 0.01 }.resolve(20);
        assert_eq!(s, KernelSpec::Sigmoid { gain: 0.05, coef: 0.01 });
    }

    #[test]
    fn overlay_merges_objects() {
        let mut a = serde_json::json!({"x": {"y": 1, "z": 2}, "w": [1]});
        overlay(&mut a, serde_json::json!({"x": {"z": 3}, "w": [2, 3]}));
        assert_eq!(a, serde_json::json!({"x": {"y": 1, "z": 3}, "w": [2, 3]}));
    }

    #[test]
    fn manifest_is_accepted() {
        let v = serde_json::json!({
            "format": "x",
            "config": {"dataset": {"kind": "synthetic", "n": 50}, "trials": 3},
            "dataset": {"n": 50}
        });
        assert_eq!(ExperimentConfig::from_value(v, None).unwrap().trials, 3);
    }
}
