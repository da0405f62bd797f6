use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MAX_DEPTH: u32 = 20;

pub const EXPERIMENTS: [&str; 8] =
    ["haar", "norms", "average-hilbert", "sparse-dominate", "carleson", "bellman", "sht", "ntv"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
    Both,
}

impl std::str::FromStr for OutputFormat {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            "both" => Ok(OutputFormat::Both),
            _ => Err(CliError::Config(format!("unknown format {s:?} (csv, json, both)"))),
        }
    }
}

/// A resolved experiment configuration. Keys other than the fixed ones land in `params`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub depth: u32,
    pub seed: Option<u64>,
    pub params: BTreeMap<String, String>,
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
}

impl ExperimentConfig {
    pub fn new(experiment: &str) -> Self {
        ExperimentConfig {
            experiment: experiment.into(),
            depth: 10,
            seed: None,
            params: BTreeMap::new(),
            out: None,
            format: OutputFormat::Both,
        }
    }

    /// Flat `key = value` lines (`#` comments) or a JSON object; arrays become comma lists.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let pairs = if text.trim_start().starts_with('{') { json_pairs(text)? } else { kv_pairs(text)? };
        let mut cfg = ExperimentConfig::new("");
        for (k, v) in pairs {
            cfg.set(&k, &v)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match key {
            "experiment" => self.experiment = value.into(),
            "depth" => self.depth = parse_value(key, value)?,
            "seed" => self.seed = Some(parse_value(key, value)?),
            "out" => self.out = Some(PathBuf::from(value)),
            "format" => self.format = value.parse()?,
            _ => {
                self.params.insert(key.into(), value.into());
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !EXPERIMENTS.contains(&self.experiment.as_str()) {
            return Err(CliError::Config(format!(
                "unknown experiment {:?}; expected one of {}",
                self.experiment,
                EXPERIMENTS.join(", ")
            )));
        }
        if self.depth > MAX_DEPTH {
            return Err(CliError::Config(format!("depth {} exceeds the guard {MAX_DEPTH}", self.depth)));
        }
        if self.depth == 0 {
            return Err(CliError::Config("depth must be at least 1".into()));
        }
        Ok(())
    }

    /// The seed, required by randomized experiments.
    pub fn require_seed(&self) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| CliError::Config(format!("experiment {:?} is randomized and needs a seed", self.experiment)))
    }

    pub fn get<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, CliError> {
        match self.params.get(key) {
            Some(v) => parse_value(key, v),
            None => Ok(default),
        }
    }

    pub fn get_opt<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        self.params.get(key).map(|v| parse_value(key, v)).transpose()
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.params.get(key).map(|s| s.as_str())
    }

    pub fn get_list(&self, key: &str) -> Result<Option<Vec<f64>>, CliError> {
        self.params
            .get(key)
            .map(|v| v.split(',').map(|s| s.trim()).filter(|s| !s.is_empty()).map(|s| parse_value(key, s)).collect())
            .transpose()
    }

    /// Hex SHA-256 of the canonical JSON form (output location and format excluded).
    pub fn hash(&self) -> String {
        let canonical = serde_json::json!({
            "experiment": self.experiment,
            "depth": self.depth,
            "seed": self.seed,
            "params": self.params,
        });
        let digest = Sha256::digest(canonical.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.trim().parse().map_err(|_| CliError::Config(format!("invalid value {v:?} for {key}")))
}

fn kv_pairs(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) =
            line.split_once('=').ok_or_else(|| CliError::Config(format!("line {}: expected key = value", n + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn json_pairs(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let v: serde_json::Value = serde_json::from_str(text).map_err(|e| CliError::Config(format!("config JSON: {e}")))?;
    let obj = v.as_object().ok_or_else(|| CliError::Config("config JSON must be an object".into()))?;
    let scalar = |k: &str, v: &serde_json::Value| -> Result<String, CliError> {
        match v {
            serde_json::Value::String(s) => Ok(s.clone()),
            serde_json::Value::Number(n) => Ok(n.to_string()),
            serde_json::Value::Bool(b) => Ok(b.to_string()),
            _ => Err(CliError::Config(format!("unsupported value for {k}"))),
        }
    };
    obj.iter()
        .map(|(k, v)| {
            let s = match v {
                serde_json::Value::Array(items) => {
                    items.iter().map(|x| scalar(k, x)).collect::<Result<Vec<_>, _>>()?.join(",")
                }
                other => scalar(k, other)?,
            };
            Ok((k.clone(), s))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_value_and_json_agree() {
        let kv = "experiment = norms\n# sweep\ndepth = 8\nseed = 7\noperator = sha\nalphas = -0.5, 0, 0.5\n";
        let js = r#"{"experiment": "norms", "depth": 8, "seed": 7, "operator": "sha", "alphas": [-0.5, 0, 0.5]}"#;
        let a = ExperimentConfig::parse(kv).unwrap();
        let b = ExperimentConfig::parse(js).unwrap();
        assert_eq!(a.get_list("alphas").unwrap(), Some(vec![-0.5, 0.0, 0.5]));
        assert_eq!(a.get_list("alphas").unwrap(), b.get_list("alphas").unwrap());
        assert_eq!((a.depth, a.seed, a.get_str("operator")), (b.depth, b.seed, b.get_str("operator")));
    }

    #[test]
    fn guards() {
        let mut c = ExperimentConfig::new("norms");
        c.depth = 21;
        assert!(matches!(c.validate(), Err(CliError::Config(_))));
        c.depth = 20;
        assert!(c.validate().is_ok());
        assert!(ExperimentConfig::new("plot").validate().is_err());
        assert!(c.require_seed().is_err());
        assert!(ExperimentConfig::parse("depth = deep").is_err());
        assert!(ExperimentConfig::parse("no equals sign").is_err());
    }

    #[test]
    fn hash_ignores_output_location() {
        let mut a = ExperimentConfig::new("bellman");
        a.seed = Some(1);
        let mut b = a.clone();
        b.out = Some("elsewhere".into());
        b.format = OutputFormat::Csv;
        assert_eq!(a.hash(), b.hash());
        b.seed = Some(2);
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
