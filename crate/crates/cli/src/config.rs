//! Flat `section.key = value` run configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::CliError;

/// Every accepted key with its default. `train.lr = auto` resolves to the
/// embedder mode's default rate.
const DEFAULTS: &[(&str, &str)] = &[
    ("run.seed", "0"),
    ("scene.objects", "4"),
    ("scene.categories", "4"),
    ("scene.views", "6"),
    ("scene.width", "64"),
    ("scene.height", "48"),
    ("train.mode", "free-table"),
    ("train.steps", "200"),
    ("train.lr", "auto"),
    ("train.channels", "8"),
    ("train.hidden", "32"),
    ("train.window", "8"),
    ("train.lambda_pull", "2.0"),
    ("train.lambda_push", "1.0"),
    ("train.margin", "1.0"),
    ("train.samples_per_view", "256"),
    ("cluster.min_cluster_size", "25"),
    ("cluster.min_samples", "10"),
    ("cluster.max_points", "20000"),
    ("cluster.assign_radius", "1.5"),
    ("curate.theta_new", "0.10"),
    ("curate.tau_match", "0.30"),
    ("curate.coverage_target", "0.95"),
    ("curate.max_iters", "5"),
    ("curate.annotation_fraction", "0.1"),
    ("curate.annotation_jitter", "0.02"),
    ("eval.inlier_threshold", "1.03"),
    ("eval.voxel_size", "0.05"),
    ("eval.sigma", "0.1"),
    ("eval.text_dim", "16"),
    ("eval.question", ""),
    ("oracles.boundary", "exact"),
    ("oracles.radius", "2"),
    ("oracles.split_prob", "0"),
    ("oracles.drop_prob", "0"),
    ("oracles.loss_rate", "0"),
    ("oracles.drops", ""),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            values: DEFAULTS.iter().map(|&(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

impl RunConfig {
    /// Defaults, then the file, then `--set` overrides, then `--seed`.
    pub fn load(file: Option<&Path>, sets: &[String], seed: Option<u64>) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            cfg.apply_text(&text)?;
        }
        for s in sets {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("--set expects section.key=value, got `{s}`")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        if let Some(seed) = seed {
            cfg.set("run.seed", &seed.to_string())?;
        }
        cfg.resolve()?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected `section.key = value`", n + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.to_string();
                Ok(())
            }
            None => Err(CliError::Config(format!("unknown config key `{key}`"))),
        }
    }

    fn resolve(&mut self) -> Result<(), CliError> {
        if self.str("train.lr") == "auto" {
            let lr = match self.str("train.mode") {
                "mlp" => "0.001",
                _ => "0.01",
            };
            self.set("train.lr", lr)?;
        }
        Ok(())
    }

    pub fn str(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("no config key {key}"))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, CliError> {
        let raw = self.str(key);
        raw.parse()
            .map_err(|_| CliError::Config(format!("bad value `{raw}` for `{key}`")))
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.get("run.seed")
    }

    /// One `key = value` line per key, sorted.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.values {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// Hex SHA-256 of [`RunConfig::to_text`].
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_text().as_bytes())
            .iter()
            .fold(String::new(), |mut s, b| {
                let _ = write!(s, "{b:02x}");
                s
            })
    }
}
