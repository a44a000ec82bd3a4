//! Run configuration file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{REPETITIONS, TRAIN_FRACTIONS};
use crate::model::TaskKind;
use crate::trainer::Hyperparams;

pub const CACHE_ENV: &str = "DYNHIN_CACHE_DIR";

fn default_fractions() -> Vec<f64> {
    TRAIN_FRACTIONS.to_vec()
}

fn default_repetitions() -> usize {
    REPETITIONS
}

/// One JSON document describing inputs, task, views and hyperparameters.
/// Relative paths are resolved against the directory holding the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: PathBuf,
    pub edges: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    /// Meta-path from the anchor type to a label type, used to derive
    /// majority labels when no label file is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub task: TaskKind,
    pub views: Vec<String>,
    /// Classification: node type carrying labels (defaults to the first
    /// view's anchor). Recommendation: unused.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<String>,
    /// Recommendation: edge type holding the interactions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interaction: Option<String>,
    #[serde(default = "default_fractions")]
    pub train_fractions: Vec<f64>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub hyper: Hyperparams,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: RunConfig = serde_json::from_str(text)?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        RunConfig::from_json(&text, &base)
    }

    pub fn validate(&self) -> Result<()> {
        if self.views.is_empty() {
            return Err(Error::Invalid("config lists no views".into()));
        }
        if self.task == TaskKind::Recommendation && self.interaction.is_none() {
            return Err(Error::Invalid("recommendation needs an `interaction` edge type".into()));
        }
        if self.train_fractions.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
            return Err(Error::Invalid("train fractions must lie in (0, 1)".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::Invalid("repetitions must be positive".into()));
        }
        self.hyper.validate()
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    /// `$DYNHIN_CACHE_DIR`, else the configured cache dir, else
    /// `<output_dir>/cache`.
    pub fn cache_dir(&self) -> PathBuf {
        if let Some(dir) = std::env::var_os(CACHE_ENV).filter(|v| !v.is_empty()) {
            return PathBuf::from(dir);
        }
        match &self.cache_dir {
            Some(d) => self.resolve(d),
            None => self.output_dir().join("cache"),
        }
    }

    /// Checks that every referenced input file exists.
    pub fn check_inputs(&self) -> Result<()> {
        let mut files = vec![&self.schema, &self.edges];
        if let Some(l) = &self.labels {
            files.push(l);
        }
        for f in files {
            let p = self.resolve(f);
            if !p.is_file() {
                return Err(Error::Data(format!("input file {} does not exist", p.display())));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MIN: &str = r#"{
        "schema": "schema.txt",
        "edges": "edges.tsv",
        "labels": "labels.tsv",
        "output_dir": "out",
        "task": "classification",
        "views": ["U-I-U", "U-N-U"],
        "hyper": {"dim": 16, "epochs": 3, "cell": "lstm"}
    }"#;

    #[test]
    fn round_trip() {
        let cfg = RunConfig::from_json(MIN, Path::new("/base")).unwrap();
        assert_eq!(cfg.hyper.dim, 16);
        assert_eq!(cfg.hyper.batch_size, 500);
        assert_eq!(cfg.train_fractions.len(), 9);
        assert_eq!(cfg.resolve(&cfg.schema), PathBuf::from("/base/schema.txt"));
        let back = RunConfig::from_json(&cfg.to_json(), Path::new("/base")).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_bad_configs() {
        let base = Path::new("/");
        assert!(RunConfig::from_json(&MIN.replace("\"dim\"", "\"dimension\""), base).is_err());
        assert!(RunConfig::from_json(&MIN.replace("classification", "recommendation"), base).is_err());
        assert!(RunConfig::from_json(&MIN.replace("[\"U-I-U\", \"U-N-U\"]", "[]"), base).is_err());
    }
}
