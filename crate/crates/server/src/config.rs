//! Service configuration (TOML) and the catalog of policies and content
//! packs it loads.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use adaptrl_core::analysis::quantile;
use adaptrl_core::content::{generate_content_pack, ContentError, ContentPack};
use adaptrl_core::episode::{load_episodes_path, EpisodeError};
use adaptrl_core::harness::{make_baseline_policy, BaselineKind};
use adaptrl_core::policy::{AssistancePolicy, Policy, PolicyError};
use serde::Deserialize;
use thiserror::Error;

use crate::session::{NfcScoring, NFC_ITEMS};

/// Built-in policy id for quasi-random data collection.
pub const EXPLORATORY_POLICY: &str = "exploratory";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("policy {id}: {source}")]
    Policy { id: String, source: PolicyError },
    #[error("content pack {id}: {source}")]
    Content { id: String, source: ContentError },
    #[error("reference episodes: {0}")]
    Episodes(#[from] EpisodeError),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PackSource {
    Path(PathBuf),
    Generate { seed: u64, size: usize },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    /// Fixed NFC median; alternatively computed from `reference_episodes`.
    pub nfc_median: Option<f64>,
    pub reference_episodes: Option<PathBuf>,
    /// 1-based positions of reverse-scored questionnaire items.
    #[serde(default)]
    pub reverse_scored: Vec<usize>,
    /// Questionnaire item wording shown to participants.
    #[serde(default)]
    pub nfc_items: Vec<String>,
    pub episodes_path: PathBuf,
    /// Session snapshots for resuming after a restart. Unset keeps sessions
    /// in memory only.
    pub snapshot_dir: Option<PathBuf>,
    /// Policy id to policy file.
    #[serde(default)]
    pub policies: BTreeMap<String, PathBuf>,
    #[serde(default)]
    pub packs: BTreeMap<String, PackSource>,
}

fn rebase(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl ServiceConfig {
    pub fn from_toml_str(s: &str) -> Result<ServiceConfig, ConfigError> {
        Ok(toml::from_str(s)?)
    }

    /// Load a config file; relative paths inside it resolve against its
    /// directory.
    pub fn load(path: impl AsRef<Path>) -> Result<ServiceConfig, ConfigError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = ServiceConfig::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        rebase(base, &mut cfg.episodes_path);
        if let Some(p) = cfg.snapshot_dir.as_mut() {
            rebase(base, p);
        }
        if let Some(p) = cfg.reference_episodes.as_mut() {
            rebase(base, p);
        }
        for p in cfg.policies.values_mut() {
            rebase(base, p);
        }
        for src in cfg.packs.values_mut() {
            if let PackSource::Path(p) = src {
                rebase(base, p);
            }
        }
        Ok(cfg)
    }

    pub fn scoring(&self) -> Result<NfcScoring, ConfigError> {
        let median = match (self.nfc_median, &self.reference_episodes) {
            (Some(m), None) => m,
            (None, Some(path)) => {
                let report = load_episodes_path(path)?;
                if report.episodes.is_empty() {
                    return Err(ConfigError::Invalid(format!("no episodes in {}", path.display())));
                }
                let mut scores: Vec<f64> = report.episodes.iter().map(|e| e.nfc_score).collect();
                scores.sort_by(f64::total_cmp);
                quantile(&scores, 0.5)
            }
            _ => {
                return Err(ConfigError::Invalid(
                    "set exactly one of nfc_median and reference_episodes".into(),
                ))
            }
        };
        if !median.is_finite() {
            return Err(ConfigError::Invalid(format!("nfc median {median} is not finite")));
        }
        let mut reverse = [false; NFC_ITEMS];
        for &item in &self.reverse_scored {
            if !(1..=NFC_ITEMS).contains(&item) {
                return Err(ConfigError::Invalid(format!(
                    "reverse_scored item {item} outside 1..={NFC_ITEMS}"
                )));
            }
            reverse[item - 1] = true;
        }
        Ok(NfcScoring { reverse, median })
    }
}

/// Everything a session can reference by id.
#[derive(Debug)]
pub struct Catalog {
    pub policies: BTreeMap<String, Arc<AssistancePolicy>>,
    pub packs: BTreeMap<String, Arc<ContentPack>>,
    pub scoring: NfcScoring,
    pub nfc_items: Vec<String>,
}

impl Catalog {
    pub fn build(cfg: &ServiceConfig) -> Result<Catalog, ConfigError> {
        let mut policies: BTreeMap<String, Arc<AssistancePolicy>> = BaselineKind::ALL
            .iter()
            .map(|&k| (k.as_str().to_string(), Arc::new(make_baseline_policy(k))))
            .collect();
        policies.insert(EXPLORATORY_POLICY.into(), Arc::new(AssistancePolicy::Exploratory));
        for (id, path) in &cfg.policies {
            if policies.contains_key(id) {
                return Err(ConfigError::Invalid(format!("policy id {id:?} is built in")));
            }
            let policy = Policy::load(path).map_err(|source| ConfigError::Policy { id: id.clone(), source })?;
            policy
                .validate()
                .map_err(|source| ConfigError::Policy { id: id.clone(), source })?;
            policies.insert(id.clone(), Arc::new(AssistancePolicy::Table(policy)));
        }

        let mut packs = BTreeMap::new();
        for (id, src) in &cfg.packs {
            let err = |source| ConfigError::Content { id: id.clone(), source };
            let pack = match src {
                PackSource::Path(p) => ContentPack::load(p).map_err(err)?,
                PackSource::Generate { seed, size } => generate_content_pack(*seed, *size, 1).map_err(err)?,
            };
            // per-design sizes are checked when a session starts
            pack.validate(1).map_err(err)?;
            packs.insert(id.clone(), Arc::new(pack));
        }

        if !cfg.nfc_items.is_empty() && cfg.nfc_items.len() != NFC_ITEMS {
            return Err(ConfigError::Invalid(format!(
                "nfc_items lists {} items; expected {NFC_ITEMS}",
                cfg.nfc_items.len()
            )));
        }
        Ok(Catalog {
            policies,
            packs,
            scoring: cfg.scoring()?,
            nfc_items: cfg.nfc_items.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_pack_sources() {
        let cfg = ServiceConfig::from_toml_str(
            r#"
            nfc_median = 13
            reverse_scored = [2]
            episodes_path = "episodes.jsonl"

            [packs]
            sample = { path = "sample.json" }
            synthetic = { generate = { seed = 7, size = 48 } }
            "#,
        )
        .unwrap();
        assert_eq!(cfg.packs["sample"], PackSource::Path("sample.json".into()));
        assert_eq!(cfg.packs["synthetic"], PackSource::Generate { seed: 7, size: 48 });
        let sc = cfg.scoring().unwrap();
        assert_eq!(sc.reverse, [false, true, false, false]);
        assert_eq!(sc.median, 13.0);
    }

    #[test]
    fn median_needs_exactly_one_source() {
        let cfg = ServiceConfig::from_toml_str(r#"episodes_path = "e.jsonl""#).unwrap();
        assert!(matches!(cfg.scoring(), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn builtins_cannot_be_shadowed() {
        let cfg = ServiceConfig::from_toml_str(
            r#"
            nfc_median = 13
            episodes_path = "e.jsonl"
            [policies]
            sxai = "x.json"
            "#,
        )
        .unwrap();
        assert!(matches!(Catalog::build(&cfg), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(ServiceConfig::from_toml_str("episodes_path = 'e'\nlisten = 'x'").is_err());
    }
}
