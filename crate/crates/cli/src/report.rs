//! Report bundle: one record per executed check, a config echo with digest,
//! and volatile metadata (timestamp, runtimes, environment) kept in a
//! separate section so the deterministic part can be compared byte for byte.

use std::collections::BTreeMap;

use anyhow::Result;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

/// Outcome of one verification check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckRecord {
    pub suite: String,
    pub name: String,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub skipped: bool,
    /// Named residuals, margins, and fitted constants.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub values: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CheckRecord {
    pub fn new(suite: &str, name: &str, pass: bool) -> Self {
        Self {
            suite: suite.into(),
            name: name.into(),
            pass,
            skipped: false,
            values: BTreeMap::new(),
            note: None,
        }
    }

    pub fn skip(suite: &str, name: &str, why: &str) -> Self {
        Self {
            suite: suite.into(),
            name: name.into(),
            pass: true,
            skipped: true,
            values: BTreeMap::new(),
            note: Some(why.into()),
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.values.insert(key.into(), value);
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

/// Volatile run metadata, excluded from determinism comparisons.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunMeta {
    pub timestamp_unix_ms: u128,
    pub runtimes_ms: BTreeMap<String, f64>,
    pub environment: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportBundle {
    pub config_digest: String,
    pub config: ExperimentConfig,
    pub records: Vec<CheckRecord>,
    pub notices: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<RunMeta>,
}

impl ReportBundle {
    pub fn new(config: ExperimentConfig) -> Self {
        let digest = config_digest(&config);
        Self { config_digest: digest, config, records: Vec::new(), notices: Vec::new(), meta: None }
    }

    pub fn all_pass(&self) -> bool {
        self.records.iter().all(|r| r.pass)
    }

    /// Full JSON including volatile metadata.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// JSON with the volatile metadata removed; byte-identical across runs
    /// of the same config and seed on one machine.
    pub fn to_deterministic_json(&self) -> Result<String> {
        let mut clone = self.clone();
        clone.meta = None;
        Ok(serde_json::to_string_pretty(&clone)?)
    }

    /// CSV flattening: one row per check.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("suite,name,pass,skipped,values,note\n");
        for r in &self.records {
            let values = r
                .values
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect::<Vec<_>>()
                .join("|");
            let note = r.note.clone().unwrap_or_default().replace(',', ";");
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.suite, r.name, r.pass, r.skipped, values, note
            ));
        }
        out
    }

    /// Sort records by (suite, name) so report assembly is order-stable.
    pub fn sort_records(&mut self) {
        self.records.sort_by(|a, b| (&a.suite, &a.name).cmp(&(&b.suite, &b.name)));
    }
}

/// Stable digest of the configuration (hash of its canonical JSON).
pub fn config_digest(config: &ExperimentConfig) -> String {
    let canonical = serde_json::to_string(config).expect("config serializes");
    let mut hasher = Sha256::new();
    hasher.update(canonical.as_bytes());
    let out = hasher.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::example_config;

    #[test]
    fn empty_bundle_serializes() {
        let bundle = ReportBundle::new(example_config());
        let json = bundle.to_json().unwrap();
        let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed["records"], serde_json::json!([]));
        let csv = bundle.to_csv();
        assert_eq!(csv.lines().count(), 1); // header only
    }

    #[test]
    fn csv_has_one_row_per_check() {
        let mut bundle = ReportBundle::new(example_config());
        for k in 0..5 {
            bundle
                .records
                .push(CheckRecord::new("energy", &format!("check{k}"), true).with("margin", 0.5));
        }
        let csv = bundle.to_csv();
        assert_eq!(csv.lines().count(), 6);
    }

    #[test]
    fn json_round_trip_preserves_floats() {
        let mut bundle = ReportBundle::new(example_config());
        bundle.records.push(
            CheckRecord::new("identities", "identity_iii", true)
                .with("residual", 2.0670334412e-6)
                .with("order", 1.9998871),
        );
        let json = bundle.to_json().unwrap();
        let back: ReportBundle = serde_json::from_str(&json).unwrap();
        assert_eq!(back.records[0].values["residual"], 2.0670334412e-6);
        assert_eq!(back.records[0].values["order"], 1.9998871);
    }

    #[test]
    fn determinism_strips_meta() {
        let mut bundle = ReportBundle::new(example_config());
        bundle.records.push(CheckRecord::new("solve", "integrate", true));
        let a = bundle.to_deterministic_json().unwrap();
        bundle.meta = Some(RunMeta {
            timestamp_unix_ms: 123456,
            runtimes_ms: BTreeMap::from([("solve".into(), 1.5)]),
            environment: "test".into(),
        });
        let b = bundle.to_deterministic_json().unwrap();
        assert_eq!(a, b);
        assert_ne!(bundle.to_json().unwrap(), a);
    }

    #[test]
    fn digest_tracks_config_changes() {
        let cfg = example_config();
        let d1 = config_digest(&cfg);
        let mut other = cfg.clone();
        other.runs.seed = 43;
        assert_ne!(d1, config_digest(&other));
        assert_eq!(d1, config_digest(&cfg));
    }
}
