//! Pipeline configuration (TOML).
//!
//! Paths are resolved against the directory of the config file. The config
//! hash covers every setting except the output directory, so moving a run
//! elsewhere does not change the hash stamped on its artifacts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use utn_core::ingest::{Period, PeriodTable};
use utn_core::spatial::DistanceInput;
use utn_core::temporal::Link;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: String,
    #[serde(default)]
    pub inputs: Inputs,
    /// Replaces the default four periods when present.
    #[serde(default)]
    pub periods: Option<Vec<PeriodSpec>>,
    #[serde(default)]
    pub community: CommunitySettings,
    #[serde(default)]
    pub activity: ActivitySettings,
    #[serde(default)]
    pub spatial: SpatialSettings,
    #[serde(default)]
    pub temporal: TemporalSettings,
    #[serde(default)]
    pub synth: SynthSettings,
}

fn default_seed() -> u64 {
    1
}

fn default_out() -> String {
    "out".into()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    /// Trip records or raw tap events (detected from the header).
    pub trips: Option<String>,
    pub stations: Option<String>,
    pub calendar: Option<String>,
    pub topic_table: Option<String>,
    pub emotion: Option<String>,
    pub profiles: Option<String>,
    pub station_words: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeriodSpec {
    pub name: String,
    pub start: String,
    pub end: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CommunitySettings {
    pub runs: usize,
    pub threshold: f64,
    pub max_iter: usize,
    pub k_max: usize,
}

impl Default for CommunitySettings {
    fn default() -> Self {
        CommunitySettings { runs: 100, threshold: 0.5, max_iter: 20, k_max: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ActivitySettings {
    /// Patterns below this share are pooled into `other`.
    pub floor: f64,
}

impl Default for ActivitySettings {
    fn default() -> Self {
        ActivitySettings { floor: utn_core::activity::DEFAULT_FLOOR }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpatialSettings {
    pub theta_d: f64,
    pub epsilon: f64,
    pub distance: String,
    /// Gravity baseline distance exponent.
    pub beta: f64,
    /// `inflow` (observed) or `profile` (the profiles' opportunities column).
    pub opportunities: String,
    pub emotion_lb: Option<f64>,
    pub emotion_ub: Option<f64>,
}

impl Default for SpatialSettings {
    fn default() -> Self {
        SpatialSettings {
            theta_d: 0.1,
            epsilon: 0.0,
            distance: "negated".into(),
            beta: 2.0,
            opportunities: "inflow".into(),
            emotion_lb: None,
            emotion_ub: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TemporalSettings {
    /// Share of origins used to fit the additive models; the rest is held out.
    pub train_fraction: f64,
    pub interior_knots: usize,
    /// Origins with fewer evening departures are not fitted.
    pub min_volume: u64,
    pub curve_points: usize,
    /// Link per target (`tau`, `mu`, `c`, `p0`); identity when absent.
    pub links: BTreeMap<String, String>,
}

impl Default for TemporalSettings {
    fn default() -> Self {
        TemporalSettings {
            train_fraction: 0.8,
            interior_knots: 4,
            min_volume: 20,
            curve_points: 50,
            links: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSettings {
    /// Key-value spec file; defaults apply when absent.
    pub spec: Option<String>,
}

pub const TARGETS: [&str; 4] = ["tau", "mu", "c", "p0"];

/// A parsed config together with where it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: PipelineConfig,
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(vec![format!("cannot read config {}: {e}", path.display())]))?;
        let config: PipelineConfig =
            toml::from_str(&text).map_err(|e| CliError::Validation(vec![format!("config {}: {e}", path.display())]))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(LoadedConfig { config, base_dir })
    }

    pub fn resolve(&self, p: &str) -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

impl PipelineConfig {
    pub fn period_table(&self) -> CliResult<PeriodTable> {
        match &self.periods {
            None => Ok(PeriodTable::default()),
            Some(specs) => {
                let periods = specs
                    .iter()
                    .map(|p| Period::new(&p.name, &p.start, &p.end))
                    .collect::<utn_core::Result<Vec<_>>>()?;
                Ok(PeriodTable::new(periods)?)
            }
        }
    }

    pub fn link(&self, target: &str) -> Link {
        self.temporal.links.get(target).and_then(|l| l.parse().ok()).unwrap_or(Link::Identity)
    }

    /// Checks every setting and collects all problems.
    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        if let Err(e) = self.period_table() {
            p.push(format!("periods: {e}"));
        }
        let c = &self.community;
        if c.runs == 0 {
            p.push("community.runs must be at least 1".into());
        }
        if !(c.threshold > 0.0 && c.threshold < 1.0) {
            p.push("community.threshold must lie in (0, 1)".into());
        }
        if c.k_max == 0 {
            p.push("community.k_max must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.activity.floor) {
            p.push("activity.floor must lie in [0, 1)".into());
        }
        let s = &self.spatial;
        if !(0.0..=1.0).contains(&s.theta_d) {
            p.push("spatial.theta_d must lie in [0, 1]".into());
        }
        if !s.epsilon.is_finite() {
            p.push("spatial.epsilon must be finite".into());
        }
        if s.distance.parse::<DistanceInput>().is_err() {
            p.push(format!("spatial.distance {:?} is not one of negated, raw", s.distance));
        }
        if !(s.beta > 0.0 && s.beta.is_finite()) {
            p.push("spatial.beta must be positive".into());
        }
        if !matches!(s.opportunities.as_str(), "inflow" | "profile") {
            p.push(format!("spatial.opportunities {:?} is not one of inflow, profile", s.opportunities));
        }
        if let (Some(lb), Some(ub)) = (s.emotion_lb, s.emotion_ub) {
            if !(lb < ub) {
                p.push("spatial.emotion_lb must be below spatial.emotion_ub".into());
            }
        }
        if s.emotion_lb.is_some() != s.emotion_ub.is_some() {
            p.push("spatial.emotion_lb and spatial.emotion_ub must be given together".into());
        }
        let t = &self.temporal;
        if !(t.train_fraction > 0.0 && t.train_fraction <= 1.0) {
            p.push("temporal.train_fraction must lie in (0, 1]".into());
        }
        if t.interior_knots == 0 {
            p.push("temporal.interior_knots must be at least 1".into());
        }
        if t.curve_points < 2 {
            p.push("temporal.curve_points must be at least 2".into());
        }
        for (k, v) in &t.links {
            if !TARGETS.contains(&k.as_str()) {
                p.push(format!("temporal.links: unknown target {k:?} (expected one of {TARGETS:?})"));
            }
            if v.parse::<Link>().is_err() {
                p.push(format!("temporal.links.{k}: {v:?} is not one of identity, log"));
            }
        }
        p
    }

    /// SHA-256 over the canonical JSON form, ignoring the output directory.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.out = String::new();
        let bytes = serde_json::to_vec(&canonical).expect("config serialises");
        hex::encode(Sha256::digest(bytes))
    }
}
